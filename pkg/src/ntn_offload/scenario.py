"""Deterministic geometry of the ground / UAV / HAPS / LEO network.

All positions live in an Earth-tangent local frame whose origin is the
south-west corner of the service area: x, y span ``[0, area_side]`` and z is
the height above the tangent plane.  The HAPS hovers over the area centre and
the LEO constellation sits on an arc above it, in the vertical x-z plane
through the HAPS nadir.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a configuration violates one of its invariants."""


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Position3D":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ScenarioConfig:
    area_side: float = 10_000.0
    num_iot: int = 50
    num_malicious: int = 25
    num_uav: int = 25
    num_leo: int = 3
    uav_altitude: float = 120.0
    haps_altitude: float = 20_000.0
    leo_altitude: float = 600_000.0
    leo_angular_separation: float = 5.0
    leo_max_central_angle: float = 20.0
    earth_radius: float = 6_371_000.0
    rng_seed: int = 0

    def validate(self) -> list[str]:
        """Return a list of violated invariants (empty when valid)."""
        errors = []
        for name in ("num_iot", "num_malicious", "num_uav", "num_leo"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0")
        if self.area_side <= 0:
            errors.append("area_side must be > 0")
        if not 0 <= self.uav_altitude < self.haps_altitude < self.leo_altitude:
            errors.append("altitudes must satisfy 0 <= uav < haps < leo")
        if self.earth_radius <= 0:
            errors.append("earth_radius must be > 0")
        if self.leo_angular_separation < 0 or self.leo_max_central_angle < 0:
            errors.append("leo angles must be >= 0")
        span = max(self.num_leo - 1, 0) * self.leo_angular_separation
        if span > 2 * self.leo_max_central_angle + 1e-12:
            errors.append(
                "(num_leo - 1) * leo_angular_separation must not exceed "
                "2 * leo_max_central_angle"
            )
        return errors


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    iot_positions: tuple[Position3D, ...]
    malicious_positions: tuple[Position3D, ...]
    uav_positions: tuple[Position3D, ...]
    haps_position: Position3D
    leo_positions: tuple[Position3D, ...]
    leo_central_angles: tuple[float, ...] = field(default=())

    @property
    def ground_positions(self) -> tuple[Position3D, ...]:
        """Legitimate devices first, then malicious nodes."""
        return self.iot_positions + self.malicious_positions

    def ground_array(self) -> np.ndarray:
        return _stack(self.ground_positions)

    def uav_array(self) -> np.ndarray:
        return _stack(self.uav_positions)

    def leo_array(self) -> np.ndarray:
        return _stack(self.leo_positions)

    def haps_leo_distances(self) -> np.ndarray:
        haps = self.haps_position.as_array()
        return np.linalg.norm(self.leo_array() - haps, axis=1)

    def to_dict(self) -> dict:
        def pts(ps):
            return [[p.x, p.y, p.z] for p in ps]

        return {
            "config": asdict(self.config),
            "iot_positions": pts(self.iot_positions),
            "malicious_positions": pts(self.malicious_positions),
            "uav_positions": pts(self.uav_positions),
            "haps_position": [self.haps_position.x, self.haps_position.y,
                              self.haps_position.z],
            "leo_positions": pts(self.leo_positions),
            "leo_central_angles": list(self.leo_central_angles),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        def pts(rows):
            return tuple(Position3D(*map(float, r)) for r in rows)

        return cls(
            config=ScenarioConfig(**d["config"]),
            iot_positions=pts(d["iot_positions"]),
            malicious_positions=pts(d["malicious_positions"]),
            uav_positions=pts(d["uav_positions"]),
            haps_position=Position3D(*map(float, d["haps_position"])),
            leo_positions=pts(d["leo_positions"]),
            leo_central_angles=tuple(d.get("leo_central_angles", ())),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _stack(ps) -> np.ndarray:
    if not ps:
        return np.zeros((0, 3))
    return np.array([[p.x, p.y, p.z] for p in ps], dtype=float)


def uav_grid(area_side: float, num_uav: int, altitude: float) -> list[Position3D]:
    """Cell centres of the smallest square grid with at least ``num_uav`` cells."""
    if num_uav == 0:
        return []
    n = math.ceil(math.sqrt(num_uav))
    cell = area_side / n
    out = []
    for k in range(num_uav):
        row, col = divmod(k, n)
        out.append(Position3D((col + 0.5) * cell, (row + 0.5) * cell, altitude))
    return out


def leo_central_angles(num_leo: int, separation_deg: float) -> np.ndarray:
    """Earth-central angles (deg) symmetric about the HAPS nadir."""
    return (np.arange(num_leo) - (num_leo - 1) / 2.0) * separation_deg


def build_scenario(config: ScenarioConfig) -> Scenario:
    errors = config.validate()
    if errors:
        raise ConfigurationError("invalid ScenarioConfig: " + "; ".join(errors))

    rng = np.random.default_rng(config.rng_seed)
    side = config.area_side
    n_ground = config.num_iot + config.num_malicious
    xy = rng.uniform(0.0, side, size=(n_ground, 2))
    ground = [Position3D(float(x), float(y), 0.0) for x, y in xy]

    centre = side / 2.0
    haps = Position3D(centre, centre, config.haps_altitude)

    r_e = config.earth_radius
    r_leo = r_e + config.leo_altitude
    angles = leo_central_angles(config.num_leo, config.leo_angular_separation)
    leos = []
    for gamma in np.radians(angles):
        # Earth centre sits at (centre, centre, -r_e) in the local frame.
        leos.append(Position3D(centre + r_leo * math.sin(gamma), centre,
                               r_leo * math.cos(gamma) - r_e))

    return Scenario(
        config=config,
        iot_positions=tuple(ground[: config.num_iot]),
        malicious_positions=tuple(ground[config.num_iot:]),
        uav_positions=tuple(uav_grid(side, config.num_uav, config.uav_altitude)),
        haps_position=haps,
        leo_positions=tuple(leos),
        leo_central_angles=tuple(float(a) for a in angles),
    )


def distance(p: Position3D, q: Position3D) -> float:
    return math.dist((p.x, p.y, p.z), (q.x, q.y, q.z))


def elevation_angle(ground: Position3D, aerial: Position3D) -> float:
    """Elevation (deg) of ``aerial`` seen from ``ground``."""
    if aerial.z <= ground.z:
        raise ValueError("aerial node must be above the ground node")
    d = distance(ground, aerial)
    return math.degrees(math.asin(min(1.0, (aerial.z - ground.z) / d)))


def link_angles(src: Position3D, dst: Position3D) -> tuple[float, float]:
    """Azimuth in [0, 360) from +x counter-clockwise and elevation in [-90, 90].

    A vertical link has azimuth 0 by convention.
    """
    dx, dy, dz = dst.x - src.x, dst.y - src.y, dst.z - src.z
    r = math.sqrt(dx * dx + dy * dy + dz * dz)
    if r == 0.0:
        raise ValueError("link angles undefined for coincident points")
    horiz = math.hypot(dx, dy)
    az = 0.0 if horiz <= 1e-12 * r else math.degrees(math.atan2(dy, dx)) % 360.0
    el = math.degrees(math.atan2(dz, horiz))
    return az, el


def link_angles_array(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`link_angles` over broadcastable (..., 3) arrays."""
    d = np.asarray(dst, float) - np.asarray(src, float)
    horiz = np.hypot(d[..., 0], d[..., 1])
    r = np.sqrt(horiz**2 + d[..., 2] ** 2)
    if np.any(r == 0.0):
        raise ValueError("link angles undefined for coincident points")
    az = np.where(horiz <= 1e-12 * r, 0.0,
                  np.degrees(np.arctan2(d[..., 1], d[..., 0])) % 360.0)
    el = np.degrees(np.arctan2(d[..., 2], horiz))
    return az, el
