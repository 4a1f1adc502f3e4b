"""Root configuration: one YAML file binding every module's settings.

Every section is optional; missing fields take the full-scale defaults.
``load_and_validate`` reports all problems at once, each prefixed with the
dotted path of the offending field.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .channel import RadioConfig
from .optimizer import BcdConfig
from .pla import PlaConfig
from .scenario import ConfigurationError, ScenarioConfig

__all__ = [
    "ConfigurationError", "ExperimentSpec", "RootConfig", "TaskSpec", "apply_overrides",
    "default_experiment", "env_out_dir", "env_seed", "load_and_validate",
]

ENV_SEED = "NTN_SEED"
ENV_OUT_DIR = "NTN_OUT_DIR"

SWEEP_VARIABLES = ("tau_max", "target_pfa", "p_i", "theta")
EXPERIMENT_NAMES = ("auth-roc", "feasibility", "admission", "eta")
MALICIOUS_MODES = ("untagged", "plain", "forged")

# Illustrative authentication overheads (seconds) for the benchmark schemes.
# Only their ordering matters for the comparison; override them in the config.
ILLUSTRATIVE_OVERHEADS = {"PLA": 0.0, "MSR-BC": 0.003, "ID-BC": 0.012, "BP-PK": 0.020}

DESK_SCALE = {"scenario.num_iot": 20, "scenario.num_malicious": 10}


@dataclass(frozen=True)
class TaskSpec:
    """How the per-node offloading tasks are generated."""

    delta: float = 1e4          # bits
    c: float = 200.0            # cycles per bit
    tau_max: float = 0.1        # seconds
    f_max: float = 1e10         # cycles/s per LEO

    def validate(self) -> list[str]:
        return [f"{name} must be > 0" for name in ("delta", "c", "tau_max", "f_max")
                if not getattr(self, name) > 0]


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "feasibility"
    sweep_variable: str = "tau_max"
    sweep_values: tuple = (0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.04, 0.05, 0.075, 0.1)
    trials: int = 200
    auth_overhead_s: dict = field(default_factory=lambda: dict(ILLUSTRATIVE_OVERHEADS))
    overrides: dict = field(default_factory=lambda: dict(DESK_SCALE))
    variants: dict = field(default_factory=dict)   # series label -> extra overrides
    auth_reps: int = 1                              # authentication attempts per node
    malicious_mode: str = "untagged"
    node: int | None = None                         # auth-roc: None picks the noisiest node
    workers: int = 1

    def validate(self) -> list[str]:
        errors = []
        if self.name not in EXPERIMENT_NAMES:
            errors.append(f"name must be one of {EXPERIMENT_NAMES}")
        if self.sweep_variable not in SWEEP_VARIABLES:
            errors.append(f"sweep_variable must be one of {SWEEP_VARIABLES}")
        vals = list(self.sweep_values)
        if not vals:
            errors.append("sweep_values must be non-empty")
        elif vals != sorted(vals):
            errors.append("sweep_values must be sorted ascending")
        if self.trials < 1:
            errors.append("trials must be >= 1")
        if self.auth_reps < 1:
            errors.append("auth_reps must be >= 1")
        if self.workers < 1:
            errors.append("workers must be >= 1")
        if self.malicious_mode not in MALICIOUS_MODES:
            errors.append(f"malicious_mode must be one of {MALICIOUS_MODES}")
        for scheme, o in self.auth_overhead_s.items():
            if not o >= 0:
                errors.append(f"auth_overhead_s.{scheme} must be >= 0")
        return errors


def default_experiment(name: str) -> ExperimentSpec:
    """Desk-scale defaults for each named experiment."""
    if name == "feasibility":
        return ExperimentSpec()
    if name == "admission":
        return ExperimentSpec(
            name="admission", sweep_variable="target_pfa",
            sweep_values=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05), auth_overhead_s={},
            variants={"U=9": {"scenario.num_uav": 9}, "U=25": {"scenario.num_uav": 25}},
            auth_reps=50)
    if name == "eta":
        return ExperimentSpec(
            name="eta", sweep_variable="p_i",
            sweep_values=(-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0),
            auth_overhead_s={},
            overrides={**DESK_SCALE, "tasks.tau_max": 1.0},
            variants={"rho_t_sq=0.01": {"pla.rho_t_sq": 0.01, "pla.rho_s_sq": 0.99},
                      "rho_t_sq=0.001": {"pla.rho_t_sq": 0.001, "pla.rho_s_sq": 0.999}})
    if name == "auth-roc":
        return ExperimentSpec(
            name="auth-roc", sweep_variable="target_pfa",
            sweep_values=(1e-3, 1e-2, 0.05, 0.1, 0.2, 0.5), trials=100_000,
            auth_overhead_s={})
    raise ConfigurationError(f"unknown experiment {name!r}")


@dataclass(frozen=True)
class RootConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    pla: PlaConfig = field(default_factory=PlaConfig)
    bcd: BcdConfig = field(default_factory=BcdConfig)
    tasks: TaskSpec = field(default_factory=TaskSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)

    def validate(self) -> list[str]:
        errors = []
        for name in SECTIONS:
            errors += [f"{name}.{e}" for e in getattr(self, name).validate()]
        return errors

    def to_dict(self) -> dict:
        return {name: _plain(dataclasses.asdict(getattr(self, name))) for name in SECTIONS}

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; independent of key order in the file."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    @classmethod
    def from_dict(cls, data: dict | None) -> "RootConfig":
        cfg, errors = _build_root(data or {})
        errors += cfg.validate()
        if errors:
            raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
        return cfg

    def with_overrides(self, overrides: dict) -> "RootConfig":
        return apply_overrides(self, overrides)


SECTIONS = ("scenario", "radio", "pla", "bcd", "tasks", "experiment")
_SECTION_TYPES = {"scenario": ScenarioConfig, "radio": RadioConfig, "pla": PlaConfig,
                  "bcd": BcdConfig, "tasks": TaskSpec, "experiment": ExperimentSpec}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _number(value) -> float | None:
    # YAML 1.1 reads "1e-6" (no dot) as a string
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    return None


def _coerce(value, default, path: str, errors: list[str]):
    """Convert a YAML scalar to the type of the field's default."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    elif isinstance(default, float):
        num = _number(value)
        if num is not None:
            return num
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
    elif isinstance(default, tuple):
        if isinstance(value, (list, tuple)):
            nums = [_number(v) for v in value]
            return tuple(value) if None in nums else tuple(nums)
    elif isinstance(default, dict):
        if isinstance(value, dict):
            return dict(value)
    elif default is None:
        return value
    errors.append(f"{path}: expected {type(default).__name__}, got {value!r}")
    return default


def _build_section(cls, base, data, path: str, errors: list[str]):
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a mapping")
        return base
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            errors.append(f"{path}.{key}: unknown field")
            continue
        kwargs[key] = _coerce(value, getattr(base, key), f"{path}.{key}", errors)
    return dataclasses.replace(base, **kwargs)


def _build_root(data: dict) -> tuple[RootConfig, list[str]]:
    errors: list[str] = []
    if not isinstance(data, dict):
        return RootConfig(), ["<root>: expected a mapping of sections"]
    sections = {}
    for key in data:
        if key not in SECTIONS:
            errors.append(f"{key}: unknown section")
    for name in SECTIONS:
        raw = data.get(name)
        if name == "experiment":
            exp_name = raw.get("name", "feasibility") if isinstance(raw, dict) else "feasibility"
            try:
                base = default_experiment(exp_name)
            except ConfigurationError:
                errors.append(f"experiment.name: must be one of {EXPERIMENT_NAMES}")
                base = ExperimentSpec()
        else:
            base = _SECTION_TYPES[name]()
        sections[name] = base if raw is None else _build_section(
            _SECTION_TYPES[name], base, raw, name, errors)
    return RootConfig(**sections), errors


def load_and_validate(path) -> RootConfig:
    """Read a YAML config; missing sections and fields take their defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    return RootConfig.from_dict(data)


def apply_overrides(cfg: RootConfig, overrides: dict[str, Any]) -> RootConfig:
    """Return a copy with dotted-path overrides such as ``{"scenario.num_uav": 9}``."""
    if not overrides:
        return cfg
    data = copy.deepcopy(cfg.to_dict())
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or not key:
            raise ConfigurationError(f"bad override path {dotted!r}")
        data[section][key] = value
    return RootConfig.from_dict(data)


def env_seed(default: int) -> int:
    raw = os.environ.get(ENV_SEED)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"{ENV_SEED} must be an integer, got {raw!r}") from None


def env_out_dir() -> Path | None:
    raw = os.environ.get(ENV_OUT_DIR)
    return Path(raw) if raw else None
