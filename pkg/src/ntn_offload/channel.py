"""Channel quantities for the IoT -> UAV -> HAPS access chain and the HAPS -> LEO backhaul.

Powers are held in dBm in :class:`RadioConfig` and exposed as the normalised
linear values the signal model uses.  Access-side powers are normalised to the
thermal noise floor of one device subchannel (``B_i`` at 290 K plus a noise
figure), which makes the UAV and HAPS receiver noise unit-variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Position3D, Scenario, distance, link_angles, link_angles_array

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0


class DegenerateChannelError(ValueError):
    """The effective channel vanished, so equalisation is undefined."""


def _is_square(n: int) -> bool:
    return n > 0 and math.isqrt(n) ** 2 == n


@dataclass(frozen=True)
class RadioConfig:
    access_carrier_hz: float = 2.1e9
    backhaul_carrier_hz: float = 28e9
    B_i: float = 200e3
    B_a: float = 100e6
    N_U: int = 64
    N_A_R: int = 256
    N_A_T: int = 256
    p_i_dbm: float = 20.0
    p_u_dbm: float = 30.0
    rho_a_k_dbm: float = 33.0
    access_noise_figure_db: float = 7.0
    leo_noise_figure_db: float = 3.0
    # Shifts the access noise floor used for normalisation (robustness knob).
    normalization_offset_db: float = 0.0
    access_excess_loss_db: float = 0.0
    atmospheric_loss_db: float = 1.0
    k_factor_min_db: float = 0.0
    k_factor_max_db: float = 20.0
    tx_gain_db: float = 10 * math.log10(256)
    rx_gain_db: float = 10 * math.log10(256)

    def validate(self) -> list[str]:
        errors = []
        for name in ("access_carrier_hz", "backhaul_carrier_hz", "B_i", "B_a"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be > 0")
        for name in ("N_U", "N_A_R", "N_A_T"):
            if not _is_square(int(getattr(self, name))):
                errors.append(f"{name} must be a perfect square")
        if self.k_factor_min_db > self.k_factor_max_db:
            errors.append("k_factor_min_db must be <= k_factor_max_db")
        return errors

    @property
    def access_noise_dbm(self) -> float:
        return (THERMAL_NOISE_DBM_HZ + 10 * math.log10(self.B_i)
                + self.access_noise_figure_db + self.normalization_offset_db)

    @property
    def p_i(self) -> float:
        """IoT transmit power normalised to the access noise floor."""
        return 10 ** ((self.p_i_dbm - self.access_noise_dbm) / 10)

    @property
    def p_u(self) -> float:
        return 10 ** ((self.p_u_dbm - self.access_noise_dbm) / 10)

    @property
    def rho_a_k(self) -> float:
        """HAPS transmit power per LEO link in mW."""
        return 10 ** (self.rho_a_k_dbm / 10)

    @property
    def sigma_k_sq(self) -> float:
        """LEO receiver noise power in mW."""
        dbm = THERMAL_NOISE_DBM_HZ + 10 * math.log10(self.B_a) + self.leo_noise_figure_db
        return 10 ** (dbm / 10)

    @property
    def access_wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.access_carrier_hz


@dataclass(frozen=True)
class ChannelState:
    beta_iu: np.ndarray      # (nodes, U)
    beta_ua: np.ndarray      # (U,)
    g_iu: np.ndarray         # (nodes, U, N_U)
    G_ua: np.ndarray         # (U, N_U, N_A_R)
    q_ui: np.ndarray         # (nodes, U)
    g_eff: np.ndarray        # (nodes, N_A_R)
    sigma_n_sq: np.ndarray   # (nodes,)
    omega_ak: np.ndarray     # (K,)
    d_ak: np.ndarray         # (K,)
    R_ia: np.ndarray         # (nodes,)
    R_ak: np.ndarray         # (K,)
    p_i: float

    @property
    def num_nodes(self) -> int:
        return self.g_iu.shape[0]

    def save(self, path) -> None:
        np.savez_compressed(path, **{k: np.asarray(v) for k, v in self.__dict__.items()})

    @classmethod
    def load(cls, path) -> "ChannelState":
        with np.load(path) as data:
            kw = {k: data[k] for k in data.files}
        kw["p_i"] = float(kw["p_i"])
        return cls(**kw)


def free_space_path_gain(freq: float, d, excess_loss_db: float = 0.0):
    """(c / (4 pi f d))^2 attenuated by ``excess_loss_db``."""
    d = np.asarray(d, dtype=float)
    if freq <= 0:
        raise ValueError("frequency must be positive")
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    gain = (SPEED_OF_LIGHT / (4 * math.pi * freq * d)) ** 2 * 10 ** (-excess_loss_db / 10)
    return float(gain) if gain.ndim == 0 else gain


def ricean_k_factor(elevation, cfg: RadioConfig):
    """Linear K-factor, interpolated in dB between 0 and 90 degrees of elevation."""
    el = np.asarray(elevation, dtype=float)
    if np.any((el < 0) | (el > 90)):
        raise ValueError("elevation must lie in [0, 90] degrees")
    k_db = cfg.k_factor_min_db + (cfg.k_factor_max_db - cfg.k_factor_min_db) * el / 90.0
    k = 10 ** (k_db / 10)
    return float(k) if k.ndim == 0 else k


def upa_response(azimuth, elevation, n_elements: int) -> np.ndarray:
    """Half-wavelength UPA steering vector.

    ``elevation`` is the angle from the panel normal; element (m, n) carries
    phase pi * (m sin(el) cos(az) + n sin(el) sin(az)).  Broadcasts over
    array-valued angles, appending the element axis last.
    """
    if not _is_square(n_elements):
        raise ValueError("UPA element count must be a perfect square")
    side = math.isqrt(n_elements)
    m, n = np.divmod(np.arange(n_elements), side)
    az = np.radians(np.asarray(azimuth, dtype=float))[..., None]
    el = np.radians(np.asarray(elevation, dtype=float))[..., None]
    phase = np.pi * np.sin(el) * (m * np.cos(az) + n * np.sin(az))
    return np.exp(1j * phase)


def panel_angle(elevation):
    """Angle from the normal of a horizontal panel for a ray at ``elevation``."""
    return 90.0 - np.abs(elevation)


def sample_iot_uav_channel(node: Position3D, uav: Position3D, cfg: RadioConfig,
                           rng: np.random.Generator, beta: float | None = None) -> np.ndarray:
    """Ricean channel vector g_{i,u} = sqrt(beta) h from one node to one UAV."""
    if beta is None:
        beta = free_space_path_gain(cfg.access_carrier_hz, distance(node, uav),
                                    cfg.access_excess_loss_db)
    _, el_ground = link_angles(node, uav)
    k = ricean_k_factor(max(el_ground, 0.0), cfg)
    az, el = link_angles(uav, node)
    h_los = upa_response(az, panel_angle(el), cfg.N_U)
    h = _ricean_mix(k, h_los, rng)
    return math.sqrt(beta) * h


def _ricean_mix(k, h_los, rng) -> np.ndarray:
    k = np.asarray(k, dtype=float)[..., None]
    nlos = (rng.standard_normal(h_los.shape) + 1j * rng.standard_normal(h_los.shape)) / math.sqrt(2)
    if np.all(np.isinf(k)):
        return h_los.astype(complex)
    los_w = np.sqrt(k / (k + 1))
    nlos_w = np.sqrt(1 / (k + 1))
    return los_w * h_los + nlos_w * nlos


def uav_haps_channel(uav: Position3D, haps: Position3D, cfg: RadioConfig,
                     beta: float | None = None) -> np.ndarray:
    """Rank-one LoS matrix G_{u,a} of shape (N_U, N_A_R)."""
    d = distance(uav, haps)
    if beta is None:
        beta = free_space_path_gain(cfg.access_carrier_hz, d, 0.0)
    az_d, el_d = link_angles(uav, haps)
    az_a, el_a = link_angles(haps, uav)
    a_u = upa_response(az_d, panel_angle(el_d), cfg.N_U)
    a_a = upa_response(az_a, panel_angle(el_a), cfg.N_A_R)
    phase = np.exp(-2j * np.pi * d / cfg.access_wavelength)
    return math.sqrt(beta) * phase * np.outer(a_u, a_a.conj())


def amplification_factor(cfg: RadioConfig, beta_iu):
    """AF gain meeting the UAV's average transmit-power budget."""
    q = cfg.p_u / (cfg.N_U * (cfg.p_i * np.asarray(beta_iu, dtype=float) + 1.0))
    return float(q) if q.ndim == 0 else q


def effective_channel(g_iu: np.ndarray, G_ua: np.ndarray, q_u: np.ndarray,
                      p_i: float) -> tuple[np.ndarray, float]:
    """Weighted effective channel of one node and its post-equalisation noise variance.

    ``g_iu`` is (U, N_U), ``G_ua`` is (U, N_U, N_A_R) and ``q_u`` is (U,).
    """
    g_eff, sigma = _effective_channel_batch(g_iu[None], G_ua, np.asarray(q_u)[None], p_i)
    return g_eff[0], float(sigma[0])


def _effective_channel_batch(g_iu, G_ua, q_ui, p_i):
    w = np.sqrt(q_ui * p_i)[..., None] * g_iu                       # (nodes, U, N_U)
    g_eff = np.einsum("una,iun->ia", G_ua.conj(), w)                 # sum_u G_u^H w_u
    norm2 = np.sum(np.abs(g_eff) ** 2, axis=1)
    if np.any(norm2 <= 0):
        raise DegenerateChannelError("effective channel has zero norm")
    proj = np.einsum("una,ia->iun", G_ua, g_eff)                     # G_u g
    quad = norm2 + np.einsum("iu,iu->i", q_ui, np.sum(np.abs(proj) ** 2, axis=2))
    return g_eff, quad / norm2**2


def noise_covariance(G_ua: np.ndarray, q_u: np.ndarray) -> np.ndarray:
    """Per-symbol covariance I + sum_u q_u G_u^H G_u of the aggregate HAPS noise."""
    n_a = G_ua.shape[2]
    return np.eye(n_a) + np.einsum("u,una,unb->ab", q_u, G_ua.conj(), G_ua)


def access_rate(B_i: float, p_i: float, sigma_n_sq, rho_s_sq: float, rho_t_sq: float):
    """Access rate in bit/s with the tag counted as interference."""
    sinr = rho_s_sq * p_i / (rho_t_sq * p_i + np.asarray(sigma_n_sq, dtype=float))
    r = B_i * np.log2(1.0 + sinr)
    return float(r) if r.ndim == 0 else r


def backhaul_omega_sq(cfg: RadioConfig, d_ak):
    """Squared singular value of the HAPS -> LEO LoS channel."""
    return 10 ** ((cfg.tx_gain_db + cfg.rx_gain_db) / 10) * free_space_path_gain(
        cfg.backhaul_carrier_hz, d_ak, cfg.atmospheric_loss_db)


def backhaul_rate(cfg: RadioConfig, omega_ak):
    snr = cfg.rho_a_k * np.asarray(omega_ak, dtype=float) ** 2 / cfg.sigma_k_sq
    r = cfg.B_a * np.log2(1.0 + snr)
    return float(r) if r.ndim == 0 else r


def build_channel_state(scenario: Scenario, cfg: RadioConfig, rng: np.random.Generator,
                        rho_s_sq: float = 0.99, rho_t_sq: float = 0.01) -> ChannelState:
    """Draw every channel quantity for one scenario realisation."""
    ground = scenario.ground_array()
    uavs = scenario.uav_array()
    haps = scenario.haps_position
    n_nodes, n_uav = len(ground), len(uavs)

    d_iu = np.linalg.norm(ground[:, None, :] - uavs[None, :, :], axis=2)
    beta_iu = free_space_path_gain(cfg.access_carrier_hz, d_iu, cfg.access_excess_loss_db)
    beta_iu = np.asarray(beta_iu).reshape(n_nodes, n_uav)

    _, el_ground = link_angles_array(ground[:, None, :], uavs[None, :, :])
    k = ricean_k_factor(np.clip(el_ground, 0.0, 90.0), cfg)
    az, el = link_angles_array(uavs[None, :, :], ground[:, None, :])
    h_los = upa_response(az, panel_angle(el), cfg.N_U)
    h = _ricean_mix(k, h_los, rng)
    g_iu = np.sqrt(beta_iu)[..., None] * h

    G_ua = np.stack([uav_haps_channel(Position3D.from_array(u), haps, cfg) for u in uavs]) \
        if n_uav else np.zeros((0, cfg.N_U, cfg.N_A_R), complex)
    beta_ua = np.array([free_space_path_gain(cfg.access_carrier_hz,
                                             distance(Position3D.from_array(u), haps))
                        for u in uavs])
    q_ui = np.asarray(amplification_factor(cfg, beta_iu)).reshape(n_nodes, n_uav)

    if n_nodes:
        g_eff, sigma_n_sq = _effective_channel_batch(g_iu, G_ua, q_ui, cfg.p_i)
    else:
        g_eff, sigma_n_sq = np.zeros((0, cfg.N_A_R), complex), np.zeros(0)

    # sigma_n_sq is referred to the unit-power symbol x; scaling by p_i keeps
    # p_i from being counted twice in the access SINR.
    R_ia = np.asarray(access_rate(cfg.B_i, cfg.p_i, cfg.p_i * sigma_n_sq,
                                  rho_s_sq, rho_t_sq)).reshape(n_nodes)

    d_ak = scenario.haps_leo_distances()
    omega = np.sqrt(np.asarray(backhaul_omega_sq(cfg, d_ak))).reshape(len(d_ak)) \
        if len(d_ak) else np.zeros(0)
    R_ak = np.asarray(backhaul_rate(cfg, omega)).reshape(len(d_ak))

    return ChannelState(beta_iu=beta_iu, beta_ua=beta_ua, g_iu=g_iu, G_ua=G_ua, q_ui=q_ui,
                        g_eff=g_eff, sigma_n_sq=sigma_n_sq, omega_ak=omega, d_ak=d_ak,
                        R_ia=R_ia, R_ak=R_ak, p_i=cfg.p_i)
