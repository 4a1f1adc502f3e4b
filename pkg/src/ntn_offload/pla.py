"""Tag-based physical-layer authentication over the AF relay chain.

A device superimposes a low-power keyed tag on its message block.  The HAPS
equalises the relayed signal, strips the (perfectly recovered) message,
match-filters the residual against the tag it expects for that device and
admits the request when the statistic clears a Neyman-Pearson threshold.
"""

from __future__ import annotations

import hashlib
import math
import secrets
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import norm

from .channel import ChannelState, DegenerateChannelError

TransmitMode = Literal["tagged", "untagged", "plain", "forged"]

KEY_BYTES = 32
_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / math.sqrt(2)  # Gray: (b0, b1)


@dataclass(frozen=True)
class SecretKey:
    key_bytes: bytes
    epoch: int = 0

    def __post_init__(self):
        if len(self.key_bytes) != KEY_BYTES:
            raise ValueError(f"key must be {KEY_BYTES} bytes")

    @classmethod
    def generate(cls, rng: np.random.Generator | None = None, epoch: int = 0) -> "SecretKey":
        if rng is None:
            return cls(secrets.token_bytes(KEY_BYTES), epoch)
        return cls(rng.bytes(KEY_BYTES), epoch)


@dataclass(frozen=True)
class PlaConfig:
    L: int = 128
    rho_s_sq: float = 0.99
    rho_t_sq: float = 0.01
    target_pfa: float = 1e-6

    def validate(self) -> list[str]:
        errors = []
        if self.L < 1:
            errors.append("L must be >= 1")
        if self.rho_s_sq < 0 or self.rho_t_sq < 0:
            errors.append("rho_s_sq and rho_t_sq must be >= 0")
        if self.rho_s_sq + self.rho_t_sq > 1 + 1e-12:
            errors.append("rho_s_sq + rho_t_sq must be <= 1")
        if not 0 < self.target_pfa < 1:
            errors.append("target_pfa must lie in (0, 1)")
        return errors


@dataclass(frozen=True)
class SignalBlock:
    s: np.ndarray
    t: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class AuthOutcome:
    lambda_: float
    theta_star: float
    admitted: bool
    sigma_n_sq: float


def random_qpsk(n, rng: np.random.Generator) -> np.ndarray:
    return _QPSK[rng.integers(0, 4, size=n)]


def generate_tag(s: np.ndarray, key: SecretKey) -> np.ndarray:
    """Keyed-PRF tag of unit-modulus Gray QPSK symbols, one per message symbol."""
    return generate_tags(np.asarray(s)[None, :], key)[0]


def generate_tags(S: np.ndarray, key: SecretKey) -> np.ndarray:
    """Row-wise :func:`generate_tag` for a batch of messages of shape (n, L)."""
    S = np.asarray(S)
    n, L = S.shape
    rows = np.empty((n, L, 2), "<i4")
    np.rint(S.real * 2**14, out=rows[..., 0], casting="unsafe")
    np.rint(S.imag * 2**14, out=rows[..., 1], casting="unsafe")
    buf = memoryview(rows.tobytes())
    width = 8 * L
    suffix = key.epoch.to_bytes(8, "little", signed=True)
    n_bytes = (2 * L + 7) // 8
    n_blocks = -(-n_bytes // 64)
    tails = [suffix + c.to_bytes(4, "little") for c in range(n_blocks)]
    kb = key.key_bytes
    blake = hashlib.blake2b
    digests = b"".join([blake(bytes(buf[r * width:(r + 1) * width]) + tail, key=kb,
                              digest_size=64).digest()
                        for r in range(n) for tail in tails])
    stream = np.frombuffer(digests, dtype=np.uint8).reshape(n, n_blocks * 64)[:, :n_bytes]
    bits = np.unpackbits(stream, axis=1)[:, : 2 * L]
    return _QPSK[bits[:, 0::2] * 2 + bits[:, 1::2]]


def build_tagged_signal(s, t, cfg: PlaConfig) -> np.ndarray:
    if cfg.rho_s_sq + cfg.rho_t_sq > 1 + 1e-12:
        raise ValueError("power split violates rho_s^2 + rho_t^2 <= 1")
    return math.sqrt(cfg.rho_s_sq) * np.asarray(s) + math.sqrt(cfg.rho_t_sq) * np.asarray(t)


def transmit_block(s, key: SecretKey | None, cfg: PlaConfig, mode: TransmitMode = "tagged",
                   rng: np.random.Generator | None = None) -> SignalBlock:
    """Build the transmitted block for a given behaviour.

    ``tagged``   legitimate superposition of message and keyed tag.
    ``untagged`` message at its split power, tag slot silent.
    ``plain``    full-power message (rho_s = 1).
    ``forged``   tag drawn from a random key the attacker made up.
    """
    s = np.asarray(s)
    zero = np.zeros_like(s, dtype=complex)
    if mode == "tagged":
        t = generate_tag(s, key)
        return SignalBlock(s, t, build_tagged_signal(s, t, cfg))
    if mode == "untagged":
        return SignalBlock(s, zero, math.sqrt(cfg.rho_s_sq) * s)
    if mode == "plain":
        return SignalBlock(s, zero, s.astype(complex))
    if mode == "forged":
        fake = SecretKey.generate(rng)
        t = generate_tag(s, fake)
        return SignalBlock(s, t, build_tagged_signal(s, t, cfg))
    raise ValueError(f"unknown transmit mode {mode!r}")


def simulate_reception(x: np.ndarray, node: int, channel: ChannelState,
                       rng: np.random.Generator | None, noise: bool = True) -> np.ndarray:
    """Received N_A_R x L block at the HAPS after AF relaying by every UAV."""
    x = np.asarray(x)
    L = x.shape[-1]
    g = channel.g_iu[node]                  # (U, N_U)
    G = channel.G_ua                        # (U, N_U, N_A)
    q = channel.q_ui[node]                  # (U,)
    U, n_u = g.shape
    n_a = G.shape[2]
    Y_u = math.sqrt(channel.p_i) * g[:, :, None] * x.conj()[None, None, :]
    if noise:
        Y_u = Y_u + _cn(rng, (U, n_u, L))
    Y_a = np.einsum("u,una,unl->al", np.sqrt(q), G.conj(), Y_u)
    if noise:
        Y_a = Y_a + _cn(rng, (n_a, L))
    return Y_a


def _cn(rng, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def equalize(Y_a: np.ndarray, g_eff: np.ndarray) -> np.ndarray:
    norm2 = float(np.vdot(g_eff, g_eff).real)
    if norm2 <= 0:
        raise DegenerateChannelError("effective channel has zero norm")
    return (g_eff.conj() @ Y_a).conj() / norm2


def recover_residual(x_hat, s_hat, cfg: PlaConfig) -> np.ndarray:
    if cfg.rho_t_sq <= 0:
        raise ValueError("no tag power: residual undefined")
    return (np.asarray(x_hat) - math.sqrt(cfg.rho_s_sq) * np.asarray(s_hat)) / math.sqrt(cfg.rho_t_sq)


def test_statistic(t_expected, r) -> float:
    return float(np.real(np.vdot(t_expected, r)))


test_statistic.__test__ = False  # keep pytest from collecting it


def statistic_scale(sigma_n_sq, cfg: PlaConfig):
    """Standard deviation of the statistic under either hypothesis."""
    return np.sqrt(cfg.L * np.asarray(sigma_n_sq, dtype=float) / (2 * cfg.rho_t_sq))


def pfa_closed_form(theta, sigma_n_sq, cfg: PlaConfig):
    return norm.sf(np.asarray(theta, float) / statistic_scale(sigma_n_sq, cfg))


def pd_closed_form(theta, sigma_n_sq, cfg: PlaConfig):
    return norm.sf((np.asarray(theta, float) - cfg.L) / statistic_scale(sigma_n_sq, cfg))


def optimal_threshold(sigma_n_sq, cfg: PlaConfig, target_pfa: float | None = None):
    p = cfg.target_pfa if target_pfa is None else target_pfa
    if not 0 < p < 1:
        raise ValueError("target PFA must lie in (0, 1)")
    return norm.isf(p) * statistic_scale(sigma_n_sq, cfg)


def authenticate(node: int, block: SignalBlock, channel: ChannelState, key: SecretKey,
                 cfg: PlaConfig, rng: np.random.Generator, noise: bool = True) -> AuthOutcome:
    """Run the full reception chain for one block and decide admission.

    ``key`` is the key the HAPS has registered for the claimed identity.
    """
    Y_a = simulate_reception(block.x, node, channel, rng, noise=noise)
    g_eff = channel.g_eff[node]
    x_hat = equalize(Y_a, g_eff)
    s_hat = block.s                       # message recovery assumed perfect
    t_expected = generate_tag(s_hat, key)
    r = recover_residual(x_hat, s_hat, cfg)
    lam = test_statistic(t_expected, r)
    sigma = float(channel.sigma_n_sq[node])
    theta = float(optimal_threshold(sigma, cfg))
    return AuthOutcome(lam, theta, lam > theta, sigma)


def sample_statistics(sigma_n_sq: float, cfg: PlaConfig, n_trials: int,
                      rng: np.random.Generator, mode: TransmitMode = "tagged",
                      key: SecretKey | None = None, chunk: int = 4_000) -> np.ndarray:
    """Monte Carlo draws of the test statistic at a fixed channel.

    The equalised noise is drawn directly from its exact law, i.i.d.
    CN(0, sigma_n_sq) per symbol, instead of materialising every relay and
    HAPS noise matrix.  Messages and tags are fresh in every trial.
    """
    if key is None:
        key = SecretKey.generate(rng)
    L = cfg.L
    sd = math.sqrt(sigma_n_sq)
    rs, rt = math.sqrt(cfg.rho_s_sq), math.sqrt(cfg.rho_t_sq)
    out = np.empty(n_trials)
    done = 0
    while done < n_trials:
        n = min(chunk, n_trials - done)
        s = random_qpsk((n, L), rng)
        t_exp = generate_tags(s, key)
        if mode == "tagged":
            x = rs * s + rt * t_exp
        elif mode == "untagged":
            x = rs * s
        elif mode == "plain":
            x = s
        elif mode == "forged":
            forged = np.stack([generate_tag(row, SecretKey.generate(rng)) for row in s])
            x = rs * s + rt * forged
        else:
            raise ValueError(f"unknown transmit mode {mode!r}")
        noise = rng.standard_normal((n, L, 2)).view(complex)[..., 0]
        x_hat = x + (sd / math.sqrt(2)) * noise
        r = (x_hat - rs * s) / rt
        # Re{t^H r} as a real dot product over (re, im) pairs
        out[done:done + n] = np.einsum("ij,ij->i", t_exp.view(float), r.view(float))
        done += n
    return out


def node_statistics(channel: ChannelState, keys: list[SecretKey], modes: list[TransmitMode],
                    cfg: PlaConfig, rng: np.random.Generator, exact: bool = False) -> np.ndarray:
    """One authentication statistic per node.

    With ``exact`` every relay is simulated; otherwise the equalised noise is
    drawn from its exact distribution (much faster, same law).
    """
    lams = np.empty(channel.num_nodes)
    for i in range(channel.num_nodes):
        s = random_qpsk(cfg.L, rng)
        if exact:
            block = transmit_block(s, keys[i], cfg, modes[i], rng)
            lams[i] = authenticate(i, block, channel, keys[i], cfg, rng).lambda_
        else:
            lams[i] = sample_statistics(float(channel.sigma_n_sq[i]), cfg, 1, rng,
                                        mode=modes[i], key=keys[i])[0]
    return lams


def binomial_ci(k, n, z: float = 1.96):
    """Proportion and normal-approximation half width."""
    n = np.maximum(np.asarray(n, float), 1)
    p = np.asarray(k, float) / n
    return p, z * np.sqrt(p * (1 - p) / n)
