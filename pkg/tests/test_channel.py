import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntn_offload.channel import (SPEED_OF_LIGHT, DegenerateChannelError, RadioConfig,
                                 access_rate, amplification_factor, backhaul_omega_sq,
                                 backhaul_rate, build_channel_state, effective_channel,
                                 free_space_path_gain, noise_covariance, ricean_k_factor,
                                 sample_iot_uav_channel, uav_haps_channel, upa_response)
from ntn_offload.scenario import Position3D, ScenarioConfig, build_scenario, distance

SMALL = RadioConfig(N_U=4, N_A_R=16, N_A_T=16)


def cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


# ---------------------------------------------------------------- path gain

def test_path_gain_unit_case():
    # lambda = 1 m and d = 1/(4 pi) m make the free-space factor exactly one
    assert free_space_path_gain(SPEED_OF_LIGHT, 1 / (4 * math.pi)) == pytest.approx(1.0)


def test_path_gain_inverse_square():
    g1 = free_space_path_gain(2.1e9, 500.0)
    assert free_space_path_gain(2.1e9, 1000.0) == pytest.approx(g1 / 4)


def test_path_gain_textbook_fspl():
    # FSPL(dB) = 20 log10(d_km) + 20 log10(f_MHz) + 32.45
    oracle_db = 20 * math.log10(1.0) + 20 * math.log10(2100.0) + 32.45
    got_db = -10 * math.log10(free_space_path_gain(2.1e9, 1000.0))
    assert got_db == pytest.approx(98.88, abs=0.05)
    assert got_db == pytest.approx(oracle_db, abs=0.01)


def test_path_gain_excess_loss_and_errors():
    assert free_space_path_gain(2e9, 10.0, 3.0) == pytest.approx(
        free_space_path_gain(2e9, 10.0) * 10 ** -0.3)
    with pytest.raises(ValueError):
        free_space_path_gain(2e9, 0.0)


# ---------------------------------------------------------------- K factor

def test_k_factor_endpoints_and_midpoint():
    cfg = RadioConfig(k_factor_min_db=0.0, k_factor_max_db=20.0)
    assert ricean_k_factor(90, cfg) == pytest.approx(100.0)
    assert ricean_k_factor(0, cfg) == pytest.approx(1.0)
    assert ricean_k_factor(45, cfg) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        ricean_k_factor(91, cfg)


@given(st.floats(0, 90), st.floats(0, 90))
def test_k_factor_monotone(a, b):
    lo, hi = sorted((a, b))
    assert ricean_k_factor(lo, RadioConfig()) <= ricean_k_factor(hi, RadioConfig())


# ---------------------------------------------------------------- UPA

def test_upa_zero_phase_is_all_ones():
    assert np.allclose(upa_response(37.0, 0.0, 16), np.ones(16))


@given(st.floats(0, 360), st.floats(0, 90), st.sampled_from([1, 4, 16, 64]))
def test_upa_unit_modulus(az, el, n):
    a = upa_response(az, el, n)
    assert np.allclose(np.abs(a), 1.0)
    assert np.vdot(a, a).real == pytest.approx(n)


def test_upa_distinct_directions_decorrelate():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a1 = upa_response(rng.uniform(0, 360), rng.uniform(5, 90), 64)
        a2 = upa_response(rng.uniform(0, 360), rng.uniform(5, 90), 64)
        assert abs(np.vdot(a1, a2)) / 64 < 1


def test_upa_rejects_non_square():
    with pytest.raises(ValueError):
        upa_response(0, 0, 8)


# ---------------------------------------------------------------- access fading

def test_pure_los_norm():
    cfg = RadioConfig(k_factor_min_db=200, k_factor_max_db=200)
    rng = np.random.default_rng(0)
    g = sample_iot_uav_channel(Position3D(0, 0, 0), Position3D(300, 100, 120), cfg, rng, beta=1.0)
    assert np.vdot(g, g).real == pytest.approx(cfg.N_U)
    g = sample_iot_uav_channel(Position3D(0, 0, 0), Position3D(300, 100, 120), cfg, rng, beta=0.25)
    assert np.vdot(g, g).real == pytest.approx(0.25 * cfg.N_U)


def test_rayleigh_mean_power():
    cfg = RadioConfig(N_U=4, k_factor_min_db=-400, k_factor_max_db=-400)
    rng = np.random.default_rng(2)
    node, uav = Position3D(0, 0, 0), Position3D(10, 0, 120)
    p = [np.vdot(h, h).real / cfg.N_U
         for h in (sample_iot_uav_channel(node, uav, cfg, rng, beta=1.0) for _ in range(100_000))]
    assert np.mean(p) == pytest.approx(1.0, abs=0.02)


# ---------------------------------------------------------------- backhaul of the relays

def test_uav_haps_channel_rank_one_and_power():
    cfg = SMALL
    uav, haps = Position3D(1000, 2000, 120), Position3D(5000, 5000, 20000)
    G = uav_haps_channel(uav, haps, cfg, beta=1.0)
    assert np.linalg.norm(G) ** 2 == pytest.approx(cfg.N_U * cfg.N_A_R)
    sv = np.linalg.svd(G, compute_uv=False)
    assert sv[0] == pytest.approx(math.sqrt(cfg.N_U * cfg.N_A_R))
    assert np.all(sv[1:] < 1e-9 * np.linalg.norm(G))


def test_uav_haps_channel_phase():
    cfg = SMALL
    uav, haps = Position3D(1000, 2000, 120), Position3D(5000, 5000, 20000)
    G = uav_haps_channel(uav, haps, cfg, beta=1.0)
    # the steering outer product has a unit entry at element (0, 0)
    d = distance(uav, haps)
    expect = np.exp(-2j * np.pi * d / (SPEED_OF_LIGHT / cfg.access_carrier_hz))
    assert G[0, 0] == pytest.approx(expect, abs=1e-9)


def test_all_built_relay_channels_rank_one():
    sc = build_scenario(ScenarioConfig(num_iot=3, num_malicious=0, num_uav=9))
    ch = build_channel_state(sc, SMALL, np.random.default_rng(0))
    for G in ch.G_ua:
        sv = np.linalg.svd(G, compute_uv=False)
        assert np.sum(sv > 1e-9 * np.linalg.norm(G)) == 1


# ---------------------------------------------------------------- AF gain

def test_amplification_examples():
    cfg = RadioConfig(N_U=64)
    assert amplification_factor(cfg, 0.0) == pytest.approx(cfg.p_u / 64)
    unit = RadioConfig(N_U=64, p_u_dbm=RadioConfig().access_noise_dbm,
                       p_i_dbm=RadioConfig().access_noise_dbm)
    assert unit.p_u == pytest.approx(1.0) and unit.p_i == pytest.approx(1.0)
    assert amplification_factor(unit, 1.0) == pytest.approx(1 / 128)


def test_amplification_meets_power_budget():
    # E ||sqrt(q) Y_u||_F^2 / L over fading, symbols and noise equals p_u
    cfg = RadioConfig(N_U=4, p_u_dbm=-110.0, p_i_dbm=-105.0, k_factor_min_db=3, k_factor_max_db=3)
    beta, L, n_blocks = 0.8, 8, 10_000
    q = amplification_factor(cfg, beta)
    rng = np.random.default_rng(3)
    h_los = upa_response(20.0, 30.0, cfg.N_U)
    k = ricean_k_factor(45.0, cfg)
    h = math.sqrt(k / (k + 1)) * h_los + math.sqrt(1 / (k + 1)) * cn(rng, (n_blocks, cfg.N_U))
    g = math.sqrt(beta) * h
    x = np.exp(1j * np.pi / 2 * rng.integers(0, 4, (n_blocks, L)))
    Y = math.sqrt(cfg.p_i) * g[:, :, None] * x.conj()[:, None, :] + cn(rng, (n_blocks, cfg.N_U, L))
    power = q * np.mean(np.sum(np.abs(Y) ** 2, axis=(1, 2))) / L
    assert power == pytest.approx(cfg.p_u, rel=0.02)


# ---------------------------------------------------------------- effective channel

def test_effective_channel_scalar_case():
    g_eff, sigma = effective_channel(np.ones((1, 1)), np.ones((1, 1, 1)), np.ones(1), 1.0)
    assert g_eff == pytest.approx([1.0])
    assert sigma == pytest.approx(2.0)


def test_effective_channel_degenerate():
    with pytest.raises(DegenerateChannelError):
        effective_channel(np.ones((2, 2)), np.zeros((2, 2, 4)), np.ones(2), 1.0)


def test_noise_variance_monte_carlo():
    rng = np.random.default_rng(4)
    U, n_u, n_a = 2, 2, 4
    g = cn(rng, (U, n_u))
    G = cn(rng, (U, n_u, n_a))
    q = rng.uniform(0.2, 1.0, U)
    g_eff, sigma = effective_channel(g, G, q, 1.5)
    # aggregate HAPS noise sum_u sqrt(q_u) G_u^H w_u + w_a, projected by the equaliser
    n = 100_000
    noise = np.einsum("u,una,sun->sa", np.sqrt(q), G.conj(), cn(rng, (n, U, n_u))) \
        + cn(rng, (n, n_a))
    proj = noise @ g_eff.conj() / np.vdot(g_eff, g_eff).real
    assert np.var(proj) == pytest.approx(sigma, rel=0.03)
    C = noise_covariance(G, q)
    assert np.allclose(np.cov(noise.T), C, atol=0.05 * np.abs(C).max())


def test_effective_channel_uav_permutation():
    rng = np.random.default_rng(5)
    g, G, q = cn(rng, (3, 4)), cn(rng, (3, 4, 16)), rng.uniform(0.1, 1, 3)
    perm = [2, 0, 1]
    a, sa = effective_channel(g, G, q, 2.0)
    b, sb = effective_channel(g[perm], G[perm], q[perm], 2.0)
    assert np.vdot(a, a).real == pytest.approx(np.vdot(b, b).real)
    assert sa == pytest.approx(sb)


def test_noise_variance_shrinks_with_more_uavs():
    cfg = RadioConfig(N_U=16, N_A_R=64, N_A_T=64)
    medians = []
    for U in (4, 9, 25):
        sc = build_scenario(ScenarioConfig(num_iot=5, num_malicious=0, num_uav=U, rng_seed=11))
        draws = np.array([build_channel_state(sc, cfg, np.random.default_rng(s)).sigma_n_sq
                          for s in range(100)])
        assert np.all(draws > 0)
        medians.append(np.median(draws, axis=0))
    assert np.all(medians[1] < medians[0]) and np.all(medians[2] < medians[1])


# ---------------------------------------------------------------- rates

def test_access_rate_examples():
    assert access_rate(200e3, 1.0, 1.0, 0.0, 0.01) == 0.0
    assert access_rate(200e3, 1.0, 1.0, 1.0, 0.0) == pytest.approx(200e3)
    got = access_rate(1.0, 1.0, 0.01, 0.99, 0.01)
    # log2(50.5) = ln(50.5) / ln(2) = 5.6582
    assert got == pytest.approx(math.log(50.5) / math.log(2), abs=1e-12)
    assert got == pytest.approx(5.6582, abs=1e-3)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-4, 1e2))
def test_access_rate_monotone_in_power_without_tag(p1, p2, sigma):
    lo, hi = sorted((p1, p2))
    assert access_rate(1.0, lo, sigma, 1.0, 0.0) <= access_rate(1.0, hi, sigma, 1.0, 0.0)


@given(st.floats(0, 0.9), st.floats(0, 0.9), st.floats(0, 0.1))
def test_access_rate_monotone_in_message_power(a, b, rt):
    lo, hi = sorted((a, b))
    assert access_rate(1.0, 2.0, 0.3, lo, rt) <= access_rate(1.0, 2.0, 0.3, hi, rt)


def test_backhaul_rate_examples():
    cfg = RadioConfig(B_a=100e6)
    assert backhaul_rate(cfg, 0.0) == 0.0
    omega = math.sqrt(3 * cfg.sigma_k_sq / cfg.rho_a_k)
    assert backhaul_rate(cfg, omega) == pytest.approx(200e6)


def test_backhaul_link_budget():
    cfg = RadioConfig()
    d = build_scenario(ScenarioConfig()).haps_leo_distances()
    rate = backhaul_rate(cfg, np.sqrt(backhaul_omega_sq(cfg, d)))
    snr_db = 10 * np.log10(2 ** (rate / cfg.B_a) - 1)
    # link budget in dB: EIRP + G_rx - FSPL - atmosphere - noise floor
    fspl = 20 * np.log10(d / 1e3) + 20 * np.log10(cfg.backhaul_carrier_hz / 1e6) + 32.45
    noise = -174 + 10 * np.log10(cfg.B_a) + cfg.leo_noise_figure_db
    budget = (cfg.rho_a_k_dbm + cfg.tx_gain_db + cfg.rx_gain_db - fspl
              - cfg.atmospheric_loss_db - noise)
    assert np.allclose(snr_db, budget, atol=0.1)


def test_channel_state_shapes_and_positivity(tmp_path):
    sc = build_scenario(ScenarioConfig(num_iot=4, num_malicious=2, num_uav=4))
    ch = build_channel_state(sc, SMALL, np.random.default_rng(0))
    assert ch.g_iu.shape == (6, 4, SMALL.N_U) and ch.G_ua.shape == (4, SMALL.N_U, SMALL.N_A_R)
    for name in ("beta_iu", "q_ui", "sigma_n_sq", "omega_ak", "R_ia", "R_ak"):
        v = getattr(ch, name)
        assert np.all(np.isfinite(v)) and np.all(v > 0), name
    p = tmp_path / "ch.npz"
    ch.save(p)
    back = type(ch).load(p)
    assert np.array_equal(back.g_eff, ch.g_eff) and back.p_i == ch.p_i


def test_radio_config_validation():
    errors = RadioConfig(N_U=10, k_factor_min_db=5, k_factor_max_db=1).validate()
    assert any("N_U" in e for e in errors) and any("k_factor" in e for e in errors)
