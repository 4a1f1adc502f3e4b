import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntn_offload.delay import (Task, load_tasks, propagation_delay, relative_delay, save_tasks,
                               task_delays, total_delay)


def test_propagation_examples():
    assert propagation_delay(299_792_458.0) == pytest.approx(1.0)
    assert propagation_delay(600e3) == pytest.approx(600e3 / 299_792_458.0, abs=1e-7)
    assert propagation_delay(600e3) == pytest.approx(2.0014e-3, abs=1e-7)
    with pytest.raises(ValueError):
        propagation_delay(0.0)


def test_single_task_delay_breakdown():
    # access 1e4/2e5 + backhaul 1e4/1e8 + 2 * 2 ms + compute 1e4*200/1e10
    tau = total_delay(0, [[1.0]], [[1e10]], [1e4], [200.0], [2e5], [1e8], [2e-3])
    assert tau == pytest.approx(0.05 + 1e-4 + 4e-3 + 2e-4, rel=1e-12)
    assert tau == pytest.approx(0.0543, rel=1e-12)


def test_propagation_floor():
    tau = total_delay(0, [[1.0]], [[1e300]], [1.0], [1.0], [1e300], [1e300], [3e-3])
    assert tau == pytest.approx(6e-3)


def test_shared_backhaul_counts_every_coassigned_task():
    B = [[1.0], [1.0]]
    F = [[1e10], [1e10]]
    tau = task_delays(B, F, [1e4, 3e4], [100.0, 100.0], [1e6, 1e6], [1e8], [1e-3])
    backhaul = (1e4 + 3e4) / 1e8
    assert tau[0] == pytest.approx(1e4 / 1e6 + backhaul + 2e-3 + 1e6 / 1e10)
    assert tau[1] == pytest.approx(3e4 / 1e6 + backhaul + 2e-3 + 3e6 / 1e10)


def test_missing_cpu_share_is_an_error():
    with pytest.raises(ValueError):
        task_delays([[1.0]], [[0.0]], [1.0], [1.0], [1.0], [1.0], [1.0])


def test_relative_delay_examples():
    assert relative_delay(0.3, 0.1, admitted=False) == 0.0
    assert relative_delay(0.1, 0.1) == pytest.approx(1.0)
    assert np.allclose(relative_delay([0.1, 0.2], [0.2, 0.2], [True, False]), [0.5, 0.0])


positive = st.floats(1e-3, 1e3)


@given(st.lists(positive, min_size=3, max_size=3), positive, positive)
def test_delay_monotone_in_resources(vals, gain, extra):
    f, ra, rb = vals
    base = task_delays([[1.0]], [[f]], [10.0], [2.0], [ra], [rb], [0.01])[0]
    assert task_delays([[1.0]], [[f * (1 + gain)]], [10.0], [2.0], [ra], [rb], [0.01])[0] <= base
    assert task_delays([[1.0]], [[f]], [10.0], [2.0], [ra + extra], [rb], [0.01])[0] <= base
    assert task_delays([[1.0]], [[f]], [10.0], [2.0], [ra], [rb + extra], [0.01])[0] <= base


@given(st.permutations(range(4)))
def test_objective_invariant_to_reindexing(perm):
    rng = np.random.default_rng(0)
    B = np.eye(2)[[0, 1, 1, 0]]
    F = B * rng.uniform(1e9, 2e9, (4, 1))
    delta, c = rng.uniform(1e3, 1e4, 4), rng.uniform(50, 200, 4)
    ra, tmax = rng.uniform(1e5, 1e6, 4), rng.uniform(0.05, 0.2, 4)
    args = ([1e8, 2e8], [2e-3, 3e-3])
    mu = np.max(task_delays(B, F, delta, c, ra, *args) / tmax)
    p = list(perm)
    mu_p = np.max(task_delays(B[p], F[p], delta[p], c[p], ra[p], *args) / tmax[p])
    assert mu_p == pytest.approx(mu, rel=1e-12)


def test_task_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        Task(0, 0.0, 1.0, 1.0)
    tasks = [Task(0, 1e4, 200.0, 0.1, True), Task(5, 2.5e3, 150.0, 0.05, False)]
    p = tmp_path / "tasks.csv"
    save_tasks(tasks, p)
    back = load_tasks(p)
    assert [(t.id, t.delta, t.c, t.tau_max, t.legitimate) for t in back] == \
        [(t.id, t.delta, t.c, t.tau_max, t.legitimate) for t in tasks]
    assert tasks[0].demand == pytest.approx(2e7)
