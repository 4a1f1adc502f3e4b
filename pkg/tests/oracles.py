"""Independent reference computations used by the tests."""

from __future__ import annotations

import itertools

import numpy as np

from ntn_offload.lp import LinearProgram
from ntn_offload.optimizer import OffloadInstance, fixed_delays


def vertex_enumeration(lp: LinearProgram, tol: float = 1e-9):
    """Minimum of c^T x over every basic feasible point of a bounded LP.

    Returns (objective, x), or (None, None) when no vertex is feasible.
    """
    n = lp.num_vars
    A = np.vstack([lp.G, np.eye(n), -np.eye(n)])
    b = np.concatenate([lp.h, lp.upper, -lp.lower])
    finite = np.isfinite(b)
    A, b = A[finite], b[finite]
    combos = np.array(list(itertools.combinations(range(len(b)), n)))
    M = A[combos]
    rhs = b[combos]
    ok = np.abs(np.linalg.det(M)) > 1e-12
    x = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
    feas = np.all(x @ A.T <= b + tol * (1 + np.abs(b)), axis=1)
    if not feas.any():
        return None, None
    x = x[feas]
    obj = x @ lp.c
    k = int(np.argmin(obj))
    return float(obj[k]), x[k]


def random_feasible_lp(rng: np.random.Generator, n: int, m: int) -> LinearProgram:
    lower = rng.uniform(-2, 0, n)
    upper = rng.uniform(0.5, 3, n)
    G = rng.standard_normal((m, n))
    x0 = rng.uniform(lower, upper)
    h = G @ x0 + rng.uniform(0, 1, m)
    return LinearProgram(rng.standard_normal(n), G, h, lower, upper)


def infeasible_lps() -> list[LinearProgram]:
    """Hand-built LPs whose constraints contradict each other."""
    return [
        LinearProgram([1.0], [[1.0], [-1.0]], [0.0, -1.0], [-5.0], [5.0]),
        LinearProgram(np.zeros(3), -np.ones((1, 3)), [-4.0], 0.0, 1.0),
        LinearProgram([1.0, -1.0], [[1.0, 1.0], [-1.0, -1.0]], [1.0, -2.0], -10.0, 10.0),
        LinearProgram([0.0], [[-1.0]], [-3.0], [0.0], [2.0]),
        LinearProgram(np.ones(3), [[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]],
                      [-1.0, -1.0, -1.0], -100.0, 100.0),
    ]


def grid_min_mu(B, inst: OffloadInstance, step: float = 1e-5, hi: float = 4.0) -> float | None:
    """Smallest mu on a uniform grid at which the minimal CPU shares fit every LEO."""
    B = np.asarray(B, float)
    eps = fixed_delays(B, inst)
    work = inst.delta * inst.c
    leo = np.argmax(B, axis=1)
    mu = np.arange(step, hi + step / 2, step)
    slack = mu[:, None] * inst.tau_max[None, :] - eps[None, :]
    with np.errstate(divide="ignore"):
        f = np.where(slack > 0, work[None, :] / slack, np.inf)
    load = np.zeros((mu.size, inst.num_leo))
    for k in range(inst.num_leo):
        load[:, k] = f[:, leo == k].sum(axis=1)
    ok = np.all(load <= inst.f_max[None, :], axis=1)
    return float(mu[np.argmax(ok)]) if ok.any() else None


def random_instance(rng: np.random.Generator, n: int, k: int) -> OffloadInstance:
    """A small offloading instance; deadlines are tight enough that placement matters."""
    return OffloadInstance(
        task_ids=np.arange(n), delta=rng.uniform(5e3, 2e4, n), c=rng.uniform(100, 400, n),
        tau_max=rng.uniform(0.03, 0.08, n), r_access=rng.uniform(3e5, 2e6, n),
        r_backhaul=rng.uniform(5e6, 5e7, k), tau_prop=rng.uniform(2e-3, 4e-3, k),
        f_max=rng.uniform(2e9, 1e10, k), overhead=0.0)
