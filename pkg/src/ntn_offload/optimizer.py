"""Joint task placement and LEO CPU allocation by block coordinate descent.

The placement block is an LP: the bilinear backhaul term of each task delay
is linearised through the quadratic transform around the previous iterate,
the binary constraint is relaxed to a proximity box, and a linearised
concave penalty pushes entries toward {0, 1}.  The CPU block is solved by
bisection on the min-max relative delay.  Tasks that make the placement LP
infeasible are rejected in order of decreasing demand delta*c/tau_max.
"""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .delay import OffloadPlan, Task, task_delays
from .lp import LinearProgram, LpStatus, solve_lp

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    """No placement/allocation meets every deadline with mu <= 1."""


class SolverFailure(RuntimeError):
    """The LP backend broke down (distinct from a proven infeasibility)."""


@dataclass(frozen=True)
class BcdConfig:
    max_iters: int = 30
    epsilon: float = 1e-3
    varrho_start: float = 0.01
    varrho_end: float = 0.5
    chi_start: float | None = None      # None: chi_scale * initial mu
    chi_scale: float = 1e-3
    chi_growth: float = 5.0
    chi_max: float = 1e6
    bisection_tol: float = 1e-6
    lp_method: str = "simplex"

    def validate(self) -> list[str]:
        errors = []
        if self.max_iters < 1:
            errors.append("max_iters must be >= 1")
        if not 0 < self.varrho_start <= self.varrho_end <= 1:
            errors.append("need 0 < varrho_start <= varrho_end <= 1")
        if self.chi_start is not None and self.chi_start < 0:
            errors.append("chi_start must be >= 0")
        if not self.chi_growth > 1:
            errors.append("chi_growth must be > 1")
        if not self.bisection_tol > 0:
            errors.append("bisection_tol must be > 0")
        if self.lp_method not in ("simplex", "highs"):
            errors.append("lp_method must be 'simplex' or 'highs'")
        return errors

    def varrho_at(self, n: int) -> float:
        """Proximity radius at iteration ``n`` (1-based), ramped linearly."""
        if self.max_iters == 1:
            return self.varrho_start
        frac = min(max(n - 1, 0), self.max_iters - 1) / (self.max_iters - 1)
        return self.varrho_start + (self.varrho_end - self.varrho_start) * frac


@dataclass(frozen=True)
class OffloadInstance:
    """Admitted tasks together with the link and server figures they see."""

    task_ids: np.ndarray
    delta: np.ndarray
    c: np.ndarray
    tau_max: np.ndarray
    r_access: np.ndarray
    r_backhaul: np.ndarray
    tau_prop: np.ndarray
    f_max: np.ndarray
    overhead: np.ndarray

    def __post_init__(self):
        n = len(self.task_ids)
        for name in ("task_ids", "delta", "c", "tau_max", "r_access", "r_backhaul",
                     "tau_prop", "f_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name),
                                                      int if name == "task_ids" else float))
        object.__setattr__(self, "overhead",
                           np.broadcast_to(np.asarray(self.overhead, float), (n,)).copy())

    @classmethod
    def from_tasks(cls, tasks: Sequence[Task], r_access, r_backhaul, tau_prop, f_max,
                   overhead=0.0) -> "OffloadInstance":
        k = len(r_backhaul)
        return cls(task_ids=np.array([t.id for t in tasks], int),
                   delta=np.array([t.delta for t in tasks]),
                   c=np.array([t.c for t in tasks]),
                   tau_max=np.array([t.tau_max for t in tasks]),
                   r_access=np.asarray(r_access, float),
                   r_backhaul=np.asarray(r_backhaul, float),
                   tau_prop=np.asarray(tau_prop, float),
                   f_max=np.broadcast_to(np.asarray(f_max, float), (k,)).copy(),
                   overhead=overhead)

    @property
    def num_tasks(self) -> int:
        return len(self.task_ids)

    @property
    def num_leo(self) -> int:
        return len(self.r_backhaul)

    @property
    def demand(self) -> np.ndarray:
        return self.delta * self.c / self.tau_max

    def subset(self, keep) -> "OffloadInstance":
        keep = np.asarray(keep)
        return replace(self, task_ids=self.task_ids[keep], delta=self.delta[keep],
                       c=self.c[keep], tau_max=self.tau_max[keep],
                       r_access=self.r_access[keep], overhead=self.overhead[keep])

    def delays(self, B, F) -> np.ndarray:
        return task_delays(B, F, self.delta, self.c, self.r_access, self.r_backhaul,
                           self.tau_prop, self.overhead)


@dataclass
class QtState:
    z_plus: np.ndarray       # (N, K)
    z_minus: np.ndarray      # (N, K)
    frozen: np.ndarray       # (N, K) pairs kept as a frozen product
    zeta_i: np.ndarray       # (N,)
    zeta_ij_k: np.ndarray    # (K, N, N): [k, i, j], zero on the diagonal
    zeta_i_k: np.ndarray     # (N, K)

    def surrogate(self, B) -> np.ndarray:
        """Linearised delay of every task at assignment ``B``."""
        B = np.asarray(B, float)
        cross = np.einsum("kij,jk->i", self.zeta_ij_k, B)
        return self.zeta_i + cross + np.sum(B * self.zeta_i_k, axis=1)


@dataclass
class TraceRow:
    iteration: int
    mu_lp: float
    mu_plan: float
    step_norm: float
    chi: float
    varrho: float
    rejected: str = ""


@dataclass
class BcdResult:
    plan: OffloadPlan
    trace: list[TraceRow] = field(default_factory=list)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "mu_lp", "mu_plan", "step_norm", "chi", "varrho", "rejected"])
            for r in self.trace:
                w.writerow([r.iteration, f"{r.mu_lp:.12g}", f"{r.mu_plan:.12g}",
                            f"{r.step_norm:.12g}", f"{r.chi:.12g}", f"{r.varrho:.12g}",
                            r.rejected])


def access_delays(inst: OffloadInstance) -> np.ndarray:
    return inst.delta / inst.r_access + inst.overhead


def prospective_shares(prev_B, F, inst: OffloadInstance) -> np.ndarray:
    """CPU shares with gaps filled by the equal share a newcomer would get.

    Entries already positive in ``F`` are kept; other entries get
    F_max / (1 + load count of the other tasks on that LEO).
    """
    prev_B = np.asarray(prev_B, float)
    others = prev_B.sum(axis=0)[None, :] - prev_B
    share = inst.f_max[None, :] / (1.0 + others)
    F = np.asarray(F, float)
    return np.where(F > 0, F, share)


def compute_zeta(prev_B, F, inst: OffloadInstance) -> QtState:
    """Quadratic-transform coefficients around ``prev_B``.

    ``F`` must be positive wherever ``prev_B`` is; zero entries elsewhere are
    read as the newcomer share of :func:`prospective_shares`.
    """
    b0 = np.asarray(prev_B, float)
    F = np.asarray(F, float)
    if np.any((b0 > 0) & ~(F > 0)):
        raise ValueError("task has a placement share but no CPU share")
    F = prospective_shares(b0, F, inst)
    R = inst.r_backhaul[None, :]
    load = inst.delta @ b0                                  # (K,)
    s_minus = load[None, :] - inst.delta[:, None] * b0      # sum_{j != i} delta_j b_j^k
    z_plus = np.abs(s_minus + b0) / R
    z_minus = np.abs(s_minus - b0) / R
    frozen = s_minus < b0

    # Expanding 2 z|S +/- b| - z^2 R for both squares and taking the
    # difference over 4 gives, per (i, k): coefficient (z+ - z-)/2 on S,
    # (z+ + z-)/2 on b_i^k, and constant -R (z+^2 - z-^2)/4.
    coef_s = np.where(frozen, 0.0, (z_plus - z_minus) / 2)
    coef_b = np.where(frozen, s_minus / R, (z_plus + z_minus) / 2)
    const = np.where(frozen, 0.0, -R * (z_plus**2 - z_minus**2) / 4)

    n, k = b0.shape
    zeta_ij_k = np.einsum("ik,j->kij", coef_s, inst.delta)
    idx = np.arange(n)
    zeta_ij_k[:, idx, idx] = 0.0
    zeta_i = access_delays(inst) + const.sum(axis=1)
    zeta_i_k = (inst.delta * inst.c)[:, None] / F + inst.delta[:, None] / R + coef_b \
        + 2 * inst.tau_prop[None, :]
    return QtState(z_plus, z_minus, frozen, zeta_i, zeta_ij_k, zeta_i_k)


def build_offloading_lp(qt: QtState, inst: OffloadInstance, chi: float, varrho: float,
                        prev_B) -> LinearProgram:
    """Placement LP over x = [b_11, ..., b_1K, ..., b_NK, mu]."""
    b0 = np.asarray(prev_B, float)
    n, k = b0.shape
    nv = n * k + 1
    rows, rhs = [], []
    for i in range(n):
        row = np.zeros(nv)
        row[: n * k] = qt.zeta_ij_k[:, i, :].T.ravel()     # b_j^k for j != i
        row[i * k:(i + 1) * k] += qt.zeta_i_k[i]
        row[-1] = -inst.tau_max[i]
        rows.append(row)
        rhs.append(-qt.zeta_i[i])
    for i in range(n):
        row = np.zeros(nv)
        row[i * k:(i + 1) * k] = 1.0
        rows += [row, -row]
        rhs += [1.0, -1.0]
    c = np.zeros(nv)
    c[: n * k] = chi * (1.0 - 2.0 * b0.ravel())
    c[-1] = 1.0
    lower = np.concatenate([np.maximum(0.0, b0.ravel() - varrho), [0.0]])
    upper = np.concatenate([np.minimum(1.0, b0.ravel() + varrho), [1.0]])
    return LinearProgram(c, np.array(rows).reshape(-1, nv), np.array(rhs), lower, upper)


def solve_offloading_step(lp: LinearProgram, shape: tuple[int, int],
                          method: str = "simplex") -> tuple[np.ndarray, float]:
    """Solve the placement LP; raises :class:`InfeasibleError` or :class:`SolverFailure`."""
    sol = solve_lp(lp, method=method)
    if sol.status is LpStatus.INFEASIBLE:
        raise InfeasibleError("placement LP infeasible")
    if not sol.optimal:
        raise SolverFailure(f"LP solver ended with status {sol.status.value}")
    n, k = shape
    B = np.clip(sol.x[: n * k].reshape(n, k), 0.0, 1.0)
    return B, float(sol.x[-1])


def reject_most_demanding(tasks) -> int:
    """Id of the task with the largest delta*c/tau_max; lowest id wins ties."""
    if isinstance(tasks, OffloadInstance):
        ids, demand = tasks.task_ids, tasks.demand
    else:
        tasks = list(tasks)
        ids = np.array([t.id for t in tasks])
        demand = np.array([t.demand for t in tasks])
    if len(ids) == 0:
        raise ValueError("no task to reject")
    best = demand.max()
    return int(ids[demand == best].min())


def round_assignment(B) -> np.ndarray:
    """One-hot of each row's largest entry (the 0.5 threshold when one exists)."""
    B = np.asarray(B, float)
    out = np.zeros_like(B)
    if B.size:
        out[np.arange(B.shape[0]), np.argmax(B, axis=1)] = 1.0
    return out


def fixed_delays(B, inst: OffloadInstance) -> np.ndarray:
    """Every delay term except computing, for a binary ``B``."""
    B = np.asarray(B, float)
    load = inst.delta @ B
    return access_delays(inst) + B @ (load / inst.r_backhaul + 2 * inst.tau_prop)


def _min_mu_allocation(B, inst: OffloadInstance, tol: float) -> tuple[np.ndarray, float]:
    """CPU split minimising the max relative delay for binary ``B`` (mu may exceed 1)."""
    B = np.asarray(B, float)
    n, k = B.shape
    if n == 0:
        return np.zeros((0, k)), 0.0
    eps = fixed_delays(B, inst)
    work = inst.delta * inst.c
    leo = np.argmax(B, axis=1)

    def min_shares(mu):
        slack = mu * inst.tau_max - eps
        if np.any(slack <= 0):
            return None
        return work / slack

    def feasible(mu):
        f = min_shares(mu)
        if f is None:
            return False
        return bool(np.all(np.bincount(leo, weights=f, minlength=k) <= inst.f_max * (1 + 1e-12)))

    lo = float(np.max(eps / inst.tau_max))
    hi = max(1.0, 2 * lo)
    while not feasible(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid

    f = min_shares(hi)
    used = np.bincount(leo, weights=f, minlength=k)
    scale = np.where(used > 0, inst.f_max / np.where(used > 0, used, 1.0), 1.0)
    F = np.zeros((n, k))
    F[np.arange(n), leo] = f * scale[leo]
    mu = float(np.max((eps + work / F[np.arange(n), leo]) / inst.tau_max))
    return F, mu


def allocate_resources(B, inst: OffloadInstance, cfg: BcdConfig = BcdConfig()
                       ) -> tuple[np.ndarray, float]:
    """CPU shares and achieved mu for a binary placement; raises if mu > 1."""
    F, mu = _min_mu_allocation(B, inst, cfg.bisection_tol)
    if mu > 1.0 + 1e-12:
        raise InfeasibleError(f"no CPU split meets every deadline (mu = {mu:.6g})")
    return F, mu


def initial_assignment(inst: OffloadInstance) -> np.ndarray:
    """Greedy load balancing by demand/F_max with round-robin tie-break."""
    n, k = inst.num_tasks, inst.num_leo
    B = np.zeros((n, k))
    load = np.zeros(k)
    last = -1
    for i in range(n):
        ratio = load / inst.f_max
        ties = np.flatnonzero(ratio <= ratio.min() * (1 + 1e-12) + 1e-300)
        after = ties[ties > last]
        pick = int(after[0] if after.size else ties[0])
        B[i, pick] = 1.0
        load[pick] += inst.delta[i] * inst.c[i]
        last = pick
    return B


def equal_split(B, inst: OffloadInstance) -> np.ndarray:
    counts = np.asarray(B, float).sum(axis=0)
    return np.where(B > 0, inst.f_max[None, :] / np.maximum(counts, 1)[None, :], 0.0)


def run_bcd(inst: OffloadInstance, cfg: BcdConfig = BcdConfig()) -> BcdResult:
    """Place and provision the admitted tasks, rejecting until every deadline holds."""
    k = inst.num_leo
    trace: list[TraceRow] = []
    rejected: list[int] = []
    B = initial_assignment(inst)
    F = equal_split(B, inst)

    while inst.num_tasks:
        n_tasks = inst.num_tasks
        mu0 = float(np.max(inst.delays(B, F) / inst.tau_max))
        chi = cfg.chi_start if cfg.chi_start is not None else cfg.chi_scale * mu0
        n = 1
        while n <= cfg.max_iters and inst.num_tasks:
            varrho = cfg.varrho_at(n)
            qt = compute_zeta(B, prospective_shares(B, F, inst), inst)
            lp = build_offloading_lp(qt, inst, chi, varrho, B)
            try:
                B_new, mu_lp = solve_offloading_step(lp, B.shape, cfg.lp_method)
            except InfeasibleError:
                rid = reject_most_demanding(inst)
                keep = inst.task_ids != rid
                inst, B, F = inst.subset(keep), B[keep], F[keep]
                rejected.append(rid)
                trace.append(TraceRow(n, np.nan, np.nan, np.nan, chi, varrho, str(rid)))
                log.debug("iteration %d: LP infeasible, rejected task %d", n, rid)
                if inst.num_tasks:
                    F, _ = _min_mu_allocation(round_assignment(B), inst, cfg.bisection_tol)
                continue
            F, mu_plan = _min_mu_allocation(round_assignment(B_new), inst, cfg.bisection_tol)
            step = float(np.linalg.norm(B_new - B))
            trace.append(TraceRow(n, mu_lp, mu_plan, step, chi, varrho))
            B = B_new
            if step <= cfg.epsilon / (inst.num_tasks * k):
                break
            chi = min(chi * cfg.chi_growth, cfg.chi_max)
            n += 1

        if not inst.num_tasks:
            break
        B = round_assignment(B)
        F, mu = _min_mu_allocation(B, inst, cfg.bisection_tol)
        if mu <= 1.0 + 1e-12:
            plan = OffloadPlan(list(map(int, inst.task_ids)), B, F, mu, set(rejected))
            _verify(plan, inst)
            return BcdResult(plan, trace)
        rid = reject_most_demanding(inst)
        keep = inst.task_ids != rid
        inst, B = inst.subset(keep), B[keep]
        F = equal_split(B, inst)
        rejected.append(rid)
        trace.append(TraceRow(n, np.nan, mu, np.nan, chi, cfg.varrho_at(n), str(rid)))
        assert inst.num_tasks < n_tasks

    plan = OffloadPlan([], np.zeros((0, k)), np.zeros((0, k)), 0.0, set(rejected),
                       diagnostic="no admitted task could be served")
    return BcdResult(plan, trace)


def _verify(plan: OffloadPlan, inst: OffloadInstance, tol: float = 1e-9) -> None:
    B, F = plan.B, plan.F
    assert np.all((B == 0) | (B == 1)), "placement not binary"
    assert np.allclose(B.sum(axis=1), 1.0), "task not placed exactly once"
    assert np.all(F >= 0) and np.all(F[B == 0] == 0), "CPU share on an unused link"
    assert np.all(F.sum(axis=0) <= inst.f_max * (1 + tol)), "LEO capacity exceeded"
    tau = inst.delays(B, F)
    assert np.all(tau <= inst.tau_max * (1 + tol)), "deadline violated"


def brute_force_oracle(inst: OffloadInstance, cfg: BcdConfig = BcdConfig(),
                       max_assignments: int = 10**6) -> tuple[np.ndarray, float, list[int]]:
    """Exhaustive placement search; rejects in demand order while infeasible.

    Returns the best binary placement of the surviving tasks, its mu and the
    rejected ids.
    """
    k = inst.num_leo
    if k ** inst.num_tasks > max_assignments:
        raise ValueError(f"{k}^{inst.num_tasks} placements exceed the enumeration budget")
    rejected = []
    while inst.num_tasks:
        n = inst.num_tasks
        best_mu, best_B = np.inf, None
        for combo in itertools.product(range(k), repeat=n):
            B = np.zeros((n, k))
            B[np.arange(n), combo] = 1.0
            _, mu = _min_mu_allocation(B, inst, cfg.bisection_tol)
            if mu < best_mu:
                best_mu, best_B = mu, B
        if best_mu <= 1.0 + 1e-12:
            return best_B, best_mu, rejected
        rid = reject_most_demanding(inst)
        rejected.append(rid)
        inst = inst.subset(inst.task_ids != rid)
    return np.zeros((0, k)), 0.0, rejected
