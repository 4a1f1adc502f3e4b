"""Dense LP solver: minimise c^T x subject to G x <= h and box bounds.

The reference method is a two-phase bounded-variable revised primal simplex
with Bland's entering rule.  Problems handled here have at most a few
hundred variables, so a dense LU refactorisation per pivot is cheap and keeps
round-off from accumulating.  ``method="highs"`` delegates to SciPy's HiGHS
for cross-checks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
SINGULAR_TOL = 1e-12  # basis declared singular below this relative LU pivot
ACCEPT_TOL = 1e-6     # final primal check, after refactoring


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    FAILED = "failed"


@dataclass
class LinearProgram:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, float).ravel()
        n = self.c.size
        self.G = np.asarray(self.G, float).reshape(-1, n)
        self.h = np.asarray(self.h, float).ravel()
        self.lower = np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if self.G.shape[0] != self.h.size:
            raise ValueError("G and h disagree on the number of constraints")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def num_vars(self) -> int:
        return self.c.size

    def to_lp_format(self, names: list[str] | None = None) -> str:
        """CPLEX LP text, readable by most external solvers."""
        names = names or [f"x{j}" for j in range(self.num_vars)]

        def expr(coefs):
            terms = [f"{v:+.17g} {nm}" for v, nm in zip(coefs, names) if v != 0]
            return " ".join(terms) if terms else "0 " + names[0]

        lines = ["Minimize", " obj: " + expr(self.c), "Subject To"]
        for i, (row, rhs) in enumerate(zip(self.G, self.h)):
            lines.append(f" c{i}: {expr(row)} <= {rhs:.17g}")
        lines.append("Bounds")
        for lo, up, nm in zip(self.lower, self.upper, names):
            lo_s = "-inf" if np.isneginf(lo) else f"{lo:.17g}"
            up_s = "+inf" if np.isposinf(up) else f"{up:.17g}"
            lines.append(f" {lo_s} <= {nm} <= {up_s}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def solve_lp(lp: LinearProgram, method: str = "simplex", max_iter: int | None = None) -> LpSolution:
    if method == "simplex":
        return _BoundedSimplex(lp, max_iter).solve()
    if method == "highs":
        return _solve_highs(lp)
    raise ValueError(f"unknown LP method {method!r}")


def _solve_highs(lp: LinearProgram) -> LpSolution:
    from scipy.optimize import linprog

    bounds = [(None if np.isneginf(lo) else lo, None if np.isposinf(up) else up)
              for lo, up in zip(lp.lower, lp.upper)]
    A = lp.G if lp.G.size else None
    b = lp.h if lp.G.size else None
    res = linprog(lp.c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    status = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}.get(
        res.status, LpStatus.FAILED)
    if status is LpStatus.INFEASIBLE:
        # presolve may say "infeasible" for "infeasible or unbounded"
        feas = linprog(np.zeros_like(lp.c), A_ub=A, b_ub=b, bounds=bounds, method="highs")
        if feas.status == 0:
            status = LpStatus.UNBOUNDED
    if status is LpStatus.OPTIMAL:
        return LpSolution(status, res.x, float(res.fun), int(res.nit))
    return LpSolution(status, None, np.nan, int(res.nit))


class _BoundedSimplex:
    """Revised bounded-variable simplex over y >= 0 (with optional upper bounds).

    The basis is refactored from the original rows at every iteration, so
    basic values, duals and pivot columns never accumulate round-off.  The
    entering variable follows Bland's lowest-index rule.  The leaving row comes
    from a two-pass (Harris) ratio test: find the longest step that keeps
    every basic variable within FEAS_TOL of its bounds, then pivot on the
    largest entry among rows blocking within that step.  Degenerate LPs with
    two-sided equality rows otherwise drift onto pivots near 1e-7 and lose the
    basis.  A leaving variable keeps the value the step gave it, possibly a
    hair past its bound, instead of being snapped: snapping would divide that
    slip by a small pivot and dump it on the entering variable.  The final
    point is checked against the original rows and then clipped to the box.
    """

    def __init__(self, lp: LinearProgram, max_iter: int | None):
        self.lp = lp
        n = lp.num_vars
        # x = offset + M y, with y >= 0 (and y <= ub where finite)
        lo, up = lp.lower, lp.upper
        cols, offset, ub = [], np.zeros(n), []
        for j in range(n):
            e = np.zeros(n)
            if np.isfinite(lo[j]):
                e[j] = 1.0
                offset[j] = lo[j]
                cols.append(e)
                ub.append(up[j] - lo[j])
            elif np.isfinite(up[j]):
                e[j] = -1.0
                offset[j] = up[j]
                cols.append(e)
                ub.append(np.inf)
            else:
                e[j] = 1.0
                cols.append(e)
                cols.append(-e)
                ub.extend([np.inf, np.inf])
        self.M = np.array(cols).T if cols else np.zeros((n, 0))
        self.offset = offset
        self.ny = self.M.shape[1]
        self.ub_y = np.array(ub, float)
        m = lp.G.shape[0]
        self.m = m
        self.max_iter = max_iter or 50 * (m + self.ny + 10)
        self.iterations = 0

    def solve(self) -> LpSolution:
        lp, m, ny = self.lp, self.m, self.ny
        A = lp.G @ self.M
        b = lp.h - lp.G @ self.offset
        # equilibrate rows; the feasible set is unchanged
        scale = np.abs(A).max(axis=1, initial=0.0)
        scale[scale == 0] = 1.0
        A, b = A / scale[:, None], b / scale
        neg = b < 0
        n_art = int(neg.sum())
        N = ny + m + n_art
        T = np.zeros((m, N))
        T[:, :ny] = A
        T[np.arange(m), ny + np.arange(m)] = 1.0
        T[neg] *= -1.0
        rhs = np.where(neg, -b, b)
        basis = ny + np.arange(m)
        for k, r in enumerate(np.flatnonzero(neg)):
            T[r, ny + m + k] = 1.0
            basis[r] = ny + m + k

        self.A, self.rhs, self.basis = T, rhs, basis
        self.ub = np.concatenate([self.ub_y, np.full(m, np.inf), np.full(n_art, np.inf)])
        self.at_upper = np.zeros(N, bool)
        self.x = np.zeros(N)
        self.x[basis] = rhs

        if n_art:
            c1 = np.zeros(N)
            c1[ny + m:] = 1.0
            status = self._run(c1)
            if status is not LpStatus.OPTIMAL:
                return LpSolution(LpStatus.FAILED, None, np.nan, self.iterations)
            infeas = float(self.x[ny + m:].sum())
            if infeas > FEAS_TOL * max(1.0, float(rhs.max(initial=0.0))):
                return LpSolution(LpStatus.INFEASIBLE, None, np.nan, self.iterations)
            self.ub[ny + m:] = 0.0  # artificials stay pinned at zero from here on

        c2 = np.zeros(N)
        c2[:ny] = self.M.T @ lp.c
        status = self._run(c2)
        if status is not LpStatus.OPTIMAL:
            return LpSolution(status, None, np.nan, self.iterations)

        xo = self.offset + self.M @ self.x[:ny]
        bound_viol = np.maximum(lp.lower - xo, xo - lp.upper)
        row_viol = lp.G @ xo - lp.h if lp.G.size else np.zeros(0)
        if (np.any(bound_viol > ACCEPT_TOL * (1 + np.abs(xo)))
                or np.any(row_viol > ACCEPT_TOL * (1 + np.abs(lp.h)))):
            return LpSolution(LpStatus.FAILED, None, np.nan, self.iterations)
        xo = np.clip(xo, lp.lower, lp.upper)
        return LpSolution(LpStatus.OPTIMAL, xo, float(lp.c @ xo), self.iterations)

    def _factor(self):
        try:
            lu = lu_factor(self.A[:, self.basis], check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return None
        if np.min(np.abs(np.diag(lu[0]))) < SINGULAR_TOL * max(1.0, np.abs(lu[0]).max()):
            return None
        return lu

    def _run(self, cost: np.ndarray) -> LpStatus:
        A, basis, ub, x, m = self.A, self.basis, self.ub, self.x, self.m
        is_basic = np.zeros(A.shape[1], bool)
        is_basic[basis] = True
        while True:
            if self.iterations >= self.max_iter:
                return LpStatus.FAILED
            if m:
                lu = self._factor()
                if lu is None:
                    return LpStatus.FAILED
                x[basis] = 0.0
                x[basis] = lu_solve(lu, self.rhs - A @ x, check_finite=False)
                y = lu_solve(lu, cost[basis], trans=1, check_finite=False)
                d = cost - A.T @ y
            else:
                d = cost.copy()
            d[basis] = 0.0
            at_up = self.at_upper
            cand = ~is_basic & (((~at_up) & (d < -OPT_TOL) & (ub > 0)) | (at_up & (d > OPT_TOL)))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return LpStatus.OPTIMAL
            j = int(idx[0])                        # Bland: lowest index enters
            sgn = -1.0 if at_up[j] else 1.0

            t_best, leave, leave_to_upper = ub[j], -1, False
            if m:
                alpha = lu_solve(lu, A[:, j], check_finite=False) * sgn
                ptol = PIVOT_TOL * max(1.0, float(np.abs(alpha).max()))
                xb, ubb = x[basis], ub[basis]
                room_dec = np.maximum(xb, 0.0)
                room_inc = np.maximum(ubb - xb, 0.0)
                dec = alpha > ptol
                inc = (alpha < -ptol) & np.isfinite(ubb)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = np.minimum(np.where(dec, room_dec / alpha, np.inf),
                                        np.where(inc, room_inc / -alpha, np.inf))
                    # Harris pass: the longest step if bounds may slip by FEAS_TOL
                    # (measured from the true values so slips cannot accumulate)
                    slack_dec = np.maximum(xb + FEAS_TOL, 0.0)
                    slack_inc = np.maximum(ubb - xb + FEAS_TOL, 0.0)
                    t_max = np.minimum(np.where(dec, slack_dec / alpha, np.inf),
                                       np.where(inc, slack_inc / -alpha, np.inf)).min()
                # a bound flip within the relaxed step needs no pivot at all
                if ub[j] > t_max:
                    cands = np.flatnonzero(ratios <= t_max)
                    # largest pivot among them; exact ties go to the lowest index
                    mag = np.abs(alpha[cands])
                    cands = cands[mag == mag.max()]
                    r = int(cands[np.argmin(basis[cands])])
                    t_best, leave = float(ratios[r]), r
                    leave_to_upper = bool(inc[r])
            if np.isinf(t_best):
                return LpStatus.UNBOUNDED

            self.iterations += 1
            if leave < 0:
                self.at_upper[j] = not at_up[j]
                x[j] = ub[j] if self.at_upper[j] else 0.0
                continue
            out = basis[leave]
            self.at_upper[j] = False
            self.at_upper[out] = leave_to_upper
            # keep the leaving variable where the step put it (within FEAS_TOL of
            # its bound); snapping it would push the residual onto the entering one
            x[out] = x[out] - t_best * alpha[leave]
            basis[leave] = j
            is_basic[out] = False
            is_basic[j] = True
