"""Linear programs with exact dual extraction.

The MPC controller solves one multi-period LP per step; SDDP solves one LP
per stage subproblem and reads the cut slopes off the equality duals of the
rows pinning the incoming state.

Problems are tiny (at most a few thousand rows), dense in spirit but stored
sparse; they are handed to HiGHS through scipy. The dual convention is fixed
so that for an equality row a.x = b, value(b + d) >= value(b) + dual * d.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

__all__ = [
    "LinearProgram",
    "LpSolution",
    "LpStatus",
    "LpError",
    "PersistentLp",
    "solve",
    "parametric_duals",
    "dump",
]

try:  # vendored HiGHS bindings; enable warm-started re-solves when present
    from scipy.optimize._highspy import _core as _highs_core
except ImportError:  # pragma: no cover - depends on the scipy build
    _highs_core = None


class LpError(ValueError):
    """Construction-time or usage error on a linear program."""


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _as_matrix(a, m, n, name):
    if a is None:
        return sp.csr_matrix((m, n))
    if sp.issparse(a):
        mat = a.tocsr().astype(float)
    else:
        mat = sp.csr_matrix(np.asarray(a, dtype=float))
    if mat.shape != (m, n):
        raise LpError(f"{name} has shape {mat.shape}, expected {(m, n)}")
    if mat.nnz and not np.all(np.isfinite(mat.data)):
        raise LpError(f"{name} contains non-finite entries")
    return mat


@dataclass(frozen=True)
class LinearProgram:
    """min c.x  s.t.  a_eq x = rhs,  a_ub x <= b_ub,  lower <= x <= upper.

    The inequality block is optional; state pinning for subgradient
    extraction always goes through equality rows.
    """

    c: np.ndarray
    a_eq: object
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a_ub: object = None
    b_ub: np.ndarray = None
    names: Optional[Sequence[str]] = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        n = c.size
        rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        m = rhs.size
        a_eq = _as_matrix(self.a_eq, m, n, "a_eq")
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != (n,) or upper.shape != (n,):
            raise LpError("bounds must have one entry per variable")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(np.isnan(c)):
            raise LpError("NaN entries in program data")
        if np.any(lower > upper):
            raise LpError("lower bound exceeds upper bound")
        if not np.all(np.isfinite(rhs)):
            raise LpError("rhs contains non-finite entries")
        b_ub = self.b_ub
        if self.a_ub is not None or b_ub is not None:
            b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
            a_ub = _as_matrix(self.a_ub, b_ub.size, n, "a_ub")
        else:
            a_ub, b_ub = None, None
        if self.names is not None and len(self.names) != n:
            raise LpError("names must have one entry per variable")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_ub", b_ub)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_eq(self) -> int:
        return self.rhs.size


@dataclass(frozen=True)
class LpSolution:
    x_star: np.ndarray
    objective: float
    duals: np.ndarray
    reduced_costs: np.ndarray
    status: LpStatus
    ub_duals: Optional[np.ndarray] = None

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


_STATUS_MAP = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}


def solve(lp: LinearProgram) -> LpSolution:
    """Solve to optimality; infeasible / unbounded are returned, not raised."""
    bounds = np.column_stack([lp.lower, lp.upper])
    res = linprog(
        lp.c,
        A_ub=lp.a_ub,
        b_ub=lp.b_ub,
        A_eq=lp.a_eq if lp.n_eq else None,
        b_eq=lp.rhs if lp.n_eq else None,
        bounds=bounds,
        method="highs",
    )
    status = _STATUS_MAP.get(res.status)
    if status is None:
        raise LpError(f"solver failure: {res.message}")
    if status is not LpStatus.OPTIMAL:
        return LpSolution(
            x_star=np.full(lp.n_vars, np.nan),
            objective=np.nan,
            duals=np.full(lp.n_eq, np.nan),
            reduced_costs=np.full(lp.n_vars, np.nan),
            status=status,
        )
    duals = res.eqlin.marginals if lp.n_eq else np.zeros(0)
    reduced = res.lower.marginals + res.upper.marginals
    ub_duals = res.ineqlin.marginals if lp.a_ub is not None else None
    return LpSolution(
        x_star=res.x,
        objective=float(res.fun),
        duals=np.asarray(duals, dtype=float),
        reduced_costs=np.asarray(reduced, dtype=float),
        status=LpStatus.OPTIMAL,
        ub_duals=None if ub_duals is None else np.asarray(ub_duals, dtype=float),
    )


def parametric_duals(lp: LinearProgram, fixed_rows: Iterable[int],
                     solution: Optional[LpSolution] = None):
    """Optimal value and its subgradient w.r.t. the constants of pinning rows.

    For any perturbation d of the pinned right-hand sides,
    value(rhs + d) >= value + gradient . d.
    """
    if solution is None:
        solution = solve(lp)
    if not solution.optimal:
        raise LpError(f"parametric_duals requires an optimal LP, got {solution.status}")
    idx = np.asarray(list(fixed_rows), dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= lp.n_eq):
        raise LpError("fixed_rows outside the equality row range")
    return solution.objective, solution.duals[idx]


class PersistentLp:
    """A linear program held inside the solver across re-solves.

    The matrix and costs are fixed at construction; right-hand sides and
    variable bounds may change between solves. The previous basis warm-starts
    each re-solve, which is an order of magnitude faster than a cold solve
    on the repeated stage problems. Falls back to cold solves when the
    bundled HiGHS bindings are unavailable.

    Not picklable on purpose (holds solver state); owners rebuild it lazily.
    """

    def __init__(self, lp: LinearProgram):
        self._template = lp
        self._rhs = lp.rhs.copy()
        self._b_ub = None if lp.b_ub is None else lp.b_ub.copy()
        self._lower = lp.lower.copy()
        self._upper = lp.upper.copy()
        self._n_ub = 0 if lp.b_ub is None else lp.b_ub.size
        self._solver = None
        if _highs_core is not None:
            self._solver = self._build(lp)

    def _build(self, lp: LinearProgram):
        hc = _highs_core
        n_ub = 0 if lp.b_ub is None else lp.b_ub.size
        if n_ub:
            a = sp.vstack([lp.a_eq, lp.a_ub]).tocsc()
            row_lower = np.concatenate([lp.rhs, np.full(n_ub, -np.inf)])
            row_upper = np.concatenate([lp.rhs, lp.b_ub])
        else:
            a = lp.a_eq.tocsc()
            row_lower = lp.rhs.copy()
            row_upper = lp.rhs.copy()
        self._n_ub = n_ub
        model = hc.HighsLp()
        model.num_col_ = lp.n_vars
        model.num_row_ = lp.n_eq + n_ub
        model.col_cost_ = lp.c
        model.col_lower_ = lp.lower
        model.col_upper_ = lp.upper
        model.row_lower_ = row_lower
        model.row_upper_ = row_upper
        model.a_matrix_.format_ = hc.MatrixFormat.kColwise
        model.a_matrix_.start_ = a.indptr
        model.a_matrix_.index_ = a.indices
        model.a_matrix_.value_ = a.data
        solver = hc._Highs()
        solver.setOptionValue("output_flag", False)
        solver.passModel(model)
        return solver

    def solve(self, rhs=None, lower=None, upper=None, b_ub=None) -> LpSolution:
        """Re-solve with updated rhs / bounds (matrix and costs fixed)."""
        lp = self._template
        if rhs is not None:
            rhs = np.asarray(rhs, dtype=float)
            if rhs.shape != self._rhs.shape:
                raise LpError("rhs shape changed between re-solves")
        if b_ub is not None and self._b_ub is None:
            raise LpError("this program has no inequality block")
        if self._solver is None:
            return self._cold(rhs, lower, upper, b_ub)

        solver = self._solver
        if rhs is not None:
            for r in np.nonzero(rhs != self._rhs)[0]:
                solver.changeRowBounds(int(r), rhs[r], rhs[r])
            self._rhs = rhs.copy()
        if b_ub is not None:
            b_ub = np.asarray(b_ub, dtype=float)
            n_eq = lp.n_eq
            for r in np.nonzero(b_ub != self._b_ub)[0]:
                solver.changeRowBounds(int(n_eq + r), -np.inf, b_ub[r])
            self._b_ub = b_ub.copy()
        if lower is not None or upper is not None:
            lo = self._lower if lower is None else np.asarray(lower, dtype=float)
            up = self._upper if upper is None else np.asarray(upper, dtype=float)
            changed = np.nonzero((lo != self._lower) | (up != self._upper))[0]
            for j in changed:
                solver.changeColBounds(int(j), lo[j], up[j])
            self._lower, self._upper = lo.copy(), up.copy()

        solver.run()
        hc = _highs_core
        model_status = solver.getModelStatus()
        if model_status == hc.HighsModelStatus.kInfeasible:
            status = LpStatus.INFEASIBLE
        elif model_status == hc.HighsModelStatus.kUnbounded:
            status = LpStatus.UNBOUNDED
        elif model_status == hc.HighsModelStatus.kOptimal:
            status = LpStatus.OPTIMAL
        else:
            raise LpError(f"solver failure: {model_status}")
        if status is not LpStatus.OPTIMAL:
            return LpSolution(
                x_star=np.full(lp.n_vars, np.nan), objective=np.nan,
                duals=np.full(lp.n_eq, np.nan),
                reduced_costs=np.full(lp.n_vars, np.nan), status=status)
        sol = solver.getSolution()
        row_dual = np.asarray(sol.row_dual, dtype=float)
        return LpSolution(
            x_star=np.asarray(sol.col_value, dtype=float),
            objective=float(solver.getInfo().objective_function_value),
            duals=row_dual[:lp.n_eq],
            reduced_costs=np.asarray(sol.col_dual, dtype=float),
            status=LpStatus.OPTIMAL,
            ub_duals=row_dual[lp.n_eq:] if self._n_ub else None,
        )

    def _cold(self, rhs, lower, upper, b_ub) -> LpSolution:
        lp = self._template
        if rhs is not None:
            self._rhs = np.asarray(rhs, dtype=float).copy()
        if b_ub is not None:
            self._b_ub = np.asarray(b_ub, dtype=float).copy()
        if lower is not None:
            self._lower = np.asarray(lower, dtype=float).copy()
        if upper is not None:
            self._upper = np.asarray(upper, dtype=float).copy()
        return solve(LinearProgram(c=lp.c, a_eq=lp.a_eq, rhs=self._rhs,
                                   lower=self._lower, upper=self._upper,
                                   a_ub=lp.a_ub, b_ub=self._b_ub))


def dump(lp: LinearProgram) -> str:
    """Text dump for external cross-checking: one line per row and bound."""
    def fmt(v):
        return f"{v:.12g}"

    lines = ["min " + " ".join(fmt(v) for v in lp.c)]
    a = lp.a_eq.toarray()
    for i in range(lp.n_eq):
        row = " ".join(fmt(v) for v in a[i])
        lines.append(f"row_{i}: {row} = {fmt(lp.rhs[i])}")
    if lp.a_ub is not None:
        au = lp.a_ub.toarray()
        for i in range(lp.b_ub.size):
            row = " ".join(fmt(v) for v in au[i])
            lines.append(f"ub_{i}: {row} <= {fmt(lp.b_ub[i])}")
    for j in range(lp.n_vars):
        name = lp.names[j] if lp.names else f"x_{j}"
        lines.append(f"bounds: {fmt(lp.lower[j])} <= {name} <= {fmt(lp.upper[j])}")
    return "\n".join(lines)
