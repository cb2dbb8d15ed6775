"""LP assembly for the controllers.

Two problem shapes are built here:

* a deterministic multi-period chain (MPC step problems and the anticipative
  perfect-foresight bound),
* the one-stage problem with scenario blocks sharing the decision (SDDP
  forward/online, in a compact control-space form) and its pinned-state
  variant whose equality duals yield the cut slopes.

Structure is cached per stage; only right-hand sides and first-step bounds
are refreshed between solves, which keeps online decisions cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import lp as lpmod
from .model import (
    Control,
    State,
    SystemParams,
    admissible_controls,
    linear_dynamics,
    split_flow,
)

INF = np.inf


def dedup_cuts(lambdas: np.ndarray, betas: np.ndarray):
    """Drop exact duplicate hyperplanes (value-function preserving)."""
    rounded = np.round(np.column_stack([lambdas, betas]), 12)
    _, keep = np.unique(rounded, axis=0, return_index=True)
    keep.sort()
    return lambdas[keep], betas[keep]


def canonical_control(fbp: float, fbm: float, ft: float, fh: float) -> Control:
    """Collapse the battery sign split; simultaneous charge/discharge only
    wastes energy, so the net flow is equivalent or better."""
    pos, neg = split_flow(fbp - fbm)
    return Control(f_b=pos - neg, f_t=ft, f_h=fh)


def _clean(value: float, lo: float, hi: float) -> float:
    return min(max(value, lo), hi)


@dataclass
class ChainSolution:
    control: Control
    objective: float
    status: lpmod.LpStatus
    x_next_plan: Optional[np.ndarray] = None


class DeterministicChain:
    """LP over steps t0..T-1 against a deterministic demand path.

    The matrix depends only on (params, t0); demands and the initial state
    enter through the rhs and the first-step control bounds.
    """

    def __init__(self, p: SystemParams, t0: int, x_ref: State,
                 h_floor: Optional[float] = None):
        if not 0 <= t0 < p.horizon_steps:
            raise ValueError(f"t0 {t0} outside [0, {p.horizon_steps})")
        self.p = p
        self.t0 = t0
        self.x_ref = x_ref
        self.h_floor = p.h_floor if h_floor is None else h_floor
        self._build()

    # variable layout: per step k of ns: [fbp, fbm, ft, fh, fne, spill, dcomf]
    # then states x_{t0+k}, k = 1..ns (4 each), then zb, zh.
    def _u(self, k, j):
        return 7 * k + j

    def _x(self, k, j):
        return 7 * self.ns + 4 * (k - 1) + j

    def _build(self):
        p, t0 = self.p, self.t0
        ns = self.ns = p.horizon_steps - t0
        n = 7 * ns + 4 * ns + 2
        self.n = n
        iz_b, iz_h = n - 2, n - 1
        delta = p.delta

        rows, cols, vals = [], [], []
        b_eq = np.zeros(5 * ns)
        self._first_dyn = np.zeros((4, 4))  # (I + delta*M) at t0, feeds rhs

        for k in range(ns):
            t = t0 + k
            m, nmat, pw, g = linear_dynamics(t, p)
            # balance row (demand realized over [t, t+1])
            r = 5 * k
            for j, coef in ((4, 1.0), (5, -1.0), (0, -1.0), (1, 1.0), (2, -1.0), (3, -1.0)):
                rows.append(r)
                cols.append(self._u(k, j))
                vals.append(coef)
            # dynamics rows: x_{k+1} - (I + delta M) x_k - delta N u_k = delta g (+ delta P w)
            phi = np.eye(4) + delta * m
            for i in range(4):
                r = 5 * k + 1 + i
                rows.append(r)
                cols.append(self._x(k + 1, i))
                vals.append(1.0)
                if k > 0:
                    for j in range(4):
                        if phi[i, j] != 0.0:
                            rows.append(r)
                            cols.append(self._x(k, j))
                            vals.append(-phi[i, j])
                for j in range(4):
                    if nmat[i, j] != 0.0:
                        rows.append(r)
                        cols.append(self._u(k, j))
                        vals.append(-delta * nmat[i, j])
                b_eq[r] = delta * g[i]
        # the current state enters the first dynamics rows through the rhs
        self._first_dyn = np.eye(4) + delta * linear_dynamics(t0, p)[0]
        self.a_eq = sp.csr_matrix((vals, (rows, cols)), shape=(5 * ns, n))
        self._b_eq_base = b_eq

        # inequality block: discomfort epigraphs for k >= 1, terminal penalties
        rows, cols, vals = [], [], []
        b_ub = []
        r = 0
        for k in range(1, ns):
            t = t0 + k
            rows += [r, r]
            cols += [self._u(k, 6), self._x(k, 3)]
            vals += [-1.0, -1.0]
            b_ub.append(-p.theta_set[t])
            r += 1
        kap = p.kappa
        rows += [r, r]
        cols += [iz_b, self._x(ns, 0)]
        vals += [-1.0, -kap]
        b_ub.append(-kap * self.x_ref.b)
        r += 1
        rows += [r, r]
        cols += [iz_h, self._x(ns, 1)]
        vals += [-1.0, -kap]
        b_ub.append(-kap * self.x_ref.h)
        r += 1
        self.a_ub = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
        self.b_ub = np.array(b_ub)

        lower = np.zeros(n)
        upper = np.full(n, INF)
        c = np.zeros(n)
        for k in range(ns):
            t = t0 + k
            upper[self._u(k, 0)] = p.f_b_max
            upper[self._u(k, 1)] = p.f_b_max
            upper[self._u(k, 2)] = p.f_t_max
            upper[self._u(k, 3)] = p.f_h_max
            c[self._u(k, 4)] = p.pi_e[t] * p.delta
            c[self._u(k, 6)] = p.pi_d[t]
        for k in range(1, ns + 1):
            lower[self._x(k, 0)], upper[self._x(k, 0)] = p.b_min, p.b_max
            lower[self._x(k, 1)], upper[self._x(k, 1)] = self.h_floor, p.h_max
            lower[self._x(k, 2)] = -INF
            lower[self._x(k, 3)] = -INF
        c[iz_b] = 1.0
        c[iz_h] = 1.0
        self.c = c
        self._lower_base = lower
        self._upper_base = upper
        self._persistent = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_persistent"] = None  # solver handle, rebuilt lazily
        return state

    def solve(self, x: State, demands: np.ndarray) -> ChainSolution:
        """Solve against forecast demands (shape (ns, 2), entry k realized
        over [t0+k, t0+k+1]); returns the first-step control."""
        p = self.p
        demands = np.asarray(demands, dtype=float)
        if demands.shape != (self.ns, 2):
            raise ValueError(f"expected {self.ns} forecast entries, got {demands.shape}")
        b_eq = self._b_eq_base.copy()
        for k in range(self.ns):
            b_eq[5 * k] = demands[k, 0]
            b_eq[5 * k + 2] += -p.delta * demands[k, 1]
        b_eq[1:5] += self._first_dyn @ x.as_array()

        lower = self._lower_base.copy()
        upper = self._upper_base.copy()
        box = admissible_controls(x, p)
        upper[self._u(0, 0)] = box.f_b_max
        upper[self._u(0, 1)] = -box.f_b_min
        upper[self._u(0, 3)] = box.f_h_max
        lower[self._u(0, 6)] = max(0.0, p.theta_set[self.t0] - x.theta_i)

        # The tank floor may be unreachable after an unusually large draw;
        # relax each planned level to what full-rate reheating can attain so
        # the plan stays feasible (and then reheats as fast as possible).
        reach = x.h + p.delta * (p.beta_h * box.f_h_max - demands[0, 1])
        lower[self._x(1, 1)] = min(self.h_floor, reach)
        for k in range(2, self.ns + 1):
            reach = min(p.h_max,
                        reach + p.delta * (p.beta_h * p.f_h_max - demands[k - 1, 1]))
            lower[self._x(k, 1)] = min(self.h_floor, reach)

        if self._persistent is None:
            self._persistent = lpmod.PersistentLp(lpmod.LinearProgram(
                c=self.c, a_eq=self.a_eq, rhs=b_eq, lower=lower, upper=upper,
                a_ub=self.a_ub, b_ub=self.b_ub))
        sol = self._persistent.solve(rhs=b_eq, lower=lower, upper=upper)
        if not sol.optimal:
            return ChainSolution(control=Control(0.0, 0.0, 0.0),
                                 objective=np.nan, status=sol.status)
        xs = sol.x_star
        u = canonical_control(xs[self._u(0, 0)], xs[self._u(0, 1)],
                              _clean(xs[self._u(0, 2)], 0.0, box.f_t_max),
                              _clean(xs[self._u(0, 3)], 0.0, box.f_h_max))
        u = box.clip(u)
        plan = xs[7 * self.ns:7 * self.ns + 4]
        return ChainSolution(control=u, objective=float(sol.objective),
                             status=sol.status, x_next_plan=plan)


@dataclass
class StageSolution:
    control: Control
    objective: float
    duals: Optional[np.ndarray] = None


class OneStageDecision:
    """Compact one-stage problem: expectation over scenario blocks of the
    stage cost plus the polyhedral value of the next state, optimized over
    the shared control."""

    def __init__(self, p: SystemParams, t: int, dist, lambdas: np.ndarray,
                 betas: np.ndarray):
        if not 0 <= t < p.horizon_steps:
            raise ValueError(f"stage {t} outside [0, {p.horizon_steps})")
        self.p = p
        self.t = t
        self.points = np.asarray(dist.points, dtype=float)
        self.weights = np.asarray(dist.weights, dtype=float)
        self.lambdas, self.betas = dedup_cuts(np.asarray(lambdas, dtype=float),
                                              np.asarray(betas, dtype=float))
        self._build()

    def _build(self):
        p, t = self.p, self.t
        s_count = self.points.shape[0]
        n_cuts = self.lambdas.shape[0]
        self.s_count, self.n_cuts = s_count, n_cuts
        m, nmat, pw, g = linear_dynamics(t, p)
        self._nmat = nmat
        # deterministic part of the next state, per scenario: x + offset_s + dN u
        self._offsets = (p.delta * (self.points @ pw.T + g))  # (S, 4)
        self._phi = np.eye(4) + p.delta * m

        # vars: u(4) then per s: fne, spill, theta
        n = 4 + 3 * s_count
        self.n = n
        rows, cols, vals = [], [], []
        for s in range(s_count):
            r = s
            base = 4 + 3 * s
            for col, coef in ((base, 1.0), (base + 1, -1.0), (0, -1.0),
                              (1, 1.0), (2, -1.0), (3, -1.0)):
                rows.append(r)
                cols.append(col)
                vals.append(coef)
        self.a_eq = sp.csr_matrix((vals, (rows, cols)), shape=(s_count, n))
        self.b_eq = self.points[:, 0].copy()

        # cut rows: lambda_j . (phi x + offset_s + delta N u) + beta_j <= theta_s
        lam_nu = p.delta * (self.lambdas @ nmat)       # (L, 4) over u
        lam_phi = self.lambdas @ self._phi             # (L, 4) over pinned x
        self._lam_phi = lam_phi
        if n_cuts:
            ublock = np.tile(lam_nu, (s_count, 1))     # (S*L, 4)
            theta_block = sp.csr_matrix(
                np.hstack([np.zeros((n_cuts, 2)), -np.ones((n_cuts, 1))]))
            theta_part = sp.kron(sp.eye(s_count), theta_block)
            self.a_ub = sp.hstack([sp.csr_matrix(ublock), theta_part]).tocsr()
            # rhs depends on x: -beta_j - lam_phi_j . x - lambda_j . offset_s
            self._cut_const = -(self.betas[None, :]
                                + self._offsets @ self.lambdas.T)  # (S, L)
        else:
            self.a_ub = None
            self._cut_const = None

        c = np.zeros(n)
        for s in range(s_count):
            c[4 + 3 * s] = self.weights[s] * p.pi_e[t] * p.delta
            c[4 + 3 * s + 2] = self.weights[s]
        self.c = c

        lower = np.zeros(n)
        upper = np.full(n, INF)
        for s in range(s_count):
            lower[4 + 3 * s + 2] = -INF
        self._lower_base = lower
        self._upper_base = upper
        self._max_dhw = float(self.points[:, 1].max())
        self._persistent = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_persistent"] = None  # solver handle, rebuilt lazily
        return state

    def solve(self, x: State) -> StageSolution:
        p, t = self.p, self.t
        box = admissible_controls(x, p)
        lower = self._lower_base.copy()
        upper = self._upper_base.copy()
        upper[0] = box.f_b_max
        upper[1] = -box.f_b_min
        upper[2] = box.f_t_max
        upper[3] = box.f_h_max
        # keep the tank above the safety floor against the worst noise point
        needed = (p.h_floor + p.delta * self._max_dhw - x.h) / (p.delta * p.beta_h)
        lower[3] = _clean(needed, 0.0, upper[3])

        b_ub = None
        if self.a_ub is not None:
            b_ub = (self._cut_const - (self._lam_phi @ x.as_array())[None, :]).ravel()
        if self._persistent is None:
            self._persistent = lpmod.PersistentLp(lpmod.LinearProgram(
                c=self.c, a_eq=self.a_eq, rhs=self.b_eq, lower=lower,
                upper=upper, a_ub=self.a_ub, b_ub=b_ub))
        sol = self._persistent.solve(lower=lower, upper=upper, b_ub=b_ub)
        if not sol.optimal:
            raise lpmod.LpError(
                f"one-stage problem at t={t} is {sol.status.value}; the "
                "import/spill recourse should forbid this")
        xs = sol.x_star
        u = canonical_control(xs[0], xs[1], _clean(xs[2], 0.0, box.f_t_max),
                              _clean(xs[3], lower[3], upper[3]))
        u = box.clip(u)
        discomfort = p.pi_d[t] * max(0.0, p.theta_set[t] - x.theta_i)
        return StageSolution(control=u, objective=float(sol.objective) + discomfort)


def solve_pinned_stage(p: SystemParams, t: int, x: State, dist,
                       lambdas: np.ndarray, betas: np.ndarray) -> StageSolution:
    """One-stage problem with the incoming state pinned by equality rows.

    The duals of the four pinning rows are a subgradient of the optimal
    value with respect to the incoming state (the new cut slope).
    """
    points = np.asarray(dist.points, dtype=float)
    weights = np.asarray(dist.weights, dtype=float)
    lambdas, betas = dedup_cuts(np.asarray(lambdas, dtype=float),
                                np.asarray(betas, dtype=float))
    s_count = points.shape[0]
    n_cuts = lambdas.shape[0]
    delta = p.delta
    m, nmat, pw, g = linear_dynamics(t, p)
    phi = np.eye(4) + delta * m
    offsets = delta * (points @ pw.T + g)

    # vars: x(4), u(4), dcomf, then per s: fne, spill, theta, x'(4)
    def xn(s, j):
        return 9 + 7 * s + 3 + j

    n = 9 + 7 * s_count
    rows, cols, vals = [], [], []
    b_eq = np.zeros(4 + 5 * s_count)
    for i in range(4):
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        b_eq[i] = x.as_array()[i]
    for s in range(s_count):
        r = 4 + 5 * s
        base = 9 + 7 * s
        for col, coef in ((base, 1.0), (base + 1, -1.0), (4, -1.0),
                          (5, 1.0), (6, -1.0), (7, -1.0)):
            rows.append(r)
            cols.append(col)
            vals.append(coef)
        b_eq[r] = points[s, 0]
        for i in range(4):
            rr = r + 1 + i
            rows.append(rr)
            cols.append(xn(s, i))
            vals.append(1.0)
            for j in range(4):
                if phi[i, j] != 0.0:
                    rows.append(rr)
                    cols.append(j)
                    vals.append(-phi[i, j])
            for j in range(4):
                if nmat[i, j] != 0.0:
                    rows.append(rr)
                    cols.append(4 + j)
                    vals.append(-delta * nmat[i, j])
            b_eq[rr] = offsets[s, i]
    a_eq = sp.csr_matrix((vals, (rows, cols)), shape=(b_eq.size, n))

    rows, cols, vals = [], [], []
    b_ub = []
    r = 0
    # state-dependent control box, written through the state variables
    rows += [r, r]
    cols += [4, 0]
    vals += [delta * p.rho_c, 1.0]
    b_ub.append(p.b_max)
    r += 1
    rows += [r, r]
    cols += [5, 0]
    vals += [delta / p.rho_d, -1.0]
    b_ub.append(-p.b_min)
    r += 1
    rows += [r, r]
    cols += [7, 1]
    vals += [delta * p.beta_h, 1.0]
    b_ub.append(p.h_max)
    r += 1
    rows += [r, r]
    cols += [8, 3]
    vals += [-1.0, -1.0]
    b_ub.append(-p.theta_set[t])
    r += 1
    for s in range(s_count):
        for j in range(n_cuts):
            rows.append(r)
            cols.append(9 + 7 * s + 2)
            vals.append(-1.0)
            for i in range(4):
                if lambdas[j, i] != 0.0:
                    rows.append(r)
                    cols.append(xn(s, i))
                    vals.append(lambdas[j, i])
            b_ub.append(-betas[j])
            r += 1
    a_ub = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    b_ub = np.array(b_ub)

    lower = np.full(n, -INF)
    upper = np.full(n, INF)
    lower[4:9] = 0.0
    upper[4] = p.f_b_max
    upper[5] = p.f_b_max
    upper[6] = p.f_t_max
    upper[7] = p.f_h_max
    c = np.zeros(n)
    c[8] = p.pi_d[t]
    for s in range(s_count):
        base = 9 + 7 * s
        lower[base] = 0.0
        lower[base + 1] = 0.0
        c[base] = weights[s] * p.pi_e[t] * delta
        c[base + 2] = weights[s]
        lower[xn(s, 0)], upper[xn(s, 0)] = p.b_min, p.b_max
        # relax the tank floor when this scenario's draw makes it unreachable
        fh_cap = min(p.f_h_max, (p.h_max - x.h) / (delta * p.beta_h))
        reach = x.h + delta * (p.beta_h * fh_cap - points[s, 1])
        lower[xn(s, 1)], upper[xn(s, 1)] = min(p.h_floor, reach), p.h_max

    prog = lpmod.LinearProgram(c=c, a_eq=a_eq, rhs=b_eq, lower=lower,
                               upper=upper, a_ub=a_ub, b_ub=b_ub)
    sol = lpmod.solve(prog)
    if not sol.optimal:
        raise lpmod.LpError(
            f"pinned stage problem at t={t} is {sol.status.value}; the "
            "import/spill recourse should forbid this")
    value, grad = lpmod.parametric_duals(prog, range(4), sol)
    box = admissible_controls(x, p)
    xs = sol.x_star
    u = canonical_control(xs[4], xs[5], _clean(xs[6], 0.0, p.f_t_max),
                          _clean(xs[7], 0.0, p.f_h_max))
    u = box.clip(u)
    return StageSolution(control=u, objective=float(value), duals=np.asarray(grad))
