"""Independent oracles used by the test suite.

Everything here is written from first principles against the problem
statement (scenario-tree LPs, vertex enumeration, brute-force grids) and
deliberately avoids the package's own LP assembly code, so that agreement
between the two is meaningful.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from microgrid_ems.model import R6C2Params, State, SystemParams
from microgrid_ems.scenarios import DiscreteDistribution

# ---------------------------------------------------------------------------
# Battery-only small instance (thermal and tank disabled)

BATTERY_T = 5


def battery_params(pi_e=None, kappa: float = 1.0) -> SystemParams:
    """T=5 battery-only system: no heater, no tank flow, zero discomfort price."""
    T = BATTERY_T
    if pi_e is None:
        # cheap early, expensive late: storage has value
        pi_e = np.array([0.10, 0.10, 0.30, 0.30, 0.30, 0.30])
    return SystemParams(
        delta=0.25, horizon_steps=T,
        rho_c=0.95, rho_d=0.95,
        b_min=0.9, b_max=3.0, f_b_max=3.0,
        h_max=1.0, f_h_max=0.0, f_t_max=0.0, beta_h=0.9,
        r6c2=R6C2Params(r_i=0.5, r_s=0.5, r_m=2.0, r_e=2.0, r_v=25.0,
                        r_f=40.0, c_i=3.3, c_m=50.0, gamma=0.1),
        theta_o=np.full(T + 1, 15.0), p_int=np.zeros(T + 1),
        p_ext=np.zeros(T + 1), pi_e=np.asarray(pi_e, dtype=float),
        pi_d=np.zeros(T + 1), theta_set=np.full(T + 1, -100.0),
        kappa=kappa, h_floor=0.0,
    )


def battery_x0() -> State:
    return State(b=1.5, h=0.0, theta_w=15.0, theta_i=15.0)


def two_point_dists(T: int = BATTERY_T, lo: float = 0.5, hi: float = 2.0):
    """Stagewise-independent two-point net-demand noise, no hot water."""
    d = DiscreteDistribution(points=np.array([[lo, 0.0], [hi, 0.0]]),
                             weights=np.array([0.5, 0.5]))
    return [d] * T


def tree_optimal_value(p: SystemParams, dists, t0: int, b0: float) -> float:
    """Exact optimum of the battery-only multistage problem from (t0, b0),
    by one LP over the full scenario tree (stagewise-independent noise).

    Nonanticipativity is structural: one control per tree node, recourse per
    child edge. Control caps are the state-dependent admissibility bounds,
    written as linear rows in the node's incoming state.
    """
    T = p.horizon_steps
    stages = T - t0
    delta, rc, rd = p.delta, p.rho_c, p.rho_d

    # enumerate nodes level by level; node = index into per-level lists
    level_sizes = []
    branching = [len(dists[t0 + k].points) for k in range(stages)]
    size = 1
    for k in range(stages):
        level_sizes.append(size)
        size *= branching[k]
    n_leaves = size

    # variable layout
    var = 0

    def alloc(count):
        nonlocal var
        start = var
        var += count
        return start

    b_idx = []       # incoming state per node, per level 0..stages (leaves last)
    for k in range(stages + 1):
        count = level_sizes[k] if k < stages else n_leaves
        b_idx.append(alloc(count))
    u_idx = []       # (fbp, fbm) per internal node
    for k in range(stages):
        u_idx.append(alloc(2 * level_sizes[k]))
    e_idx = []       # (fne, spill) per edge
    for k in range(stages):
        e_idx.append(alloc(2 * level_sizes[k] * branching[k]))
    z_idx = alloc(n_leaves)
    n = var

    # probabilities of nodes
    probs = [np.ones(1)]
    for k in range(stages):
        w = dists[t0 + k].weights
        probs.append(np.repeat(probs[-1], branching[k]) * np.tile(w, level_sizes[k]))

    c = np.zeros(n)
    rows_eq, cols_eq, vals_eq, rhs = [], [], [], []
    rows_ub, cols_ub, vals_ub, bub = [], [], [], []

    def eq(entries, b):
        r = len(rhs)
        for col, v in entries:
            rows_eq.append(r)
            cols_eq.append(col)
            vals_eq.append(v)
        rhs.append(b)

    def ub(entries, b):
        r = len(bub)
        for col, v in entries:
            rows_ub.append(r)
            cols_ub.append(col)
            vals_ub.append(v)
        bub.append(b)

    eq([(b_idx[0], 1.0)], b0)  # pin the root state

    for k in range(stages):
        t = t0 + k
        pts = dists[t].points
        br = branching[k]
        for node in range(level_sizes[k]):
            bn = b_idx[k] + node
            fbp = u_idx[k] + 2 * node
            fbm = fbp + 1
            # state-dependent admissibility caps (linear in the node state)
            ub([(fbp, delta * rc), (bn, 1.0)], p.b_max)
            ub([(fbm, delta / rd), (bn, -1.0)], -p.b_min)
            for i in range(br):
                child = node * br + i
                bc = b_idx[k + 1] + child
                fne = e_idx[k] + 2 * (node * br + i)
                spill = fne + 1
                # next state shared across children (dynamics noise-free in b)
                eq([(bc, 1.0), (bn, -1.0), (fbp, -delta * rc),
                    (fbm, delta / rd)], 0.0)
                # load balance for this realization
                eq([(fne, 1.0), (spill, -1.0), (fbp, -1.0), (fbm, 1.0)],
                   pts[i, 0])
                c[fne] = probs[k + 1][child] * p.pi_e[t] * delta
    for leaf in range(n_leaves):
        z = z_idx + leaf
        bl = b_idx[stages] + leaf
        ub([(z, -1.0), (bl, -p.kappa)], -p.kappa * battery_x0().b)
        c[z] = probs[stages][leaf]

    lower = np.full(n, 0.0)
    upper = np.full(n, np.inf)
    for k in range(stages + 1):
        count = level_sizes[k] if k < stages else n_leaves
        lower[b_idx[k]:b_idx[k] + count] = p.b_min
        upper[b_idx[k]:b_idx[k] + count] = p.b_max
    for k in range(stages):
        for node in range(level_sizes[k]):
            upper[u_idx[k] + 2 * node] = p.f_b_max
            upper[u_idx[k] + 2 * node + 1] = p.f_b_max

    a_eq = sp.csr_matrix((vals_eq, (rows_eq, cols_eq)), shape=(len(rhs), n))
    a_ub = sp.csr_matrix((vals_ub, (rows_ub, cols_ub)), shape=(len(bub), n))
    res = linprog(c, A_ub=a_ub, b_ub=np.array(bub), A_eq=a_eq,
                  b_eq=np.array(rhs), bounds=np.column_stack([lower, upper]),
                  method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def tree_policy_expected_cost(policy, p: SystemParams, dists, x0: State) -> float:
    """Exact expected realized cost of a deterministic policy over the full
    scenario tree, by weighted enumeration of all leaves."""
    from microgrid_ems.model import Uncertainty, stage_cost, step, terminal_cost

    T = p.horizon_steps
    total = 0.0
    w0 = Uncertainty(0.0, 0.0)

    def recurse(t, x, prob, acc):
        nonlocal total
        if t == T:
            total += prob * (acc + terminal_cost(x, x0, p.kappa))
            return
        u = policy.decide(t, x, w0).control
        d = dists[t]
        for i in range(len(d.weights)):
            w = Uncertainty(d.points[i, 0], d.points[i, 1])
            x_next = step(t, x, u, w, p)
            recurse(t + 1, x_next, prob * d.weights[i],
                    acc + stage_cost(t, x, u, w, p))

    recurse(0, x0, 1.0, 0.0)
    return total


# ---------------------------------------------------------------------------
# Vertex-enumeration LP oracle

def random_bounded_lp(rng, n_max: int = 6):
    """A random feasible bounded LP: box + a few inequality rows, sometimes
    one equality row. Returns (c, a_eq, rhs, lower, upper, a_ub, b_ub)."""
    n = int(rng.integers(2, n_max + 1))
    lower = rng.uniform(-2.0, 0.0, n)
    upper = rng.uniform(0.5, 3.0, n)
    x_int = lower + rng.uniform(0.2, 0.8, n) * (upper - lower)
    m = int(rng.integers(0, 4))
    a_ub = rng.standard_normal((m, n))
    b_ub = a_ub @ x_int + rng.uniform(0.1, 1.0, m)
    if rng.random() < 0.4:
        a_eq = rng.standard_normal((1, n))
        rhs = a_eq @ x_int
    else:
        a_eq = np.zeros((0, n))
        rhs = np.zeros(0)
    c = rng.standard_normal(n)
    return c, a_eq, rhs, lower, upper, a_ub, b_ub


def vertex_enumeration_optimum(c, a_eq, rhs, lower, upper, a_ub, b_ub,
                               tol: float = 1e-9) -> float:
    """Exhaustive optimum of a bounded LP: enumerate all vertices as
    intersections of n active constraints (equality rows always active)."""
    n = c.size
    # all constraints as rows of G x <= h; bounds become +-identity rows
    g_rows = [a_ub, np.eye(n), -np.eye(n)]
    h_vals = [b_ub, upper, -lower]
    g = np.vstack(g_rows)
    h = np.concatenate(h_vals)
    n_eq = rhs.size
    free = n - n_eq
    cand_idx = list(itertools.combinations(range(g.shape[0]), free))
    mats = np.empty((len(cand_idx), n, n))
    rhs_full = np.empty((len(cand_idx), n))
    for k, combo in enumerate(cand_idx):
        mats[k, :n_eq] = a_eq
        rhs_full[k, :n_eq] = rhs
        mats[k, n_eq:] = g[list(combo)]
        rhs_full[k, n_eq:] = h[list(combo)]
    dets = np.abs(np.linalg.det(mats))
    keep = dets > 1e-10
    if not np.any(keep):
        raise AssertionError("degenerate oracle instance")
    xs = np.linalg.solve(mats[keep], rhs_full[keep][..., None])[..., 0]
    feas = np.all(xs @ g.T <= h[None, :] + tol, axis=1)
    if n_eq:
        feas &= np.all(np.abs(xs @ a_eq.T - rhs[None, :]) <= tol, axis=1)
    if not np.any(feas):
        raise AssertionError("oracle found no feasible vertex")
    return float(np.min(xs[feas] @ c))


# ---------------------------------------------------------------------------
# Brute-force control-grid search for short deterministic problems

def grid_search_cost(p: SystemParams, x0: State, demands: np.ndarray,
                     n_grid: int = 9) -> float:
    """Best cost over a per-step battery-flow grid (battery-only instance)."""
    from microgrid_ems.model import (Control, Uncertainty, admissible_controls,
                                     stage_cost, step, terminal_cost)

    T = p.horizon_steps
    best = math.inf

    def recurse(t, x, acc):
        nonlocal best
        if acc >= best:
            return
        if t == T:
            best = min(best, acc + terminal_cost(x, x0, p.kappa))
            return
        box = admissible_controls(x, p)
        w = Uncertainty(demands[t, 0], demands[t, 1])
        for f_b in np.linspace(box.f_b_min, box.f_b_max, n_grid):
            u = Control(f_b=float(f_b), f_t=0.0, f_h=0.0)
            recurse(t + 1, step(t, x, u, w, p), acc + stage_cost(t, x, u, w, p))

    recurse(0, x0, 0.0)
    return best
