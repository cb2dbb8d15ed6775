"""The three controllers: rule-based heuristic, MPC, and SDDP.

MPC solves a shrinking-horizon deterministic LP against an AR(1)-updated
forecast and applies the first decision. SDDP trains polyhedral lower
approximations of the Bellman value functions offline (forward sampling,
backward dual cuts) and plays the one-stage expected problem online.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .model import (
    Control,
    State,
    SystemParams,
    Uncertainty,
    admissible_controls,
    stage_cost,
    step,
    terminal_cost,
)
from .scenarios import ARModel, DiscreteDistribution, update_forecast
from . import stagelp

__all__ = [
    "Cut",
    "ValueFunctions",
    "PolicyDecision",
    "TrainingLog",
    "StoppingRule",
    "HeuristicPolicy",
    "MpcPolicy",
    "SddpPolicy",
    "heuristic_decide",
    "mpc_decide",
    "perfect_foresight_cost",
    "sddp_decide",
    "sddp_train",
    "evaluate_vf",
]


@dataclass(frozen=True)
class Cut:
    """Affine minorant of a value function: x -> lam . x + beta."""

    lam: np.ndarray
    beta: float

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.shape != (4,) or not np.all(np.isfinite(lam)) or not math.isfinite(self.beta):
            raise ValueError("cut needs a finite length-4 slope and intercept")
        object.__setattr__(self, "lam", lam)


class ValueFunctions:
    """Per-stage polyhedral lower approximations, evaluated as the max cut.

    cuts[T] encodes the terminal penalty's epigraph pieces exactly.
    """

    def __init__(self, cuts: List[List[Cut]]):
        if not cuts or any(not cs for cs in cuts):
            raise ValueError("every stage needs at least one cut")
        self._cuts = [list(cs) for cs in cuts]
        self._arrays: Dict[int, tuple] = {}

    @staticmethod
    def initial(p: SystemParams, x_ref: State) -> "ValueFunctions":
        """Zero cut everywhere (valid: all costs are nonnegative) plus the
        exact terminal pieces kappa * max(0, ref - stock) per stock."""
        k = p.kappa
        terminal = [
            Cut(np.zeros(4), 0.0),
            Cut(np.array([-k, 0.0, 0.0, 0.0]), k * x_ref.b),
            Cut(np.array([0.0, -k, 0.0, 0.0]), k * x_ref.h),
            Cut(np.array([-k, -k, 0.0, 0.0]), k * (x_ref.b + x_ref.h)),
        ]
        cuts = [[Cut(np.zeros(4), 0.0)] for _ in range(p.horizon_steps)]
        cuts.append(terminal)
        return ValueFunctions(cuts)

    @property
    def horizon(self) -> int:
        return len(self._cuts) - 1

    def cuts(self, t: int) -> List[Cut]:
        return list(self._cuts[t])

    def cut_counts(self) -> List[int]:
        return [len(cs) for cs in self._cuts]

    def add_cut(self, t: int, cut: Cut):
        self._cuts[t].append(cut)
        self._arrays.pop(t, None)

    def arrays(self, t: int):
        """(lambdas, betas) arrays for stage t."""
        cached = self._arrays.get(t)
        if cached is None:
            lambdas = np.array([c.lam for c in self._cuts[t]])
            betas = np.array([c.beta for c in self._cuts[t]])
            cached = (lambdas, betas)
            self._arrays[t] = cached
        return cached

    def evaluate(self, t: int, x: State) -> float:
        lambdas, betas = self.arrays(t)
        return float(np.max(lambdas @ x.as_array() + betas))

    def to_json(self, path):
        payload = [
            [{"lambda": [float(v) for v in c.lam], "beta": float(c.beta)} for c in cs]
            for cs in self._cuts
        ]
        with open(path, "w") as f:
            json.dump(payload, f, indent=1)

    @staticmethod
    def from_json(path) -> "ValueFunctions":
        with open(path) as f:
            payload = json.load(f)
        return ValueFunctions(
            [[Cut(np.array(c["lambda"]), c["beta"]) for c in cs] for cs in payload])


def evaluate_vf(vf: ValueFunctions, t: int, x: State) -> float:
    """Lower-bound value of the trained approximation at (t, x)."""
    return vf.evaluate(t, x)


@dataclass(frozen=True)
class PolicyDecision:
    control: Control
    predicted_cost: float
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Heuristic


class HeuristicPolicy:
    """Logical decision rule: charge the battery on PV surplus, discharge on
    deficit, refill the tank below its initial level, bang-bang heater with
    hysteresis around the setpoint."""

    name = "heuristic"

    def __init__(self, p: SystemParams, x0: State, margin_deg_c: float = 1.0):
        self.p = p
        self.h0 = x0.h
        self.margin = margin_deg_c
        self._heater_on = False

    def reset(self):
        self._heater_on = False

    def decide(self, t: int, x: State, w_obs) -> PolicyDecision:
        p = self.p
        box = admissible_controls(x, p)
        net = float(w_obs[0]) if not hasattr(w_obs, "d_el_net") else w_obs.d_el_net
        if net < 0.0:
            f_b = min(-net, box.f_b_max)
        else:
            f_b = -min(net, -box.f_b_min)
        f_h = box.f_h_max if x.h < self.h0 else 0.0
        setpoint = p.theta_set[t]
        if x.theta_i < setpoint:
            self._heater_on = True
        elif x.theta_i > setpoint + self.margin:
            self._heater_on = False
        f_t = box.f_t_max if self._heater_on else 0.0
        u = box.clip(Control(f_b=f_b, f_t=f_t, f_h=f_h))
        return PolicyDecision(control=u, predicted_cost=math.nan)


def heuristic_decide(t: int, x: State, w_prev, p: SystemParams,
                     x0: State, margin_deg_c: float = 1.0) -> PolicyDecision:
    """One-shot rule evaluation (no hysteresis memory across calls)."""
    return HeuristicPolicy(p, x0, margin_deg_c).decide(t, x, w_prev)


# ---------------------------------------------------------------------------
# MPC


class MpcPolicy:
    """Shrinking-horizon deterministic LP; the AR(1) model updates the
    one-step forecast online, the offline means fill the tail."""

    name = "mpc"

    def __init__(self, p: SystemParams, x0: State, ar: ARModel, means: np.ndarray):
        if ar.horizon != p.horizon_steps:
            raise ValueError("AR model horizon does not match the system")
        self.p = p
        self.x0 = x0
        self.ar = ar
        self.means = np.asarray(means, dtype=float)
        self._chains: Dict[int, stagelp.DeterministicChain] = {}

    def reset(self):
        pass

    def _chain(self, t: int) -> stagelp.DeterministicChain:
        chain = self._chains.get(t)
        if chain is None:
            chain = stagelp.DeterministicChain(self.p, t, self.x0)
            self._chains[t] = chain
        return chain

    def decide(self, t: int, x: State, w_obs) -> PolicyDecision:
        w = w_obs.as_array() if hasattr(w_obs, "as_array") else np.asarray(w_obs)
        forecast = update_forecast(self.ar, t, w, self.means)
        tic = time.perf_counter()
        sol = self._chain(t).solve(x, forecast)
        elapsed = time.perf_counter() - tic
        if sol.status.value != "optimal":
            raise RuntimeError(f"MPC stage LP at t={t} is {sol.status.value}")
        return PolicyDecision(control=sol.control, predicted_cost=sol.objective,
                              diagnostics={"solve_s": elapsed,
                                           "horizon": self.p.horizon_steps - t})


def mpc_decide(t: int, x: State, forecast: np.ndarray, p: SystemParams,
               x_ref: State) -> PolicyDecision:
    """Solve the step-t shrinking-horizon problem against a given forecast."""
    chain = stagelp.DeterministicChain(p, t, x_ref)
    sol = chain.solve(x, forecast)
    if sol.status.value != "optimal":
        raise RuntimeError(f"MPC stage LP at t={t} is {sol.status.value}")
    return PolicyDecision(control=sol.control, predicted_cost=sol.objective)


def perfect_foresight_cost(p: SystemParams, x0: State, scenario: np.ndarray) -> float:
    """Anticipative deterministic optimum of one scenario (lower bound on any
    nonanticipative policy's realized cost on that scenario)."""
    chain = stagelp.DeterministicChain(p, 0, x0, h_floor=0.0)
    sol = chain.solve(x0, np.asarray(scenario, dtype=float)[1:, :])
    if sol.status.value != "optimal":
        raise RuntimeError(f"perfect-foresight LP is {sol.status.value}")
    return sol.objective


# ---------------------------------------------------------------------------
# SDDP


@dataclass
class TrainingLog:
    lower_bounds: List[float] = field(default_factory=list)
    forward_costs: List[float] = field(default_factory=list)
    cut_counts: List[int] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.lower_bounds)


@dataclass(frozen=True)
class StoppingRule:
    """Stop after max_iters, or once the relative lower-bound improvement
    stays below lb_tol for `patience` consecutive iterations."""

    max_iters: int = 100
    lb_tol: float = 1e-4
    patience: int = 10


def sddp_train(p: SystemParams, dists: Sequence[DiscreteDistribution],
               x0: State, stop: StoppingRule = StoppingRule(),
               seed: int = 0) -> tuple[ValueFunctions, TrainingLog]:
    """Train the polyhedral value functions by sampled forward passes and
    backward dual cuts; the recorded lower bound is non-decreasing."""
    T = p.horizon_steps
    if len(dists) != T:
        raise ValueError(f"need {T} stage distributions, got {len(dists)}")
    vf = ValueFunctions.initial(p, x0)
    log = TrainingLog()
    rng = np.random.default_rng(seed)
    stable = 0
    for _ in range(stop.max_iters):
        # forward pass
        x = x0
        traj = [x0]
        fcost = 0.0
        for t in range(T):
            lambdas, betas = vf.arrays(t + 1)
            problem = stagelp.OneStageDecision(p, t, dists[t], lambdas, betas)
            u = problem.solve(x).control
            idx = rng.choice(dists[t].size, p=dists[t].weights)
            w = Uncertainty(*dists[t].points[idx])
            fcost += stage_cost(t, x, u, w, p)
            x = step(t, x, u, w, p)
            traj.append(x)
        fcost += terminal_cost(x, x0, p.kappa)

        # backward pass
        lb = math.nan
        for t in range(T - 1, -1, -1):
            lambdas, betas = vf.arrays(t + 1)
            sol = stagelp.solve_pinned_stage(p, t, traj[t], dists[t], lambdas, betas)
            beta = sol.objective - float(sol.duals @ traj[t].as_array())
            vf.add_cut(t, Cut(sol.duals, beta))
            lb = sol.objective
        log.lower_bounds.append(lb)
        log.forward_costs.append(fcost)
        log.cut_counts.append(sum(vf.cut_counts()))

        if len(log.lower_bounds) >= 2:
            prev = log.lower_bounds[-2]
            rel = abs(lb - prev) / max(abs(prev), 1e-9)
            stable = stable + 1 if rel < stop.lb_tol else 0
            if stable >= stop.patience:
                break
    return vf, log


class SddpPolicy:
    """Online one-stage policy against the trained cuts and the offline
    (or refined online) per-stage discrete laws."""

    name = "sddp"

    def __init__(self, p: SystemParams, vf: ValueFunctions,
                 online_dists: Sequence[DiscreteDistribution]):
        if vf.horizon != p.horizon_steps or len(online_dists) != p.horizon_steps:
            raise ValueError("value functions / distributions horizon mismatch")
        self.p = p
        self.vf = vf
        self.dists = list(online_dists)
        self._problems: Dict[int, stagelp.OneStageDecision] = {}

    def reset(self):
        pass

    def _problem(self, t: int) -> stagelp.OneStageDecision:
        prob = self._problems.get(t)
        if prob is None:
            lambdas, betas = self.vf.arrays(t + 1)
            prob = stagelp.OneStageDecision(self.p, t, self.dists[t], lambdas, betas)
            self._problems[t] = prob
        return prob

    def decide(self, t: int, x: State, w_obs=None) -> PolicyDecision:
        tic = time.perf_counter()
        sol = self._problem(t).solve(x)
        elapsed = time.perf_counter() - tic
        return PolicyDecision(control=sol.control, predicted_cost=sol.objective,
                              diagnostics={"solve_s": elapsed,
                                           "scenarios": self.dists[t].size})


def sddp_decide(t: int, x: State, vf: ValueFunctions,
                dist_online: DiscreteDistribution, p: SystemParams) -> PolicyDecision:
    """One-shot online SDDP decision at stage t."""
    lambdas, betas = vf.arrays(t + 1)
    problem = stagelp.OneStageDecision(p, t, dist_online, lambdas, betas)
    sol = problem.solve(x)
    return PolicyDecision(control=sol.control, predicted_cost=sol.objective)
