"""Scenario ingestion and generation, AR(1) forecasting, Lloyd-Max quantization.

Scenarios are arrays of shape (n, T+1, 2) holding (d_el_net, d_hw) per step.
Step 0 is the observed initial value; the noises actually feeding the stage
problems are indexed 1..T.

The synthetic generator replaces the proprietary demand/weather data: demands
are near zero at night with peaks around midday and 8 pm, hot water shows
morning/evening spikes, and a solar bell scaled by a configured daily energy
is subtracted into the net electrical demand.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

__all__ = [
    "ScenarioSet",
    "GeneratorConfig",
    "ARModel",
    "DiscreteDistribution",
    "ScenarioError",
    "generate_scenarios",
    "save_scenarios",
    "load_scenarios",
    "fit_ar",
    "scenario_means",
    "update_forecast",
    "lloyd_max",
    "quantize_stagewise",
    "save_distributions",
    "load_distributions",
]


class ScenarioError(ValueError):
    """Validation or parse error on scenario data."""


ROLE_POOL = "pool"
ROLE_OPTIMIZATION = "optimization"
ROLE_ASSESSMENT = "assessment"


@dataclass(frozen=True)
class ScenarioSet:
    """A batch of uncertainty paths with a usage label.

    The label enforces information hygiene: model fitting and SDDP training
    refuse sets labelled for assessment.
    """

    data: np.ndarray
    role: str = ROLE_POOL

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 3 or data.shape[2] != 2:
            raise ScenarioError(f"scenario data must have shape (n, T+1, 2), got {data.shape}")
        if data.size and not np.all(np.isfinite(data)):
            raise ScenarioError("scenario data contains non-finite values")
        if data.size and np.any(data[:, :, 1] < 0):
            raise ScenarioError("hot water demand must be nonnegative")
        if self.role not in (ROLE_POOL, ROLE_OPTIMIZATION, ROLE_ASSESSMENT):
            raise ScenarioError(f"unknown scenario role {self.role!r}")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def horizon(self) -> int:
        """Number of steps T (paths have T+1 entries)."""
        return self.data.shape[1] - 1


def _require_offline(s: ScenarioSet, op: str):
    if s.role == ROLE_ASSESSMENT:
        raise ScenarioError(f"{op} must not see assessment scenarios")


# ---------------------------------------------------------------------------
# Synthetic generator


@dataclass(frozen=True)
class GeneratorConfig:
    """Shape parameters of the synthetic demand/PV generator.

    Amplitudes in kW, times in hours of day. ``d_hw_cap`` hard-limits hot
    water spikes so a tank kept above ``delta * d_hw_cap`` can never be
    drained below zero within one step.
    """

    delta: float = 0.25
    horizon_steps: int = 96
    night_kw: float = 0.15
    morning_kw: float = 1.2
    midday_kw: float = 1.8
    evening_kw: float = 2.2
    el_noise_rel: float = 0.25
    el_ar_rho: float = 0.7
    el_ar_sigma: float = 0.08
    pv_daily_kwh: float = 0.0
    pv_noise_rel: float = 0.3
    sunrise_h: float = 7.0
    sunset_h: float = 19.0
    hw_morning_window: tuple = (6.5, 9.5)
    hw_evening_window: tuple = (18.5, 21.5)
    hw_events_per_window: float = 1.3
    hw_kw_lo: float = 0.8
    hw_kw_hi: float = 2.2
    d_hw_cap: float = 2.6

    def __post_init__(self):
        if self.delta <= 0 or self.horizon_steps < 1:
            raise ScenarioError("delta must be > 0 and horizon_steps >= 1")
        for name in ("night_kw", "morning_kw", "midday_kw", "evening_kw",
                     "pv_daily_kwh", "hw_kw_lo", "hw_kw_hi", "d_hw_cap"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"generator.{name} must be nonnegative")
        if self.hw_kw_lo > self.hw_kw_hi:
            raise ScenarioError("hw_kw_lo must not exceed hw_kw_hi")
        if not self.sunrise_h < self.sunset_h:
            raise ScenarioError("sunrise must precede sunset")

    @staticmethod
    def from_dict(d: dict) -> "GeneratorConfig":
        known = {f for f in GeneratorConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown generator fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("hw_morning_window", "hw_evening_window"):
            if key in d:
                d[key] = tuple(d[key])
        return GeneratorConfig(**d)


_EL_BUMPS = ((8.0, 1.2), (12.5, 1.0), (20.0, 1.2))  # (center hour, width)


def _hours(cfg: GeneratorConfig) -> np.ndarray:
    return (np.arange(cfg.horizon_steps + 1) * cfg.delta) % 24.0


def _ar_noise(rng, n_steps, rho, sigma):
    e = np.empty(n_steps)
    z = rng.standard_normal(n_steps)
    e[0] = z[0] * sigma / math.sqrt(max(1e-12, 1.0 - rho * rho))
    for t in range(1, n_steps):
        e[t] = rho * e[t - 1] + sigma * z[t]
    return np.exp(e)


def _pv_shape(cfg: GeneratorConfig) -> np.ndarray:
    """Unit-energy solar bell (integrates to 1 kWh over the day)."""
    h = _hours(cfg)
    span = cfg.sunset_h - cfg.sunrise_h
    shape = np.where(
        (h >= cfg.sunrise_h) & (h <= cfg.sunset_h),
        np.sin(np.pi * (h - cfg.sunrise_h) / span) ** 2,
        0.0,
    )
    return shape / (span / 2.0)


def generate_scenarios(cfg: GeneratorConfig, n: int, seed: int,
                       role: str = ROLE_POOL) -> ScenarioSet:
    """Draw n synthetic demand scenarios, deterministic given the seed."""
    if n < 1:
        raise ScenarioError("scenario count must be >= 1")
    rng = np.random.default_rng(seed)
    steps = cfg.horizon_steps + 1
    h = _hours(cfg)
    base = np.full(steps, cfg.night_kw)
    amps = (cfg.morning_kw, cfg.midday_kw, cfg.evening_kw)
    bump_profiles = []
    for (center, width), amp in zip(_EL_BUMPS, amps):
        bump_profiles.append(amp * np.exp(-0.5 * ((h - center) / width) ** 2))
    pv_shape = _pv_shape(cfg)

    data = np.zeros((n, steps, 2))
    for s in range(n):
        mult = np.exp(cfg.el_noise_rel * rng.standard_normal(3))
        d_el = base.copy()
        for profile, m in zip(bump_profiles, mult):
            d_el = d_el + m * profile
        d_el *= _ar_noise(rng, steps, cfg.el_ar_rho, cfg.el_ar_sigma)

        cloud = float(np.clip(np.exp(cfg.pv_noise_rel * rng.standard_normal()), 0.2, 1.5))
        pv = cfg.pv_daily_kwh * cloud * pv_shape
        pv = pv * _ar_noise(rng, steps, cfg.el_ar_rho, cfg.el_ar_sigma / 2.0)

        d_hw = np.zeros(steps)
        for window in (cfg.hw_morning_window, cfg.hw_evening_window):
            n_events = rng.poisson(cfg.hw_events_per_window)
            for _ in range(n_events):
                start_h = rng.uniform(window[0], window[1])
                start = int(start_h / cfg.delta)
                duration = int(rng.integers(1, 4))
                mag = rng.uniform(cfg.hw_kw_lo, cfg.hw_kw_hi)
                d_hw[start:start + duration] += mag
        d_hw = np.minimum(d_hw, cfg.d_hw_cap)

        data[s, :, 0] = d_el - pv
        data[s, :, 1] = d_hw
    return ScenarioSet(data=data, role=role)


# ---------------------------------------------------------------------------
# CSV persistence

_CSV_HEADER = ["scenario", "t", "d_el_net", "d_hw"]


def save_scenarios(s: ScenarioSet, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(_CSV_HEADER)
        for i in range(s.n):
            for t in range(s.horizon + 1):
                w.writerow([i, t, repr(float(s.data[i, t, 0])), repr(float(s.data[i, t, 1]))])


def load_scenarios(path, role: str = ROLE_POOL) -> ScenarioSet:
    rows = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != _CSV_HEADER:
            raise ScenarioError(f"{path}: expected header {','.join(_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                i, t = int(row[0]), int(row[1])
                vals = (float(row[2]), float(row[3]))
            except (ValueError, IndexError) as exc:
                raise ScenarioError(f"{path}:{lineno}: malformed row {row!r}") from exc
            rows[(i, t)] = vals
    if not rows:
        return ScenarioSet(data=np.zeros((0, 1, 2)), role=role)
    n = max(i for i, _ in rows) + 1
    steps = max(t for _, t in rows) + 1
    data = np.zeros((n, steps, 2))
    for (i, t), vals in rows.items():
        data[i, t] = vals
    if len(rows) != n * steps:
        raise ScenarioError(f"{path}: ragged scenario file ({len(rows)} rows for {n}x{steps})")
    return ScenarioSet(data=data, role=role)


# ---------------------------------------------------------------------------
# AR(1) model and online forecast


@dataclass(frozen=True)
class ARModel:
    """Per-step, per-component first-order autoregression d' = alpha d + beta."""

    alpha: np.ndarray     # (T, 2)
    beta: np.ndarray      # (T, 2)
    resid_std: np.ndarray  # (T, 2)
    fallback: np.ndarray   # (T, 2) bool; True where the regressor was degenerate

    @property
    def horizon(self) -> int:
        return self.alpha.shape[0]


def fit_ar(opt: ScenarioSet) -> ARModel:
    """Least-squares fit of the stagewise AR(1) coefficients.

    Steps with a degenerate regressor fall back to the sample mean
    (alpha = 0) and are flagged.
    """
    _require_offline(opt, "fit_ar")
    if opt.n < 2:
        raise ScenarioError("fit_ar needs at least 2 scenarios")
    T = opt.horizon
    alpha = np.zeros((T, 2))
    beta = np.zeros((T, 2))
    resid_std = np.zeros((T, 2))
    fallback = np.zeros((T, 2), dtype=bool)
    for t in range(T):
        for i in range(2):
            x = opt.data[:, t, i]
            y = opt.data[:, t + 1, i]
            xm, ym = x.mean(), y.mean()
            sxx = float(np.sum((x - xm) ** 2))
            if sxx < 1e-12:
                a, b = 0.0, ym
                fallback[t, i] = True
            else:
                a = float(np.sum((x - xm) * (y - ym)) / sxx)
                b = ym - a * xm
            resid = y - a * x - b
            alpha[t, i], beta[t, i] = a, b
            resid_std[t, i] = float(np.sqrt(np.mean(resid ** 2)))
    return ARModel(alpha=alpha, beta=beta, resid_std=resid_std, fallback=fallback)


def scenario_means(opt: ScenarioSet) -> np.ndarray:
    """Per-step mean uncertainty of the optimization scenarios, shape (T+1, 2)."""
    _require_offline(opt, "scenario_means")
    return opt.data.mean(axis=0)


def update_forecast(ar: ARModel, t: int, w_t, means: np.ndarray) -> np.ndarray:
    """Forecast (w_{t+1}, ..., w_T) from the value observed at step t.

    The first entry comes from the AR model; the remainder is the offline
    mean profile. Hot water forecasts are clamped at zero.
    """
    T = ar.horizon
    if not 0 <= t < T:
        raise ScenarioError(f"forecast step {t} outside [0, {T})")
    w_t = np.asarray(w_t, dtype=float).reshape(2)
    out = np.array(means[t + 1:T + 1], dtype=float, copy=True)
    out[0] = ar.alpha[t] * w_t + ar.beta[t]
    out[:, 1] = np.maximum(out[:, 1], 0.0)
    return out


# ---------------------------------------------------------------------------
# Lloyd-Max quantization


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support law: S centroids with probability weights."""

    points: np.ndarray   # (S, 2)
    weights: np.ndarray  # (S,)
    collapsed: bool = False  # True when S was reduced to the distinct count

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if points.ndim != 2 or points.shape[0] != weights.size or points.shape[0] < 1:
            raise ScenarioError("distribution needs S >= 1 points with matching weights")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ScenarioError("weights must be nonnegative and sum to 1")
        if len({tuple(p) for p in points}) != points.shape[0]:
            raise ScenarioError("distribution points must be pairwise distinct")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.weights.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def sample(self, rng) -> np.ndarray:
        idx = rng.choice(self.size, p=self.weights)
        return self.points[idx]


class QuantizationResult(NamedTuple):
    distribution: DiscreteDistribution
    distortions: List[float]


def _canonical(points, weights, collapsed) -> DiscreteDistribution:
    # Merge numerically identical centroids, then sort for reproducible output.
    order = np.lexsort((points[:, 1], points[:, 0]))
    points, weights = points[order], weights[order]
    keep_p, keep_w = [points[0]], [weights[0]]
    for p, w in zip(points[1:], weights[1:]):
        if np.array_equal(p, keep_p[-1]):
            keep_w[-1] += w
        else:
            keep_p.append(p)
            keep_w.append(w)
    w = np.array(keep_w)
    return DiscreteDistribution(np.array(keep_p), w / w.sum(), collapsed=collapsed)


def _kmeanspp_init(points, s, rng):
    n = points.shape[0]
    centroids = np.empty((s, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for k in range(1, s):
        total = d2.sum()
        if total <= 0:
            centroids[k] = points[rng.integers(n)]
            continue
        idx = rng.choice(n, p=d2 / total)
        centroids[k] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centroids[k]) ** 2, axis=1))
    return centroids


def lloyd_max(points, s: int, tol: float = 1e-6, max_iter: int = 200,
              seed: Optional[int] = None) -> QuantizationResult:
    """Quantize a point cloud into S cells by alternating partition/centroid.

    Returns the discrete law (cell centroids weighted by cell counts) and the
    recorded distortion sequence, which is non-increasing.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = np.column_stack([points, np.zeros_like(points)])
    n = points.shape[0]
    if s < 1 or n < s:
        raise ScenarioError(f"need N >= S >= 1, got N={n}, S={s}")
    rng = np.random.default_rng(seed)

    distinct = np.unique(points, axis=0)
    collapsed = distinct.shape[0] < s
    if collapsed:
        s = distinct.shape[0]
    if s == distinct.shape[0]:
        # Saturated quantizer: cells are the distinct values themselves.
        dists = np.sum((points[:, None, :] - distinct[None, :, :]) ** 2, axis=2)
        assign = np.argmin(dists, axis=1)
        counts = np.bincount(assign, minlength=s)
        return QuantizationResult(
            _canonical(distinct, counts / n, collapsed), [0.0])

    centroids = _kmeanspp_init(points, s, rng)
    distortions: List[float] = []
    assign = None
    for _ in range(max_iter):
        dists = np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assign = np.argmin(dists, axis=1)
        # Keep all S cells alive: hand the farthest point to any empty cell.
        for k in range(s):
            if not np.any(assign == k):
                far = int(np.argmax(dists[np.arange(n), assign]))
                assign[far] = k
                dists[far, :] = np.inf
        new_centroids = np.vstack([points[assign == k].mean(axis=0) for k in range(s)])
        d = float(np.sum((points - new_centroids[assign]) ** 2))
        centroids = new_centroids
        if distortions and distortions[-1] - d <= tol * max(distortions[-1], 1e-300):
            distortions.append(d)
            break
        distortions.append(d)
    counts = np.bincount(assign, minlength=s)
    return QuantizationResult(
        _canonical(centroids, counts / n, collapsed), distortions)


def quantize_stagewise(opt: ScenarioSet, s: int = 20, tol: float = 1e-6,
                       max_iter: int = 200, seed: Optional[int] = None
                       ) -> List[DiscreteDistribution]:
    """Per-stage discrete laws for t = 1..T; entry k is the law of w_{k+1}."""
    _require_offline(opt, "quantize_stagewise")
    seeds = np.random.SeedSequence(seed).spawn(opt.horizon)
    out = []
    for t in range(1, opt.horizon + 1):
        result = lloyd_max(opt.data[:, t, :], min(s, opt.n), tol=tol,
                           max_iter=max_iter,
                           seed=seeds[t - 1])
        out.append(result.distribution)
    return out


def save_distributions(dists: Sequence[DiscreteDistribution], path):
    payload = [
        {
            "t": k + 1,
            "points": [[float(a), float(b)] for a, b in d.points],
            "weights": [float(w) for w in d.weights],
        }
        for k, d in enumerate(dists)
    ]
    with open(path, "w") as f:
        json.dump(payload, f, indent=1)


def load_distributions(path) -> List[DiscreteDistribution]:
    with open(path) as f:
        payload = json.load(f)
    out = []
    for entry in payload:
        out.append(DiscreteDistribution(np.array(entry["points"]),
                                        np.array(entry["weights"])))
    return out
