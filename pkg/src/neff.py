"""
Effective number of satellites: the constellation size at which the uniform-sphere
analytics best reproduce a deterministic constellation's coverage or rate curve.
"""
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, FitError
from .metrics import ScenarioConfig, SinrThreshold, coverage, linear_to_db, rate

logger = logging.getLogger(__name__)


class FitMetric(enum.Enum):
    COVERAGE = "coverage"
    RATE = "rate"


@dataclass(frozen=True)
class TargetPoint:
    """One point of the curve to match. ``x`` is a linear SINR threshold or a channel count K."""

    x: float
    value: float
    std_error: float = 0.0


@dataclass(frozen=True)
class NeffFitSpec:
    thresholds: Tuple[float, ...]
    metric: FitMetric = FitMetric.COVERAGE
    n_lo: float = 50.0
    n_hi: float = 5000.0
    tolerance: float = 0.05
    grid_points: int = 17

    def __post_init__(self):
        if not self.thresholds:
            raise DomainError("fit needs at least one point")
        if not self.n_lo >= 1:
            raise DomainError(f"n_lo must be >= 1, got {self.n_lo}")
        if not self.n_lo < self.n_hi:
            raise DomainError(f"fit bounds must satisfy n_lo < n_hi, got [{self.n_lo}, {self.n_hi}]")
        if not self.tolerance > 0:
            raise DomainError("fit tolerance must be positive")
        if self.grid_points < 3:
            raise DomainError("grid_points must be >= 3")


@dataclass(frozen=True)
class FitResult:
    n_eff: float
    mae: float
    points: Tuple[float, ...] = field(default_factory=tuple)
    evaluations: int = 0


def _fit_config(cfg: ScenarioConfig) -> ScenarioConfig:
    return replace(cfg, allow_fractional_reuse=True)


def analytic_value(cfg: ScenarioConfig, metric: FitMetric, x: float, n_sats: float) -> float:
    """Analytic coverage (x = threshold) or rate (x = K) at a real constellation size."""
    base = _fit_config(cfg)
    if metric is FitMetric.COVERAGE:
        return coverage(base.with_network(n_sats=n_sats), SinrThreshold(x))
    return rate(base.with_network(n_sats=n_sats, n_channels=int(round(x))))


def mean_absolute_error(n_sats: float, points: Sequence[TargetPoint], cfg: ScenarioConfig,
                        spec: NeffFitSpec) -> float:
    errors = [abs(analytic_value(cfg, spec.metric, p.x, n_sats) - p.value) for p in points]
    return math.fsum(errors) / len(errors)


def _fit_points(target: Sequence[TargetPoint], spec: NeffFitSpec) -> List[TargetPoint]:
    chosen = []
    for x in spec.thresholds:
        match = [p for p in target if math.isclose(p.x, x, rel_tol=1e-9)]
        if not match:
            raise DomainError(f"fit point {x} is not on the target curve")
        chosen.append(match[0])
    return chosen


def _check_target(target: Sequence[TargetPoint], metric: FitMetric) -> None:
    if not target:
        raise DomainError("empty target curve")
    for p in target:
        if metric is FitMetric.COVERAGE and not 0.0 <= p.value <= 1.0:
            raise DomainError(f"coverage target {p.value} outside [0, 1]")
        if metric is FitMetric.RATE and p.value < 0.0:
            raise DomainError(f"rate target {p.value} is negative")


def _local_minima(values: np.ndarray) -> int:
    inner = (values[1:-1] <= values[:-2]) & (values[1:-1] <= values[2:])
    return int(inner.sum()) + int(values[0] < values[1]) + int(values[-1] < values[-2])


def _search_bounds(points: Sequence[TargetPoint], spec: NeffFitSpec) -> Tuple[float, float]:
    """Fit range, raised for rate fits so N never drops below the largest channel count."""
    lo = spec.n_lo
    if spec.metric is FitMetric.RATE:
        lo = max(lo, float(max(int(round(p.x)) for p in points)))
    if not lo < spec.n_hi:
        raise DomainError(f"no constellation size in [{lo}, {spec.n_hi}] can carry the requested channel counts")
    return lo, spec.n_hi


def fit_neff(target: Sequence[TargetPoint], cfg: ScenarioConfig, spec: NeffFitSpec) -> FitResult:
    """Minimize the mean absolute error to the target over a real constellation size."""
    _check_target(target, spec.metric)
    points = _fit_points(target, spec)
    n_lo, n_hi = _search_bounds(points, spec)
    cache: Dict[float, float] = {}

    def objective(n: float) -> float:
        n = float(min(max(n, n_lo), n_hi))
        if n not in cache:
            cache[n] = mean_absolute_error(n, points, cfg, spec)
            logger.debug(f"N={n:.3f} MAE={cache[n]:.6g}")
        return cache[n]

    grid = np.geomspace(n_lo, n_hi, spec.grid_points)
    values = np.array([objective(n) for n in grid])
    if _local_minima(values) > 1:
        logger.warning("fit objective is not unimodal on the coarse grid, refining")
        grid = np.geomspace(n_lo, n_hi, 4 * spec.grid_points - 3)
        values = np.array([objective(n) for n in grid])

    idx = int(np.argmin(values))
    strict = 0 < idx < grid.size - 1 and values[idx] < min(values[idx - 1], values[idx + 1])
    if strict:
        res = minimize_scalar(objective, bracket=(grid[idx - 1], grid[idx], grid[idx + 1]), method="golden")
    else:
        lo, hi = grid[max(idx - 1, 0)], grid[min(idx + 1, grid.size - 1)]
        res = minimize_scalar(objective, bounds=(lo, hi), method="bounded")

    n_eff = float(min(max(res.x, n_lo), n_hi))
    if objective(n_eff) > values[idx]:
        n_eff = float(grid[idx])
    result = FitResult(n_eff, objective(n_eff), tuple(p.x for p in points), len(cache))
    logger.info(f"Fitted N_eff={result.n_eff:.2f} with MAE {result.mae:.4g} after {result.evaluations} evaluations")
    if result.mae > spec.tolerance:
        raise FitError(f"best MAE {result.mae:.4g} exceeds tolerance {spec.tolerance}", best=result)
    return result


def refine_neff(fit: FitResult, full_curve: Sequence[TargetPoint], cfg: ScenarioConfig,
                spec: NeffFitSpec, spread: float = 0.25) -> FitResult:
    """Refit on every point of the target curve within +/- ``spread`` of a first fit."""
    lo = max(spec.n_lo, fit.n_eff * (1.0 - spread))
    hi = min(spec.n_hi, fit.n_eff * (1.0 + spread))
    narrowed = replace(spec, thresholds=tuple(p.x for p in full_curve), n_lo=lo, n_hi=hi)
    return fit_neff(full_curve, cfg, narrowed)


def scale_neff(fit: FitResult, n_ref: float, n_new: float) -> float:
    """Linear rule: the effective size scales with the real constellation size."""
    if not (n_ref > 0 and n_new > 0):
        raise DomainError("constellation sizes must be positive")
    return fit.n_eff * n_new / n_ref


def select_fit_points(target: Sequence[TargetPoint], count: int = 5,
                      low: float = 0.1, high: float = 0.9) -> List[float]:
    """Up to ``count`` thresholds spread evenly in dB over the curve's transition region."""
    if count < 1:
        raise DomainError("count must be >= 1")
    transition = [p for p in target if low <= p.value <= high and p.x > 0]
    if not transition:
        logger.warning("target curve has no points in the transition region, using all points")
        transition = [p for p in target if p.x > 0]
    db = np.array([linear_to_db(p.x) for p in transition])
    wanted = np.linspace(db.min(), db.max(), count)
    chosen: List[float] = []
    for w in wanted:
        order = np.argsort(np.abs(db - w))
        for i in order:
            x = transition[int(i)].x
            if x not in chosen:
                chosen.append(x)
                break
    return sorted(chosen)
