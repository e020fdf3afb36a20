"""
Numerical integration engine shared by the analytic metrics.

- integrate_adaptive: scalar (real or complex) adaptive Gauss-Kronrod via QUADPACK.
- integrate_vector: vector-valued adaptive GK21 (scipy quad_vec), used for radial
  Laplace integrals evaluated at many transform arguments at once.
- integrate_gauss_panels: vectorized composite Gauss-Legendre with panel doubling.
- interval_prob_from_laplace / cdf_gil_pelaez: Fourier inversion of a Laplace
  transform evaluated on the imaginary axis, summed panel by panel with sequence
  acceleration.
"""
import functools
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.special import comb, roots_legendre

from .errors import DomainError, QuadratureError, TruncationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and limits for every integral in the package.

    ``omega_truncation`` is an optional hard upper limit on the inversion frequency;
    ``omega_growth_check`` is the floor on the change in the accelerated inversion estimate
    between successive panel batches below which the frequency integral counts as
    converged. The check never asks for more than the tolerances themselves.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_subdivisions: int = 200
    omega_truncation: Optional[float] = None
    omega_growth_check: float = 1e-9
    quiet_panels: int = 50
    max_panels: int = 20000
    nodes_per_panel: int = 24
    panels_per_batch: int = 16

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if self.omega_growth_check <= 0:
            raise DomainError("omega_growth_check must be positive")
        if self.omega_truncation is not None and self.omega_truncation <= 0:
            raise DomainError("omega_truncation must be positive")
        if self.quiet_panels < 1 or self.max_panels < 1 or self.nodes_per_panel < 2:
            raise DomainError("panel counts must be positive")
        if self.panels_per_batch < 2 or self.panels_per_batch % 2:
            raise DomainError("panels_per_batch must be a positive even number")

    def loosened(self, factor: float) -> "QuadratureSpec":
        """Same limits with tolerances scaled, for outer integrals over inner estimates."""
        return replace(self, abs_tol=self.abs_tol * factor, rel_tol=min(self.rel_tol * factor, 1e-3),
                       omega_growth_check=self.omega_growth_check * factor)

    def target(self, value) -> float:
        return max(self.abs_tol, self.rel_tol * float(np.max(np.abs(value))))

    def growth_limit(self, estimate) -> float:
        return max(self.omega_growth_check, self.target(estimate))


DEFAULT_SPEC = QuadratureSpec()


class QuadratureResult(NamedTuple):
    value: Union[float, complex, np.ndarray]
    error: float


@functools.lru_cache(maxsize=16)
def _legendre(order: int):
    nodes, weights = roots_legendre(order)
    return nodes, weights


def _quad_real(f: Callable[[float], float], a: float, b: float, spec: QuadratureSpec,
               points: Optional[Sequence[float]]) -> QuadratureResult:
    kwargs = {}
    if points is not None and math.isfinite(a) and math.isfinite(b):
        inner = sorted(p for p in points if a < p < b)
        if inner:
            kwargs["points"] = inner
    out = quad(f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
               limit=spec.max_subdivisions, full_output=1, **kwargs)
    value, error = out[0], out[1]
    if len(out) > 3:
        message = out[3]
        if not math.isfinite(value) or error > spec.target(value):
            raise QuadratureError(
                f"adaptive integration over [{a}, {b}] failed: {message}",
                best_estimate=value, error_estimate=error)
        logger.warning(f"quad over [{a}, {b}] reported '{message}' but error {error:.3g} is within tolerance")
    return QuadratureResult(value, error)


def integrate_adaptive(f: Callable[[float], Union[float, complex]],
                       a: float,
                       b: float,
                       spec: QuadratureSpec = DEFAULT_SPEC,
                       points: Optional[Sequence[float]] = None) -> QuadratureResult:
    """Integrate a scalar real or complex function over [a, b] (b may be +inf)."""
    if not a < b:
        raise DomainError(f"integration needs a < b, got [{a}, {b}]")
    midpoint = 0.5 * (a + b) if math.isfinite(b) else a + 1.0
    if np.iscomplexobj(f(midpoint)):
        re = _quad_real(lambda t: float(np.real(f(t))), a, b, spec, points)
        im = _quad_real(lambda t: float(np.imag(f(t))), a, b, spec, points)
        return QuadratureResult(complex(re.value, im.value), math.hypot(re.error, im.error))
    return _quad_real(lambda t: float(f(t)), a, b, spec, points)


def integrate_vector(f: Callable[[float], np.ndarray],
                     a: float,
                     b: float,
                     spec: QuadratureSpec = DEFAULT_SPEC) -> QuadratureResult:
    """Adaptive GK21 of an array-valued function; complex arrays are split into parts."""
    if not a < b:
        raise DomainError(f"integration needs a < b, got [{a}, {b}]")
    sample = np.asarray(f(0.5 * (a + b)))
    is_complex = np.iscomplexobj(sample)
    size = sample.size

    if is_complex:
        def stacked(t):
            v = np.asarray(f(t)).ravel()
            return np.concatenate([v.real, v.imag])
    else:
        def stacked(t):
            return np.asarray(f(t), dtype=float).ravel()

    value, error, info = quad_vec(stacked, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                  norm="max", limit=spec.max_subdivisions, full_output=True)
    if is_complex:
        value = value[:size] + 1j * value[size:]
    value = value.reshape(sample.shape)
    if not info.success:
        if not np.all(np.isfinite(value)) or error > spec.target(value):
            raise QuadratureError(
                f"vector integration over [{a}, {b}] failed with status {info.status}",
                best_estimate=value, error_estimate=float(error))
        logger.warning(f"quad_vec over [{a}, {b}] ended with status {info.status} within tolerance")
    return QuadratureResult(value, float(error))


def integrate_gauss_panels(f: Callable[[np.ndarray], np.ndarray],
                           a: float,
                           b: float,
                           spec: QuadratureSpec = DEFAULT_SPEC,
                           order: int = 16,
                           initial_panels: int = 4) -> QuadratureResult:
    """Composite Gauss-Legendre of a vectorized integrand, doubling panels until stable.

    ``f`` maps a 1-D array of nodes to an array whose leading axis matches the nodes.
    """
    if not a < b:
        raise DomainError(f"integration needs a < b, got [{a}, {b}]")
    nodes, weights = _legendre(order)

    def composite(n_panels: int):
        edges = np.linspace(a, b, n_panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        values = np.asarray(f(x))
        values = values.reshape((n_panels, order) + values.shape[1:])
        w = (half[:, None] * weights[None, :])
        return np.tensordot(w, values, axes=([0, 1], [0, 1]))

    n_panels = initial_panels
    previous = composite(n_panels)
    while True:
        n_panels *= 2
        current = composite(n_panels)
        error = float(np.max(np.abs(current - previous)))
        if error <= spec.target(current):
            value = current if np.ndim(current) else current.item()
            return QuadratureResult(value, error)
        if n_panels >= spec.max_subdivisions:
            raise QuadratureError(
                f"Gauss-Legendre panels over [{a}, {b}] did not settle after {n_panels} panels",
                best_estimate=current, error_estimate=error)
        previous = current


def _wynn_epsilon(sums: np.ndarray) -> np.ndarray:
    """Wynn epsilon extrapolation of partial sums (rows) for each column."""
    col_prev = np.zeros((sums.shape[0] + 1,) + sums.shape[1:])
    col = sums.copy()
    best = sums[-1].copy()
    k = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        while col.shape[0] > 1:
            nxt = col_prev[1:col.shape[0]] + 1.0 / (col[1:] - col[:-1])
            col_prev, col = col, nxt
            k += 1
            if k % 2 == 0:
                candidate = col[-1]
                best = np.where(np.isfinite(candidate), candidate, best)
    return best


def _levin_u(sums: np.ndarray, terms: np.ndarray, depth: int = 12, beta: float = 1.0) -> np.ndarray:
    """Levin u-transform of the last ``depth + 1`` partial sums (rows) per column."""
    count = sums.shape[0]
    k = min(depth, count - 1)
    if k < 2:
        return sums[-1]
    n0 = count - k - 1
    j = np.arange(k + 1)
    idx = n0 + j
    m = (idx + beta)
    scale = (-1.0) ** j * comb(k, j) * (m / (n0 + k + beta)) ** (k - 1)
    omega = m[:, None] * terms[idx].reshape(k + 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        numer = np.sum(scale[:, None] * sums[idx].reshape(k + 1, -1) / omega, axis=0)
        denom = np.sum(scale[:, None] / omega, axis=0)
        estimate = (numer / denom).reshape(sums.shape[1:])
    fallback = _wynn_epsilon(sums[-(2 * (k // 2) + 1):])
    return np.where(np.isfinite(estimate), estimate, fallback)


def _oscillatory_integral(g: Callable[[np.ndarray], np.ndarray],
                          width: float,
                          n_out: int,
                          spec: QuadratureSpec) -> np.ndarray:
    """Integral of ``g`` over [0, inf) summed in panels of ``width`` with acceleration."""
    nodes, weights = _legendre(spec.nodes_per_panel)
    batch = spec.panels_per_batch
    contributions = []
    estimate_prev = None
    quiet_floor = spec.abs_tol / 100.0
    panel = 0
    while True:
        starts = (panel + np.arange(batch)) * width
        omega = (starts[:, None] + 0.5 * width * (nodes[None, :] + 1.0)).ravel()
        values = np.asarray(g(omega)).reshape(batch, spec.nodes_per_panel, n_out)
        contributions.append(0.5 * width * np.einsum("j,bjm->bm", weights, values))
        panel += batch
        terms = np.concatenate(contributions, axis=0)

        recent = terms[-spec.quiet_panels:]
        if terms.shape[0] >= spec.quiet_panels and np.all(np.abs(recent) < quiet_floor):
            return np.sum(terms, axis=0)

        # whole periods: the alternating half-period signs cancel, leaving a smooth tail
        periods = terms.reshape(-1, 2, n_out).sum(axis=1)
        estimate = _levin_u(np.cumsum(periods, axis=0), periods)
        if estimate_prev is not None and np.all(np.abs(estimate - estimate_prev) <= spec.growth_limit(estimate)):
            return estimate
        estimate_prev = estimate

        reached = panel * width
        if panel >= spec.max_panels or (spec.omega_truncation is not None and reached >= spec.omega_truncation):
            tail = float(np.max(np.abs(terms[-batch:])))
            raise TruncationError(
                f"frequency integral not converged at omega={reached:.4g} "
                f"(last panel magnitude {tail:.3g})",
                best_estimate=estimate, error_estimate=tail)


def _phase_kernel(omega: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(exp(j x w) - 1) / (j w) with its series near w = 0; shape (len(omega), len(x))."""
    w = omega[:, None]
    xw = w * x[None, :]
    small = np.abs(w) < 1e-4 / x[None, :]
    safe_w = np.where(small, 1.0, w)
    direct = (np.exp(1j * xw) - 1.0) / (1j * safe_w)
    series = x[None, :] * (1.0 + 0.5j * xw - xw * xw / 6.0)
    return np.where(small, series, direct)


def _inversion_width(x: np.ndarray, scale: Optional[float]) -> float:
    reach = float(np.max(x))
    if scale is not None and scale > 0:
        reach = max(reach, float(scale))
    return math.pi / reach


def interval_prob_from_laplace(laplace: Callable[[np.ndarray], np.ndarray],
                               x: Union[float, np.ndarray],
                               spec: QuadratureSpec = DEFAULT_SPEC,
                               scale: Optional[float] = None) -> Union[float, np.ndarray]:
    """P(0 < I < x) from the Laplace transform of a nonnegative I on the imaginary axis.

    ``laplace`` must accept an array of complex arguments ``j*omega``. ``scale`` is an
    upper bound on the support of I; it narrows the frequency panels so the transform's
    own oscillation is resolved. Values of x <= 0 give 0.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    result = np.zeros_like(x_arr)
    positive = x_arr > 0
    if np.any(positive):
        xs = x_arr[positive]

        def integrand(omega):
            lap = np.asarray(laplace(1j * omega)).reshape(-1, 1)
            return np.real(lap * _phase_kernel(omega, xs))

        total = _oscillatory_integral(integrand, _inversion_width(xs, scale), xs.size, spec)
        result[positive] = np.clip(total / math.pi, 0.0, 1.0)
    if np.ndim(x) == 0:
        return float(result[0])
    return result


def cdf_gil_pelaez(laplace: Callable[[np.ndarray], np.ndarray],
                   x: Union[float, np.ndarray],
                   spec: QuadratureSpec = DEFAULT_SPEC,
                   scale: Optional[float] = None) -> Union[float, np.ndarray]:
    """P(I < x) by the Gil-Pelaez formula, an inversion path independent of the one above."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))

    def integrand(omega):
        lap = np.asarray(laplace(1j * omega)).reshape(-1, 1)
        phase = np.exp(1j * omega[:, None] * x_arr[None, :])
        return np.imag(phase * lap) / omega[:, None]

    width = _inversion_width(np.abs(x_arr) + 1e-300, scale)
    total = _oscillatory_integral(integrand, width, x_arr.size, spec)
    result = np.clip(0.5 + total / math.pi, 0.0, 1.0)
    if np.ndim(x) == 0:
        return float(result[0])
    return result
