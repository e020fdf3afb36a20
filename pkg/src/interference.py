"""
Laplace transform of the aggregate co-channel interference seen by a user whose
serving satellite sits at distance r0.

The radial integral is always taken in the normalized variable
u = (r^2 - r0^2) / (r_max^2 - r0^2) on [0, 1], which is the conditional density of a
visible interferer's squared distance; the unconditional full-range scaling is applied on top
when the literal normalization is selected.
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .errors import DomainError, UnsupportedAlphaError
from .geometry import GeometryParams
from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate_adaptive, integrate_vector
from .visibility import NetworkParams, log_binomial_weights, prob_visible_interferer

logger = logging.getLogger(__name__)

ComplexValue = Union[complex, np.ndarray]
GainSampler = Callable[[np.random.Generator, Tuple[int, ...]], np.ndarray]

# binomial terms smaller than this fraction of the largest one are dropped
_TERM_FLOOR = 1e-18


class FadingKind(enum.Enum):
    RAYLEIGH = "rayleigh"
    NON_FADING = "nonfading"
    CUSTOM_LAPLACE = "custom"


class Normalization(enum.Enum):
    UNNORMALIZED = "literal"
    CONDITIONAL_NORMALIZED = "normalized"


@dataclass(frozen=True)
class FadingModel:
    """Statistics of a channel power gain G, described by its Laplace transform.

    ``sampler(rng, shape)`` draws gains for the simulator. Rayleigh, non-fading and
    Nakagami models need no handles, which keeps them picklable for worker processes.
    """

    kind: FadingKind = FadingKind.RAYLEIGH
    custom: Optional[Callable[[ComplexValue], ComplexValue]] = None
    sampler: Optional[GainSampler] = None
    nakagami_m: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.kind is FadingKind.CUSTOM_LAPLACE:
            if self.custom is None and self.nakagami_m is None:
                raise DomainError("custom fading needs a Laplace transform handle")
            if self.nakagami_m is not None and not self.nakagami_m >= 0.5:
                raise DomainError(f"Nakagami m must be >= 0.5, got {self.nakagami_m}")
            at_zero = complex(laplace_gain(self, 0.0))
            if abs(at_zero - 1.0) > 1e-12:
                raise DomainError(f"fading Laplace transform must equal 1 at 0, got {at_zero}")

    @classmethod
    def rayleigh(cls) -> "FadingModel":
        return cls(FadingKind.RAYLEIGH, name="rayleigh")

    @classmethod
    def non_fading(cls) -> "FadingModel":
        return cls(FadingKind.NON_FADING, name="nonfading")

    @classmethod
    def nakagami(cls, m: float) -> "FadingModel":
        """Unit-mean Nakagami-m power gain, Gamma(m, 1/m)."""
        return cls(FadingKind.CUSTOM_LAPLACE, nakagami_m=float(m), name=f"nakagami-{m:g}")

    @classmethod
    def custom_laplace(cls,
                       handle: Callable[[ComplexValue], ComplexValue],
                       sampler: Optional[GainSampler] = None,
                       name: str = "custom") -> "FadingModel":
        return cls(FadingKind.CUSTOM_LAPLACE, custom=handle, sampler=sampler, name=name)

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    def sample(self, rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
        if self.kind is FadingKind.RAYLEIGH:
            return rng.standard_exponential(shape)
        if self.kind is FadingKind.NON_FADING:
            return np.ones(shape)
        if self.nakagami_m is not None:
            return rng.gamma(self.nakagami_m, 1.0 / self.nakagami_m, shape)
        if self.sampler is None:
            raise DomainError(f"fading model '{self.label}' has no sampler for simulation")
        return np.asarray(self.sampler(rng, shape), dtype=float)


@dataclass(frozen=True)
class InterferenceContext:
    """Everything the interference transform depends on, apart from r0 and s."""

    geom: GeometryParams
    net: NetworkParams
    p_interf: float
    alpha: float
    fading: FadingModel = FadingModel.rayleigh()
    normalization: Normalization = Normalization.CONDITIONAL_NORMALIZED
    reference_distance: float = 1000.0
    allow_fractional: bool = False
    quad: QuadratureSpec = DEFAULT_SPEC

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not self.p_interf >= 0:
            raise DomainError(f"p_interf must be non-negative, got {self.p_interf}")
        if not self.reference_distance > 0:
            raise DomainError(f"reference_distance must be positive, got {self.reference_distance}")

    def path_gain(self, r):
        return np.power(np.asarray(r, dtype=float) / self.reference_distance, -self.alpha)

    def check_serving_distance(self, r0: float) -> None:
        if r0 < self.geom.altitude or r0 > self.geom.max_range:
            raise DomainError(
                f"serving distance {r0:.6g} m outside [{self.geom.altitude:.6g}, {self.geom.max_range:.6g}]")


def laplace_gain(model: FadingModel, z: ComplexValue) -> ComplexValue:
    """L_G(z) = E[exp(-z G)] for the fading model."""
    z_arr = np.asarray(z)
    if model.kind is FadingKind.RAYLEIGH:
        value = 1.0 / (1.0 + z_arr)
    elif model.kind is FadingKind.NON_FADING:
        value = np.exp(-z_arr)
    elif model.nakagami_m is not None:
        m = model.nakagami_m
        value = np.power(1.0 + z_arr / m, -m)
    else:
        value = np.asarray(model.custom(z))
        if not np.all(np.isfinite(value)):
            raise DomainError(f"custom Laplace transform '{model.label}' returned non-finite values")
    if np.ndim(z) == 0:
        return complex(value) if np.iscomplexobj(value) else float(value)
    return value


def _radius(ctx: InterferenceContext, r0: float, u: float) -> float:
    r_max = ctx.geom.max_range
    return math.sqrt(r0 * r0 + u * (r_max * r_max - r0 * r0))


def _normalized_inner(ctx: InterferenceContext, r0: float, s: np.ndarray) -> np.ndarray:
    """E[L_G(s p_i g(R))] for a visible interferer R conditioned on R > r0."""
    weight = s * ctx.p_interf

    def integrand(u):
        return np.asarray(laplace_gain(ctx.fading, weight * ctx.path_gain(_radius(ctx, r0, u))))

    return np.asarray(integrate_vector(integrand, 0.0, 1.0, ctx.quad).value)


def _mix(ctx: InterferenceContext, r0: float, phi: np.ndarray) -> np.ndarray:
    """Combine the per-interferer transform over the binomial interferer count."""
    geom = ctx.geom
    p = float(prob_visible_interferer(geom, r0))
    literal = ctx.normalization is Normalization.UNNORMALIZED
    if literal:
        r_max2, r02 = geom.max_range ** 2, r0 * r0
        phi = phi * (r_max2 - r02) / (geom.support_max ** 2 - r02)

    if ctx.allow_fractional and not ctx.net.is_integral:
        m = ctx.net.co_channel_count
        if m <= 0:
            return np.zeros_like(phi) if literal else np.ones_like(phi)
        base = (1.0 - p) ** m
        total = np.power((1.0 - p) + p * phi, m) - base
    else:
        m = ctx.net.integral_co_channel_count()
        if m == 0:
            return np.zeros_like(phi) if literal else np.ones_like(phi)
        if p <= 0.0:
            return np.zeros_like(phi) if literal else phi
        log_w = log_binomial_weights(m, p)[1:]
        n = np.arange(1, m + 1)
        keep = log_w >= log_w.max() + math.log(_TERM_FLOOR)
        terms = np.exp(log_w[keep])[:, None] * np.power(phi[None, :], n[keep][:, None])
        total = np.array([complex(math.fsum(col.real), math.fsum(col.imag)) for col in terms.T])

    if literal:
        return total
    if p <= 0.0:
        return phi
    return total / -math.expm1(m * math.log1p(-p))


def _as_array(s: ComplexValue) -> np.ndarray:
    return np.atleast_1d(np.asarray(s, dtype=complex))


def _shape_like(value: np.ndarray, s: ComplexValue) -> ComplexValue:
    if np.ndim(s) == 0:
        return complex(value[0])
    return value.reshape(np.shape(s))


def laplace_interference(ctx: InterferenceContext, r0: float, s: ComplexValue) -> ComplexValue:
    """L_I(s) conditioned on r0 (and on N_I > 0 under the normalized variant).

    ``s`` may be a scalar or an array; the radial integral is vectorized over it.
    """
    ctx.check_serving_distance(r0)
    s_arr = _as_array(s)
    phi = _normalized_inner(ctx, r0, s_arr)
    return _shape_like(_mix(ctx, r0, phi), s)


def laplace_rayleigh_closed(ctx: InterferenceContext, r0: float, s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Elementary-function form of the Rayleigh-interferer transform for alpha 2 or 4."""
    if ctx.fading.kind is not FadingKind.RAYLEIGH:
        raise DomainError("closed form requires Rayleigh interfering channels")
    if ctx.alpha not in (2.0, 4.0):
        raise UnsupportedAlphaError(f"closed form exists only for alpha in {{2, 4}}, got {ctx.alpha}")
    ctx.check_serving_distance(r0)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise DomainError("closed form needs real s >= 0")

    r_max2, r02 = ctx.geom.max_range ** 2, r0 * r0
    delta = r_max2 - r02
    c = s_arr * ctx.p_interf * ctx.reference_distance ** ctx.alpha
    if delta <= 0.0:
        phi = 1.0 / (1.0 + c * r0 ** -ctx.alpha)
    elif ctx.alpha == 2.0:
        phi = 1.0 + (c / delta) * np.log1p((r02 - r_max2) / (c + r_max2))
    else:
        root = np.sqrt(c)
        phi = 1.0 + (root / delta) * np.arctan(root * (r02 - r_max2) / (c + r_max2 * r02))
    value = np.real(_mix(ctx, r0, phi.astype(complex)))
    if np.ndim(s) == 0:
        return float(value[0])
    return value.reshape(np.shape(s))


def laplace_nonfading(ctx: InterferenceContext, r0: float, s: ComplexValue) -> ComplexValue:
    if ctx.fading.kind is not FadingKind.NON_FADING:
        raise DomainError("laplace_nonfading requires non-fading interfering channels")
    return laplace_interference(ctx, r0, s)


def upper_incomplete_gamma(a: float, x: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Gamma(a, x) by quadrature of its defining integral; negative ``a`` needs x > 0."""
    if x <= 0 and a <= 0:
        raise DomainError(f"Gamma({a}, x) diverges for x <= 0")
    scaled = QuadratureSpec(abs_tol=min(spec.abs_tol, 1e-14), rel_tol=spec.rel_tol,
                            max_subdivisions=max(spec.max_subdivisions, 200))
    # integrate e^{-x} * int_0^inf (x+t)^{a-1} e^{-t} dt to keep the scale near 1
    value = integrate_adaptive(lambda t: (x + t) ** (a - 1.0) * math.exp(-t), 0.0, math.inf, scaled).value
    return math.exp(-x) * value


def laplace_nonfading_gamma(ctx: InterferenceContext, r0: float, s: float) -> float:
    """Real-axis non-fading transform through incomplete gamma functions."""
    if s < 0:
        raise DomainError("incomplete-gamma form needs real s >= 0")
    ctx.check_serving_distance(r0)
    r_max = ctx.geom.max_range
    delta = r_max * r_max - r0 * r0
    if s == 0 or delta <= 0.0:
        phi = math.exp(-s * ctx.p_interf * float(ctx.path_gain(r0)))
    else:
        a = -2.0 / ctx.alpha
        c = s * ctx.p_interf * ctx.reference_distance ** ctx.alpha
        lo = c * r_max ** -ctx.alpha
        hi = c * r0 ** -ctx.alpha
        gamma_diff = upper_incomplete_gamma(a, lo, ctx.quad) - upper_incomplete_gamma(a, hi, ctx.quad)
        phi = 2.0 * c ** (2.0 / ctx.alpha) / (ctx.alpha * delta) * gamma_diff
    return float(np.real(_mix(ctx, r0, np.array([phi], dtype=complex))[0]))
