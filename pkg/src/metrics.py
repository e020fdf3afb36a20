"""
Coverage probability and average achievable rate of a downlink user.

All four evaluations run through ``_combine`` (``_combine_inverted`` when the
interference term is a Fourier inversion): the caller supplies, for a serving
distance r0, the noise-limited term A(r0) (no visible co-channel interferer) and the
interference-limited term B(r0) (at least one), and the kernel weights them by the
zero-interferer probability P0 either inside the r0 integral or outside it.
"""
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, QuadratureError
from .geometry import (GeometryParams, cdf_serving_distance, pdf_serving_distance, quantile_any_distance,
                       quantile_serving_distance)
from .interference import (FadingKind, FadingModel, InterferenceContext, Normalization,
                           laplace_interference, laplace_rayleigh_closed)
from .quadrature import DEFAULT_SPEC, QuadratureSpec, integrate_adaptive, integrate_gauss_panels, \
    interval_prob_from_laplace
from .visibility import NetworkParams, prob_zero_interference

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
# exp(-27.63) ~ 1e-12: t-integrands are cut where they fall below this share of their peak
_TAIL_EXPONENT = 27.63
# P(I > cap) <= exp(-40) for Rayleigh interferers
_RAYLEIGH_TAIL = 40.0
# outer r0 and t integrals run over inner numerical estimates
_OUTER_LOOSENING = 100.0
# Fourier inversions, and the integrals taken over their output
_INVERSION_LOOSENING = 1000.0
_INVERTED_INNER_LOOSENING = 1.0e4
_INVERTED_OUTER_LOOSENING = 1.0e5


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


class Decomposition(enum.Enum):
    FACTORED_OUTSIDE_INTEGRAL = "factored"
    INSIDE_INTEGRAL = "inside"


@dataclass(frozen=True)
class RadioParams:
    """Transmit powers (W), noise power (W), path-loss exponent and fading models.

    Received power from a satellite at distance r is p * G * (r / reference_distance)^-alpha.
    """

    p_serve: float = 10.0
    p_interf: float = 10.0
    noise_power: float = dbm_to_watts(-98.0)
    alpha: float = 4.0
    serving_fading: FadingModel = FadingModel.rayleigh()
    interfering_fading: FadingModel = FadingModel.rayleigh()
    reference_distance: float = 1000.0

    def __post_init__(self):
        if not self.p_serve > 0:
            raise DomainError(f"p_serve must be positive, got {self.p_serve}")
        if not 0 <= self.p_interf <= self.p_serve:
            raise DomainError(f"p_interf must lie in [0, p_serve], got {self.p_interf}")
        if not self.noise_power > 0:
            raise DomainError(f"noise_power must be positive, got {self.noise_power}")
        if not self.alpha >= 2:
            raise DomainError(f"alpha must be >= 2, got {self.alpha}")
        if not self.reference_distance > 0:
            raise DomainError(f"reference_distance must be positive, got {self.reference_distance}")

    def path_gain(self, r):
        return np.power(np.asarray(r, dtype=float) / self.reference_distance, -self.alpha)

    def snr(self, r0):
        """Mean-gain SNR at serving distance r0."""
        return self.p_serve * self.path_gain(r0) / self.noise_power

    def max_snr_distance(self, threshold: float) -> float:
        """Largest serving distance whose mean-gain SNR still exceeds ``threshold``."""
        return self.reference_distance * (self.p_serve / (threshold * self.noise_power)) ** (1.0 / self.alpha)


@dataclass(frozen=True)
class SinrThreshold:
    value: float

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise DomainError(f"SINR threshold must be positive and finite, got {self.value}")

    @classmethod
    def from_db(cls, db: float) -> "SinrThreshold":
        return cls(db_to_linear(db))

    @property
    def db(self) -> float:
        return linear_to_db(self.value)


@dataclass(frozen=True)
class ScenarioConfig:
    geom: GeometryParams = field(default_factory=GeometryParams)
    net: NetworkParams = field(default_factory=NetworkParams)
    radio: RadioParams = field(default_factory=RadioParams)
    quad: QuadratureSpec = DEFAULT_SPEC
    laplace_normalization: Normalization = Normalization.CONDITIONAL_NORMALIZED
    decomposition: Decomposition = Decomposition.INSIDE_INTEGRAL
    allow_fractional_reuse: bool = False
    use_closed_forms: bool = True

    def interference_context(self) -> InterferenceContext:
        return InterferenceContext(
            geom=self.geom,
            net=self.net,
            p_interf=self.radio.p_interf,
            alpha=self.radio.alpha,
            fading=self.radio.interfering_fading,
            normalization=self.laplace_normalization,
            reference_distance=self.radio.reference_distance,
            allow_fractional=self.allow_fractional_reuse,
            quad=self.quad,
        )

    def with_network(self, n_sats: Optional[float] = None, n_channels: Optional[int] = None) -> "ScenarioConfig":
        net = NetworkParams(
            n_sats=self.net.n_sats if n_sats is None else n_sats,
            n_channels=self.net.n_channels if n_channels is None else n_channels,
        )
        return replace(self, net=net)


Threshold = Union[SinrThreshold, float]
TermFn = Callable[[float], float]


def _threshold_value(threshold: Threshold) -> float:
    if isinstance(threshold, SinrThreshold):
        return threshold.value
    return SinrThreshold(float(threshold)).value


def _serving_quantiles(cfg: ScenarioConfig, lo: float, hi: float) -> List[float]:
    """Breakpoints where the serving-distance density changes scale."""
    points = []
    for q in (0.5, 0.9, 0.99, 0.999, 0.99999):
        # F_R at which the nearest of N satellites reaches quantile q
        share = -math.expm1(math.log1p(-q) / cfg.net.n_sats)
        r = quantile_any_distance(cfg.geom, share)
        if lo < r < hi:
            points.append(r)
    return points


def mean_zero_interference(cfg: ScenarioConfig) -> float:
    """P0 averaged over the serving distance, counting r0 beyond the horizon as P0 = 1."""
    geom, net = cfg.geom, cfg.net
    r_min, r_max = geom.altitude, geom.max_range

    def integrand(r0):
        return float(pdf_serving_distance(geom, net.n_sats, r0)) * float(prob_zero_interference(geom, net, r0))

    inside = integrate_adaptive(integrand, r_min, r_max, cfg.quad, _serving_quantiles(cfg, r_min, r_max)).value
    beyond = 1.0 - float(cdf_serving_distance(geom, net.n_sats, r_max))
    return min(1.0, inside + beyond)


def _combine(cfg: ScenarioConfig,
             snr_term: TermFn,
             sinr_term: TermFn,
             upper: Optional[float] = None,
             snr_total: Optional[Callable[[], float]] = None,
             label: str = "metric") -> float:
    """Average A(r0) and B(r0) over the serving distance, weighted by P0(r0).

    ``upper`` cuts the r0 range where both terms vanish. ``snr_total`` optionally
    replaces the outer integral of the noise-limited term in the factored form.
    """
    geom, net = cfg.geom, cfg.net
    r_min = geom.altitude
    r_hi = geom.max_range if upper is None else min(upper, geom.max_range)
    if r_hi <= r_min:
        return 0.0
    breaks = _serving_quantiles(cfg, r_min, r_hi)
    outer = cfg.quad.loosened(_OUTER_LOOSENING)

    def density(r0):
        return float(pdf_serving_distance(geom, net.n_sats, r0))

    def zero_prob(r0):
        return float(prob_zero_interference(geom, net, r0))

    try:
        if cfg.decomposition is Decomposition.INSIDE_INTEGRAL:
            def integrand(r0):
                f = density(r0)
                if f == 0.0:
                    return 0.0
                p0 = zero_prob(r0)
                value = p0 * snr_term(r0)
                if p0 < 1.0:
                    value += (1.0 - p0) * sinr_term(r0)
                return f * value

            return integrate_adaptive(integrand, r_min, r_hi, outer, breaks).value

        p0_bar = mean_zero_interference(cfg)
        if snr_total is not None:
            snr_part = snr_total()
        else:
            snr_part = integrate_adaptive(lambda r0: density(r0) * snr_term(r0), r_min, r_hi, outer, breaks).value
        if p0_bar >= 1.0:
            return p0_bar * snr_part
        sinr_part = integrate_adaptive(lambda r0: density(r0) * sinr_term(r0), r_min, r_hi, outer, breaks).value
        return p0_bar * snr_part + (1.0 - p0_bar) * sinr_part
    except QuadratureError as err:
        logger.error(f"{label} integration failed: {err}")
        raise err.with_term(label) from err


def _serving_average(cfg: ScenarioConfig, term: Callable[[np.ndarray], np.ndarray], r_hi: float,
                     spec: QuadratureSpec) -> float:
    """E[term(R0); R0 < r_hi], integrated in the serving-distance CDF variable.

    The substitution absorbs the sharply peaked serving density, so a low-order Gauss
    rule with few nodes suffices and each node costs one call of ``term``.
    """
    geom, n_sats = cfg.geom, cfg.net.n_sats
    q_hi = float(cdf_serving_distance(geom, n_sats, r_hi))
    if q_hi <= 0.0:
        return 0.0
    q_hi = min(q_hi, math.nextafter(1.0, 0.0))

    def integrand(q):
        return np.asarray(term(np.asarray(quantile_serving_distance(geom, n_sats, q))), dtype=float)

    return float(integrate_gauss_panels(integrand, 0.0, q_hi, spec, order=8, initial_panels=2).value)


def _combine_inverted(cfg: ScenarioConfig,
                      snr_term: TermFn,
                      sinr_term: TermFn,
                      upper: Optional[float] = None,
                      snr_total: Optional[Callable[[], float]] = None,
                      label: str = "metric") -> float:
    """``_combine`` for interference terms that need a Fourier inversion per serving distance.

    The outer tolerance sits above the inversion error; without co-channel interferers
    only the noise-limited total is evaluated.
    """
    geom, net = cfg.geom, cfg.net
    r_hi = geom.max_range if upper is None else min(upper, geom.max_range)
    if r_hi <= geom.altitude:
        return 0.0

    def snr_only(r0s):
        return np.array([snr_term(float(r0)) for r0 in r0s])

    if net.co_channel_count <= 0.0:
        return snr_total() if snr_total is not None else _serving_average(cfg, snr_only, r_hi, cfg.quad)

    outer = cfg.quad.loosened(_INVERTED_OUTER_LOOSENING)

    def mixed(r0s):
        out = np.empty(r0s.shape)
        for i, r0 in enumerate(r0s):
            r0 = float(r0)
            p0 = float(prob_zero_interference(geom, net, r0))
            value = p0 * snr_term(r0)
            if p0 < 1.0:
                value += (1.0 - p0) * sinr_term(r0)
            out[i] = value
        return out

    try:
        if cfg.decomposition is Decomposition.INSIDE_INTEGRAL:
            return _serving_average(cfg, mixed, r_hi, outer)

        p0_bar = mean_zero_interference(cfg)
        snr_part = snr_total() if snr_total is not None else _serving_average(cfg, snr_only, r_hi, cfg.quad)
        if p0_bar >= 1.0:
            return p0_bar * snr_part
        sinr_part = _serving_average(cfg, lambda r0s: np.array([sinr_term(float(r0)) for r0 in r0s]), r_hi, outer)
        return p0_bar * snr_part + (1.0 - p0_bar) * sinr_part
    except QuadratureError as err:
        logger.error(f"{label} integration failed: {err}")
        raise err.with_term(label) from err


def _laplace_real(cfg: ScenarioConfig, ctx: InterferenceContext, r0: float, s: np.ndarray) -> np.ndarray:
    closed = (cfg.use_closed_forms
              and ctx.fading.kind is FadingKind.RAYLEIGH
              and ctx.alpha in (2.0, 4.0))
    if closed:
        return np.asarray(laplace_rayleigh_closed(ctx, r0, s), dtype=float)
    return np.real(np.asarray(laplace_interference(ctx, r0, s)))


def _interference_cap(ctx: InterferenceContext, r0: float) -> Tuple[float, Optional[float]]:
    """Typical interference scale at r0 and a level above which P(I > x) is negligible."""
    m = max(ctx.net.co_channel_count, 1.0)
    top = m * ctx.p_interf * float(ctx.path_gain(r0))
    if ctx.fading.kind is FadingKind.NON_FADING:
        return top, top
    if ctx.fading.kind is FadingKind.RAYLEIGH:
        return top, top * (math.log(m) + _RAYLEIGH_TAIL)
    return top, None


def _interference_cdf(cfg: ScenarioConfig, ctx: InterferenceContext, r0: float, x: np.ndarray) -> np.ndarray:
    """P(I < x | r0) for an array of levels, by Fourier inversion of the transform."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    scale, cap = _interference_cap(ctx, r0)
    if ctx.normalization is Normalization.CONDITIONAL_NORMALIZED:
        mass = 1.0
    else:
        mass = float(np.real(laplace_interference(ctx, r0, 0.0)))
    high = (x >= cap) if cap is not None else np.zeros(x.shape, dtype=bool)
    out[high] = mass
    mid = (x > 0.0) & ~high
    if np.any(mid):
        out[mid] = interval_prob_from_laplace(
            lambda s: laplace_interference(ctx, r0, s), x[mid], cfg.quad.loosened(_INVERSION_LOOSENING),
            scale=scale or None)
    return out


def coverage_rayleigh(cfg: ScenarioConfig, threshold: Threshold) -> float:
    """Coverage probability with a Rayleigh-faded serving link."""
    if cfg.radio.serving_fading.kind is not FadingKind.RAYLEIGH:
        raise DomainError("coverage_rayleigh needs a Rayleigh serving channel")
    t = _threshold_value(threshold)
    radio = cfg.radio
    ctx = cfg.interference_context()

    def snr_term(r0):
        return math.exp(-t * radio.noise_power / (radio.p_serve * float(radio.path_gain(r0))))

    def sinr_term(r0):
        s = t / (radio.p_serve * float(radio.path_gain(r0)))
        return snr_term(r0) * float(_laplace_real(cfg, ctx, r0, np.array([s]))[0])

    value = _combine(cfg, snr_term, sinr_term, label="rayleigh coverage")
    return float(np.clip(value, 0.0, 1.0))


def coverage_nonfading(cfg: ScenarioConfig, threshold: Threshold) -> float:
    """Coverage probability with a non-fading serving link."""
    if cfg.radio.serving_fading.kind is not FadingKind.NON_FADING:
        raise DomainError("coverage_nonfading needs a non-fading serving channel")
    t = _threshold_value(threshold)
    radio, geom = cfg.radio, cfg.geom
    ctx = cfg.interference_context()
    r_star = radio.max_snr_distance(t)

    def snr_term(r0):
        return 1.0 if r0 < r_star else 0.0

    def sinr_term(r0):
        x = radio.p_serve * float(radio.path_gain(r0)) / t - radio.noise_power
        if x <= 0.0:
            return 0.0
        return float(_interference_cdf(cfg, ctx, r0, np.array([x]))[0])

    def snr_total():
        return float(cdf_serving_distance(geom, cfg.net.n_sats, min(r_star, geom.max_range)))

    value = _combine_inverted(cfg, snr_term, sinr_term, upper=r_star, snr_total=snr_total, label="nonfading coverage")
    return float(np.clip(value, 0.0, 1.0))


def _rayleigh_rate_terms(cfg: ScenarioConfig, ctx: InterferenceContext, r0: float, with_sinr: bool) -> Tuple[float, float]:
    radio = cfg.radio
    mean_rx = radio.p_serve * float(radio.path_gain(r0))
    a = radio.noise_power / mean_rx
    t_max = math.log1p(_TAIL_EXPONENT / a)

    def integrand(t):
        y = np.expm1(t)
        snr_part = np.exp(-a * y)
        if not with_sinr:
            return snr_part
        sinr_part = snr_part * _laplace_real(cfg, ctx, r0, y / mean_rx)
        return np.stack([snr_part, sinr_part], axis=-1)

    value = integrate_gauss_panels(integrand, 0.0, t_max, cfg.quad.loosened(10.0)).value
    if not with_sinr:
        return float(value) / LN2, 0.0
    return float(value[0]) / LN2, float(value[1]) / LN2


def rate_rayleigh(cfg: ScenarioConfig) -> float:
    """Average rate per channel (bit/s/Hz) with a Rayleigh-faded serving link."""
    if cfg.radio.serving_fading.kind is not FadingKind.RAYLEIGH:
        raise DomainError("rate_rayleigh needs a Rayleigh serving channel")
    ctx = cfg.interference_context()
    cache = {}

    def terms(r0):
        if r0 not in cache:
            with_sinr = float(prob_zero_interference(cfg.geom, cfg.net, r0)) < 1.0
            cache.clear()
            cache[r0] = _rayleigh_rate_terms(cfg, ctx, r0, with_sinr)
        return cache[r0]

    value = _combine(cfg, lambda r0: terms(r0)[0], lambda r0: terms(r0)[1], label="rayleigh rate")
    return max(0.0, value) / cfg.net.n_channels


def _nonfading_snr_rate(cfg: ScenarioConfig) -> float:
    """E[log2(1 + SNR)] as a single t-integral of the serving-distance CDF."""
    geom, radio, n_sats = cfg.geom, cfg.radio, cfg.net.n_sats
    t_max = math.log1p(float(radio.snr(geom.altitude)))

    def integrand(t):
        y = np.expm1(np.asarray(t, dtype=float))
        with np.errstate(divide="ignore"):
            r_star = radio.reference_distance * np.power(radio.p_serve / (y * radio.noise_power), 1.0 / radio.alpha)
        return np.asarray(cdf_serving_distance(geom, n_sats, np.minimum(r_star, geom.max_range)))

    r_edge = math.log1p(float(radio.snr(geom.max_range)))
    points = [r_edge] if 0.0 < r_edge < t_max else None
    return integrate_adaptive(lambda t: float(integrand(t)), 0.0, t_max, cfg.quad, points).value / LN2


def rate_nonfading(cfg: ScenarioConfig) -> float:
    """Average rate per channel (bit/s/Hz) with a non-fading serving link."""
    if cfg.radio.serving_fading.kind is not FadingKind.NON_FADING:
        raise DomainError("rate_nonfading needs a non-fading serving channel")
    radio = cfg.radio
    ctx = cfg.interference_context()

    def snr_term(r0):
        return math.log2(1.0 + float(radio.snr(r0)))

    def sinr_term(r0):
        mean_rx = radio.p_serve * float(radio.path_gain(r0))
        t_max = math.log1p(mean_rx / radio.noise_power)

        def integrand(t):
            x = mean_rx / np.expm1(t) - radio.noise_power
            return _interference_cdf(cfg, ctx, r0, x)

        t_spec = cfg.quad.loosened(_INVERTED_INNER_LOOSENING)
        return integrate_gauss_panels(integrand, 0.0, t_max, t_spec).value / LN2

    value = _combine_inverted(cfg, snr_term, sinr_term, snr_total=lambda: _nonfading_snr_rate(cfg),
                              label="nonfading rate")
    return max(0.0, value) / cfg.net.n_channels


def snr_rate_term(cfg: ScenarioConfig) -> float:
    """E[log2(1 + SNR)] of the serving link, zero when no satellite is visible."""
    kind = cfg.radio.serving_fading.kind
    if kind is FadingKind.NON_FADING:
        return _nonfading_snr_rate(cfg)
    if kind is FadingKind.RAYLEIGH:
        ctx = cfg.interference_context()
        geom = cfg.geom

        def integrand(r0):
            f = float(pdf_serving_distance(geom, cfg.net.n_sats, r0))
            if f == 0.0:
                return 0.0
            return f * _rayleigh_rate_terms(cfg, ctx, r0, with_sinr=False)[0]

        r_min, r_max = geom.altitude, geom.max_range
        return integrate_adaptive(integrand, r_min, r_max, cfg.quad, _serving_quantiles(cfg, r_min, r_max)).value
    raise DomainError(f"no SNR rate term for serving fading '{cfg.radio.serving_fading.label}'")


def coverage(cfg: ScenarioConfig, threshold: Threshold) -> float:
    kind = cfg.radio.serving_fading.kind
    if kind is FadingKind.RAYLEIGH:
        return coverage_rayleigh(cfg, threshold)
    if kind is FadingKind.NON_FADING:
        return coverage_nonfading(cfg, threshold)
    raise DomainError(f"coverage needs a Rayleigh or non-fading serving channel, got '{cfg.radio.serving_fading.label}'")


def rate(cfg: ScenarioConfig) -> float:
    kind = cfg.radio.serving_fading.kind
    if kind is FadingKind.RAYLEIGH:
        return rate_rayleigh(cfg)
    if kind is FadingKind.NON_FADING:
        return rate_nonfading(cfg)
    raise DomainError(f"rate needs a Rayleigh or non-fading serving channel, got '{cfg.radio.serving_fading.label}'")


def coverage_curve(cfg: ScenarioConfig, thresholds_db: Sequence[float]) -> List[float]:
    """Coverage at each threshold in dB, in order."""
    return [coverage(cfg, SinrThreshold.from_db(db)) for db in thresholds_db]
