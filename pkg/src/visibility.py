"""
Number of co-channel interferers above the user's horizon, given the serving distance.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DomainError
from .geometry import ArrayLike, GeometryParams, _out

logger = logging.getLogger(__name__)

_INTEGRAL_TOL = 1e-9


@dataclass(frozen=True)
class NetworkParams:
    """Constellation size N (real for analytics) and number of orthogonal channels K."""

    n_sats: float = 720.0
    n_channels: int = 20

    def __post_init__(self):
        if not (self.n_sats > 0 and math.isfinite(self.n_sats)):
            raise DomainError(f"n_sats must be positive, got {self.n_sats}")
        if int(self.n_channels) != self.n_channels or self.n_channels < 1:
            raise DomainError(f"n_channels must be an integer >= 1, got {self.n_channels}")
        if self.n_channels > self.n_sats:
            raise DomainError(f"n_channels ({self.n_channels}) must not exceed n_sats ({self.n_sats})")

    @property
    def sats_per_channel(self) -> float:
        return self.n_sats / self.n_channels

    @property
    def co_channel_count(self) -> float:
        """Satellites sharing the serving channel, excluding the serving one."""
        return self.sats_per_channel - 1.0

    @property
    def is_integral(self) -> bool:
        ratio = self.sats_per_channel
        return abs(ratio - round(ratio)) <= _INTEGRAL_TOL * max(1.0, ratio)

    def integral_co_channel_count(self) -> int:
        if not self.is_integral:
            raise DomainError(
                f"N/K = {self.n_sats}/{self.n_channels} is not an integer; "
                "binomial interferer counts need integer trials")
        return int(round(self.sats_per_channel)) - 1

    def require_simulable(self) -> None:
        """Monte Carlo needs integer N with K dividing it."""
        if int(self.n_sats) != self.n_sats:
            raise DomainError(f"Monte Carlo needs an integer n_sats, got {self.n_sats}")
        if int(self.n_sats) % int(self.n_channels) != 0:
            raise DomainError(f"n_channels ({self.n_channels}) must divide n_sats ({int(self.n_sats)})")


def prob_visible_interferer(geom: GeometryParams, r0: ArrayLike) -> ArrayLike:
    """Chance that a satellite farther than ``r0`` is still above the horizon."""
    r_arr = np.asarray(r0, dtype=float)
    r_e, h = geom.earth_radius, geom.altitude
    shift = (r_arr * r_arr - h * h) / (2.0 * r_e)
    value = (h - shift) / (2.0 * (r_e + h) - shift)
    value = np.where(r_arr >= geom.max_range, 0.0, np.clip(value, 0.0, 1.0))
    return _out(value, r0)


def prob_zero_interference(geom: GeometryParams, net: NetworkParams, r0: ArrayLike) -> ArrayLike:
    r_arr = np.asarray(r0, dtype=float)
    p_visible = np.asarray(prob_visible_interferer(geom, r_arr), dtype=float)
    value = np.power(1.0 - p_visible, net.co_channel_count)
    value = np.where(r_arr > geom.max_range, 1.0, value)
    return _out(value, r0)


def log_binomial_weights(m: int, p: float) -> np.ndarray:
    """log C(m, n) p^n (1-p)^(m-n) for n = 0..m."""
    n = np.arange(m + 1, dtype=float)
    log_coeff = gammaln(m + 1.0) - gammaln(n + 1.0) - gammaln(m - n + 1.0)
    return log_coeff + xlogy(n, p) + xlog1py(m - n, -p)


def pmf_num_interferers(geom: GeometryParams, net: NetworkParams, r0: float, n: int) -> float:
    m = net.integral_co_channel_count()
    if int(n) != n or n < 0:
        raise DomainError(f"interferer count must be a non-negative integer, got {n}")
    if n > m:
        return 0.0
    p_visible = float(prob_visible_interferer(geom, r0))
    return float(np.exp(log_binomial_weights(m, p_visible)[int(n)]))
