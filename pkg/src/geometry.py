"""
Distance distributions between a user on Earth's surface and satellites spread
uniformly on a concentric sphere at a fixed altitude.

All lengths are in meters. Every distribution function accepts scalars or numpy
arrays and returns the same shape (a plain float for scalar input).
"""
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6371.0e3

# Distances are plain floats in meters; the alias documents intent.
Distance = float
ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class GeometryParams:
    """Earth radius and constellation altitude (the minimum user-satellite distance)."""

    earth_radius: float = EARTH_RADIUS_M
    altitude: float = 1200.0e3

    def __post_init__(self):
        if not (self.earth_radius > 0 and math.isfinite(self.earth_radius)):
            raise DomainError(f"earth_radius must be positive and finite, got {self.earth_radius}")
        if not (self.altitude > 0 and math.isfinite(self.altitude)):
            raise DomainError(f"altitude must be positive and finite, got {self.altitude}")

    @property
    def orbit_radius(self) -> float:
        return self.earth_radius + self.altitude

    @property
    def max_range(self) -> float:
        return max_range(self)

    @property
    def support_max(self) -> float:
        """Largest possible distance (satellite at the antipode of the user)."""
        return 2.0 * self.earth_radius + self.altitude

    @property
    def _cdf_scale(self) -> float:
        return 4.0 * self.earth_radius * (self.earth_radius + self.altitude)


def _out(value: np.ndarray, like) -> ArrayLike:
    if np.ndim(like) == 0:
        return float(value)
    return value


def max_range(geom: GeometryParams) -> float:
    """Slant range to a satellite on the user's horizon."""
    r_e, h = geom.earth_radius, geom.altitude
    return math.sqrt(2.0 * r_e * h + h * h)


def cdf_any_distance(geom: GeometryParams, r: ArrayLike) -> ArrayLike:
    """CDF of the distance from the user to any one uniformly placed satellite."""
    r_arr = np.asarray(r, dtype=float)
    h = geom.altitude
    value = (r_arr * r_arr - h * h) / geom._cdf_scale
    # clamps absorb r a hair below the altitude from floating error
    value = np.clip(value, 0.0, 1.0)
    value = np.where(r_arr < h, 0.0, value)
    value = np.where(r_arr > geom.support_max, 1.0, value)
    return _out(value, r)


def quantile_any_distance(geom: GeometryParams, q: float) -> float:
    """Inverse of cdf_any_distance."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"quantile must lie in [0, 1], got {q}")
    h = geom.altitude
    return math.sqrt(h * h + q * geom._cdf_scale)


def pdf_any_distance(geom: GeometryParams, r: ArrayLike) -> ArrayLike:
    r_arr = np.asarray(r, dtype=float)
    inside = (r_arr >= geom.altitude) & (r_arr <= geom.support_max)
    value = np.where(inside, 2.0 * r_arr / geom._cdf_scale, 0.0)
    return _out(value, r)


def cdf_serving_distance(geom: GeometryParams, n_sats: float, r0: ArrayLike) -> ArrayLike:
    """CDF of the distance to the nearest of ``n_sats`` satellites (real ``n_sats`` allowed)."""
    _check_n_sats(n_sats)
    survival = 1.0 - np.asarray(cdf_any_distance(geom, r0), dtype=float)
    value = 1.0 - np.power(survival, n_sats)
    return _out(value, r0)


def quantile_serving_distance(geom: GeometryParams, n_sats: float, q: ArrayLike) -> ArrayLike:
    """Inverse of cdf_serving_distance for q in [0, 1)."""
    _check_n_sats(n_sats)
    q_arr = np.asarray(q, dtype=float)
    if np.any((q_arr < 0.0) | (q_arr >= 1.0)):
        raise DomainError("serving-distance quantile needs q in [0, 1)")
    # share of a single satellite's distance law below the nearest-of-N quantile
    share = -np.expm1(np.log1p(-q_arr) / n_sats)
    h = geom.altitude
    value = np.sqrt(h * h + share * geom._cdf_scale)
    return _out(value, q)


def pdf_serving_distance(geom: GeometryParams, n_sats: float, r0: ArrayLike) -> ArrayLike:
    _check_n_sats(n_sats)
    r_arr = np.asarray(r0, dtype=float)
    survival = 1.0 - np.asarray(cdf_any_distance(geom, r_arr), dtype=float)
    density = np.asarray(pdf_any_distance(geom, r_arr), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.power(survival, n_sats - 1.0)
    value = np.where(density > 0.0, n_sats * tail * density, 0.0)
    return _out(value, r0)


def pdf_conditional_distance(geom: GeometryParams, r0: float, rn: ArrayLike) -> ArrayLike:
    """Density of another satellite's distance given the serving distance ``r0``."""
    if r0 < geom.altitude or r0 > geom.support_max:
        raise DomainError(f"serving distance {r0} outside [{geom.altitude}, {geom.support_max}]")
    rn_arr = np.asarray(rn, dtype=float)
    survival = 1.0 - cdf_any_distance(geom, r0)
    if survival <= 0.0:
        return _out(np.zeros_like(rn_arr), rn)
    inside = (rn_arr > r0) & (rn_arr <= geom.support_max)
    value = np.where(inside, np.asarray(pdf_any_distance(geom, rn_arr)) / survival, 0.0)
    return _out(value, rn)


def surface_user_vector(geom: GeometryParams, latitude_deg: float, longitude_deg: float = 0.0) -> np.ndarray:
    """Earth-centred position of a user on the surface, meters."""
    if abs(latitude_deg) > 90.0:
        raise DomainError(f"latitude must lie in [-90, 90], got {latitude_deg}")
    lat = math.radians(latitude_deg)
    lon = math.radians(longitude_deg)
    return geom.earth_radius * np.array([
        math.cos(lat) * math.cos(lon),
        math.cos(lat) * math.sin(lon),
        math.sin(lat),
    ])


def _check_n_sats(n_sats: float) -> None:
    if not (n_sats > 0 and math.isfinite(n_sats)):
        raise DomainError(f"number of satellites must be positive, got {n_sats}")
