"""
Monte Carlo ground truth for the analytic metrics.

Satellite positions are Earth-centred (n, 3) arrays in meters; batched routines work on
(trials, n, 3). Trials are grouped into fixed-size blocks, each drawing from its own
Philox stream keyed by (seed, block id), and block results are reduced in block order,
so estimates do not depend on how many workers run the blocks.
"""
import enum
import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .geometry import GeometryParams, surface_user_vector
from .metrics import RadioParams, ScenarioConfig, SinrThreshold, Threshold
from .visibility import NetworkParams

logger = logging.getLogger(__name__)

# trials held in memory at once inside a block
_CHUNK = 256


class ConstellationKind(enum.Enum):
    BPP = "bpp"
    WALKER = "walker"


@dataclass(frozen=True)
class WalkerParams:
    """Walker-delta layout i:N/P/F. ``altitude`` (m), when given, must match the geometry."""

    inclination_deg: float = 90.0
    n_planes: int = 20
    sats_per_plane: int = 36
    phasing: int = 1
    altitude: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.inclination_deg <= 90:
            raise DomainError(f"inclination must lie in (0, 90] degrees, got {self.inclination_deg}")
        if self.n_planes < 1 or self.sats_per_plane < 1:
            raise DomainError("n_planes and sats_per_plane must be >= 1")
        if not 0 <= self.phasing <= self.n_planes - 1:
            raise DomainError(f"phasing must lie in [0, {self.n_planes - 1}], got {self.phasing}")
        if self.altitude is not None and not self.altitude > 0:
            raise DomainError(f"walker altitude must be positive, got {self.altitude}")

    @property
    def n_sats(self) -> int:
        return self.n_planes * self.sats_per_plane

    def check_geometry(self, geom: GeometryParams) -> None:
        if self.altitude is not None and not math.isclose(self.altitude, geom.altitude, rel_tol=1e-9):
            raise DomainError(f"walker altitude {self.altitude} differs from geometry altitude {geom.altitude}")


@dataclass(frozen=True)
class UserLocation:
    latitude_deg: float = 0.0
    longitude_deg: float = 0.0

    def __post_init__(self):
        if abs(self.latitude_deg) > 90:
            raise DomainError(f"latitude must lie in [-90, 90], got {self.latitude_deg}")

    def position(self, geom: GeometryParams) -> np.ndarray:
        return surface_user_vector(geom, self.latitude_deg, self.longitude_deg)


@dataclass(frozen=True)
class Constellation:
    """Which constellation the simulator draws, and where the user stands."""

    kind: ConstellationKind = ConstellationKind.BPP
    walker: Optional[WalkerParams] = None
    user: UserLocation = field(default_factory=UserLocation)

    def __post_init__(self):
        if self.kind is ConstellationKind.WALKER and self.walker is None:
            raise DomainError("a Walker constellation needs WalkerParams")

    @classmethod
    def bpp(cls, user: Optional[UserLocation] = None) -> "Constellation":
        return cls(ConstellationKind.BPP, None, user or UserLocation())

    @classmethod
    def walker_delta(cls, walker: WalkerParams, user: UserLocation) -> "Constellation":
        return cls(ConstellationKind.WALKER, walker, user)


@dataclass(frozen=True)
class MCConfig:
    n_trials: int = 100_000
    seed: int = 0
    n_workers: int = 1
    block_size: int = 4096

    def __post_init__(self):
        if self.n_trials < 1:
            raise DomainError(f"n_trials must be >= 1, got {self.n_trials}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.n_workers < 1:
            raise DomainError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.block_size < 1:
            raise DomainError(f"block_size must be >= 1, got {self.block_size}")

    def blocks(self) -> List[Tuple[int, int]]:
        """(block id, trials in block) in reduction order."""
        full, rest = divmod(self.n_trials, self.block_size)
        out = [(i, self.block_size) for i in range(full)]
        if rest:
            out.append((full, rest))
        return out


class MCEstimate(NamedTuple):
    mean: float
    std_error: float
    n_trials: int


class ChannelAssignment(NamedTuple):
    channels: np.ndarray
    user_channel: int


class Snapshot(NamedTuple):
    sinr: float
    n_interferers: int
    serving_distance: float


def block_rng(seed: int, block_id: int) -> np.random.Generator:
    """Independent counter-based stream for one block of trials."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block_id,))))


def _unit_vectors(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    g = rng.standard_normal(shape + (3,))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def sample_bpp(n: int, geom: GeometryParams, rng: np.random.Generator) -> np.ndarray:
    """``n`` satellites placed independently and uniformly on the orbital sphere."""
    if n < 1:
        raise DomainError(f"need at least one satellite, got {n}")
    return geom.orbit_radius * _unit_vectors(rng, (n,))


def _walker_batch(wp: WalkerParams, orbit_radius: float, raan_offset: np.ndarray,
                  anomaly_offset: np.ndarray) -> np.ndarray:
    planes, per_plane = wp.n_planes, wp.sats_per_plane
    p = np.repeat(np.arange(planes), per_plane)
    q = np.tile(np.arange(per_plane), planes)
    incl = math.radians(wp.inclination_deg)
    raan = raan_offset[:, None] + 2.0 * math.pi * p[None, :] / planes
    arg = (anomaly_offset[:, None] + 2.0 * math.pi * q[None, :] / per_plane
           + 2.0 * math.pi * wp.phasing * p[None, :] / (planes * per_plane))
    cos_r, sin_r = np.cos(raan), np.sin(raan)
    cos_u, sin_u = np.cos(arg), np.sin(arg)
    x = cos_r * cos_u - sin_r * sin_u * math.cos(incl)
    y = sin_r * cos_u + cos_r * sin_u * math.cos(incl)
    z = sin_u * math.sin(incl)
    return orbit_radius * np.stack([x, y, z], axis=-1)


def generate_walker(wp: WalkerParams, geom: GeometryParams, raan_offset: float = 0.0,
                    anomaly_offset: float = 0.0) -> np.ndarray:
    """Walker-delta positions on circular orbits at the geometry's altitude."""
    wp.check_geometry(geom)
    return _walker_batch(wp, geom.orbit_radius, np.array([raan_offset]), np.array([anomaly_offset]))[0]


def assign_channels(n: int, k: int, serving_index: int, rng: np.random.Generator) -> ChannelAssignment:
    """Random equipartition of ``n`` satellites into ``k`` channels of n/k each."""
    if k < 1 or n % k != 0:
        raise DomainError(f"n_channels ({k}) must divide n_sats ({n})")
    if not 0 <= serving_index < n:
        raise DomainError(f"serving index {serving_index} out of range for {n} satellites")
    channels = rng.permutation(np.arange(n) % k)
    return ChannelAssignment(channels, int(channels[serving_index]))


def _sinr_batch(positions: np.ndarray, users: np.ndarray, radio: RadioParams, net: NetworkParams,
                rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SINR, interferer count and serving distance for each trial in a batch."""
    trials, n_sats, _ = positions.shape
    diff = positions - users[:, None, :]
    dist = np.linalg.norm(diff, axis=-1)
    normals = users / np.linalg.norm(users, axis=-1, keepdims=True)
    visible = np.einsum("bnk,bk->bn", diff, normals) >= 0.0

    rows = np.arange(trials)
    serving = np.argmin(dist, axis=1)
    r0 = dist[rows, serving]

    # rank of a uniform key is a random permutation; rank mod K is an equipartition
    labels = np.argsort(rng.random((trials, n_sats)), axis=1) % int(net.n_channels)
    co_channel = labels == labels[rows, serving][:, None]
    co_channel[rows, serving] = False
    interferers = co_channel & visible

    g_serve = radio.serving_fading.sample(rng, (trials,))
    g_interf = radio.interfering_fading.sample(rng, (trials, n_sats))
    path = radio.path_gain(dist)
    interference = radio.p_interf * np.sum(np.where(interferers, g_interf * path, 0.0), axis=1)
    signal = radio.p_serve * g_serve * path[rows, serving]
    sinr = np.where(visible[rows, serving], signal / (interference + radio.noise_power), 0.0)
    return sinr, interferers.sum(axis=1), r0


def snapshot_sinr(positions: np.ndarray, user: UserLocation, radio: RadioParams, net: NetworkParams,
                  geom: GeometryParams, rng: np.random.Generator) -> Snapshot:
    """One SINR draw for a user against a fixed set of satellite positions."""
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[0] == 0:
        raise DomainError("snapshot needs a nonempty (n, 3) array of positions")
    if net.n_channels > positions.shape[0]:
        raise DomainError("more channels than satellites in the snapshot")
    sinr, n_int, r0 = _sinr_batch(positions[None], user.position(geom)[None], radio, net, rng)
    return Snapshot(float(sinr[0]), int(n_int[0]), float(r0[0]))


def _draw_chunk(cfg: ScenarioConfig, constellation: Constellation, trials: int,
                rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    geom = cfg.geom
    n_sats = int(cfg.net.n_sats)
    if constellation.kind is ConstellationKind.BPP:
        positions = geom.orbit_radius * _unit_vectors(rng, (trials, n_sats))
        user = constellation.user.position(geom)
        users = np.broadcast_to(user, (trials, 3))
        return positions, users

    wp = constellation.walker
    two_pi = 2.0 * math.pi
    raan = rng.uniform(0.0, two_pi, trials)
    anomaly = rng.uniform(0.0, two_pi, trials)
    lon = rng.uniform(0.0, two_pi, trials)
    lat = math.radians(constellation.user.latitude_deg)
    positions = _walker_batch(wp, geom.orbit_radius, raan, anomaly)
    users = geom.earth_radius * np.stack(
        [math.cos(lat) * np.cos(lon), math.cos(lat) * np.sin(lon), np.full(trials, math.sin(lat))], axis=-1)
    return positions, users


@dataclass(frozen=True)
class _BlockTask:
    cfg: ScenarioConfig
    constellation: Constellation
    thresholds: Tuple[float, ...]
    seed: int
    block_id: int
    n_trials: int


class _BlockResult(NamedTuple):
    block_id: int
    covered: Tuple[int, ...]
    rate_sum: float
    rate_sq_sum: float
    n_trials: int


def _run_block(task: _BlockTask) -> _BlockResult:
    rng = block_rng(task.seed, task.block_id)
    thresholds = np.asarray(task.thresholds, dtype=float)
    covered = np.zeros(thresholds.size, dtype=np.int64)
    rates = []
    remaining = task.n_trials
    while remaining > 0:
        size = min(_CHUNK, remaining)
        positions, users = _draw_chunk(task.cfg, task.constellation, size, rng)
        sinr, _, _ = _sinr_batch(positions, users, task.cfg.radio, task.cfg.net, rng)
        covered += np.sum(sinr[:, None] > thresholds[None, :], axis=0)
        rates.append(np.log2(1.0 + sinr) / task.cfg.net.n_channels)
        remaining -= size
    values = np.concatenate(rates)
    return _BlockResult(task.block_id, tuple(int(c) for c in covered),
                        math.fsum(values), math.fsum(values * values), task.n_trials)


def _check_simulable(cfg: ScenarioConfig, constellation: Constellation) -> None:
    cfg.net.require_simulable()
    if constellation.kind is ConstellationKind.WALKER:
        constellation.walker.check_geometry(cfg.geom)
        if constellation.walker.n_sats != int(cfg.net.n_sats):
            raise DomainError(
                f"walker layout has {constellation.walker.n_sats} satellites but n_sats is {int(cfg.net.n_sats)}")


def _run_blocks(cfg: ScenarioConfig, constellation: Constellation, thresholds: Sequence[float],
                mc: MCConfig, executor: Optional[Executor] = None) -> List[_BlockResult]:
    _check_simulable(cfg, constellation)
    tasks = [_BlockTask(cfg, constellation, tuple(thresholds), mc.seed, block_id, n)
             for block_id, n in mc.blocks()]
    logger.info(f"Simulating {mc.n_trials} trials ({constellation.kind.value}) in {len(tasks)} blocks "
                f"on {mc.n_workers} worker(s)")
    if executor is not None:
        results = list(executor.map(_run_block, tasks))
    elif mc.n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=mc.n_workers) as pool:
            results = list(pool.map(_run_block, tasks))
    else:
        results = [_run_block(task) for task in tasks]
    return sorted(results, key=lambda r: r.block_id)


def _coverage_estimates(results: List[_BlockResult], count: int) -> List[MCEstimate]:
    n = sum(r.n_trials for r in results)
    estimates = []
    for i in range(count):
        p = sum(r.covered[i] for r in results) / n
        estimates.append(MCEstimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / n), n))
    return estimates


def _rate_estimate(results: List[_BlockResult]) -> MCEstimate:
    n = sum(r.n_trials for r in results)
    mean = math.fsum(r.rate_sum for r in results) / n
    if n < 2:
        return MCEstimate(mean, 0.0, n)
    sq = math.fsum(r.rate_sq_sum for r in results)
    variance = max(sq - n * mean * mean, 0.0) / (n - 1)
    return MCEstimate(mean, math.sqrt(variance / n), n)


def _threshold_values(thresholds: Sequence[Threshold]) -> List[float]:
    return [t.value if isinstance(t, SinrThreshold) else SinrThreshold(float(t)).value for t in thresholds]


def estimate_coverage(cfg: ScenarioConfig, constellation: Constellation, thresholds: Sequence[Threshold],
                      mc: MCConfig, executor: Optional[Executor] = None) -> List[MCEstimate]:
    """Fraction of trials with SINR above each threshold, with binomial standard errors."""
    values = _threshold_values(thresholds)
    if not values:
        raise DomainError("need at least one threshold")
    results = _run_blocks(cfg, constellation, values, mc, executor)
    return _coverage_estimates(results, len(values))


def estimate_rate(cfg: ScenarioConfig, constellation: Constellation, mc: MCConfig,
                  executor: Optional[Executor] = None) -> MCEstimate:
    """Sample mean of log2(1 + SINR) / K."""
    return _rate_estimate(_run_blocks(cfg, constellation, [], mc, executor))


def estimate_all(cfg: ScenarioConfig, constellation: Constellation, thresholds: Sequence[Threshold],
                 mc: MCConfig, executor: Optional[Executor] = None) -> Tuple[List[MCEstimate], MCEstimate]:
    """Coverage at every threshold and the rate, from the same set of trials."""
    values = _threshold_values(thresholds)
    results = _run_blocks(cfg, constellation, values, mc, executor)
    return _coverage_estimates(results, len(values)), _rate_estimate(results)


def sample_conditional_interference(geom: GeometryParams, net: NetworkParams, radio: RadioParams,
                                    r0: float, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Aggregate interference and visible interferer count given the serving distance.

    The N/K - 1 co-channel satellites are uniform on the sphere outside the cap of
    radius r0 around the user. A uniform satellite has its squared distance uniform on
    [altitude^2, support_max^2], so the conditional draw is direct; r0 must leave room
    beyond it.
    """
    m = net.integral_co_channel_count()
    if not geom.altitude <= r0 < geom.support_max:
        raise DomainError(f"serving distance {r0} outside [{geom.altitude}, {geom.support_max})")
    if m == 0:
        return np.zeros(n), np.zeros(n, dtype=np.int64)
    distance = np.sqrt(rng.uniform(r0 * r0, geom.support_max ** 2, size=(n, m)))
    visible = distance <= geom.max_range
    path = radio.path_gain(distance)
    gains = radio.interfering_fading.sample(rng, (n, m))
    interference = radio.p_interf * np.sum(np.where(visible, gains * path, 0.0), axis=1)
    return interference, visible.sum(axis=1)


def walker_latitude_density(inclination_deg: float, latitude_deg, per_area: bool = False):
    """Latitude density (per radian) of a satellite on a circular orbit at random phase.

    With ``per_area`` the density is divided by the area element, giving satellites per
    steradian for a unit-count shell; it grows toward the inclination limit.
    """
    incl = math.radians(inclination_deg)
    lat = np.radians(np.asarray(latitude_deg, dtype=float))
    gap = math.sin(incl) ** 2 - np.sin(lat) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        if per_area:
            value = 1.0 / (2.0 * math.pi ** 2 * np.sqrt(gap))
        else:
            value = np.cos(lat) / (math.pi * np.sqrt(gap))
    value = np.where(np.abs(lat) < incl, value, 0.0)
    if np.ndim(latitude_deg) == 0:
        return float(value)
    return value
