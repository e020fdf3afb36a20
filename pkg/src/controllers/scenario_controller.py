import configparser
import enum
import hashlib
import io
import json
import logging
import math
import os
import re
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from ..errors import ConfigError, DomainError
from ..geometry import GeometryParams
from ..interference import FadingModel, Normalization
from ..metrics import Decomposition, RadioParams, ScenarioConfig, dbm_to_watts
from ..neff import FitMetric
from ..quadrature import QuadratureSpec
from ..simkit import ConstellationKind, Constellation, MCConfig, UserLocation, WalkerParams
from ..visibility import NetworkParams

logger = logging.getLogger(__name__)


class SweepVariable(enum.Enum):
    THRESHOLD_DB = "threshold_db"
    N_CHANNELS = "n_channels"
    ALTITUDE_KM = "altitude_km"
    USER_LATITUDE_DEG = "user_latitude_deg"


class SweepOutput(enum.Enum):
    ANALYTIC_COVERAGE = "analytic_coverage"
    ANALYTIC_RATE = "analytic_rate"
    MC_COVERAGE = "mc_coverage"
    MC_RATE = "mc_rate"

    @property
    def is_mc(self) -> bool:
        return self in (SweepOutput.MC_COVERAGE, SweepOutput.MC_RATE)


class FitTarget(enum.Enum):
    WALKER = "walker"
    BPP = "bpp"
    ANALYTIC = "analytic"


@dataclass(frozen=True)
class SweepSpec:
    variable: SweepVariable = SweepVariable.THRESHOLD_DB
    values: Tuple[float, ...] = (0.0,)
    outputs: Tuple[SweepOutput, ...] = (SweepOutput.ANALYTIC_COVERAGE,)
    kinds: Tuple[ConstellationKind, ...] = (ConstellationKind.BPP,)
    threshold_db: float = 0.0

    def __post_init__(self):
        if not self.values:
            raise DomainError("sweep values must not be empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise DomainError("sweep values must be strictly increasing")
        if not self.outputs:
            raise DomainError("sweep needs at least one output")
        if not self.kinds:
            raise DomainError("sweep needs at least one constellation kind")


@dataclass(frozen=True)
class FitSettings:
    metric: FitMetric = FitMetric.COVERAGE
    target: FitTarget = FitTarget.WALKER
    thresholds_db: Tuple[float, ...] = tuple(float(t) for t in range(-10, 31, 2))
    fit_points_db: Tuple[float, ...] = ()
    n_channels_values: Tuple[int, ...] = (10, 20, 45, 90)
    n_lo: float = 50.0
    n_hi: float = 5000.0
    tolerance: float = 0.05
    refine: bool = False


@dataclass(frozen=True)
class Scenario:
    """Everything one config file describes, plus the canonical settings it was built from."""

    cfg: ScenarioConfig
    sweep: SweepSpec
    walker: WalkerParams
    user: UserLocation
    mc: MCConfig
    fit: FitSettings
    settings: Dict[str, Dict[str, str]] = field(default_factory=dict, compare=False, hash=False)
    path: Optional[str] = None

    @property
    def requested_workers(self) -> Optional[int]:
        """Worker count from the file or command line; None leaves it to the environment."""
        raw = self.settings.get("mc", {}).get("n_workers", "")
        return int(raw) if raw else None

    def constellation(self, kind: ConstellationKind) -> Constellation:
        if kind is ConstellationKind.WALKER:
            return Constellation.walker_delta(self.walker, self.user)
        return Constellation.bpp(self.user)


# section -> key -> default, in emission order
DEFAULTS: Dict[str, Dict[str, str]] = {
    "geometry": {"earth_radius_km": "6371.0", "altitude_km": "1200.0"},
    "radio": {
        "p_serve_w": "10.0",
        "p_interf_w": "10.0",
        "noise_dbm": "-98.0",
        "alpha": "4.0",
        "serving_fading": "rayleigh",
        "interfering_fading": "",
        "reference_distance_km": "1.0",
    },
    "network": {"n_sats": "720.0", "n_channels": "20"},
    "walker": {
        "inclination_deg": "90.0",
        "n_planes": "20",
        "sats_per_plane": "36",
        "phasing": "1",
        "user_latitude_deg": "0.0",
        "altitude_km": "",
    },
    "mc": {"n_trials": "100000", "seed": "0", "n_workers": "", "block_size": "4096"},
    "sweep": {
        "variable": "threshold_db",
        "values": "0.0",
        "outputs": "analytic_coverage",
        "kinds": "bpp",
        "threshold_db": "0.0",
    },
    "numerics": {
        "abs_tol": "1e-10",
        "rel_tol": "1e-09",
        "max_subdivisions": "200",
        "normalization": "normalized",
        "decomposition": "inside",
        "closed_forms": "true",
        "fractional_reuse": "false",
    },
    "fit": {
        "metric": "coverage",
        "target": "walker",
        "thresholds_db": ", ".join(repr(float(t)) for t in range(-10, 31, 2)),
        "fit_points_db": "",
        "n_channels_values": "10, 20, 45, 90",
        "n_lo": "50.0",
        "n_hi": "5000.0",
        "tolerance": "0.05",
        "refine": "false",
    },
}

# keys excluded from the fingerprint: they change scheduling, not results
_UNFINGERPRINTED = {("mc", "n_workers")}

_LIST_KEYS = {("sweep", "values"), ("sweep", "outputs"), ("sweep", "kinds"), ("fit", "thresholds_db"),
              ("fit", "fit_points_db"), ("fit", "n_channels_values")}
_INT_KEYS = {("network", "n_channels"), ("walker", "n_planes"), ("walker", "sats_per_plane"),
             ("walker", "phasing"), ("mc", "n_trials"), ("mc", "seed"), ("mc", "n_workers"),
             ("mc", "block_size"), ("numerics", "max_subdivisions")}
_BOOL_KEYS = {("numerics", "closed_forms"), ("numerics", "fractional_reuse"), ("fit", "refine")}
_TEXT_KEYS = {("radio", "serving_fading"), ("radio", "interfering_fading"), ("sweep", "variable"),
              ("numerics", "normalization"), ("numerics", "decomposition"), ("fit", "metric"), ("fit", "target")}
_INT_LIST_KEYS = {("fit", "n_channels_values")}
_TEXT_LIST_KEYS = {("sweep", "outputs"), ("sweep", "kinds")}

_KEY_LINE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_map(text: str) -> Dict[Tuple[str, str], int]:
    """(section, key) -> 1-based line number, for error messages."""
    lines: Dict[Tuple[str, str], int] = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        header = _SECTION_LINE.match(line)
        if header:
            section = header.group(1).strip().lower()
            lines[(section, "")] = number
            continue
        key = _KEY_LINE.match(line)
        if key and section is not None and not line[:1].isspace():
            lines[(section, key.group(1).strip().lower())] = number
    return lines


def _parse_list(raw: str) -> List[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _expand_range(item: str) -> List[float]:
    """'start:stop:step' inclusive of stop (within rounding), or a single number."""
    parts = item.split(":")
    if len(parts) == 1:
        return [float(item)]
    if len(parts) != 3:
        raise ValueError(f"range must be start:stop:step, got '{item}'")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError(f"range needs step > 0 and stop >= start, got '{item}'")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(count)]


class _Reader:
    """Typed access to parsed settings with line-aware errors."""

    def __init__(self, settings: Dict[str, Dict[str, str]], lines: Dict[Tuple[str, str], int], path: Optional[str]):
        self.settings = settings
        self.lines = lines
        self.path = path

    def error(self, section: str, key: str, message: str) -> ConfigError:
        line = self.lines.get((section, key), self.lines.get((section, "")))
        return ConfigError(f"[{section}] {key}: {message}", self.path, line, key)

    def raw(self, section: str, key: str) -> str:
        return self.settings[section][key]

    def number(self, section: str, key: str) -> float:
        raw = self.raw(section, key)
        try:
            value = float(raw)
        except ValueError:
            raise self.error(section, key, f"expected a number, got '{raw}'") from None
        if not math.isfinite(value):
            raise self.error(section, key, f"expected a finite number, got '{raw}'")
        return value

    def optional_number(self, section: str, key: str) -> Optional[float]:
        return self.number(section, key) if self.raw(section, key) else None

    def integer(self, section: str, key: str) -> int:
        raw = self.raw(section, key)
        try:
            return int(raw)
        except ValueError:
            raise self.error(section, key, f"expected an integer, got '{raw}'") from None

    def flag(self, section: str, key: str) -> bool:
        raw = self.raw(section, key).lower()
        if raw in ("1", "true", "yes", "on"):
            return True
        if raw in ("0", "false", "no", "off"):
            return False
        raise self.error(section, key, f"expected true/false, got '{raw}'")

    def choice(self, section: str, key: str, enum_type, raw: Optional[str] = None):
        raw = self.raw(section, key) if raw is None else raw
        try:
            return enum_type(raw.lower())
        except ValueError:
            allowed = ", ".join(e.value for e in enum_type)
            raise self.error(section, key, f"'{raw}' is not one of: {allowed}") from None

    def numbers(self, section: str, key: str) -> Tuple[float, ...]:
        values: List[float] = []
        for item in _parse_list(self.raw(section, key)):
            try:
                values.extend(_expand_range(item))
            except ValueError as e:
                raise self.error(section, key, str(e)) from None
        return tuple(values)

    def fading(self, section: str, key: str) -> FadingModel:
        raw = self.raw(section, key).lower()
        if raw == "rayleigh":
            return FadingModel.rayleigh()
        if raw in ("nonfading", "non_fading", "none"):
            return FadingModel.non_fading()
        if raw.startswith("nakagami:"):
            try:
                return FadingModel.nakagami(float(raw.split(":", 1)[1]))
            except (ValueError, DomainError) as e:
                raise self.error(section, key, f"bad Nakagami fading '{raw}': {e}") from None
        raise self.error(section, key, f"'{raw}' is not one of: rayleigh, nonfading, nakagami:<m>")


def _canonical(section: str, key: str, raw: str) -> str:
    """Normalized spelling of a value, so equivalent files share a fingerprint."""
    raw = raw.strip()
    if not raw:
        return ""
    try:
        if (section, key) in _TEXT_LIST_KEYS:
            return ", ".join(item.lower() for item in _parse_list(raw))
        if (section, key) in _INT_LIST_KEYS:
            return ", ".join(str(int(item)) for item in _parse_list(raw))
        if (section, key) in _LIST_KEYS:
            return ", ".join(repr(v) for item in _parse_list(raw) for v in _expand_range(item))
        if (section, key) in _INT_KEYS:
            return str(int(raw))
        if (section, key) in _BOOL_KEYS or (section, key) in _TEXT_KEYS:
            return raw.lower()
        return repr(float(raw))
    except ValueError:
        # left as written; typed access reports it with its line
        return raw


def _read_settings(text: str, path: Optional[str]) -> Tuple[Dict[str, Dict[str, str]], Dict[Tuple[str, str], int]]:
    lines = _line_map(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path or "<string>")
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        if line is None and getattr(e, "errors", None):
            line = e.errors[0][0]
        raise ConfigError(f"parse error: {e.message if hasattr(e, 'message') else e}", path, line) from None

    settings = {section: dict(keys) for section, keys in DEFAULTS.items()}
    for section in parser.sections():
        name = section.strip().lower()
        if name not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]", path, lines.get((name, "")))
        for key, value in parser.items(section):
            if key not in DEFAULTS[name]:
                raise ConfigError(f"[{name}] unknown key '{key}'", path, lines.get((name, key)), key)
            settings[name][key] = value
    canonical = {section: {key: _canonical(section, key, value) for key, value in keys.items()}
                 for section, keys in settings.items()}
    return canonical, lines


def _build(settings: Dict[str, Dict[str, str]], lines: Dict[Tuple[str, str], int], path: Optional[str]) -> Scenario:
    r = _Reader(settings, lines, path)

    def guarded(section: str, key: str, build):
        try:
            return build()
        except DomainError as e:
            raise r.error(section, key, str(e)) from None

    geom = guarded("geometry", "altitude_km", lambda: GeometryParams(
        earth_radius=r.number("geometry", "earth_radius_km") * 1e3,
        altitude=r.number("geometry", "altitude_km") * 1e3))

    serving = r.fading("radio", "serving_fading")
    interfering = r.fading("radio", "interfering_fading") if r.raw("radio", "interfering_fading") else serving
    radio = guarded("radio", "p_interf_w", lambda: RadioParams(
        p_serve=r.number("radio", "p_serve_w"),
        p_interf=r.number("radio", "p_interf_w"),
        noise_power=dbm_to_watts(r.number("radio", "noise_dbm")),
        alpha=r.number("radio", "alpha"),
        serving_fading=serving,
        interfering_fading=interfering,
        reference_distance=r.number("radio", "reference_distance_km") * 1e3))

    net = guarded("network", "n_channels", lambda: NetworkParams(
        n_sats=r.number("network", "n_sats"), n_channels=r.integer("network", "n_channels")))

    quad = guarded("numerics", "abs_tol", lambda: QuadratureSpec(
        abs_tol=r.number("numerics", "abs_tol"),
        rel_tol=r.number("numerics", "rel_tol"),
        max_subdivisions=r.integer("numerics", "max_subdivisions")))

    cfg = ScenarioConfig(
        geom=geom, net=net, radio=radio, quad=quad,
        laplace_normalization=r.choice("numerics", "normalization", Normalization),
        decomposition=r.choice("numerics", "decomposition", Decomposition),
        use_closed_forms=r.flag("numerics", "closed_forms"),
        allow_fractional_reuse=r.flag("numerics", "fractional_reuse"))

    walker_alt = r.optional_number("walker", "altitude_km")
    walker = guarded("walker", "inclination_deg", lambda: WalkerParams(
        inclination_deg=r.number("walker", "inclination_deg"),
        n_planes=r.integer("walker", "n_planes"),
        sats_per_plane=r.integer("walker", "sats_per_plane"),
        phasing=r.integer("walker", "phasing"),
        altitude=None if walker_alt is None else walker_alt * 1e3))
    guarded("walker", "altitude_km", lambda: walker.check_geometry(geom))
    user = guarded("walker", "user_latitude_deg",
                   lambda: UserLocation(latitude_deg=r.number("walker", "user_latitude_deg")))

    mc = guarded("mc", "n_trials", lambda: MCConfig(
        n_trials=r.integer("mc", "n_trials"),
        seed=r.integer("mc", "seed"),
        n_workers=r.integer("mc", "n_workers") if r.raw("mc", "n_workers") else 1,
        block_size=r.integer("mc", "block_size")))

    outputs = tuple(r.choice("sweep", "outputs", SweepOutput, raw=item)
                    for item in _parse_list(r.raw("sweep", "outputs")))
    kinds = tuple(r.choice("sweep", "kinds", ConstellationKind, raw=item)
                  for item in _parse_list(r.raw("sweep", "kinds")))
    sweep = guarded("sweep", "values", lambda: SweepSpec(
        variable=r.choice("sweep", "variable", SweepVariable),
        values=r.numbers("sweep", "values"),
        outputs=outputs,
        kinds=kinds,
        threshold_db=r.number("sweep", "threshold_db")))
    if sweep.variable is SweepVariable.N_CHANNELS and any(v != int(v) for v in sweep.values):
        raise r.error("sweep", "values", "channel counts must be integers")

    n_lo, n_hi = r.number("fit", "n_lo"), r.number("fit", "n_hi")
    if not 1 <= n_lo < n_hi:
        raise r.error("fit", "n_hi", f"fit bounds must satisfy 1 <= n_lo < n_hi, got [{n_lo}, {n_hi}]")
    tolerance = r.number("fit", "tolerance")
    if tolerance <= 0:
        raise r.error("fit", "tolerance", "must be positive")
    fit = FitSettings(
        metric=r.choice("fit", "metric", FitMetric),
        target=r.choice("fit", "target", FitTarget),
        thresholds_db=r.numbers("fit", "thresholds_db"),
        fit_points_db=r.numbers("fit", "fit_points_db"),
        n_channels_values=tuple(int(v) for v in r.numbers("fit", "n_channels_values")),
        n_lo=n_lo, n_hi=n_hi, tolerance=tolerance,
        refine=r.flag("fit", "refine"))

    return Scenario(cfg=cfg, sweep=sweep, walker=walker, user=user, mc=mc, fit=fit, settings=settings, path=path)


def load_config_text(text: str, path: Optional[str] = None) -> Scenario:
    settings, lines = _read_settings(text, path)
    return _build(settings, lines, path)


def load_config(path: str) -> Scenario:
    """Read and validate a scenario file; raises ConfigError with the offending line."""
    if not os.path.exists(path):
        raise ConfigError(f"config file does not exist: {path}", path)
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    return load_config_text(text, path)


def fingerprint(scenario: Scenario) -> str:
    """Stable hash of the canonical settings and seed."""
    settings = {section: {k: v for k, v in keys.items() if (section, k) not in _UNFINGERPRINTED}
                for section, keys in scenario.settings.items()}
    payload = json.dumps({"settings": settings, "seed": scenario.mc.seed}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def emit_config(scenario: Scenario) -> str:
    """Scenario as INI text; loading it back reproduces the fingerprint."""
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in DEFAULTS.items():
        parser[section] = {key: scenario.settings[section][key] for key in keys}
    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


class ScenarioController:
    """Loads scenario files, applies command-line overrides and tracks loaded scenarios."""

    def __init__(self):
        self._scenarios: Dict[str, Scenario] = {}

    def load(self, path: Optional[str], seed: Optional[int] = None, workers: Optional[int] = None) -> Scenario:
        """
        Load a scenario (defaults when path is None) and apply overrides.

        Raises:
            ConfigError: if the file cannot be parsed or violates an invariant
        """
        scenario = load_config(path) if path else load_config_text("", None)
        scenario = self.with_overrides(scenario, seed=seed, workers=workers)
        self._scenarios[path or "<defaults>"] = scenario
        logger.info(f"Loaded scenario {path or '<defaults>'} (fingerprint {fingerprint(scenario)})")
        return scenario

    def with_overrides(self, scenario: Scenario, seed: Optional[int] = None, workers: Optional[int] = None) -> Scenario:
        settings = {section: dict(keys) for section, keys in scenario.settings.items()}
        mc = scenario.mc
        try:
            if seed is not None:
                mc = replace(mc, seed=seed)
                settings["mc"]["seed"] = str(seed)
            if workers is not None:
                mc = replace(mc, n_workers=workers)
                settings["mc"]["n_workers"] = str(workers)
        except DomainError as e:
            raise ConfigError(f"bad command-line override: {e}") from None
        return replace(scenario, mc=mc, settings=settings)

    def get_scenario(self, path: str) -> Optional[Scenario]:
        return self._scenarios.get(path)

    def list_scenarios(self) -> List[str]:
        return list(self._scenarios.keys())

    def describe(self, scenario: Scenario) -> Dict[str, Any]:
        cfg = scenario.cfg
        return {
            "fingerprint": fingerprint(scenario),
            "n_sats": cfg.net.n_sats,
            "n_channels": cfg.net.n_channels,
            "altitude_km": cfg.geom.altitude / 1e3,
            "alpha": cfg.radio.alpha,
            "noise_w": cfg.radio.noise_power,
            "serving_fading": cfg.radio.serving_fading.label,
            "interfering_fading": cfg.radio.interfering_fading.label,
            "normalization": cfg.laplace_normalization.value,
            "decomposition": cfg.decomposition.value,
            "seed": scenario.mc.seed,
        }

    def write_config(self, scenario: Scenario, output_file: str) -> Dict[str, Any]:
        """Write the canonical form of a scenario to a file."""
        try:
            directory = os.path.dirname(output_file)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(output_file, "w", encoding="utf-8") as f:
                f.write(emit_config(scenario))
            return {"status": "success", "message": f"Config written to {output_file}",
                    "details": {"fingerprint": fingerprint(scenario)}}
        except OSError as e:
            logger.error(f"Error writing config: {e}")
            return {"status": "error", "message": f"Error writing config: {str(e)}", "details": {"error_type": "io"}}
