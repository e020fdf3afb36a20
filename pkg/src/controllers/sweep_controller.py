import csv
import hashlib
import io
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, TextIO, Tuple

from ..errors import DomainError, LeoCoverageError
from ..metrics import SinrThreshold, coverage, rate
from ..simkit import ConstellationKind, UserLocation, estimate_all
from .. import worker_manager
from .scenario_controller import Scenario, SweepOutput, SweepVariable, fingerprint

logger = logging.getLogger(__name__)

_OUTPUT_ORDER = (SweepOutput.ANALYTIC_COVERAGE, SweepOutput.ANALYTIC_RATE,
                 SweepOutput.MC_COVERAGE, SweepOutput.MC_RATE)


@dataclass(frozen=True)
class ResultRow:
    swept_value: float
    values: Dict[str, float]
    std_errors: Dict[str, float]
    fingerprint: str
    error: str = ""


def output_columns(outputs, kinds) -> Tuple[List[str], List[str]]:
    """Value columns in fixed order, and the standard-error columns for MC outputs."""
    values, errors = [], []
    for output in _OUTPUT_ORDER:
        if output not in outputs:
            continue
        if not output.is_mc:
            values.append(output.value)
            continue
        for kind in (ConstellationKind.BPP, ConstellationKind.WALKER):
            if kind in kinds:
                name = output.value if kind is ConstellationKind.BPP else f"{output.value}_{kind.value}"
                values.append(name)
                errors.append(f"{name}_stderr")
    return values, errors


def scenario_at(scenario: Scenario, value: float) -> Tuple[Scenario, float]:
    """Scenario with the swept variable set to ``value``, and the SINR threshold in dB."""
    variable = scenario.sweep.variable
    threshold_db = scenario.sweep.threshold_db
    if variable is SweepVariable.THRESHOLD_DB:
        return scenario, value
    if variable is SweepVariable.N_CHANNELS:
        cfg = scenario.cfg.with_network(n_channels=int(value))
        return replace(scenario, cfg=cfg), threshold_db
    if variable is SweepVariable.ALTITUDE_KM:
        geom = replace(scenario.cfg.geom, altitude=value * 1e3)
        walker = scenario.walker
        if walker.altitude is not None:
            walker = replace(walker, altitude=geom.altitude)
        return replace(scenario, cfg=replace(scenario.cfg, geom=geom), walker=walker), threshold_db
    user = UserLocation(latitude_deg=value, longitude_deg=scenario.user.longitude_deg)
    return replace(scenario, user=user), threshold_db


def _row_fingerprint(base: str, variable: SweepVariable, value: float) -> str:
    return hashlib.sha256(f"{base}:{variable.value}={value!r}".encode("utf-8")).hexdigest()[:16]


def evaluate_row(scenario: Scenario, value: float, mc_executor=None) -> ResultRow:
    """Compute every requested output at one swept value; failures land in ``error``."""
    outputs, kinds = scenario.sweep.outputs, scenario.sweep.kinds
    row_fp = _row_fingerprint(fingerprint(scenario), scenario.sweep.variable, value)
    values: Dict[str, float] = {}
    std_errors: Dict[str, float] = {}
    try:
        point, threshold_db = scenario_at(scenario, value)
        threshold = SinrThreshold.from_db(threshold_db)
        if SweepOutput.ANALYTIC_COVERAGE in outputs:
            values[SweepOutput.ANALYTIC_COVERAGE.value] = coverage(point.cfg, threshold)
        if SweepOutput.ANALYTIC_RATE in outputs:
            values[SweepOutput.ANALYTIC_RATE.value] = rate(point.cfg)
        if SweepOutput.MC_COVERAGE in outputs or SweepOutput.MC_RATE in outputs:
            for kind in kinds:
                suffix = "" if kind is ConstellationKind.BPP else f"_{kind.value}"
                mc = point.mc if mc_executor is not None else replace(point.mc, n_workers=1)
                covered, mean_rate = estimate_all(point.cfg, point.constellation(kind), [threshold], mc, mc_executor)
                if SweepOutput.MC_COVERAGE in outputs:
                    name = f"{SweepOutput.MC_COVERAGE.value}{suffix}"
                    values[name] = covered[0].mean
                    std_errors[f"{name}_stderr"] = covered[0].std_error
                if SweepOutput.MC_RATE in outputs:
                    name = f"{SweepOutput.MC_RATE.value}{suffix}"
                    values[name] = mean_rate.mean
                    std_errors[f"{name}_stderr"] = mean_rate.std_error
    except LeoCoverageError as e:
        logger.error(f"Row {scenario.sweep.variable.value}={value} failed: {e}")
        return ResultRow(value, values, std_errors, row_fp, f"{type(e).__name__}: {e}")
    return ResultRow(value, values, std_errors, row_fp)


def _evaluate_task(task: Tuple[Scenario, float]) -> ResultRow:
    scenario, value = task
    return evaluate_row(scenario, value)


def _format(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


class SweepController:
    """Runs sweeps row by row and writes them as CSV."""

    def __init__(self, workers: Optional[int] = None):
        """
        Args:
            workers: process count; None defers to worker_manager's resolution
        """
        self.workers = workers

    def run_rows(self, scenario: Scenario) -> List[ResultRow]:
        """
        Evaluate every sweep row, ordered by swept value.

        Rows go to worker processes when there are at least as many rows as workers;
        otherwise rows run in turn and the Monte Carlo blocks inside them use the pool.
        """
        values = scenario.sweep.values
        requested = self.workers if self.workers is not None else scenario.requested_workers
        workers = worker_manager.resolve_worker_count(requested)
        pool = worker_manager.get_worker_pool(workers)
        logger.info(f"Sweeping {scenario.sweep.variable.value} over {len(values)} values with {workers} worker(s)")

        if pool is not None and len(values) >= workers:
            rows = []
            for i, row in enumerate(pool.map(_evaluate_task, [(scenario, v) for v in values]), start=1):
                logger.info(f"Row {i}/{len(values)} done ({scenario.sweep.variable.value}={row.swept_value})")
                rows.append(row)
            return rows

        rows = []
        for i, value in enumerate(values, start=1):
            rows.append(evaluate_row(scenario, value, pool))
            logger.info(f"Row {i}/{len(values)} done ({scenario.sweep.variable.value}={value})")
        return rows

    def write_csv(self, scenario: Scenario, rows: List[ResultRow], stream: TextIO) -> None:
        value_cols, error_cols = output_columns(scenario.sweep.outputs, scenario.sweep.kinds)
        writer = csv.writer(stream, lineterminator="\r\n")
        writer.writerow(["swept_value"] + value_cols + error_cols + ["error"])
        for row in rows:
            writer.writerow([_format(row.swept_value)]
                            + [_format(row.values.get(c)) for c in value_cols]
                            + [_format(row.std_errors.get(c)) for c in error_cols]
                            + [row.error])

    def run_sweep(self, scenario: Scenario, output_file: Optional[str] = None,
                  stream: Optional[TextIO] = None) -> Dict[str, Any]:
        """
        Run a sweep and write its CSV.

        Args:
            scenario: loaded scenario
            output_file: CSV path; when omitted, ``stream`` (or an in-memory buffer) is used

        Returns:
            Dict[str, Any]: status dictionary; details carry the fingerprint and failed rows
        """
        try:
            rows = self.run_rows(scenario)
        except DomainError as e:
            logger.error(f"Sweep could not start: {e}")
            return {"status": "error", "message": f"Sweep could not start: {str(e)}",
                    "details": {"error_type": "config"}}

        buffer = io.StringIO()
        self.write_csv(scenario, rows, buffer)
        text = buffer.getvalue()
        try:
            if output_file:
                with open(output_file, "w", encoding="utf-8", newline="") as f:
                    f.write(text)
            elif stream is not None:
                stream.write(text)
        except OSError as e:
            logger.error(f"Error writing sweep output: {e}")
            return {"status": "error", "message": f"Error writing sweep output: {str(e)}",
                    "details": {"error_type": "io"}}

        failed = [row.swept_value for row in rows if row.error]
        details = {"fingerprint": fingerprint(scenario), "rows": len(rows), "failed_rows": failed, "csv": text}
        if failed:
            return {"status": "error", "message": f"{len(failed)} of {len(rows)} rows failed",
                    "details": dict(details, error_type="numeric")}
        return {"status": "success", "message": f"Sweep finished with {len(rows)} rows", "details": details}
