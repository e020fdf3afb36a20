import csv
import json
import logging
import os
from typing import Any, Dict, List, Optional, TextIO, Tuple

from ..errors import DomainError, FitError, LeoCoverageError
from ..metrics import SinrThreshold, coverage, db_to_linear, linear_to_db, rate
from ..neff import (FitMetric, FitResult, NeffFitSpec, TargetPoint, analytic_value, fit_neff,
                    mean_absolute_error, refine_neff, select_fit_points)
from ..simkit import ConstellationKind, estimate_coverage, estimate_rate
from .. import worker_manager
from .scenario_controller import FitTarget, Scenario, fingerprint

logger = logging.getLogger(__name__)


class SimulationController:
    """Monte Carlo target curves and effective-constellation-size fits."""

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers

    def _pool(self, scenario: Scenario):
        requested = self.workers if self.workers is not None else scenario.requested_workers
        return worker_manager.get_worker_pool(worker_manager.resolve_worker_count(requested))

    def target_curve(self, scenario: Scenario) -> List[TargetPoint]:
        """
        Build the curve the fit has to match.

        Coverage curves are indexed by linear SINR threshold, rate curves by channel count.
        Monte Carlo targets come from the Walker or uniform constellation in the scenario;
        an analytic target reproduces the model at the configured N (self-consistency).
        """
        settings, cfg = scenario.fit, scenario.cfg
        pool = self._pool(scenario) if settings.target is not FitTarget.ANALYTIC else None
        kind = ConstellationKind.WALKER if settings.target is FitTarget.WALKER else ConstellationKind.BPP
        constellation = scenario.constellation(kind)

        if settings.metric is FitMetric.COVERAGE:
            thresholds = [db_to_linear(db) for db in settings.thresholds_db]
            if settings.target is FitTarget.ANALYTIC:
                return [TargetPoint(t, coverage(cfg, SinrThreshold(t))) for t in thresholds]
            logger.info(f"Simulating {kind.value} coverage target at {len(thresholds)} thresholds")
            estimates = estimate_coverage(cfg, constellation, thresholds, scenario.mc, pool)
            return [TargetPoint(t, e.mean, e.std_error) for t, e in zip(thresholds, estimates)]

        points = []
        for k in settings.n_channels_values:
            cfg_k = cfg.with_network(n_channels=k)
            if settings.target is FitTarget.ANALYTIC:
                points.append(TargetPoint(float(k), rate(cfg_k)))
            else:
                logger.info(f"Simulating {kind.value} rate target at K={k}")
                estimate = estimate_rate(cfg_k, constellation, scenario.mc, pool)
                points.append(TargetPoint(float(k), estimate.mean, estimate.std_error))
        return points

    def _fit_points(self, scenario: Scenario, target: List[TargetPoint]) -> List[float]:
        settings = scenario.fit
        if settings.metric is FitMetric.RATE:
            return [p.x for p in target]
        if settings.fit_points_db:
            return [db_to_linear(db) for db in settings.fit_points_db]
        return select_fit_points(target)

    def fit(self, scenario: Scenario, target: Optional[List[TargetPoint]] = None) -> Tuple[FitResult, List[TargetPoint], Optional[float]]:
        """
        Fit N_eff to the scenario's target curve.

        Returns:
            (fit result, target curve, held-out MAE or None when every point was used)
        """
        settings = scenario.fit
        target = target if target is not None else self.target_curve(scenario)
        points = self._fit_points(scenario, target)
        spec = NeffFitSpec(thresholds=tuple(points), metric=settings.metric, n_lo=settings.n_lo,
                           n_hi=settings.n_hi, tolerance=settings.tolerance)
        result = fit_neff(target, scenario.cfg, spec)
        if settings.refine:
            result = refine_neff(result, target, scenario.cfg, spec)
            logger.info(f"Refined N_eff to {result.n_eff:.2f}")
        held_out = [p for p in target if all(abs(p.x - x) > 1e-12 * max(1.0, abs(x)) for x in points)]
        held_mae = mean_absolute_error(result.n_eff, held_out, scenario.cfg, spec) if held_out else None
        return result, target, held_mae

    def _axis(self, scenario: Scenario, x: float) -> float:
        return linear_to_db(x) if scenario.fit.metric is FitMetric.COVERAGE else x

    def write_curve(self, scenario: Scenario, result: FitResult, target: List[TargetPoint], stream: TextIO) -> None:
        """Fitted-versus-target table."""
        axis = "threshold_db" if scenario.fit.metric is FitMetric.COVERAGE else "n_channels"
        writer = csv.writer(stream, lineterminator="\r\n")
        writer.writerow([axis, "target", "target_stderr", "fitted"])
        for p in target:
            fitted = analytic_value(scenario.cfg, scenario.fit.metric, p.x, result.n_eff)
            writer.writerow([repr(self._axis(scenario, p.x)), repr(p.value), repr(p.std_error), repr(fitted)])

    def fit_neff(self, scenario: Scenario, output_file: Optional[str] = None,
                 curve_file: Optional[str] = None, stream: Optional[TextIO] = None) -> Dict[str, Any]:
        """
        Run the fit and report N_eff, its MAE and the held-out MAE.

        Args:
            scenario: loaded scenario with a [fit] section
            output_file: JSON report path (``stream`` when omitted)
            curve_file: optional CSV of fitted and target curves

        Returns:
            Dict[str, Any]: status dictionary with the report under ``details``
        """
        try:
            result, target, held_mae = self.fit(scenario)
        except FitError as e:
            logger.error(f"N_eff fit failed: {e}")
            best = e.best
            details = {"error_type": "numeric"}
            if best is not None:
                details.update({"n_eff": best.n_eff, "mae": best.mae})
            return {"status": "error", "message": f"N_eff fit failed: {str(e)}", "details": details}
        except DomainError as e:
            logger.error(f"N_eff fit rejected its inputs: {e}")
            return {"status": "error", "message": f"Invalid fit inputs: {str(e)}", "details": {"error_type": "config"}}
        except LeoCoverageError as e:
            logger.error(f"N_eff fit failed numerically: {e}")
            return {"status": "error", "message": f"N_eff fit failed: {str(e)}", "details": {"error_type": "numeric"}}

        report = {
            "fingerprint": fingerprint(scenario),
            "metric": scenario.fit.metric.value,
            "target": scenario.fit.target.value,
            "n_ref": scenario.cfg.net.n_sats,
            "n_eff": result.n_eff,
            "mae": result.mae,
            "held_out_mae": held_mae,
            "fit_points": [self._axis(scenario, x) for x in result.points],
            "evaluations": result.evaluations,
        }
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
        try:
            if output_file:
                with open(output_file, "w", encoding="utf-8") as f:
                    f.write(text)
            elif stream is not None:
                stream.write(text)
            if curve_file:
                directory = os.path.dirname(curve_file)
                if directory:
                    os.makedirs(directory, exist_ok=True)
                with open(curve_file, "w", encoding="utf-8", newline="") as f:
                    self.write_curve(scenario, result, target, f)
        except OSError as e:
            logger.error(f"Error writing fit output: {e}")
            return {"status": "error", "message": f"Error writing fit output: {str(e)}", "details": {"error_type": "io"}}
        return {"status": "success", "message": f"N_eff = {result.n_eff:.2f} (MAE {result.mae:.4g})", "details": report}
