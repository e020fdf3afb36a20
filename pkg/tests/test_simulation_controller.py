import csv
import io
import json
import math
from dataclasses import replace
from unittest.mock import patch

import pytest

from src.controllers.scenario_controller import FitTarget, load_config_text
from src.controllers.simulation_controller import SimulationController
from src.errors import FitError, QuadratureError
from src.neff import FitMetric, FitResult, TargetPoint
from src.simkit import ConstellationKind, MCEstimate

SCENARIO = """\
[mc]
n_trials = 300
seed = 11
n_workers = 1

[fit]
metric = coverage
target = bpp
thresholds_db = -10:30:10
n_lo = 100
n_hi = 3000
"""


def synthetic_value(cfg, metric, x, n_sats):
    return math.exp(-x * n_sats / 1000.0)


def synthetic_curve(n_sats, xs):
    return [TargetPoint(x, synthetic_value(None, None, x, n_sats), 0.001) for x in xs]


@pytest.fixture
def scenario():
    return load_config_text(SCENARIO)


@pytest.fixture
def controller():
    return SimulationController(workers=1)


@pytest.fixture
def fake_analytics():
    with patch('src.neff.analytic_value', side_effect=synthetic_value), \
         patch('src.controllers.simulation_controller.analytic_value', side_effect=synthetic_value):
        yield


def test_target_curve_from_bpp_simulation(controller, scenario):
    estimates = [MCEstimate(0.9 - 0.2 * i, 0.01, 300) for i in range(5)]
    with patch('src.controllers.simulation_controller.estimate_coverage', return_value=estimates) as mock_mc:
        target = controller.target_curve(scenario)
    constellation = mock_mc.call_args.args[1]
    assert constellation.kind is ConstellationKind.BPP
    assert mock_mc.call_args.args[2] == pytest.approx([0.1, 1.0, 10.0, 100.0, 1000.0])
    assert [p.value for p in target] == pytest.approx([0.9, 0.7, 0.5, 0.3, 0.1])
    assert all(p.std_error == 0.01 for p in target)


def test_target_curve_from_walker_rate(controller, scenario):
    scenario = replace(scenario, fit=replace(scenario.fit, metric=FitMetric.RATE, target=FitTarget.WALKER,
                                             n_channels_values=(10, 20)))
    with patch('src.controllers.simulation_controller.estimate_rate',
               return_value=MCEstimate(0.2, 0.001, 300)) as mock_mc:
        target = controller.target_curve(scenario)
    assert [p.x for p in target] == [10.0, 20.0]
    assert [c.args[0].net.n_channels for c in mock_mc.call_args_list] == [10, 20]
    assert mock_mc.call_args.args[1].kind is ConstellationKind.WALKER


def test_analytic_target_needs_no_simulation(controller, scenario):
    scenario = replace(scenario, fit=replace(scenario.fit, target=FitTarget.ANALYTIC, thresholds_db=(0.0,)))
    with patch('src.controllers.simulation_controller.coverage', return_value=0.4) as mock_cov, \
         patch('src.controllers.simulation_controller.estimate_coverage') as mock_mc:
        target = controller.target_curve(scenario)
    assert target == [TargetPoint(1.0, 0.4)]
    mock_cov.assert_called_once()
    mock_mc.assert_not_called()


def test_fit_reports_held_out_error(controller, scenario, fake_analytics):
    xs = [0.1, 1.0, 10.0]
    scenario = replace(scenario, fit=replace(scenario.fit, fit_points_db=(-10.0, 0.0)))
    target = synthetic_curve(700.0, xs)
    result, curve, held_mae = controller.fit(scenario, target)
    assert result.n_eff == pytest.approx(700.0, rel=1e-4)
    assert curve is target
    assert held_mae == pytest.approx(0.0, abs=1e-6)


def test_fit_without_held_out_points(controller, scenario, fake_analytics):
    scenario = replace(scenario, fit=replace(scenario.fit, metric=FitMetric.RATE, n_lo=10.0))
    target = [TargetPoint(k, synthetic_value(None, None, k, 400.0)) for k in (0.5, 1.0, 2.0)]
    result, _, held_mae = controller.fit(scenario, target)
    assert held_mae is None
    assert result.n_eff == pytest.approx(400.0, rel=1e-4)


def test_fit_neff_writes_report_and_curve(controller, scenario, fake_analytics, tmp_path):
    target = synthetic_curve(650.0, [0.1, 1.0, 10.0, 100.0])
    report_file = tmp_path / 'fit.json'
    curve_file = tmp_path / 'curves' / 'fit.csv'
    with patch.object(SimulationController, 'target_curve', return_value=target):
        result = controller.fit_neff(scenario, output_file=str(report_file), curve_file=str(curve_file))
    assert result["status"] == "success"
    report = json.loads(report_file.read_text())
    assert report["n_eff"] == pytest.approx(650.0, rel=1e-3)
    assert report["target"] == "bpp" and report["metric"] == "coverage"
    assert report["n_ref"] == 720
    assert result["details"] == report
    rows = list(csv.reader(io.StringIO(curve_file.read_text())))
    assert rows[0] == ["threshold_db", "target", "target_stderr", "fitted"]
    assert len(rows) == 5
    assert float(rows[2][0]) == pytest.approx(0.0)


def test_fit_neff_streams_report(controller, scenario, fake_analytics):
    stream = io.StringIO()
    with patch.object(SimulationController, 'target_curve', return_value=synthetic_curve(900.0, [0.1, 1.0, 10.0])):
        result = controller.fit_neff(scenario, stream=stream)
    assert json.loads(stream.getvalue())["fingerprint"] == result["details"]["fingerprint"]


def test_fit_neff_failure_is_numeric(controller, scenario):
    best = FitResult(n_eff=812.0, mae=0.2)
    with patch.object(SimulationController, 'fit', side_effect=FitError("MAE too large", best=best)):
        result = controller.fit_neff(scenario)
    assert result["status"] == "error"
    assert result["details"] == {"error_type": "numeric", "n_eff": 812.0, "mae": 0.2}


def test_fit_neff_quadrature_failure(controller, scenario):
    with patch.object(SimulationController, 'fit', side_effect=QuadratureError("no convergence")):
        result = controller.fit_neff(scenario)
    assert result["details"]["error_type"] == "numeric"


def test_fit_neff_bad_fit_points_are_config_errors(controller, scenario, fake_analytics):
    scenario = replace(scenario, fit=replace(scenario.fit, fit_points_db=(3.0,)))
    with patch.object(SimulationController, 'target_curve', return_value=synthetic_curve(700.0, [0.1, 1.0])):
        result = controller.fit_neff(scenario)
    assert result["details"]["error_type"] == "config"
