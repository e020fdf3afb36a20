import csv
import io
from dataclasses import replace
from unittest.mock import Mock, patch

import pytest

from src.controllers.scenario_controller import SweepOutput, SweepVariable, fingerprint, load_config_text
from src.controllers.sweep_controller import (ResultRow, SweepController, evaluate_row, output_columns,
                                              scenario_at)
from src.errors import DomainError, QuadratureError
from src.simkit import ConstellationKind, MCEstimate

SCENARIO = """\
[mc]
n_trials = 200
seed = 5
block_size = 64
n_workers = 1

[sweep]
variable = threshold_db
values = 0, 10
outputs = analytic_coverage, mc_coverage, mc_rate
kinds = bpp
"""


@pytest.fixture
def scenario():
    return load_config_text(SCENARIO)


@pytest.fixture
def controller():
    return SweepController(workers=1)


@pytest.fixture
def mock_analytics():
    with patch('src.controllers.sweep_controller.coverage', return_value=0.25) as cov, \
         patch('src.controllers.sweep_controller.rate', return_value=0.125) as rt, \
         patch('src.controllers.sweep_controller.estimate_all') as mc:
        mc.return_value = ([MCEstimate(0.5, 0.01, 200)], MCEstimate(0.0625, 0.002, 200))
        yield Mock(coverage=cov, rate=rt, estimate_all=mc)


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


def test_output_columns_fixed_order():
    outputs = (SweepOutput.MC_RATE, SweepOutput.ANALYTIC_COVERAGE, SweepOutput.MC_COVERAGE)
    kinds = (ConstellationKind.WALKER, ConstellationKind.BPP)
    values, errors = output_columns(outputs, kinds)
    assert values == ["analytic_coverage", "mc_coverage", "mc_coverage_walker", "mc_rate", "mc_rate_walker"]
    assert errors == ["mc_coverage_stderr", "mc_coverage_walker_stderr", "mc_rate_stderr", "mc_rate_walker_stderr"]


def test_scenario_at_each_variable(scenario):
    same, t = scenario_at(scenario, 7.0)
    assert same is scenario and t == 7.0

    channels = replace(scenario, sweep=replace(scenario.sweep, variable=SweepVariable.N_CHANNELS, threshold_db=3.0))
    point, t = scenario_at(channels, 45)
    assert point.cfg.net.n_channels == 45 and t == 3.0

    altitude = replace(scenario, sweep=replace(scenario.sweep, variable=SweepVariable.ALTITUDE_KM),
                       walker=replace(scenario.walker, altitude=1200e3))
    point, _ = scenario_at(altitude, 800.0)
    assert point.cfg.geom.altitude == pytest.approx(800e3)
    assert point.walker.altitude == pytest.approx(800e3)

    latitude = replace(scenario, sweep=replace(scenario.sweep, variable=SweepVariable.USER_LATITUDE_DEG))
    point, _ = scenario_at(latitude, 45.0)
    assert point.user.latitude_deg == 45.0


def test_evaluate_row_collects_outputs(scenario, mock_analytics):
    row = evaluate_row(scenario, 10.0)
    assert row.error == ""
    assert row.values == {"analytic_coverage": 0.25, "mc_coverage": 0.5, "mc_rate": 0.0625}
    assert row.std_errors == {"mc_coverage_stderr": 0.01, "mc_rate_stderr": 0.002}
    threshold = mock_analytics.coverage.call_args.args[1]
    assert threshold.value == pytest.approx(10.0)


def test_evaluate_row_records_failures(scenario, mock_analytics):
    mock_analytics.coverage.side_effect = QuadratureError("did not converge", term="rayleigh coverage")
    row = evaluate_row(scenario, 0.0)
    assert row.error.startswith("QuadratureError: did not converge")
    assert "analytic_coverage" not in row.values


def test_row_fingerprints_differ_per_value(scenario, mock_analytics):
    assert evaluate_row(scenario, 0.0).fingerprint != evaluate_row(scenario, 10.0).fingerprint
    assert evaluate_row(scenario, 0.0).fingerprint == evaluate_row(scenario, 0.0).fingerprint


def test_run_sweep_writes_csv(controller, scenario, mock_analytics):
    stream = io.StringIO()
    result = controller.run_sweep(scenario, stream=stream)
    assert result["status"] == "success"
    assert result["details"]["rows"] == 2
    assert result["details"]["fingerprint"] == fingerprint(scenario)
    text = stream.getvalue()
    assert text == result["details"]["csv"]
    assert "\r\n" in text
    rows = read_csv(text)
    assert rows[0] == ["swept_value", "analytic_coverage", "mc_coverage", "mc_rate",
                       "mc_coverage_stderr", "mc_rate_stderr", "error"]
    assert rows[1] == ["0.0", "0.25", "0.5", "0.0625", "0.01", "0.002", ""]
    assert [r[0] for r in rows[1:]] == ["0.0", "10.0"]


def test_run_sweep_continues_after_failed_row(controller, scenario, mock_analytics):
    mock_analytics.coverage.side_effect = [QuadratureError("boom"), 0.3]
    result = controller.run_sweep(scenario, stream=io.StringIO())
    assert result["status"] == "error"
    assert result["details"]["error_type"] == "numeric"
    assert result["details"]["failed_rows"] == [0.0]
    rows = read_csv(result["details"]["csv"])
    assert rows[1][1] == "" and rows[1][-1].startswith("QuadratureError")
    assert rows[2][1] == "0.3" and rows[2][-1] == ""


def test_run_sweep_to_file(controller, scenario, mock_analytics, tmp_path):
    out = tmp_path / 'sweep.csv'
    result = controller.run_sweep(scenario, output_file=str(out))
    assert result["status"] == "success"
    assert out.read_bytes().decode("utf-8") == result["details"]["csv"]


def test_run_sweep_reports_write_failure(controller, scenario, mock_analytics):
    with patch('builtins.open', side_effect=OSError("read-only")):
        result = controller.run_sweep(scenario, output_file="sweep.csv")
    assert result["status"] == "error"
    assert result["details"]["error_type"] == "io"


def test_run_sweep_reports_bad_start(controller, scenario):
    with patch.object(SweepController, 'run_rows', side_effect=DomainError("no workers")):
        result = controller.run_sweep(scenario)
    assert result["details"]["error_type"] == "config"


def test_rows_use_pool_when_enough_rows(scenario, mock_analytics):
    pool = Mock()
    pool.map.side_effect = lambda fn, tasks: [ResultRow(v, {}, {}, "fp") for _, v in tasks]
    with patch('src.controllers.sweep_controller.worker_manager.get_worker_pool', return_value=pool):
        rows = SweepController(workers=2).run_rows(scenario)
    assert [r.swept_value for r in rows] == [0.0, 10.0]
    pool.map.assert_called_once()


def test_sweep_is_reproducible(controller, scenario):
    first = controller.run_sweep(scenario, stream=io.StringIO())
    second = controller.run_sweep(scenario, stream=io.StringIO())
    assert first["status"] == "success"
    assert first["details"]["csv"] == second["details"]["csv"]
    rows = read_csv(first["details"]["csv"])
    assert 0.0 < float(rows[1][1]) < 1.0
    assert float(rows[1][1]) > float(rows[2][1])


def test_channel_sweep_needs_fractional_reuse(controller):
    text = ("[sweep]\nvariable = n_channels\nvalues = 20, 25\noutputs = analytic_coverage\n"
            "threshold_db = 5\n\n[numerics]\nabs_tol = 1e-8\nrel_tol = 1e-7\n")
    strict = controller.run_sweep(load_config_text(text), stream=io.StringIO())
    assert strict["status"] == "error"
    assert strict["details"]["failed_rows"] == [25.0]

    relaxed = controller.run_sweep(load_config_text(text + "fractional_reuse = true\n"), stream=io.StringIO())
    assert relaxed["status"] == "success"
    rows = read_csv(relaxed["details"]["csv"])
    # fewer satellites share each channel at K = 25
    assert 0.0 < float(rows[1][1]) < float(rows[2][1]) < 1.0
