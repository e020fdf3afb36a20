import os
import textwrap
from unittest.mock import patch

import pytest

from src.controllers.scenario_controller import (DEFAULTS, FitTarget, ScenarioController, SweepOutput,
                                                 SweepVariable, emit_config, fingerprint, load_config,
                                                 load_config_text)
from src.errors import ConfigError
from src.interference import FadingKind, Normalization
from src.metrics import Decomposition
from src.neff import FitMetric
from src.simkit import ConstellationKind

DEFAULTS_FILE = textwrap.dedent("""\
    # reference scenario
    [geometry]
    earth_radius_km = 6371
    altitude_km = 1200

    [radio]
    p_serve_w = 10
    p_interf_w = 10
    noise_dbm = -98
    alpha = 4
    serving_fading = rayleigh

    [network]
    n_sats = 720
    n_channels = 20

    [mc]
    n_trials = 1000
    seed = 7

    [sweep]
    variable = threshold_db
    values = -10:30:5
    outputs = analytic_coverage, mc_coverage
    kinds = bpp, walker
    """)


@pytest.fixture
def controller():
    return ScenarioController()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / 'scenario.ini'
    path.write_text(DEFAULTS_FILE)
    return str(path)


def test_load_reference_scenario(config_file):
    scenario = load_config(config_file)
    cfg = scenario.cfg
    assert cfg.net.n_sats == 720 and cfg.net.n_channels == 20
    assert cfg.geom.altitude == pytest.approx(1200e3)
    assert cfg.radio.noise_power == pytest.approx(1.585e-13, rel=1e-3)
    assert cfg.radio.interfering_fading.kind is FadingKind.RAYLEIGH
    assert cfg.laplace_normalization is Normalization.CONDITIONAL_NORMALIZED
    assert cfg.decomposition is Decomposition.INSIDE_INTEGRAL
    assert scenario.sweep.values == (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    assert scenario.sweep.outputs == (SweepOutput.ANALYTIC_COVERAGE, SweepOutput.MC_COVERAGE)
    assert scenario.sweep.kinds == (ConstellationKind.BPP, ConstellationKind.WALKER)
    assert scenario.mc.seed == 7
    assert scenario.requested_workers is None


def test_empty_text_gives_defaults():
    scenario = load_config_text("")
    assert scenario.sweep.variable is SweepVariable.THRESHOLD_DB
    assert scenario.fit.metric is FitMetric.COVERAGE
    assert scenario.fit.target is FitTarget.WALKER
    assert scenario.walker.n_sats == 720


def test_more_channels_than_satellites_names_line():
    text = "[network]\nn_sats = 20\nn_channels = 30\n"
    with pytest.raises(ConfigError) as exc_info:
        load_config_text(text, "bad.ini")
    assert exc_info.value.line == 3
    assert str(exc_info.value).startswith("bad.ini:3: ")
    assert "n_channels" in str(exc_info.value)


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as exc_info:
        load_config_text("[radio]\npower = 3\n")
    assert exc_info.value.key == "power"
    assert exc_info.value.line == 2
    with pytest.raises(ConfigError):
        load_config_text("[antenna]\ngain = 3\n")


def test_parse_error_has_location():
    with pytest.raises(ConfigError) as exc_info:
        load_config_text("[radio\nalpha = 4\n", "broken.ini")
    assert "broken.ini" in str(exc_info.value)


def test_bad_values_rejected():
    with pytest.raises(ConfigError, match="expected a number"):
        load_config_text("[radio]\nalpha = four\n")
    with pytest.raises(ConfigError, match="not one of"):
        load_config_text("[numerics]\nnormalization = fancy\n")
    with pytest.raises(ConfigError, match="strictly increasing"):
        load_config_text("[sweep]\nvalues = 3, 1\n")
    with pytest.raises(ConfigError):
        load_config_text("[walker]\naltitude_km = 550\n")
    with pytest.raises(ConfigError, match="n_lo"):
        load_config_text("[fit]\nn_lo = 900\nn_hi = 100\n")


def test_fading_spellings():
    scenario = load_config_text("[radio]\nserving_fading = nonfading\ninterfering_fading = nakagami:2\n")
    assert scenario.cfg.radio.serving_fading.kind is FadingKind.NON_FADING
    assert scenario.cfg.radio.interfering_fading.nakagami_m == 2.0
    with pytest.raises(ConfigError):
        load_config_text("[radio]\nserving_fading = rician\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="does not exist"):
        load_config("/nonexistent/scenario.ini")


def test_fractional_reuse_flag():
    assert load_config_text("").cfg.allow_fractional_reuse is False
    scenario = load_config_text("[numerics]\nfractional_reuse = true\n")
    assert scenario.cfg.allow_fractional_reuse is True
    assert fingerprint(scenario) != fingerprint(load_config_text(""))
    assert "fractional_reuse = true" in emit_config(scenario)
    assert fingerprint(load_config_text(emit_config(scenario))) == fingerprint(scenario)


def test_fingerprint_stable_and_seed_sensitive(config_file, controller):
    a = controller.load(config_file)
    b = controller.load(config_file)
    assert fingerprint(a) == fingerprint(b)
    assert len(fingerprint(a)) == 16
    assert fingerprint(controller.load(config_file, seed=8)) != fingerprint(a)


def test_fingerprint_ignores_spelling_and_workers(config_file, controller):
    respelled = DEFAULTS_FILE.replace("alpha = 4", "alpha = 4.000").replace("n_sats = 720", "n_sats = 7.2e2")
    assert fingerprint(load_config_text(respelled)) == fingerprint(load_config(config_file))
    assert fingerprint(controller.load(config_file, workers=4)) == fingerprint(controller.load(config_file))


def test_emit_config_round_trip(config_file, tmp_path, controller):
    scenario = controller.load(config_file, seed=99, workers=2)
    out = tmp_path / 'emitted.ini'
    result = controller.write_config(scenario, str(out))
    assert result["status"] == "success"
    reloaded = load_config(str(out))
    assert fingerprint(reloaded) == fingerprint(scenario)
    assert reloaded.mc.seed == 99
    assert reloaded.requested_workers == 2
    assert set(load_config_text(emit_config(scenario)).settings) == set(DEFAULTS)


def test_write_config_reports_io_error(controller):
    scenario = controller.load(None)
    with patch('builtins.open', side_effect=OSError("disk full")):
        result = controller.write_config(scenario, "out.ini")
    assert result["status"] == "error"
    assert result["details"]["error_type"] == "io"


def test_overrides(controller, config_file):
    scenario = controller.load(config_file, seed=3, workers=5)
    assert scenario.mc.seed == 3
    assert scenario.mc.n_workers == 5
    assert scenario.requested_workers == 5
    with pytest.raises(ConfigError):
        controller.load(config_file, workers=0)


def test_scenarios_are_tracked(controller, config_file):
    controller.load(config_file)
    controller.load(None)
    assert controller.list_scenarios() == [config_file, "<defaults>"]
    assert controller.get_scenario(config_file) is not None
    assert controller.get_scenario("other.ini") is None


def test_describe(controller, config_file):
    details = controller.describe(controller.load(config_file))
    assert details["n_sats"] == 720
    assert details["altitude_km"] == pytest.approx(1200.0)
    assert details["serving_fading"] == "rayleigh"
    assert details["normalization"] == "normalized"


def test_walker_constellation_from_scenario(config_file):
    scenario = load_config(config_file)
    walker = scenario.constellation(ConstellationKind.WALKER)
    assert walker.walker.n_sats == 720
    assert scenario.constellation(ConstellationKind.BPP).walker is None
    assert os.path.basename(scenario.path) == 'scenario.ini'
