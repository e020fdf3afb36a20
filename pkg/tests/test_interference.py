import math

import numpy as np
import pytest
from scipy.special import erfc, gamma, gammaincc

from src.errors import DomainError, UnsupportedAlphaError
from src.geometry import GeometryParams
from src.interference import (FadingModel, InterferenceContext, Normalization, laplace_gain,
                              laplace_interference, laplace_nonfading, laplace_nonfading_gamma,
                              laplace_rayleigh_closed, upper_incomplete_gamma)
from src.metrics import RadioParams, ScenarioConfig
from src.simkit import sample_conditional_interference
from src.visibility import NetworkParams, prob_zero_interference

# s values where s * p * g(r) spans the transition region for each exponent
S_GRID = {2.0: np.geomspace(1e3, 1e7, 6), 4.0: np.geomspace(1e10, 1e13, 6)}


def make_ctx(geom, net, alpha=4.0, fading=None, **kwargs):
    return InterferenceContext(geom=geom, net=net, p_interf=10.0, alpha=alpha,
                               fading=fading or FadingModel.rayleigh(), **kwargs)


def test_fading_gain_transforms():
    assert laplace_gain(FadingModel.rayleigh(), 1.0) == pytest.approx(0.5)
    value = laplace_gain(FadingModel.non_fading(), 1j)
    assert value.real == pytest.approx(0.5403, abs=1e-4)
    assert value.imag == pytest.approx(-0.8415, abs=1e-4)
    assert laplace_gain(FadingModel.nakagami(1.0), 3.0) == pytest.approx(0.25)
    assert laplace_gain(FadingModel.nakagami(2.0), 2.0) == pytest.approx(0.25)


def test_custom_fading_checks_transform_at_zero():
    model = FadingModel.custom_laplace(lambda z: 1.0 / (1.0 + z))
    assert laplace_gain(model, 1.0) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        FadingModel.custom_laplace(lambda z: 2.0 / (1.0 + z))
    with pytest.raises(DomainError):
        FadingModel.nakagami(0.2)


def test_custom_fading_without_sampler_cannot_simulate():
    model = FadingModel.custom_laplace(lambda z: 1.0 / (1.0 + z))
    with pytest.raises(DomainError):
        model.sample(np.random.default_rng(0), (3,))


def test_fading_samples_have_unit_mean():
    rng = np.random.default_rng(3)
    for model in (FadingModel.rayleigh(), FadingModel.non_fading(), FadingModel.nakagami(3.0)):
        assert model.sample(rng, (200000,)).mean() == pytest.approx(1.0, abs=0.01)
    assert FadingModel.nakagami(4.0).sample(rng, (200000,)).var() == pytest.approx(0.25, abs=0.01)


@pytest.mark.parametrize("alpha", [2.0, 4.0])
def test_closed_form_matches_quadrature_single_interferer(geom, alpha):
    net = NetworkParams(n_sats=40, n_channels=20)
    ctx = make_ctx(geom, net, alpha=alpha)
    for r0 in np.linspace(geom.altitude, 0.95 * geom.max_range, 5):
        s = S_GRID[alpha]
        closed = laplace_rayleigh_closed(ctx, r0, s)
        numeric = np.real(laplace_interference(ctx, r0, s))
        np.testing.assert_allclose(closed, numeric, rtol=1e-8)


@pytest.mark.parametrize("alpha", [2.0, 4.0])
def test_closed_form_matches_quadrature_full_mix(geom, net, alpha):
    ctx = make_ctx(geom, net, alpha=alpha)
    for r0 in (geom.altitude, 1600e3, 2500e3):
        s = S_GRID[alpha]
        np.testing.assert_allclose(laplace_rayleigh_closed(ctx, r0, s),
                                   np.real(laplace_interference(ctx, r0, s)), rtol=1e-7)


def test_closed_form_restrictions(geom, net):
    with pytest.raises(UnsupportedAlphaError):
        laplace_rayleigh_closed(make_ctx(geom, net, alpha=3.0), 1500e3, 1e12)
    with pytest.raises(DomainError):
        laplace_rayleigh_closed(make_ctx(geom, net, fading=FadingModel.non_fading()), 1500e3, 1e12)
    with pytest.raises(DomainError):
        laplace_rayleigh_closed(make_ctx(geom, net), 1500e3, -1.0)


def test_normalized_transform_is_one_at_zero(geom, net):
    ctx = make_ctx(geom, net)
    assert laplace_interference(ctx, 1500e3, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_transform_decreases_along_real_axis(geom, net):
    ctx = make_ctx(geom, net)
    values = np.real(laplace_interference(ctx, 1500e3, np.geomspace(1e10, 1e15, 8)))
    assert np.all(np.diff(values) < 0)
    assert np.all((values > 0) & (values <= 1))


def test_literal_scaling_is_smaller(geom, net):
    normalized = make_ctx(geom, net)
    literal = make_ctx(geom, net, normalization=Normalization.UNNORMALIZED)
    for s in (0.0, 1e12):
        lit = np.real(laplace_interference(literal, 1500e3, s))
        assert 0.0 < lit < np.real(laplace_interference(normalized, 1500e3, s))


def test_no_co_channel_satellites(geom):
    net = NetworkParams(n_sats=20, n_channels=20)
    assert laplace_interference(make_ctx(geom, net), 1500e3, 1e12) == pytest.approx(1.0)
    literal = make_ctx(geom, net, normalization=Normalization.UNNORMALIZED)
    assert laplace_interference(literal, 1500e3, 1e12) == pytest.approx(0.0)


def test_serving_at_horizon_leaves_single_interferer_term(geom, net):
    ctx = make_ctx(geom, net)
    r0 = geom.max_range
    s = 1e12
    expected = 1.0 / (1.0 + s * ctx.p_interf * float(ctx.path_gain(r0)))
    assert np.real(laplace_interference(ctx, r0, s)) == pytest.approx(expected, rel=1e-10)
    literal = make_ctx(geom, net, normalization=Normalization.UNNORMALIZED)
    assert laplace_interference(literal, r0, s) == pytest.approx(0.0)


def test_serving_distance_out_of_range(geom, net):
    ctx = make_ctx(geom, net)
    with pytest.raises(DomainError):
        laplace_interference(ctx, geom.altitude * 0.5, 1e12)
    with pytest.raises(DomainError):
        laplace_interference(ctx, geom.max_range * 1.01, 1e12)


def test_fractional_reuse(geom):
    fractional = NetworkParams(n_sats=720.0001, n_channels=20)
    with pytest.raises(DomainError):
        laplace_interference(make_ctx(geom, fractional), 1500e3, 1e12)
    near = laplace_interference(make_ctx(geom, fractional, allow_fractional=True), 1500e3, 1e12)
    exact = laplace_interference(make_ctx(geom, NetworkParams(n_sats=720, n_channels=20)), 1500e3, 1e12)
    assert near.real == pytest.approx(exact.real, abs=1e-4)


def test_nakagami_one_matches_rayleigh(geom, net):
    s = np.geomspace(1e11, 1e13, 4)
    rayleigh = laplace_interference(make_ctx(geom, net), 1500e3, s)
    nakagami = laplace_interference(make_ctx(geom, net, fading=FadingModel.nakagami(1.0)), 1500e3, s)
    np.testing.assert_allclose(np.real(nakagami), np.real(rayleigh), rtol=1e-9)


def test_upper_incomplete_gamma():
    assert upper_incomplete_gamma(1.5, 0.7) == pytest.approx(gammaincc(1.5, 0.7) * gamma(1.5), rel=1e-9)
    x = 0.8
    # Gamma(-1/2, x) from Gamma(1/2, x) by the recurrence
    expected = (math.sqrt(math.pi) * erfc(math.sqrt(x)) - math.exp(-x) / math.sqrt(x)) / -0.5
    assert upper_incomplete_gamma(-0.5, x) == pytest.approx(expected, rel=1e-8)
    with pytest.raises(DomainError):
        upper_incomplete_gamma(-0.5, 0.0)


@pytest.mark.parametrize("alpha", [2.0, 4.0])
def test_nonfading_gamma_form_matches_quadrature(geom, net, alpha):
    ctx = make_ctx(geom, net, alpha=alpha, fading=FadingModel.non_fading())
    for r0 in (geom.altitude, 2000e3, 3500e3):
        for s in S_GRID[alpha][1:5]:
            numeric = np.real(laplace_nonfading(ctx, r0, s))
            assert laplace_nonfading_gamma(ctx, r0, s) == pytest.approx(numeric, rel=1e-7)


def test_laplace_nonfading_requires_nonfading_channels(geom, net):
    with pytest.raises(DomainError):
        laplace_nonfading(make_ctx(geom, net), 1500e3, 1e12)


def test_transform_matches_simulated_interference(geom, net):
    radio = RadioParams(alpha=4.0)
    cfg = ScenarioConfig(geom=geom, net=net, radio=radio)
    ctx = cfg.interference_context()
    r0, s = 1500e3, 2e12
    interference, counts = sample_conditional_interference(geom, net, radio, r0, 20000,
                                                           np.random.default_rng(5))
    p0 = prob_zero_interference(geom, net, r0)
    assert np.mean(counts == 0) == pytest.approx(p0, abs=0.01)
    simulated = np.mean(np.exp(-s * interference))
    analytic = p0 + (1.0 - p0) * np.real(laplace_interference(ctx, r0, s))
    assert simulated == pytest.approx(analytic, abs=0.01)


def test_custom_transform_with_other_geometry():
    geom = GeometryParams(altitude=550e3)
    net = NetworkParams(n_sats=1584, n_channels=22)
    custom = FadingModel.custom_laplace(lambda z: 1.0 / (1.0 + z), name="exp")
    ctx = make_ctx(geom, net, fading=custom)
    ref = make_ctx(geom, net)
    assert np.real(laplace_interference(ctx, 700e3, 1e11)) == pytest.approx(
        np.real(laplace_interference(ref, 700e3, 1e11)), rel=1e-12)
