import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapse_bounds.core import CODATA, MICROMAGNET, GasSpec, SphereSpec, ValidationError
from collapse_bounds.measurement import (FitError, PressureSeries, RingdownSeries,
                                         epstein_linewidth, fit_pressure_extrapolation,
                                         fit_ringdown, synthetic_pressure, synthetic_ringdown,
                                         thermal_velocity, thermomolecular_correct,
                                         trap_frequency)

TAU = 1.19e4


# ---------------------------------------------------------------- ringdown

def test_noiseless_ringdown_recovery():
    fit = fit_ringdown(synthetic_ringdown(TAU))
    assert fit.tau == pytest.approx(TAU, rel=1e-10)
    assert fit.gamma == pytest.approx(2 / TAU, rel=1e-10)
    assert fit.gamma == pytest.approx(1.681e-4, rel=5e-3)
    assert fit.gamma_linewidth_hz == pytest.approx(26.75e-6, rel=1e-3)
    assert fit.warnings == ()


def test_ringdown_monte_carlo_coverage():
    hits = 0
    for seed in range(1000):
        fit = fit_ringdown(synthetic_ringdown(TAU, n=200, duration=2 * TAU, rel_noise=0.05, seed=seed))
        hits += abs(fit.tau - TAU) <= 3 * fit.tau_sigma
    assert hits >= 990


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-6, max_value=6))
def test_ringdown_scale_equivariance(log_k):
    k = 10.0**log_k
    s = synthetic_ringdown(TAU, n=80, rel_noise=0.02, seed=3)
    a = fit_ringdown(s)
    b = fit_ringdown(RingdownSeries(s.t, s.amplitude * k, s.sigma * k))
    assert b.tau == pytest.approx(a.tau, rel=1e-12)
    assert b.tau_sigma == pytest.approx(a.tau_sigma, rel=1e-12)


def test_ringdown_deterministic():
    s = synthetic_ringdown(TAU, n=50, rel_noise=0.03, seed=9)
    assert fit_ringdown(s) == fit_ringdown(s)


def test_ringdown_degenerate_inputs():
    t = np.linspace(0, 1e4, 50)
    flat = RingdownSeries(t, np.ones(50), np.full(50, 1e-3))
    with pytest.raises(FitError):
        fit_ringdown(flat)
    with pytest.raises(ValidationError):
        RingdownSeries([0.0, 2.0, 1.0], [1.0, 0.9, 0.8], [0.1, 0.1, 0.1])
    with pytest.raises(ValidationError):
        RingdownSeries([0.0, 1.0], [1.0, 0.9], [0.0, 0.1])
    # low signal-to-noise
    with pytest.raises(FitError):
        fit_ringdown(RingdownSeries(t, np.exp(-t / TAU), np.full(50, 10.0)))


def test_ringdown_precondition_warnings():
    t = np.array([0.0, 1e3, 2e3])
    three = RingdownSeries(t, np.exp(-t / TAU), 1e-3 * np.ones(3))
    fit = fit_ringdown(three)
    assert any("samples" in w for w in fit.warnings)
    assert fit.tau == pytest.approx(TAU, rel=1e-8)


def test_noise_floor_inflates_errors():
    s = synthetic_ringdown(TAU, n=100, rel_noise=0.01, seed=1)
    plain = fit_ringdown(s)
    floored = fit_ringdown(RingdownSeries(s.t, s.amplitude, s.sigma, noise_floor=0.05))
    assert floored.tau_sigma != plain.tau_sigma


# ---------------------------------------------------------------- auxiliary physics

def test_thermomolecular():
    gas = GasSpec()
    assert thermomolecular_correct(1.0, gas) == pytest.approx(math.sqrt(4.2 / 300), rel=1e-15)
    assert thermomolecular_correct(1.0, gas) == pytest.approx(0.1183, abs=1e-4)
    assert thermomolecular_correct(0.0, gas) == 0.0
    same = GasSpec(temperature=300.0)
    assert thermomolecular_correct(0.37, same) == 0.37


def test_thermal_velocity_and_epstein():
    gas = GasSpec()
    assert thermal_velocity(gas) == pytest.approx(149.0, abs=0.1)
    slope = epstein_linewidth(1.0, MICROMAGNET, gas)
    assert slope == pytest.approx(3.8, rel=0.02)
    assert epstein_linewidth(0.0, MICROMAGNET, gas) == 0.0
    p = np.array([1e-4, 3e-4, 7e-3])
    assert np.allclose(epstein_linewidth(p, MICROMAGNET, gas), slope * p, rtol=1e-15, atol=0)


def test_trap_frequency():
    f0, z0 = trap_frequency(MICROMAGNET)
    assert f0 == pytest.approx(59.0, abs=0.2)
    assert z0 == pytest.approx(2.85e-4, rel=2e-3)
    # f0 ~ z0^(-1/2)
    assert math.sqrt(CODATA.g / (4 * z0)) / math.pi == pytest.approx(f0 / 2, rel=1e-14)
    with pytest.raises(ValidationError):
        trap_frequency(SphereSpec(1e-6, 1e3))


# ---------------------------------------------------------------- pressure fit

def test_pressure_noiseless_interpolation():
    p = np.geomspace(1e-5, 1e-3, 10)
    y = 5e-6 + 2.1 * p + 0.05 * p * p
    sigma = np.full_like(p, 1e-7)
    b = fit_pressure_extrapolation(PressureSeries(p, y, sigma))
    c0, c1, c2 = b.fit_coefficients
    resid = y - (c0 + c1 * p + c2 * p * p)
    assert np.max(np.abs(resid)) < 1e-12
    assert b.gamma0_linewidth_hz == pytest.approx(5e-6, rel=1e-6)


def test_pressure_synthetic_truth_recovery():
    truth = (5e-6, 2.1, 0.05)
    within = 0
    for seed in range(200):
        b = fit_pressure_extrapolation(synthetic_pressure(truth, seed=seed))
        sig = np.sqrt(np.diag(b.covariance))
        within += all(abs(c - t) <= 3 * s for c, t, s in zip(b.fit_coefficients, truth, sig))
    assert within >= 190


def test_pressure_bound_coverage():
    covered = sum(fit_pressure_extrapolation(synthetic_pressure(seed=s, pressures=np.geomspace(1e-5, 1e-3, 30))).gamma0_linewidth_hz >= 5e-6
                  for s in range(400))
    assert 0.85 <= covered / 400 <= 0.95


@pytest.mark.parametrize("family", ["normal", "t"])
def test_pressure_bound_monotone_in_confidence(family):
    base = synthetic_pressure(seed=4)
    bounds = [fit_pressure_extrapolation(PressureSeries(base.pressure, base.linewidth, base.sigma, c),
                                         quantile_family=family).gamma0_linewidth_hz
              for c in (0.6, 0.8, 0.9, 0.95, 0.99)]
    assert all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:]))


def test_pressure_rank_deficiency():
    p = np.full(6, 1e-4)
    with pytest.raises(ValidationError):
        fit_pressure_extrapolation(PressureSeries(p, p * 2.1, np.full(6, 1e-6)))
    with pytest.raises(ValidationError):
        fit_pressure_extrapolation(PressureSeries([1e-4, 2e-4, 3e-4], [1, 2, 3], [1, 1, 1]))


def test_pressure_band_and_units():
    b = fit_pressure_extrapolation(synthetic_pressure(seed=2))
    fit, half = b.band(np.array([0.0, 1e-4]))
    assert fit[0] == pytest.approx(b.fit_coefficients[0], rel=1e-12)
    assert np.all(half > 0)
    assert b.gamma0 == pytest.approx(2 * math.pi * b.gamma0_linewidth_hz, rel=1e-15)
    assert isinstance(b.gamma0_linewidth_hz, float)


def test_pressure_deterministic():
    s = synthetic_pressure(seed=5)
    a, b = fit_pressure_extrapolation(s), fit_pressure_extrapolation(s)
    assert a.fit_coefficients == b.fit_coefficients
    assert a.gamma0_linewidth_hz == b.gamma0_linewidth_hz
