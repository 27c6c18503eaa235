import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eplab import DecayRateFit, DomainError, Grid, InsufficientData, fit_decay_rate, solve_linear_poisson
from eplab.diagnostics import (
    DiagnosticsRecord, boltzmann_deviation_bound_check, energy_dissipation_residual,
    entropy_density, fit_norms, free_energy, ion_constants, momentum_check, sobolev_chain,
    sup_norm_suite,
)

TWO_PI = 2.0 * np.pi


def record(t, E, dissipation, work=0.0):
    return DiagnosticsRecord(
        t=t, sup_norms={}, E=E, C_cross=0.0, momentum=0.0, neutrality_residual=0.0,
        energy_dissipation_residual=0.0, y_sup=0.0, dissipation=dissipation, background_work=work,
    )


def test_free_energy_examples(grid64):
    one, zero = grid64.constant(1.0), grid64.zeros()
    assert free_energy(one, zero, zero) == 0.0
    assert free_energy(one, grid64.constant(0.2), zero) == pytest.approx(0.02, abs=1e-15)


def test_entropy_density_values():
    vals = entropy_density(np.array([-1.0, 0.5, 2.0]))
    np.testing.assert_allclose(vals, [1 - 2 / np.e, 1 - 0.5 * np.exp(0.5), np.exp(2) + 1], rtol=1e-14)
    np.testing.assert_allclose(vals, [0.2642, 0.1756, 8.389], atol=1e-3)


@given(st.floats(-5, 5))
def test_entropy_density_nonnegative_and_accurate(phi):
    v = float(entropy_density(np.array([phi]))[0])
    assert v >= 0.0
    ref = math.fsum([math.exp(phi) * phi, -math.exp(phi), 1.0])
    assert v == pytest.approx(ref, rel=1e-8, abs=1e-15)


def test_sup_norm_suite_single_mode():
    g = Grid(128)
    rho = g.sample(lambda x: 1.0 + 0.1 * np.sin(TWO_PI * x))
    c = g.constant(1.0)
    phi = solve_linear_poisson(rho, c)
    norms = sup_norm_suite(rho, g.zeros(), phi, 1.0, c)
    assert norms["rho_minus_cbar"] == pytest.approx(0.1, abs=1e-12)
    assert norms["dxx_phi"] == pytest.approx(0.1, abs=1e-12)
    assert norms["dx_phi"] == pytest.approx(0.1 / TWO_PI, abs=1e-12)
    assert norms["u"] == 0.0 and norms["dx_u"] == 0.0
    a, b, cc = sobolev_chain(rho, c, phi)
    assert a <= b <= cc
    assert b == pytest.approx(0.1 * 2 / np.pi, rel=1e-3)


def test_sup_norm_suite_equilibrium(grid64):
    z = grid64.zeros()
    norms = sup_norm_suite(grid64.constant(1.0), z, z, 1.0)
    assert all(v == 0.0 for v in norms.values())


def test_ion_constants_examples():
    k = ion_constants(1.0, 0.5, 2.0, 1.0, 0.02)
    assert k.Lambda == pytest.approx(12.0)
    assert k.lambda_ion == pytest.approx(1.0 / 12.0)
    assert k.A == pytest.approx(0.2)
    assert k.kappa == pytest.approx(0.045734, abs=1e-6)
    assert k.rate_pred == pytest.approx(0.030489, abs=1e-6)
    assert k.Cstar == pytest.approx(math.sqrt(2) * math.exp(0.2))
    k = ion_constants(1.0, 1.0, 1.0, 0.0, 0.0)
    assert k.Lambda == pytest.approx(3.0) and k.kappa == pytest.approx(1 / 3)
    assert k.rate_pred == pytest.approx(2 / 9)
    with pytest.raises(DomainError):
        ion_constants(1.0, 1.5, 2.0, 1.0, 0.0)


@given(st.floats(0.1, 3.0), st.floats(0.05, 1.0), st.floats(1.0, 3.0), st.floats(0, 2), st.floats(0, 1))
def test_ion_constants_invariants(nu, rm, rp, M, E0):
    k = ion_constants(nu, rm, rp, M, E0)
    assert k.Lambda >= 2.0
    assert k.lambda_ion <= rm / 2 and k.kappa <= k.lambda_ion
    assert k.rate_pred == pytest.approx(2 * k.kappa / 3)


def test_momentum_check():
    t = np.linspace(0, 2, 21)
    rep = momentum_check(t, 0.5 * np.exp(-t), 1.0)
    assert rep.max_deviation < 1e-15
    assert rep.predicted[-1] == pytest.approx(0.067668, abs=1e-6)
    assert momentum_check(t, np.zeros_like(t), 1.0).max_deviation == 0.0


def test_fit_exact_exponential():
    t = np.arange(0, 10.05, 0.1)
    fit = fit_decay_rate(t, 2.0 * np.exp(-0.5 * t), burn_in=0.0)
    assert fit.C == pytest.approx(2.0, abs=1e-10)
    assert fit.r == pytest.approx(0.5, abs=1e-10)
    assert fit.quality == pytest.approx(1.0, abs=1e-12)


def test_fit_perturbed_exponential():
    t = np.arange(0, 10.05, 0.01)
    fit = fit_decay_rate(t, np.exp(-t) * (1 + 0.01 * np.sin(20 * t)))
    assert 0.99 <= fit.r <= 1.01


def test_fit_constant_has_low_quality():
    t = np.arange(0, 10.0, 0.1)
    fit = fit_decay_rate(t, np.full(t.size, 0.3), burn_in=0.0)
    assert abs(fit.r) < 1e-12 and fit.quality < 0.5


def test_fit_insufficient_data():
    t = np.arange(0, 5.0, 0.5)
    with pytest.raises(InsufficientData):
        fit_decay_rate(t, np.zeros(t.size))


def test_envelope_fit_ignores_oscillation_zeros():
    t = np.linspace(0, 20, 2001)
    v = np.abs(np.exp(-0.5 * t) * np.cos(3 * t))
    plain = fit_decay_rate(t, v, burn_in=0.0)
    env = fit_decay_rate(t, v, burn_in=0.0, envelope=True)
    assert env.quality > 0.98 > plain.quality
    assert env.r == pytest.approx(0.5, rel=0.05)


def test_decay_rate_estimator():
    t = np.linspace(0, 10, 101)
    est = DecayRateFit(burn_in=0.0).fit(t, 3.0 * np.exp(-0.2 * t))
    assert est.rate_ == pytest.approx(0.2)
    np.testing.assert_allclose(est.predict([0.0, 5.0]), [3.0, 3.0 * np.exp(-1.0)], rtol=1e-10)
    assert est.get_params()["burn_in"] == 0.0
    with pytest.raises(AttributeError):
        DecayRateFit().predict([1.0])


def test_energy_residual_trapezoid():
    a, b = record(0.0, 1.0, 0.4), record(0.1, 1.0 - 0.1 * 0.5 * (0.4 + 0.2), 0.2)
    assert energy_dissipation_residual(a, b, 1.0) < 1e-14
    assert energy_dissipation_residual(record(0.0, 0.0, 0.0), record(1e-3, 0.0, 0.0), 1.0) == 0.0
    with pytest.raises(ValueError):
        energy_dissipation_residual(b, a, 1.0)


def test_boltzmann_bound_check(grid64):
    rep = boltzmann_deviation_bound_check(grid64.zeros(), 0.0)
    assert rep.passed and rep.phi_bound == 0.0
    phi = grid64.sample(lambda x: 0.01 * np.cos(TWO_PI * x))
    E = free_energy(grid64.constant(1.0), grid64.zeros(), phi)
    assert boltzmann_deviation_bound_check(phi, E).passed
    assert not boltzmann_deviation_bound_check(phi * 10.0, E).passed


def test_record_rejects_nonfinite():
    with pytest.raises(Exception):
        record(0.0, float("nan"), 0.0)


def test_fit_norms_flags_flat_series():
    recs = []
    for i in range(20):
        r = record(0.1 * i, 0.0, 0.0)
        r.sup_norms = {"u": 0.0}
        recs.append(r)
    assert fit_norms(recs, names=("u",))["u"]["flag"] == "below floor"
