import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from eplab import BackgroundProfile, Envelope, Grid, TrigInterpolant, UnsupportedVariant, Variant
from eplab.background import bounds, deviation_sup, evaluate

TWO_PI = 2.0 * np.pi


def sin_profile(amp=0.3, C1=1.0, r1=0.5):
    return BackgroundProfile.exponential_decay(1.0, TrigInterpolant.single_mode(1, amp, "sin"), C1=C1, r1=r1)


def skewed_shape(lo=0.1, hi=0.4, n=64):
    """Zero-mean shape with min -lo and max hi, built from exp(k cos)."""
    g = Grid(n)

    def ratio(k):
        v = np.exp(k * np.cos(TWO_PI * g.nodes))
        return (v.mean() - v.min()) / (v.max() - v.mean()) - lo / hi

    k = brentq(ratio, 1e-3, 10.0)
    v = np.exp(k * np.cos(TWO_PI * g.nodes))
    v = v - v.mean()
    return g.field(v * hi / v.max())


def test_constant_profile():
    p = BackgroundProfile.constant(1.0)
    assert evaluate(p, 3.0, 0.2) == 1.0
    assert deviation_sup(p, 5.0) == 0.0
    assert bounds(BackgroundProfile.constant(2.0)) == (2.0, 2.0)


def test_exponential_profile_values():
    p = sin_profile()
    assert evaluate(p, 0.0, 0.25) == pytest.approx(1.3, abs=1e-14)
    assert evaluate(p, 2.0, 0.25) == pytest.approx(1.0 + 0.3 * np.exp(-1.0), abs=1e-14)
    assert evaluate(p, 2.0, 0.25) == pytest.approx(1.11036, abs=1e-5)
    assert deviation_sup(p, 4.0) == pytest.approx(0.040601, abs=1e-6)
    c_lo, c_hi = bounds(p)
    assert c_lo == pytest.approx(0.7, abs=1e-9)
    assert c_hi == pytest.approx(1.3, abs=1e-9)


def test_general_decay_rational_envelope():
    p = BackgroundProfile.general_decay(1.0, TrigInterpolant.single_mode(1, 0.2), Envelope("rational", 1.0, p=1.0))
    assert deviation_sup(p, 9.0) == pytest.approx(0.02, abs=1e-12)


def test_general_decay_skewed_bounds():
    p = BackgroundProfile.general_decay(1.0, skewed_shape(), Envelope("rational", 1.0, p=2.0))
    c_lo, c_hi = bounds(p)
    assert c_lo == pytest.approx(0.9, abs=1e-6)
    assert c_hi == pytest.approx(1.4, abs=1e-6)


def test_boltzmann_is_not_pointwise():
    p = BackgroundProfile.boltzmann()
    assert p.is_boltzmann and p.variant is Variant.BOLTZMANN
    with pytest.raises(UnsupportedVariant):
        evaluate(p, 0.0, 0.0)
    with pytest.raises(UnsupportedVariant):
        bounds(p)
    with pytest.raises(UnsupportedVariant):
        deviation_sup(p, 1.0)


def test_constructor_rejects_vacuum():
    with pytest.raises(ValueError):
        BackgroundProfile.general_decay(0.5, TrigInterpolant.single_mode(1, 0.6), Envelope("exponential", 1.0, 0.5))


def test_constructor_rejects_nonzero_mean_shape():
    shape = TrigInterpolant.single_mode(1, 0.2, offset=0.1)
    with pytest.raises(ValueError):
        BackgroundProfile.general_decay(1.0, shape, Envelope("exponential", 1.0, 0.5))


def test_exponential_requires_unit_shape():
    with pytest.raises(ValueError):
        BackgroundProfile.exponential_decay(3.0, TrigInterpolant.single_mode(1, 2.0), C1=1.0, r1=0.5)


def test_envelope_validation():
    with pytest.raises(ValueError):
        Envelope("step", 1.0)
    with pytest.raises(ValueError):
        Envelope("exponential", 1.0, r1=0.0)
    e = Envelope("rational", 2.0, p=2.0)
    assert e.window_sup(6.0) == pytest.approx(2.0 / 16.0)
    assert e.derivative(1.0) == pytest.approx(-2.0 * 2.0 / 8.0)


def test_time_derivative():
    p = sin_profile()
    x = np.array([0.25, -0.25])
    np.testing.assert_allclose(p.time_derivative(1.0, x), -0.5 * 0.3 * np.exp(-0.5) * np.array([1.0, -1.0]), atol=1e-14)


@given(st.floats(0.01, 0.9), st.floats(0.05, 3.0), st.floats(0.0, 20.0), st.integers(1, 4))
def test_deviation_bounded_by_envelope_and_matches_grid(amp, r1, t, mode):
    p = BackgroundProfile.exponential_decay(1.0, TrigInterpolant.single_mode(mode, 1.0), C1=amp, r1=r1)
    assert deviation_sup(p, t) <= amp * np.exp(-r1 * t) * (1 + 1e-12)
    g = Grid(64)
    dev = np.max(np.abs(p.on_grid(t, g).values - 1.0))
    assert dev == pytest.approx(deviation_sup(p, t), rel=1e-6, abs=1e-14)


@given(st.floats(0.1, 3.0), st.floats(0.0, 1.5))
def test_vacuum_rejection_threshold(cbar, amp):
    shape = TrigInterpolant.single_mode(1, amp)
    env = Envelope("exponential", 1.0, 1.0)
    if cbar - amp > 1e-9:
        p = BackgroundProfile.general_decay(cbar, shape, env)
        assert bounds(p)[0] > 0
    elif cbar - amp < -1e-9:
        with pytest.raises(ValueError):
            BackgroundProfile.general_decay(cbar, shape, env)
