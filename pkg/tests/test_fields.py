import numpy as np
import pytest
from hypothesis import given, strategies as st

from eplab import Field, Grid, InvalidFieldError, TrigInterpolant
from eplab.fields import derivative, interpolate, l2_norm, mean, sup_norm, wrap

TWO_PI = 2.0 * np.pi


def test_grid_rejects_odd_and_small():
    with pytest.raises(ValueError):
        Grid(63)
    with pytest.raises(ValueError):
        Grid(4)


def test_field_rejects_nan_and_wrong_size(grid64):
    with pytest.raises(InvalidFieldError):
        grid64.field(np.full(64, np.nan))
    with pytest.raises(InvalidFieldError):
        grid64.field(np.zeros(10))


def test_fields_on_different_grids_do_not_mix():
    with pytest.raises(InvalidFieldError):
        Grid(64).zeros() + Grid(32).zeros()


def test_derivative_of_sine_is_exact(grid64):
    f = grid64.sample(lambda x: np.sin(TWO_PI * x))
    d = derivative(f)
    np.testing.assert_allclose(d.values, TWO_PI * np.cos(TWO_PI * grid64.nodes), atol=1e-10)


def test_derivative_of_constant_vanishes(grid64):
    assert sup_norm(derivative(grid64.constant(3.7))) < 1e-12


def test_derivative_matches_finite_differences():
    g = Grid(4096)
    f = g.sample(lambda x: np.exp(np.sin(TWO_PI * x)))
    exact = TWO_PI * np.cos(TWO_PI * g.nodes) * f.values
    assert np.max(np.abs(derivative(f).values - exact)) < 1e-6
    fd = (np.roll(f.values, -1) - np.roll(f.values, 1)) / (2 * g.h)
    assert np.max(np.abs(fd - derivative(f).values)) < 1e-3


def test_second_derivative(grid64):
    f = grid64.sample(lambda x: np.cos(4 * np.pi * x))
    np.testing.assert_allclose(derivative(f, 2).values, -(4 * np.pi) ** 2 * f.values, atol=1e-9)


def test_mean_and_norms(grid64):
    f = grid64.sample(lambda x: 2.0 + np.sin(TWO_PI * x))
    assert mean(f) == pytest.approx(2.0, abs=1e-14)
    s = grid64.sample(lambda x: np.sin(TWO_PI * x))
    assert sup_norm(s) == pytest.approx(1.0, abs=1e-12)
    assert l2_norm(s) == pytest.approx(np.sqrt(0.5), abs=1e-14)


def test_interpolate_off_grid():
    g = Grid(128)
    f = g.sample(lambda x: np.cos(TWO_PI * x))
    assert interpolate(f, 0.125) == pytest.approx(np.cos(TWO_PI * 0.125), abs=1e-6)
    assert interpolate(f, 0.125, kind="spectral") == pytest.approx(np.cos(TWO_PI * 0.125), abs=1e-12)


def test_interpolate_is_exact_at_nodes(grid64):
    f = grid64.sample(lambda x: np.sin(TWO_PI * x) + 0.3 * np.cos(6 * np.pi * x))
    np.testing.assert_allclose(interpolate(f, grid64.nodes), f.values, atol=1e-13)


def test_interpolate_wraps_periodically():
    g = Grid(128)
    f = g.sample(lambda x: np.sin(TWO_PI * x))
    assert interpolate(f, 0.73) == pytest.approx(interpolate(f, 0.73 - 1.0), abs=1e-14)
    assert interpolate(f, 0.73) == pytest.approx(np.sin(TWO_PI * 0.73), abs=1e-6)


def test_interpolate_rejects_unknown_kind(grid64):
    with pytest.raises(ValueError):
        interpolate(grid64.zeros(), 0.1, kind="linear")


def test_wrap_range():
    y = wrap(np.array([-0.5, 0.5, 1.25, -1e-18, 7.49]))
    assert np.all((y >= -0.5) & (y < 0.5))
    np.testing.assert_allclose(y, [-0.5, -0.5, 0.25, -1e-18, 0.49], atol=1e-12)


def test_trig_interpolant_antiderivative():
    t = TrigInterpolant.single_mode(1, 0.2, "cos", offset=1.0)
    # int_{-1/2}^{x} (1 + 0.2 cos 2 pi y) dy
    x = np.array([-0.5, -0.1, 0.3, 0.5])
    exact = (x + 0.5) + 0.2 * np.sin(TWO_PI * x) / TWO_PI
    np.testing.assert_allclose(t.antiderivative(x), exact, atol=1e-14)


def test_trig_interpolant_from_field_matches_single_mode():
    g = Grid(32)
    a = TrigInterpolant.single_mode(2, 0.4, "sin")
    b = TrigInterpolant.from_field(a.to_field(g))
    x = np.linspace(-0.5, 0.5, 17)
    np.testing.assert_allclose(a(x), b(x), atol=1e-14)
    np.testing.assert_allclose(a.derivative(x), b.derivative(x), atol=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(-2, 2))
def test_derivative_linear_and_kills_constants(coef, shift):
    g = Grid(32)
    x = g.nodes
    f = g.field(sum(c * np.sin(TWO_PI * (k + 1) * x + k) for k, c in enumerate(coef)))
    lhs = derivative(2.0 * f + shift)
    assert sup_norm(lhs - 2.0 * derivative(f)) < 1e-9
    assert abs(mean(derivative(f))) < 1e-12


@given(st.floats(-0.5, 0.5), st.integers(-3, 3))
def test_spectral_interpolation_is_periodic(x, k):
    g = Grid(32)
    f = g.sample(lambda y: np.cos(TWO_PI * y) + 0.1 * np.sin(4 * np.pi * y))
    assert interpolate(f, x + k, "spectral") == pytest.approx(interpolate(f, x, "spectral"), abs=1e-11)
