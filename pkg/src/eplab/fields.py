"""Uniform periodic grids on the torus [-1/2, 1/2) and grid functions on them."""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from ._validation import check_finite_array, check_same_grid, check_scalar
from .exceptions import InvalidFieldError

X_LEFT = -0.5


def wrap(x):
    """Reduce positions modulo 1 into [-1/2, 1/2)."""
    y = np.mod(np.asarray(x, dtype=float) - X_LEFT, 1.0) + X_LEFT
    # mod can return exactly 1.0 for tiny negative inputs
    return np.where(y >= -X_LEFT, y - 1.0, y)


@dataclass(frozen=True)
class Grid:
    n: int

    def __post_init__(self):
        n = check_scalar(self.n, "n", integer=True)
        if n < 8 or n % 2:
            raise ValueError(f"grid size must be even and >= 8, got {n}")
        object.__setattr__(self, "n", n)

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def nodes(self):
        return X_LEFT + np.arange(self.n) * self.h

    @property
    def wavenumbers(self):
        """Angular wavenumbers 2*pi*k matching ``numpy.fft.rfft`` output."""
        return 2.0 * np.pi * np.fft.rfftfreq(self.n, d=1.0 / self.n)

    def field(self, values):
        return Field(self, values)

    def sample(self, func):
        """Field holding ``func`` evaluated at the nodes."""
        return Field(self, func(self.nodes))

    def zeros(self):
        return Field(self, np.zeros(self.n))

    def constant(self, value):
        return Field(self, np.full(self.n, float(value)))


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples of a periodic function at the nodes of ``grid``.

    Values are stored in a read-only array; arithmetic returns new fields.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = check_finite_array(self.values, "field values").copy()
        if arr.size != self.grid.n:
            raise InvalidFieldError(
                f"field has {arr.size} values but grid has {self.grid.n} nodes"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.grid.n

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def _coerce(self, other):
        if isinstance(other, Field):
            check_same_grid(self, other)
            return other.values
        return float(other)

    def __add__(self, other):
        return Field(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return Field(self.grid, -self.values)

    def map(self, func):
        """Apply a pointwise function, e.g. ``phi.map(np.exp)``."""
        return Field(self.grid, func(self.values))

    def derivative(self, order=1):
        return derivative(self, order)

    def mean(self):
        return mean(self)

    def sup_norm(self):
        return sup_norm(self)

    def l2_norm(self):
        return l2_norm(self)

    def interpolate(self, x, kind="cubic"):
        return interpolate(self, x, kind=kind)


def derivative(f, order=1):
    """Spectral derivative of a periodic grid function.

    Exact for trigonometric polynomials resolved on the grid. The Nyquist
    mode is dropped for odd orders, where its derivative is not real.
    """
    k = f.grid.wavenumbers
    fh = np.fft.rfft(f.values)
    fh *= (1j * k) ** order
    if order % 2:
        fh[-1] = 0.0
    return Field(f.grid, np.fft.irfft(fh, n=f.grid.n))


def mean(f):
    return float(np.mean(f.values))


def sup_norm(f):
    return float(np.max(np.abs(f.values)))


def l2_norm(f):
    return float(np.sqrt(np.mean(f.values ** 2)))


def interpolate(f, x, kind="cubic"):
    """Evaluate ``f`` at arbitrary positions, reduced modulo 1.

    ``kind="cubic"`` uses a periodic cubic spline through the nodes;
    ``kind="spectral"`` evaluates the trigonometric interpolant.
    Scalar input gives a float, array input an array.
    """
    scalar = np.ndim(x) == 0
    xw = wrap(x)
    if kind == "cubic":
        out = _periodic_spline(f)(xw)
    elif kind == "spectral":
        out = TrigInterpolant.from_field(f)(xw)
    else:
        raise ValueError(f"unknown interpolation kind {kind!r}")
    return float(out) if scalar else np.asarray(out)


def _periodic_spline(f):
    g = f.grid
    xs = np.append(g.nodes, X_LEFT + 1.0)
    ys = np.append(f.values, f.values[0])
    return CubicSpline(xs, ys, bc_type="periodic")


def periodic_spline(f):
    """Periodic cubic spline of ``f``; callable on positions in [-1/2, 1/2]."""
    return _periodic_spline(f)


class TrigInterpolant:
    """Trigonometric interpolant of a grid function, restricted to its nonzero modes.

    Useful when a field with few active modes must be evaluated (or
    integrated) at many off-grid points.
    """

    def __init__(self, mean_value, wavenumbers, coef_cos, coef_sin):
        self.mean_value = float(mean_value)
        self.k = np.asarray(wavenumbers, dtype=float)
        self.a = np.asarray(coef_cos, dtype=float)
        self.b = np.asarray(coef_sin, dtype=float)

    @classmethod
    def from_field(cls, f, rtol=1e-14):
        n = f.grid.n
        fh = np.fft.rfft(f.values) / n
        modes = np.arange(fh.size)
        a = 2.0 * fh.real
        b = -2.0 * fh.imag
        a[-1] *= 0.5
        b[-1] = 0.0
        scale = max(np.max(np.abs(fh)), 1e-300)
        keep = (modes > 0) & ((np.abs(a) > rtol * scale) | (np.abs(b) > rtol * scale))
        return cls(fh[0].real, 2.0 * np.pi * modes[keep], a[keep], b[keep])

    @classmethod
    def single_mode(cls, mode, amplitude, phase="cos", offset=0.0):
        """``offset + amplitude * cos(2 pi mode x)`` (or ``sin``)."""
        if phase not in ("cos", "sin"):
            raise ValueError(f"phase must be 'cos' or 'sin', got {phase!r}")
        mode = int(mode)
        if mode < 1:
            raise ValueError(f"mode must be a positive integer, got {mode}")
        if amplitude == 0.0:
            return cls(offset, [], [], [])
        # express in the (x + 1/2) phase used by from_field
        theta = np.pi * mode
        ca, sa = np.cos(theta), np.sin(theta)
        if phase == "cos":
            a, b = amplitude * ca, amplitude * sa
        else:
            a, b = -amplitude * sa, amplitude * ca
        return cls(offset, [2.0 * np.pi * mode], [a], [b])

    def _phase(self, x):
        return np.multiply.outer(np.asarray(x, dtype=float) - X_LEFT, self.k)

    def __call__(self, x):
        if self.k.size == 0:
            return np.full(np.shape(x), self.mean_value) if np.ndim(x) else self.mean_value
        th = self._phase(x)
        return self.mean_value + np.cos(th) @ self.a + np.sin(th) @ self.b

    def derivative(self, x):
        if self.k.size == 0:
            return np.zeros(np.shape(x)) if np.ndim(x) else 0.0
        th = self._phase(x)
        return np.cos(th) @ (self.b * self.k) - np.sin(th) @ (self.a * self.k)

    def antiderivative(self, x):
        """Integral from -1/2 to x (x may exceed one period)."""
        xx = np.asarray(x, dtype=float)
        lin = self.mean_value * (xx - X_LEFT)
        if self.k.size == 0:
            return lin
        th = self._phase(xx)
        per = np.sin(th) @ (self.a / self.k) + (1.0 - np.cos(th)) @ (self.b / self.k)
        return lin + per

    def extrema(self, samples=4096):
        """(min, max) of the periodic part plus mean, by dense sampling."""
        x = X_LEFT + np.arange(samples) / samples
        v = self(x)
        return float(np.min(v)), float(np.max(v))

    def to_field(self, grid):
        return Field(grid, self(grid.nodes))
