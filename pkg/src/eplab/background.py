"""Background charge profiles c(t, x).

Prescribed profiles are separable, ``c(t, x) = cbar + a(x) g(t)``, with a
zero-mean spatial shape ``a`` and a decaying envelope ``g``. The
self-consistent Boltzmann variant (``c = exp(phi)``) carries no formula and
is resolved by the coupled solvers.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._validation import check_scalar
from .exceptions import UnsupportedVariant
from .fields import Field, TrigInterpolant


class Variant(str, Enum):
    CONSTANT = "constant"
    GENERAL_DECAY = "general_decay"
    EXPONENTIAL_DECAY = "exponential_decay"
    BOLTZMANN = "boltzmann"


@dataclass(frozen=True)
class Envelope:
    """Time envelope ``g``: ``C1 exp(-r1 t)`` or ``C1 (1 + t)**-p``."""

    kind: str = "exponential"
    C1: float = 1.0
    r1: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exponential", "rational"):
            raise ValueError(f"envelope kind must be 'exponential' or 'rational', got {self.kind!r}")
        check_scalar(self.C1, "C1", nonnegative=True)
        if self.kind == "exponential":
            check_scalar(self.r1, "r1", positive=True)
        else:
            check_scalar(self.p, "p", positive=True)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            out = self.C1 * np.exp(-self.r1 * t)
        else:
            out = self.C1 * (1.0 + t) ** (-self.p)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            out = -self.r1 * self.C1 * np.exp(-self.r1 * t)
        else:
            out = -self.p * self.C1 * (1.0 + t) ** (-self.p - 1.0)
        return float(out) if out.ndim == 0 else out

    def window_sup(self, t):
        """``sup g`` over ``[t/2, t]``; attained at ``t/2`` since g decreases."""
        return self(0.5 * np.asarray(t, dtype=float))


class BackgroundProfile:
    """Immutable description of the background state.

    Use the constructors :meth:`constant`, :meth:`exponential_decay`,
    :meth:`general_decay` and :meth:`boltzmann`.
    """

    def __init__(self, variant, cbar=1.0, shape=None, envelope=None):
        self.variant = Variant(variant)
        self.cbar = check_scalar(cbar, "cbar", positive=True)
        self.envelope = envelope
        if isinstance(shape, Field):
            shape = TrigInterpolant.from_field(shape)
        self.shape = shape
        if self.variant in (Variant.GENERAL_DECAY, Variant.EXPONENTIAL_DECAY):
            if shape is None or envelope is None:
                raise ValueError(f"{self.variant.value} background needs a shape and an envelope")
            scale = max(np.max(np.abs(shape.a), initial=0.0), np.max(np.abs(shape.b), initial=0.0), 1.0)
            if abs(shape.mean_value) > 1e-12 * scale:
                raise ValueError(
                    f"background shape must have zero mean (got {shape.mean_value:.3e}); "
                    "otherwise the total background charge changes in time"
                )
            self._amin, self._amax = shape.extrema()
            self.shape_sup = max(abs(self._amin), abs(self._amax))
            g0 = envelope(0.0)
            if self.cbar - self.shape_sup * g0 <= 0:
                raise ValueError(
                    f"background touches vacuum: cbar - sup|a| g(0) = {self.cbar - self.shape_sup * g0:.3g} <= 0"
                )
            if self.variant is Variant.EXPONENTIAL_DECAY and envelope.kind != "exponential":
                raise ValueError("exponential_decay background needs an exponential envelope")
            if self.variant is Variant.EXPONENTIAL_DECAY and self.shape_sup > 1.0 + 1e-12:
                raise ValueError(
                    "exponential_decay shape must satisfy sup|a| <= 1 so that "
                    "||c - cbar|| <= C1 exp(-r1 t); fold the amplitude into C1"
                )
        else:
            self.shape = None
            self.envelope = None
            self.shape_sup = 0.0
            self._amin = self._amax = 0.0

    @classmethod
    def constant(cls, cbar=1.0):
        return cls(Variant.CONSTANT, cbar)

    @classmethod
    def exponential_decay(cls, cbar, shape, C1=1.0, r1=0.5):
        return cls(Variant.EXPONENTIAL_DECAY, cbar, shape, Envelope("exponential", C1=C1, r1=r1))

    @classmethod
    def general_decay(cls, cbar, shape, envelope):
        return cls(Variant.GENERAL_DECAY, cbar, shape, envelope)

    @classmethod
    def boltzmann(cls):
        return cls(Variant.BOLTZMANN, 1.0)

    @property
    def is_boltzmann(self):
        return self.variant is Variant.BOLTZMANN

    @property
    def is_constant(self):
        return self.variant is Variant.CONSTANT

    def _require_prescribed(self):
        if self.is_boltzmann:
            raise UnsupportedVariant(
                "the self-consistent Boltzmann background has no pointwise formula"
            )

    def g(self, t):
        self._require_prescribed()
        if self.envelope is None:
            return 0.0 * np.asarray(t, dtype=float) if np.ndim(t) else 0.0
        return self.envelope(t)

    def __call__(self, t, x):
        return evaluate(self, t, x)

    def time_derivative(self, t, x):
        """``dc/dt`` at (t, x)."""
        self._require_prescribed()
        if self.is_constant:
            return np.zeros(np.shape(x)) if np.ndim(x) else 0.0
        return self.shape(x) * self.envelope.derivative(t)

    def on_grid(self, t, grid):
        return Field(grid, np.broadcast_to(evaluate(self, t, grid.nodes), (grid.n,)))

    def deviation_sup(self, t):
        return deviation_sup(self, t)

    def bounds(self):
        return bounds(self)

    def __repr__(self):
        parts = [f"variant={self.variant.value!r}", f"cbar={self.cbar}"]
        if self.envelope is not None:
            parts.append(f"envelope={self.envelope}")
        return f"BackgroundProfile({', '.join(parts)})"


def evaluate(p, t, x):
    """``c(t, x)``; scalar in, scalar out."""
    p._require_prescribed()
    if p.is_constant:
        return p.cbar if np.ndim(x) == 0 else np.full(np.shape(x), p.cbar)
    out = p.cbar + p.shape(x) * p.envelope(t)
    return float(out) if np.ndim(out) == 0 else out


def deviation_sup(p, t):
    """``sup_x |c(t, x) - cbar|``."""
    p._require_prescribed()
    if p.is_constant:
        return 0.0
    return p.shape_sup * p.envelope(t)


def bounds(p):
    """Global ``(c_minus, c_plus)`` over all t >= 0 and x."""
    p._require_prescribed()
    if p.is_constant:
        return p.cbar, p.cbar
    g0 = p.envelope(0.0)
    return p.cbar + min(p._amin, 0.0) * g0, p.cbar + max(p._amax, 0.0) * g0
