"""Characteristic ODE system for (w, s) and its Lyapunov functionals.

Along a characteristic, ``s = 1/rho`` and ``w = u_x / rho`` obey::

    w' = -nu w + 1 - c(t) s
    s' = w
"""
import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._validation import check_scalar
from .diagnostics import fit_decay_rate
from .exceptions import BlowUp, InsufficientData

S_FLOOR = 1e-6


@dataclass(frozen=True)
class PhaseState:
    w: float
    s: float
    t: float = 0.0


@dataclass(frozen=True)
class LemmaConstants:
    nu: float
    cbar: float
    B: float
    lam: float
    N: float
    r2_pred: float

    @classmethod
    def from_params(cls, nu, cbar, B, r1=None):
        """Build the constants; ``r1=None`` means a constant background."""
        nu = check_scalar(nu, "nu", positive=True)
        cbar = check_scalar(cbar, "cbar", positive=True)
        B = check_scalar(B, "B", positive=True)
        lam = lyapunov_lambda(nu, cbar)
        N = B * (B + lam * (B + 1.0 / cbar))
        rate = lam / 2.0 if r1 is None else min(lam / 2.0, r1)
        return cls(nu, cbar, B, lam, N, rate / 2.0)

    def to_dict(self):
        return asdict(self)


def lyapunov_lambda(nu, cbar):
    return min(nu / (nu ** 2 / (2.0 * cbar) + 1.5), math.sqrt(cbar) / 2.0)


def rhs(state, c, nu):
    """Return ``(dw/dt, ds/dt)``."""
    return -nu * state.w + 1.0 - c * state.s, state.w


@dataclass
class Trajectory:
    t: np.ndarray
    w: np.ndarray
    s: np.ndarray
    c: np.ndarray

    def __len__(self):
        return self.t.size

    def state(self, i):
        return PhaseState(float(self.w[i]), float(self.s[i]), float(self.t[i]))

    def write_csv(self, path, constants):
        """Write columns t, w, s, L, X, y, c."""
        L = lyapunov_L(self.w, self.s, constants.cbar)
        X = cross_X(self.w, self.s, constants.cbar)
        y = L + constants.lam * X
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "w", "s", "L", "X", "y", "c"])
            for row in zip(self.t, self.w, self.s, L, X, y, self.c):
                wr.writerow([repr(float(v)) for v in row])


def _as_callable(c_of_t):
    if callable(c_of_t):
        return c_of_t
    cval = float(c_of_t)
    return lambda t: cval


def integrate(initial, c_of_t, nu, dt, T, s_floor=S_FLOOR, c_plus=None):
    """Classical RK4 on the characteristic system, sampled every ``dt``.

    ``c_of_t`` is a callable or a constant. Raises :class:`BlowUp` as soon
    as ``s`` falls to ``s_floor``; ``t_star`` is located by linear
    interpolation inside the offending step.
    """
    cfun = _as_callable(c_of_t)
    dt = check_scalar(dt, "dt", positive=True)
    t0 = initial.t
    cp = abs(cfun(t0)) if c_plus is None else c_plus
    if dt > 0.1 / max(1.0, nu, cp) * (1 + 1e-12):
        raise ValueError(f"dt = {dt} exceeds 0.1/max(1, nu, c_plus) = {0.1 / max(1.0, nu, cp):.3g}")
    if initial.s <= s_floor:
        raise BlowUp(t0, f"initial specific volume {initial.s} is below the floor {s_floor}")
    nsteps = int(round(T / dt))
    t = t0 + dt * np.arange(nsteps + 1)
    ws = np.empty(nsteps + 1)
    ss = np.empty(nsteps + 1)
    cs = np.empty(nsteps + 1)
    w, s = float(initial.w), float(initial.s)
    ws[0], ss[0], cs[0] = w, s, cfun(t0)
    h2 = 0.5 * dt
    for i in range(nsteps):
        tn = t[i]
        c1 = cs[i]
        cm = cfun(tn + h2)
        c4 = cfun(tn + dt)
        k1w = -nu * w + 1.0 - c1 * s
        k1s = w
        w2, s2 = w + h2 * k1w, s + h2 * k1s
        k2w = -nu * w2 + 1.0 - cm * s2
        k2s = w2
        w3, s3 = w + h2 * k2w, s + h2 * k2s
        k3w = -nu * w3 + 1.0 - cm * s3
        k3s = w3
        w4, s4 = w + dt * k3w, s + dt * k3s
        k4w = -nu * w4 + 1.0 - c4 * s4
        k4s = w4
        wn = w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        sn = s + dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        if sn <= s_floor:
            frac = (s - s_floor) / (s - sn) if s != sn else 1.0
            raise BlowUp(tn + frac * dt)
        w, s = wn, sn
        ws[i + 1], ss[i + 1], cs[i + 1] = w, s, c4
    return Trajectory(t, ws, ss, cs)


def characteristic_roots(nu, cbar):
    """Roots of ``mu^2 + nu mu + cbar = 0`` as complex numbers."""
    disc = complex(nu * nu - 4.0 * cbar)
    sq = disc ** 0.5
    return (-nu + sq) / 2.0, (-nu - sq) / 2.0


def linear_decay_rate(nu, cbar):
    """Slowest exponential rate ``-max Re(mu)`` of the constant-background system."""
    return -max(r.real for r in characteristic_roots(nu, cbar))


def closed_form_constant_c(w0, s0, nu, cbar, t):
    """Exact solution for ``c == cbar``; ``t`` may be an array.

    ``s`` solves ``s'' + nu s' + cbar s = 1`` and ``w = s'``.
    """
    t = np.asarray(t, dtype=float)
    z0 = s0 - 1.0 / cbar
    disc = nu * nu - 4.0 * cbar
    if abs(disc) <= 1e-12 * max(nu * nu, 4.0 * cbar):
        mu = -nu / 2.0
        e = np.exp(mu * t)
        b = w0 - mu * z0
        z = (z0 + b * t) * e
        dz = (b + mu * (z0 + b * t)) * e
    elif disc > 0:
        sq = math.sqrt(disc)
        m1, m2 = (-nu + sq) / 2.0, (-nu - sq) / 2.0
        A = (w0 - m2 * z0) / (m1 - m2)
        B = z0 - A
        e1, e2 = np.exp(m1 * t), np.exp(m2 * t)
        z = A * e1 + B * e2
        dz = A * m1 * e1 + B * m2 * e2
    else:
        al = -nu / 2.0
        be = math.sqrt(-disc) / 2.0
        b = (w0 - al * z0) / be
        e = np.exp(al * t)
        co, si = np.cos(be * t), np.sin(be * t)
        z = e * (z0 * co + b * si)
        dz = e * ((al * z0 + be * b) * co + (al * b - be * z0) * si)
    s = 1.0 / cbar + z
    if t.ndim == 0:
        return PhaseState(float(dz), float(s), float(t))
    return dz, s


def lyapunov_L(w, s, cbar=None):
    """``(cbar/2)(s - 1/cbar)^2 + w^2/2``; also accepts a PhaseState as ``w``."""
    if isinstance(w, PhaseState):
        cbar = s
        w, s = w.w, w.s
    d = np.asarray(s) - 1.0 / cbar
    return 0.5 * cbar * d * d + 0.5 * np.asarray(w) ** 2


def cross_X(w, s, cbar=None):
    """``(s - 1/cbar) w``."""
    if isinstance(w, PhaseState):
        cbar = s
        w, s = w.w, w.s
    return (np.asarray(s) - 1.0 / cbar) * np.asarray(w)


def combined_y(w, s, constants=None):
    """``L + lambda X`` with lambda and cbar taken from ``constants``."""
    if isinstance(w, PhaseState):
        constants = s
        w, s = w.w, w.s
    return lyapunov_L(w, s, constants.cbar) + constants.lam * cross_X(w, s, constants.cbar)


@dataclass
class LemmaReport:
    constants: LemmaConstants
    B_observed: float
    B_enlarged: bool
    gronwall_ok: bool
    gronwall_margin: float
    comparability_ok: bool
    fitted_rate: float = None
    fit_quality: float = None
    rate_ok: bool = True
    resonant: bool = False
    flags: list = field(default_factory=list)

    @property
    def passed(self):
        return self.gronwall_ok and self.comparability_ok and self.rate_ok


def gronwall_bound(traj, constants):
    """Pointwise right-hand side ``y0 e^{-lam t/2} + N int_0^t e^{-lam (t-tau)/2} |c - cbar| dtau``.

    The convolution is accumulated with the trapezoid rule on the samples.
    """
    lam2 = constants.lam / 2.0
    t = traj.t - traj.t[0]
    f = np.abs(traj.c - constants.cbar)
    y0 = combined_y(traj.w[0], traj.s[0], constants)
    conv = np.zeros_like(t)
    for i in range(1, t.size):
        h = t[i] - t[i - 1]
        decay = math.exp(-lam2 * h)
        conv[i] = decay * conv[i - 1] + 0.5 * h * (decay * f[i - 1] + f[i])
    return y0 * np.exp(-lam2 * t) + constants.N * conv


def window_bound(traj, constants, g, c_minus, c_plus):
    """General-envelope bound on ``y`` using ``sup g`` over ``[t/2, t]``."""
    lam = constants.lam
    t = traj.t - traj.t[0]
    y0 = combined_y(traj.w[0], traj.s[0], constants)
    N = constants.N
    gs = np.array([g(0.5 * tt) for tt in t])
    return (
        y0 * np.exp(-lam * t / 2)
        + 2 * N * (c_plus - c_minus) / lam * (np.exp(-lam * t / 4) - np.exp(-lam * t / 2))
        + 2 * N / lam * gs
    )


def verify_lemma(traj, constants, envelope=None, rtol=1e-6, floor=1e-10):
    """Check the Lyapunov decay machinery along a trajectory.

    ``constants.B`` is enlarged to the observed sup of ``|s|, |w|`` when the
    trajectory exceeds it (flagged in the report). ``envelope`` is the
    exponential rate ``r1`` of the background deviation, or an exponential
    envelope carrying it (``None`` for a constant background).
    """
    envelope = getattr(envelope, "r1", envelope)
    B_obs = float(max(np.max(np.abs(traj.s)), np.max(np.abs(traj.w))))
    enlarged = B_obs > constants.B
    flags = []
    if enlarged:
        constants = LemmaConstants.from_params(constants.nu, constants.cbar, B_obs, envelope)
        flags.append("B enlarged to observed sup")
    y = combined_y(traj.w, traj.s, constants)
    bound = gronwall_bound(traj, constants)
    excess = y - bound * (1 + rtol)
    scale = max(float(np.max(np.abs(bound))), 1e-300)
    gron_ok = bool(np.all(excess <= 1e-14 * scale))
    L = lyapunov_L(traj.w, traj.s, constants.cbar)
    comp_ok = bool(np.all(y >= 0.5 * L * (1 - rtol) - 1e-300) and np.all(y <= 2.0 * L * (1 + rtol) + 1e-300))
    report = LemmaReport(constants, B_obs, enlarged, gron_ok, float(-np.max(excess) / scale), comp_ok, flags=flags)
    amp = np.sqrt(np.maximum(y, 0.0))
    if np.max(amp) <= floor:
        report.flags.append("below floor")
        return report
    try:
        fit = fit_decay_rate(traj.t, amp, floor=floor)
    except InsufficientData:
        report.flags.append("below floor")
        return report
    report.fitted_rate, report.fit_quality = fit.r, fit.quality
    target = 0.95 * constants.r2_pred
    report.rate_ok = fit.r >= target
    if envelope is not None and abs(constants.lam / 2.0 - envelope) < 1e-3:
        # resonance gives t exp(-lam t / 2) in y; divide out the secular factor
        report.resonant = True
        if not report.rate_ok:
            tt = traj.t - traj.t[0]
            fit2 = fit_decay_rate(traj.t, amp / np.sqrt(1.0 + tt), floor=floor)
            report.rate_ok = fit2.r >= target
            report.flags.append("resonant: secular factor removed")
    return report


def blows_up_constant_c(w0, s0, nu, cbar, horizon=50.0, samples=20001):
    """Whether the constant-background solution reaches ``s <= 0``."""
    t = np.linspace(0.0, horizon, samples)
    _, s = closed_form_constant_c(w0, s0, nu, cbar, t)
    return bool(np.min(s) <= 0.0)


def critical_w0(s0, nu, cbar, w_low=-100.0, tol=1e-10):
    """Bisect for the threshold velocity gradient below which ``s`` hits zero."""
    hi = 0.0
    lo = w_low
    if blows_up_constant_c(hi, s0, nu, cbar):
        raise ValueError("data blows up even with w0 = 0")
    if not blows_up_constant_c(lo, s0, nu, cbar):
        raise ValueError(f"no blow-up found down to w0 = {w_low}")
    while hi - lo > tol * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if blows_up_constant_c(mid, s0, nu, cbar):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def blowup_time_constant_c(w0, s0, nu, cbar, s_floor=0.0, horizon=50.0, samples=20001):
    """First time the constant-background solution reaches ``s = s_floor``.

    Returns ``None`` when ``s`` stays above the floor up to ``horizon``.
    """
    t = np.linspace(0.0, horizon, samples)
    _, s = closed_form_constant_c(w0, s0, nu, cbar, t)
    hit = np.nonzero(s <= s_floor)[0]
    if not hit.size:
        return None
    i = int(hit[0])
    if i == 0:
        return 0.0

    def gap(tau):
        return closed_form_constant_c(w0, s0, nu, cbar, tau).s - s_floor

    return float(brentq(gap, t[i - 1], t[i], xtol=1e-14))
