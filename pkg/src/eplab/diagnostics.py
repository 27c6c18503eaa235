"""Functionals, constants and inequality checks for decay verification."""
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_same_grid, check_scalar, check_time_series
from .exceptions import DomainError, InsufficientData
from .fields import Field, derivative

NORM_NAMES = ("rho_minus_cbar", "u", "dx_u", "dx_phi", "dxx_phi", "exp_phi_minus_1")
DECAY_NORMS = NORM_NAMES[:5]
REL_TOL = 1e-8


def entropy_density(phi):
    """``exp(phi) (phi - 1) + 1`` evaluated without cancellation for small phi."""
    phi = np.asarray(phi, dtype=float)
    out = np.exp(phi) * (phi - 1.0) + 1.0
    small = np.abs(phi) < 1e-2
    if np.any(small):
        p = phi[small]
        # sum_{k>=2} (k-1) p^k / k!
        term = p * p / 2.0
        acc = term.copy()
        for k in range(3, 12):
            term = term * p / k
            acc += (k - 1) * term
        out[small] = acc
    return out


def free_energy(rho, u, phi):
    """Mean over the torus of ``rho u^2/2 + (phi')^2/2 + exp(phi)(phi-1) + 1``."""
    check_same_grid(rho, u, phi)
    dphi = derivative(phi).values
    dens = 0.5 * rho.values * u.values ** 2 + 0.5 * dphi ** 2 + entropy_density(phi.values)
    return float(np.mean(dens))


def sup_norm_suite(rho, u, phi, cbar, c=None):
    """Sup norms of ``(rho - cbar, u, u', phi', phi'', exp(phi) - 1)``.

    ``phi''`` is taken from the field equation as ``rho - c``; when ``c`` is
    omitted the Boltzmann relation ``c = exp(phi)`` is used.
    """
    check_same_grid(rho, u, phi)
    cv = np.exp(phi.values) if c is None else c.values
    vals = (
        rho.values - cbar,
        u.values,
        derivative(u).values,
        derivative(phi).values,
        rho.values - cv,
        np.expm1(phi.values),
    )
    return {name: float(np.max(np.abs(v))) for name, v in zip(NORM_NAMES, vals)}


def sobolev_chain(rho, c, phi):
    """``(sup|phi'|, L1 norm of phi'', sup|phi''|)``; the first should not exceed the second."""
    check_same_grid(rho, c, phi)
    dxx = rho.values - c.values
    return (
        float(np.max(np.abs(derivative(phi).values))),
        float(np.mean(np.abs(dxx))),
        float(np.max(np.abs(dxx))),
    )


@dataclass
class DiagnosticsRecord:
    """Snapshot of one simulation time.

    The first block of fields is the documented CSV layout; the trailing
    block holds the integrals the proof checks need.
    """

    t: float
    sup_norms: dict
    E: float
    C_cross: float
    momentum: float
    neutrality_residual: float
    energy_dissipation_residual: float
    y_sup: float
    kinetic: float = 0.0
    electric: float = 0.0
    entropy: float = 0.0
    dissipation: float = 0.0
    background_work: float = 0.0
    rho_min: float = 1.0
    rho_max: float = 1.0
    phi_sup: float = 0.0

    def __post_init__(self):
        for name in NORM_NAMES:
            v = self.sup_norms.get(name, 0.0)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"sup norm {name} = {v!r} is not finite and nonnegative")
        for f in fields(self):
            if f.name == "sup_norms":
                continue
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"diagnostic {f.name} = {v!r} is not finite")

    def row(self):
        out = [self.t] + [self.sup_norms.get(n, 0.0) for n in NORM_NAMES]
        out += [getattr(self, f.name) for f in fields(self)[2:]]
        return out


CSV_COLUMNS = (
    ["t"]
    + [f"sup_{n}" for n in NORM_NAMES]
    + [f.name for f in fields(DiagnosticsRecord)[2:]]
)


def series(records, key):
    """Array of one diagnostic (or ``sup_<name>``) across records."""
    if key.startswith("sup_"):
        name = key[4:]
        return np.array([r.sup_norms[name] for r in records])
    return np.array([getattr(r, key) for r in records])


def energy_dissipation_residual(prev, cur, nu):
    """Residual of ``dE/dt = -nu int rho u^2 - int phi c_t`` between two records.

    Trapezoidal in time, hence second order in the step. ``background_work``
    is zero for the Boltzmann model and for constant backgrounds.
    """
    dt = cur.t - prev.t
    if dt <= 0:
        raise ValueError("records must be in increasing time order")
    dEdt = (cur.E - prev.E) / dt
    rhs = -0.5 * nu * (prev.dissipation + cur.dissipation) - 0.5 * (prev.background_work + cur.background_work)
    return abs(dEdt - rhs)


@dataclass(frozen=True)
class IonConstants:
    nu: float
    rho_minus: float
    rho_plus: float
    M: float
    E0: float
    Lambda: float
    lambda_ion: float
    A: float
    kappa: float
    rate_pred: float
    Cstar: float

    def to_dict(self):
        return asdict(self)


def ion_constants(nu, rho_minus, rho_plus, M, E0):
    """Hypocoercivity constants of the cold-ion free-energy estimate."""
    nu = check_scalar(nu, "nu", positive=True)
    rho_minus = check_scalar(rho_minus, "rho_minus", positive=True)
    rho_plus = check_scalar(rho_plus, "rho_plus", positive=True)
    M = check_scalar(M, "M", nonnegative=True)
    E0 = check_scalar(E0, "E0", nonnegative=True)
    if rho_minus > 1.0:
        raise DomainError(f"rho_minus = {rho_minus} > 1; the comparability step needs rho_minus <= 1")
    if rho_plus < rho_minus:
        raise DomainError("rho_plus must be at least rho_minus")
    Lam = (M + nu) ** 2 / rho_minus + (1.0 / rho_minus + rho_plus)
    lam = min(nu / Lam, rho_minus / 2.0)
    A = math.sqrt(2.0 * E0)
    kappa = lam * math.exp(-3.0 * A)
    return IonConstants(
        nu=nu, rho_minus=rho_minus, rho_plus=rho_plus, M=M, E0=E0,
        Lambda=Lam, lambda_ion=lam, A=A, kappa=kappa,
        rate_pred=2.0 * kappa / 3.0, Cstar=math.sqrt(2.0) * math.exp(A),
    )


@dataclass
class MomentumReport:
    max_deviation: float
    predicted: np.ndarray = field(repr=False)


def momentum_check(times, momentum, nu):
    """Compare ``m(t) = int u dx`` with ``m(0) exp(-nu t)``."""
    t, m = check_time_series(times, momentum)
    pred = m[0] * np.exp(-nu * (t - t[0]))
    return MomentumReport(float(np.max(np.abs(m - pred))), pred)


@dataclass(frozen=True)
class DecayFit:
    C: float
    r: float
    quality: float
    n_samples: int
    t_start: float

    def to_dict(self):
        return {"C": self.C, "r": self.r, "quality": self.quality}


def fit_decay_rate(times, values, floor=1e-10, burn_in=None, min_samples=10, envelope=False):
    """Least-squares fit of ``log(values) ~ log(C) - r t``.

    The window starts at ``burn_in`` (default: the first time the values
    drop below half their maximum) and keeps samples above ``floor``.
    ``quality`` is the coefficient of determination of the log-linear fit
    (0 when the log-values are constant).

    With ``envelope`` only samples that dominate every later sample are
    used, i.e. the peaks of the non-increasing upper envelope. This is the
    quantity a bound ``C exp(-r t)`` constrains, and it removes the
    spurious near-zeros of oscillating sup norms. For a monotone series
    nothing is dropped.
    """
    t, v = check_time_series(times, values)
    v = np.abs(v)
    if envelope and v.size:
        future_max = np.maximum.accumulate(v[::-1])[::-1]
        keep = v >= future_max
        t, v = t[keep], v[keep]
    if burn_in is None:
        below = np.nonzero(v < 0.5 * np.max(v, initial=0.0))[0]
        t_start = t[below[0]] if below.size else (t[0] if t.size else 0.0)
    else:
        t_start = float(burn_in)
    mask = (t >= t_start) & (v > floor)
    if np.count_nonzero(mask) < min_samples:
        raise InsufficientData(
            f"only {np.count_nonzero(mask)} samples above floor {floor:g} after t = {t_start:g}"
        )
    tt, lv = t[mask], np.log(v[mask])
    slope, icept = np.polyfit(tt, lv, 1)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    ss_res = float(np.sum((lv - (icept + slope * tt)) ** 2))
    quality = 1.0 - ss_res / ss_tot if ss_tot > 1e-300 else 0.0
    return DecayFit(float(np.exp(icept)), float(-slope), quality, int(tt.size), float(t_start))


class DecayRateFit(BaseEstimator):
    """Estimator wrapper around :func:`fit_decay_rate`.

    ``fit(t, values)`` sets ``C_``, ``rate_`` and ``quality_``;
    ``predict(t)`` returns ``C_ exp(-rate_ t)``.
    """

    def __init__(self, floor=1e-10, burn_in=None, min_samples=10, envelope=False):
        self.floor = floor
        self.burn_in = burn_in
        self.min_samples = min_samples
        self.envelope = envelope

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).reshape(-1)
        res = fit_decay_rate(t, y, floor=self.floor, burn_in=self.burn_in,
                             min_samples=self.min_samples, envelope=self.envelope)
        self.C_, self.rate_, self.quality_ = res.C, res.r, res.quality
        self.n_samples_, self.t_start_ = res.n_samples, res.t_start
        return self

    def predict(self, X):
        if not hasattr(self, "rate_"):
            raise AttributeError("DecayRateFit instance is not fitted yet")
        t = np.asarray(X, dtype=float).reshape(-1)
        return self.C_ * np.exp(-self.rate_ * t)


@dataclass
class BoltzmannBoundReport:
    phi_sup: float
    phi_bound: float
    exp_dev: float
    exp_bound: float
    phi_ok: bool
    exp_ok: bool

    @property
    def passed(self):
        return self.phi_ok and self.exp_ok


def boltzmann_deviation_bound_check(phi, E, E0=None, rtol=REL_TOL):
    """Check ``sup|phi| <= (2E)^(1/2)`` and ``sup|exp(phi)-1| <= C* E^(1/2)``.

    ``C* = 2^(1/2) exp((2 E0)^(1/2))`` with ``E0`` defaulting to ``E``.
    """
    vals = phi.values if isinstance(phi, Field) else np.asarray(phi, dtype=float)
    E0 = E if E0 is None else E0
    phi_sup = float(np.max(np.abs(vals)))
    exp_dev = float(np.max(np.abs(np.expm1(vals))))
    phi_bound = math.sqrt(2.0 * max(E, 0.0))
    exp_bound = math.sqrt(2.0) * math.exp(math.sqrt(2.0 * max(E0, 0.0))) * math.sqrt(max(E, 0.0))
    slack = 1e-300
    return BoltzmannBoundReport(
        phi_sup, phi_bound, exp_dev, exp_bound,
        phi_sup <= phi_bound * (1 + rtol) + slack,
        exp_dev <= exp_bound * (1 + rtol) + slack,
    )


@dataclass
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def to_dict(self):
        return {"pass": bool(self.passed), "margin": float(self.margin), "detail": self.detail}


def ion_run_checks(records, constants, rtol=REL_TOL):
    """Evaluate the free-energy and potential inequalities along an ion run."""
    t = series(records, "t")
    E = series(records, "E")
    E0 = E[0]
    checks = []

    dE = np.diff(E)
    tol = 1e-8 * (1.0 + E0)
    worst = float(np.max(dE, initial=-np.inf))
    checks.append(Check("energy_monotone", worst <= tol, tol - worst, f"max increase {worst:.3e}"))

    bound = 3.0 * E0 * np.exp(-constants.rate_pred * (t - t[0]))
    ratio = float(np.max(E / np.where(bound > 0, bound, np.inf)))
    checks.append(Check("energy_hypocoercive_bound", ratio <= 1.0 + rtol, 1.0 - ratio,
                        f"max E/(3E0 exp(-2 kappa t/3)) = {ratio:.3e}"))

    phi_sup = series(records, "phi_sup")
    A = constants.A
    worst = float(np.max(phi_sup - A * (1 + rtol)))
    checks.append(Check("phi_sup_bound", worst <= 0, -worst, f"A = {A:.4e}"))

    exp_dev = series(records, "sup_exp_phi_minus_1")
    eb = constants.Cstar * np.sqrt(np.maximum(E, 0.0))
    worst = float(np.max(exp_dev - eb * (1 + rtol)))
    checks.append(Check("exp_phi_bound", worst <= 0, -worst, f"C* = {constants.Cstar:.4e}"))

    C = np.abs(series(records, "C_cross"))
    comp = series(records, "kinetic") / constants.rho_minus + series(records, "electric")
    worst = float(np.max(C - comp * (1 + rtol) - 1e-300))
    checks.append(Check("cross_term_comparability", worst <= 0, -worst))

    ent = series(records, "entropy")
    eb = math.exp(3.0 * A) / 4.0 * 2.0 * series(records, "electric")
    worst = float(np.max(ent - eb * (1 + rtol) - 1e-300))
    checks.append(Check("entropy_by_electric", worst <= 0, -worst))
    return checks


SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["scenario", "constants", "fits", "checks"],
    "properties": {
        "scenario": {"type": "string"},
        "constants": {"type": "object", "additionalProperties": {"type": ["number", "null"]}},
        "fits": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["C", "r", "quality"],
                "properties": {
                    "C": {"type": ["number", "null"]},
                    "r": {"type": ["number", "null"]},
                    "quality": {"type": ["number", "null"]},
                    "flag": {"type": "string"},
                },
            },
        },
        "checks": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["pass", "margin"],
                "properties": {
                    "pass": {"type": "boolean"},
                    "margin": {"type": ["number", "null"]},
                    "detail": {"type": "string"},
                },
            },
        },
        "blowup_time": {"type": ["number", "null"]},
        "status": {"type": "string"},
    },
}


def fit_norms(records, names=NORM_NAMES, floor=1e-10, envelope=True):
    """Decay fits for each sup norm; unusable series are flagged instead of raising."""
    t = series(records, "t")
    out = {}
    for name in names:
        v = series(records, f"sup_{name}")
        try:
            fit = fit_decay_rate(t, v, floor=floor, envelope=envelope)
            out[name] = fit.to_dict()
        except InsufficientData:
            flag = "below floor" if np.count_nonzero(np.abs(v) > floor) < 10 else "insufficient samples"
            out[name] = {"C": None, "r": None, "quality": None, "flag": flag}
    return out
