"""Characteristic (Lagrangian) solver for the damped pressureless system.

Each characteristic ``i`` carries its position ``x_i``, velocity ``u_i``,
specific volume ``s_i = 1/rho`` and scaled gradient ``w_i = u_x/rho``.
Characteristics are labelled by uniformly spaced initial positions, so
``dx/dlabel = rho0 * s`` and every spatial integral becomes a rectangle
rule over labels. The field equation is re-solved at every RK4 stage.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from sklearn.base import BaseEstimator

from ._validation import check_scalar
from .background import BackgroundProfile
from .diagnostics import DiagnosticsRecord, energy_dissipation_residual, entropy_density
from .exceptions import BlowUp, CFLViolated, CrossingDetected, EPLabError, VacuumInitialData
from .fields import X_LEFT, Field, Grid, TrigInterpolant, derivative, periodic_spline, wrap
from .phaseplane import S_FLOOR, combined_y, LemmaConstants
from .poisson import (
    NEUTRALITY_TOL, LabelSpectral, solve_label_boltzmann,
    solve_label_poisson, solve_linear_poisson, solve_poisson_boltzmann,
)

log = logging.getLogger(__name__)

CFL = 0.5
# per-stage Poisson-Boltzmann tolerance; 1e-12 sits at the roundoff floor
# of the label operator for m >= 512 and only buys extra Newton sweeps
STEP_NEWTON_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class CharacteristicEnsemble:
    """State of ``m`` characteristics at time ``t``.

    ``x`` holds unwrapped positions (continuous in time); use
    :attr:`positions` for values reduced to the torus.
    """

    t: float
    labels: np.ndarray
    x: np.ndarray
    u: np.ndarray
    s: np.ndarray
    w: np.ndarray
    rho0: np.ndarray
    mass_per_gap: np.ndarray
    phi: np.ndarray = None

    @property
    def m(self):
        return self.labels.size

    @property
    def positions(self):
        return wrap(self.x)

    @property
    def total_mass(self):
        return float(np.sum(self.mass_per_gap))

    @property
    def stretch(self):
        """``dx/dlabel`` at each characteristic."""
        return self.rho0 * self.s

    def gaps(self):
        return np.diff(np.append(self.x, self.x[0] + 1.0))


def init_ensemble(rho0, u0, m):
    """Place ``m`` characteristics uniformly and sample the initial data.

    Values at the characteristics come from the trigonometric interpolants
    of ``rho0`` and ``u0``; ``mass_per_gap`` integrates that interpolant
    exactly over each gap.
    """
    m = check_scalar(m, "m", integer=True)
    if m < 64 or m % 2:
        raise ValueError(f"particle count must be even and >= 64, got {m}")
    if np.min(rho0.values) <= 0:
        raise VacuumInitialData(f"initial density has min {np.min(rho0.values):.3g} <= 0")
    labels = X_LEFT + np.arange(m) / m
    rt = TrigInterpolant.from_field(rho0)
    ut = TrigInterpolant.from_field(u0)
    r = np.asarray(rt(labels), dtype=float)
    if np.min(r) <= 0:
        raise VacuumInitialData("interpolated initial density is not positive")
    cum = rt.antiderivative(np.append(labels, labels[0] + 1.0))
    gaps = np.diff(cum)
    u = np.asarray(ut(labels), dtype=float)
    du = np.asarray(ut.derivative(labels), dtype=float)
    return CharacteristicEnsemble(
        t=0.0, labels=labels, x=labels.copy(), u=u, s=1.0 / r, w=du / r,
        rho0=r, mass_per_gap=gaps,
    )


def _cumulative_mass_interpolant(e):
    """Monotone interpolant of the mass to the left of x, with periodic ghosts."""
    x = e.x
    gaps = e.gaps()
    if np.any(gaps <= 0):
        i = int(np.argmin(gaps))
        raise CrossingDetected(f"characteristics {i} and {(i + 1) % e.m} crossed at t = {e.t:.6g}")
    M = np.concatenate([[0.0], np.cumsum(e.mass_per_gap)[:-1]])
    total = e.total_mass
    k = min(4, e.m)
    xe = np.concatenate([x[-k:] - 1.0, x, x[:k] + 1.0])
    Me = np.concatenate([M[-k:] - total, M, M[:k] + total])
    return PchipInterpolator(xe, Me), x[0], total


def _mass_at(interp, x0, total, y):
    shift = np.floor(y - x0)
    return interp(y - shift) + total * shift


def reconstruct_density(e, grid, point_values=True):
    """Conservative density on ``grid`` from the characteristic ensemble.

    Cell averages come from a monotone (PCHIP) interpolant of the
    cumulative mass, so the grid mean equals the ensemble mass exactly.
    With ``point_values`` the cell-averaging is undone spectrally, which
    leaves the mean untouched.
    """
    interp, x0, total = _cumulative_mass_interpolant(e)
    edges = grid.nodes[0] - 0.5 * grid.h + grid.h * np.arange(grid.n + 1)
    Medge = _mass_at(interp, x0, total, edges)
    avg = np.diff(Medge) / grid.h
    if point_values:
        k = grid.wavenumbers
        fh = np.fft.rfft(avg)
        fh[1:] /= np.sinc(k[1:] * grid.h / (2.0 * np.pi))
        avg = np.fft.irfft(fh, n=grid.n)
    return Field(grid, avg)


def _periodic_particle_spline(e, values):
    x = np.append(e.x, e.x[0] + 1.0)
    v = np.append(values, values[0])
    sp = CubicSpline(x, v, bc_type="periodic")
    return lambda y: sp(e.x[0] + np.mod(np.asarray(y) - e.x[0], 1.0))


def ensemble_to_fields(e, grid, background=None):
    """Grid fields ``(rho, u, phi, c)`` interpolated from the ensemble."""
    rho = reconstruct_density(e, grid)
    u = Field(grid, _periodic_particle_spline(e, e.u)(grid.nodes))
    if background is None or background.is_boltzmann:
        g = rho / rho.mean()
        phi = solve_poisson_boltzmann(g, None if e.phi is None else
                                      Field(grid, _periodic_particle_spline(e, e.phi)(grid.nodes)))
        c = phi.map(np.exp)
    else:
        c = background.on_grid(e.t, grid)
        c = c + (rho.mean() - c.mean())
        phi = solve_linear_poisson(rho, c)
    return rho, u, phi, c


@dataclass
class FieldSolution:
    """Field quantities at the characteristics for one stage."""

    E: np.ndarray
    phi: np.ndarray
    c: np.ndarray


class _Dynamics:
    """Right-hand side of the coupled system for one run."""

    def __init__(self, background, nu, m, field_solve="label", grid_n=256,
                 neutrality_tol=NEUTRALITY_TOL, newton_tol=STEP_NEWTON_TOL):
        self.background = background
        self.nu = nu
        self.ops = LabelSpectral(m)
        self.field_solve = field_solve
        self.grid = Grid(grid_n) if field_solve == "grid" else None
        self.neutrality_tol = neutrality_tol
        self.newton_tol = newton_tol
        self.newton_iterations = 0
        if field_solve not in ("label", "grid"):
            raise ValueError(f"field_solve must be 'label' or 'grid', got {field_solve!r}")

    def field(self, e, t, x, s, phi_guess):
        X = e.rho0 * s
        if self.field_solve == "grid":
            return self._grid_field(e, t, x, s, phi_guess)
        if self.background.is_boltzmann:
            guess = np.zeros(e.m) if phi_guess is None else phi_guess
            E, phi, info = solve_label_boltzmann(self.ops, e.rho0, X, guess, tol=self.newton_tol)
            self.newton_iterations += info.iterations
            return FieldSolution(E, phi, np.exp(phi))
        c = self.background(t, x)
        if np.ndim(c) == 0:
            c = np.full(e.m, c)
        E, phi = solve_label_poisson(self.ops, e.rho0, X, c, self.neutrality_tol)
        return FieldSolution(E, phi, c)

    def _grid_field(self, e, t, x, s, phi_guess):
        tmp = replace(e, t=t, x=x, s=s)
        rho = reconstruct_density(tmp, self.grid)
        if self.background.is_boltzmann:
            phi = solve_poisson_boltzmann(rho / rho.mean(), tol=self.newton_tol)
            c_grid = None
        else:
            c_grid = self.background.on_grid(t, self.grid)
            phi = solve_linear_poisson(rho, c_grid, self.neutrality_tol)
        xw = wrap(x)
        E = periodic_spline(derivative(phi))(xw)
        ph = periodic_spline(phi)(xw)
        c = np.exp(ph) if c_grid is None else self.background(t, x) * np.ones(e.m)
        return FieldSolution(E, ph, c)

    def derivs(self, x, u, s, w, f):
        nu = self.nu
        return u, -nu * u - f.E, w, -nu * w + 1.0 - f.c * s


def _check_blowup(e_old, s_new, x_new, dt, s_floor):
    smin = float(np.min(s_new))
    if smin <= s_floor:
        bad = s_new <= s_floor
        so, sn = e_old.s[bad], s_new[bad]
        frac = np.clip((so - s_floor) / np.where(so > sn, so - sn, 1.0), 0.0, 1.0)
        raise BlowUp(e_old.t + float(np.min(frac)) * dt)
    gaps = np.diff(np.append(x_new, x_new[0] + 1.0))
    if np.any(gaps <= 0):
        raise BlowUp(e_old.t + dt, "characteristics crossed")


def _rk4(dyn, e, dt, f0, s_floor):
    """One RK4 step; returns the new ensemble and its field solution."""
    t = e.t
    h2 = 0.5 * dt
    x, u, s, w = e.x, e.u, e.s, e.w
    k1 = dyn.derivs(x, u, s, w, f0)
    y2 = [a + h2 * b for a, b in zip((x, u, s, w), k1)]
    f2 = dyn.field(e, t + h2, y2[0], y2[2], f0.phi)
    k2 = dyn.derivs(*y2, f2)
    y3 = [a + h2 * b for a, b in zip((x, u, s, w), k2)]
    f3 = dyn.field(e, t + h2, y3[0], y3[2], f2.phi)
    k3 = dyn.derivs(*y3, f3)
    y4 = [a + dt * b for a, b in zip((x, u, s, w), k3)]
    f4 = dyn.field(e, t + dt, y4[0], y4[2], f3.phi)
    k4 = dyn.derivs(*y4, f4)
    new = [a + dt / 6.0 * (p + 2.0 * q + 2.0 * r + z)
           for a, p, q, r, z in zip((x, u, s, w), k1, k2, k3, k4)]
    _check_blowup(e, new[2], new[0], dt, s_floor)
    e_new = replace(e, t=t + dt, x=new[0], u=new[1], s=new[2], w=new[3])
    f_new = dyn.field(e_new, e_new.t, e_new.x, e_new.s, f4.phi)
    return replace(e_new, phi=f_new.phi), f_new


def check_step_size(e, nu, dt, cfl=CFL):
    """Raise :class:`CFLViolated` unless ``dt`` respects the transport and damping limits."""
    umax = float(np.max(np.abs(e.u)))
    gap = float(np.min(e.gaps()))
    if umax > 0 and dt > cfl * gap / umax:
        raise CFLViolated(f"dt = {dt} exceeds {cfl} * min gap / max|u| = {cfl * gap / umax:.3g}")
    if dt > 0.1 / nu:
        raise CFLViolated(f"dt = {dt} exceeds 0.1/nu = {0.1 / nu:.3g}")


def step_coupled(e, p, nu, dt, s_floor=S_FLOOR, field_solve="label", grid_n=256):
    """Advance the ensemble by one RK4 step of the coupled system."""
    check_step_size(e, nu, dt)
    dyn = _Dynamics(p, nu, e.m, field_solve, grid_n)
    f0 = dyn.field(e, e.t, e.x, e.s, e.phi)
    out, _ = _rk4(dyn, e, dt, f0, s_floor)
    return out


def ensemble_record(e, f, background, nu, lemma, energy_residual=0.0, with_grid=None):
    """Build a :class:`DiagnosticsRecord` from label-space quadratures."""
    X = e.rho0 * e.s
    rho = 1.0 / e.s
    ion = background.is_boltzmann
    cbar = background.cbar
    sup = {
        "rho_minus_cbar": float(np.max(np.abs(rho - cbar))),
        "u": float(np.max(np.abs(e.u))),
        "dx_u": float(np.max(np.abs(e.w * rho))),
        "dx_phi": float(np.max(np.abs(f.E))),
        "dxx_phi": float(np.max(np.abs(rho - f.c))),
        "exp_phi_minus_1": float(np.max(np.abs(np.expm1(f.phi)))),
    }
    kinetic = 0.5 * float(np.mean(e.rho0 * e.u ** 2))
    electric = 0.5 * float(np.mean(f.E ** 2 * X))
    entropy = float(np.mean(entropy_density(f.phi) * X)) if ion else 0.0
    work = 0.0
    if not ion and not background.is_constant:
        work = float(np.mean(f.phi * background.time_derivative(e.t, e.x) * X))
    neutral = abs(float(np.mean(e.rho0 - f.c * X)))
    if with_grid is not None and not ion:
        rg = reconstruct_density(e, with_grid)
        cg = background.on_grid(e.t, with_grid)
        neutral = max(neutral, abs(rg.mean() - cg.mean()))
    return DiagnosticsRecord(
        t=e.t,
        sup_norms=sup,
        E=kinetic + electric + entropy,
        C_cross=float(np.mean(e.u * f.E * X)),
        momentum=float(np.mean(e.u * X)),
        neutrality_residual=neutral,
        energy_dissipation_residual=energy_residual,
        y_sup=float(np.max(combined_y(e.w, e.s, lemma))),
        kinetic=kinetic,
        electric=electric,
        entropy=entropy,
        dissipation=2.0 * kinetic,
        background_work=work,
        rho_min=float(np.min(rho)),
        rho_max=float(np.max(rho)),
        phi_sup=float(np.max(np.abs(f.phi))),
    )


class LagrangianSolver(BaseEstimator):
    """Time integrator for the coupled system on a characteristic ensemble.

    Parameters mirror the scenario configuration. ``fit(rho0, u0)`` runs
    the simulation; afterwards ``records_`` holds the diagnostics series,
    ``ensemble_`` the final state and ``blowup_time_`` the breakdown time
    (``None`` for a completed run).
    """

    def __init__(self, nu=1.0, background=None, m=1024, dt=1e-3, T=1.0,
                 diag_every=10, field_solve="label", grid_n=256,
                 s_floor=S_FLOOR, newton_tol=STEP_NEWTON_TOL, neutrality_tol=NEUTRALITY_TOL):
        self.nu = nu
        self.background = background
        self.m = m
        self.dt = dt
        self.T = T
        self.diag_every = diag_every
        self.field_solve = field_solve
        self.grid_n = grid_n
        self.s_floor = s_floor
        self.newton_tol = newton_tol
        self.neutrality_tol = neutrality_tol

    def _background(self):
        return BackgroundProfile.constant(1.0) if self.background is None else self.background

    def fit(self, rho0, u0=None):
        """Initialise from grid fields and run to ``T``."""
        if u0 is None:
            u0 = rho0.grid.zeros()
        e = init_ensemble(rho0, u0, self.m)
        return self.run(e)

    def run(self, e):
        nu = check_scalar(self.nu, "nu", positive=True)
        dt = check_scalar(self.dt, "dt", positive=True)
        T = check_scalar(self.T, "T", nonnegative=True)
        bg = self._background()
        try:
            check_step_size(e, nu, dt)
        except CFLViolated as exc:
            exc.t, exc.records = e.t, []
            raise
        dyn = _Dynamics(bg, nu, e.m, self.field_solve, self.grid_n,
                        self.neutrality_tol, self.newton_tol)
        cbar = bg.cbar
        lemma = LemmaConstants.from_params(nu, cbar, max(1.0, float(np.max(np.abs(e.s)))))
        grid = Grid(self.grid_n)
        nsteps = int(round(T / dt))
        if abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"dt = {dt} does not divide T = {T}")
        every = max(1, int(self.diag_every))

        f = dyn.field(e, e.t, e.x, e.s, e.phi)
        e = replace(e, phi=f.phi)
        prev = ensemble_record(e, f, bg, nu, lemma, with_grid=grid)
        self.records_ = [prev]
        self.blowup_time_ = None
        self.status_ = "running"
        try:
            for n in range(1, nsteps + 1):
                e_new, f = _rk4(dyn, e, dt, f, self.s_floor)
                e_new = replace(e_new, t=n * dt)
                rec = ensemble_record(e_new, f, bg, nu, lemma)
                rec.energy_dissipation_residual = energy_dissipation_residual(prev, rec, nu)
                if n % every == 0 or n == nsteps:
                    if n % (every * 10) == 0 or n == nsteps:
                        rec = ensemble_record(e_new, f, bg, nu, lemma, rec.energy_dissipation_residual, grid)
                    self.records_.append(rec)
                prev = rec
                e = e_new
        except BlowUp as exc:
            self.blowup_time_ = exc.t_star
            self.status_ = "blowup"
            self.ensemble_ = e
            exc.records = self.records_
            log.info("blow-up at t* = %.6g", exc.t_star)
            raise
        except EPLabError as exc:
            self.status_ = "failed"
            self.ensemble_ = e
            if not hasattr(exc, "t"):
                exc.t = e.t
            exc.records = self.records_
            log.error("solver failure near t = %.6g: %s", e.t, exc)
            raise
        self.ensemble_ = e
        self.status_ = "completed"
        self.newton_iterations_ = dyn.newton_iterations
        return self



def solver_from_config(cfg):
    from .config import build_background

    return LagrangianSolver(
        nu=cfg["nu"], background=build_background(cfg), m=cfg["particles"],
        dt=cfg["dt"], T=cfg["T"], diag_every=cfg["diag_every"],
        field_solve=cfg["field_solve"], grid_n=cfg["grid"],
    )


def run_scenario(config):
    """Run a PDE scenario on characteristics.

    Returns ``(records, final_ensemble)``. Solver errors propagate with
    ``records`` (and for non-blow-up failures ``t``) attached.
    """
    from .config import initial_fields, normalize

    cfg = normalize(config)
    solver = solver_from_config(cfg)
    rho0, u0 = initial_fields(cfg)
    solver.fit(rho0, u0)
    return solver.records_, solver.ensemble_
