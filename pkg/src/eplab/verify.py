"""Built-in acceptance suites.

Each check runs a small scenario, compares against an analytic or
independent numerical reference and returns an :class:`AcceptanceResult`
that includes its wall-clock time against a budget.
"""
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import i0

from .background import BackgroundProfile, Envelope
from .diagnostics import (
    NORM_NAMES, DECAY_NORMS, fit_decay_rate, ion_constants, ion_run_checks,
    momentum_check, series,
)
from .eulerian import EulerianSolver
from .exceptions import BlowUp
from .fields import Grid, TrigInterpolant
from .lagrangian import LagrangianSolver, reconstruct_density
from .phaseplane import (
    S_FLOOR, LemmaConstants, PhaseState, blowup_time_constant_c, closed_form_constant_c,
    critical_w0, integrate, lyapunov_L, verify_lemma, window_bound, combined_y,
)
from .poisson import solve_linear_poisson, solve_poisson_boltzmann

TWO_PI = 2.0 * math.pi


@dataclass
class AcceptanceResult:
    number: int
    name: str
    passed: bool
    elapsed: float
    budget: float
    details: dict = field(default_factory=dict)

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  [{self.number:2d}] {self.name} ({self.elapsed:.2f} s / {self.budget:g} s)"

    def to_dict(self):
        return asdict(self)


def _finish(number, name, budget, start, checks, details):
    elapsed = time.perf_counter() - start
    details = dict(details)
    details["checks"] = {k: bool(v) for k, v in checks.items()}
    details["checks"]["runtime"] = elapsed < budget
    return AcceptanceResult(number, name, all(details["checks"].values()), elapsed, budget, details)


def decay_background():
    """Exponentially decaying background ``1 + 0.2 cos(2 pi x) exp(-t/2)``."""
    return BackgroundProfile.exponential_decay(1.0, TrigInterpolant.single_mode(1, 1.0, "cos"), C1=0.2, r1=0.5)


def subcritical_initial(grid):
    rho0 = grid.sample(lambda x: 1.0 + 0.1 * np.cos(TWO_PI * x))
    u0 = grid.sample(lambda x: 0.05 * np.sin(TWO_PI * x))
    return rho0, u0


def check_poisson_manufactured():
    start = time.perf_counter()
    grid = Grid(128)
    x = grid.nodes
    cases = {
        "single_mode": (0.3 * np.sin(TWO_PI * x), 0.3 * TWO_PI ** 2 * np.sin(TWO_PI * x)),
        "two_mode": (
            0.2 * np.cos(TWO_PI * x) + 0.05 * np.sin(3 * TWO_PI * x),
            0.2 * TWO_PI ** 2 * np.cos(TWO_PI * x) + 0.05 * (3 * TWO_PI) ** 2 * np.sin(3 * TWO_PI * x),
        ),
    }
    errors = {}
    for name, (phi, src) in cases.items():
        c = grid.constant(1.0)
        sol = solve_linear_poisson(c + grid.field(src), c)
        errors[name] = float(np.max(np.abs(sol.values - phi)))
    checks = {f"{k}_error": v <= 1e-10 for k, v in errors.items()}
    return _finish(1, "Poisson manufactured solutions", 1.0, start, checks, {"errors": errors})


def quadratic_contraction(residuals, count=3, factor=10.0, floor=1e-13):
    """Whether each of the last ``count`` Newton steps contracts quadratically (or hits the floor)."""
    r = list(residuals)[-(count + 1):]
    return all(b <= factor * a * a or b <= floor for a, b in zip(r[:-1], r[1:]))


def check_poisson_boltzmann():
    start = time.perf_counter()
    grid = Grid(128)
    x = grid.nodes
    flat = solve_poisson_boltzmann(grid.constant(1.0))
    rho = grid.sample(lambda y: 1.0 + 0.1 * np.sin(TWO_PI * y))
    phi, info = solve_poisson_boltzmann(rho, return_info=True)
    neutral = abs(float(np.mean(np.exp(phi.values) - rho.values)))
    # manufactured solution with unit mean of exp(phi)
    star = 0.02 * np.cos(TWO_PI * x) - math.log(i0(0.02))
    rho_star = grid.field(0.02 * TWO_PI ** 2 * np.cos(TWO_PI * x) + np.exp(star))
    phi_star = solve_poisson_boltzmann(rho_star)
    checks = {
        "constant_density_zero_potential": flat.sup_norm() <= 1e-13,
        "residual": info.residual <= 1e-12,
        "iterations": info.iterations <= 8,
        "quadratic_contraction": quadratic_contraction(info.residuals),
        "neutrality": neutral <= 1e-12,
        "manufactured": float(np.max(np.abs(phi_star.values - star))) <= 1e-10,
    }
    details = {
        "residuals": info.residuals, "iterations": info.iterations, "neutrality": neutral,
        "manufactured_error": float(np.max(np.abs(phi_star.values - star))),
    }
    return _finish(2, "Poisson-Boltzmann Newton", 1.0, start, checks, details)


PHASE_CASES = ((1.0, 1.0, 0.0, 2.0), (2.0, 1.0, 0.0, 2.0), (3.0, 2.0, 0.0, 1.5))


def _rk4_error(nu, cbar, w0, s0, dt, times=(1.0, 5.0, 10.0)):
    traj = integrate(PhaseState(w0, s0), cbar, nu, dt, max(times))
    err = 0.0
    for t in times:
        i = int(round(t / dt))
        ex = closed_form_constant_c(w0, s0, nu, cbar, t)
        err = max(err, abs(traj.w[i] - ex.w), abs(traj.s[i] - ex.s))
    return err


def check_phaseplane_oracle():
    start = time.perf_counter()
    errors, ratios = {}, {}
    for nu, cbar, w0, s0 in PHASE_CASES:
        key = f"nu={nu:g},cbar={cbar:g}"
        errors[key] = _rk4_error(nu, cbar, w0, s0, 1e-3)
        # the order is measured where truncation error dominates roundoff
        dt0 = 0.1 / max(1.0, nu, cbar)
        ratios[key] = _rk4_error(nu, cbar, w0, s0, dt0) / _rk4_error(nu, cbar, w0, s0, dt0 / 2)
    checks = {
        "match_closed_form": max(errors.values()) <= 1e-8,
        "halving_ratio": min(ratios.values()) >= 12.0,
    }
    return _finish(3, "Phase-plane RK4 vs closed form", 1.0, start, checks,
                   {"errors": errors, "halving_ratios": ratios})


LEMMA_START = (0.3, 1.4)


def check_lyapunov_exponential():
    start = time.perf_counter()
    nu, cbar, C1 = 1.0, 1.0, 0.3
    reports = {}
    ok = True
    for r1 in (0.1, 0.25, 5.0):
        env = Envelope("exponential", C1=C1, r1=r1)
        traj = integrate(PhaseState(*LEMMA_START), lambda t, env=env: cbar + env(t), nu, 0.01, 60.0, c_plus=cbar + C1)
        const = LemmaConstants.from_params(nu, cbar, max(np.max(np.abs(traj.s)), np.max(np.abs(traj.w))), r1)
        rep = verify_lemma(traj, const, envelope=r1, rtol=1e-6)
        reports[f"r1={r1:g}"] = {
            "gronwall_ok": rep.gronwall_ok, "comparability_ok": rep.comparability_ok,
            "fitted_rate": rep.fitted_rate, "target": 0.95 * min(0.25, r1) / 2, "rate_ok": rep.rate_ok,
            "flags": rep.flags,
        }
        ok = ok and rep.passed and rep.fitted_rate >= 0.95 * min(0.25, r1) / 2
    return _finish(4, "Lyapunov decay, exponential envelope", 5.0, start, {"lemma": ok}, {"runs": reports})


def check_lyapunov_general():
    start = time.perf_counter()
    nu, cbar, C1 = 1.0, 1.0, 0.3
    env = Envelope("rational", C1=C1, p=2.0)
    traj = integrate(PhaseState(*LEMMA_START), lambda t: cbar + env(t), nu, 0.01, 50.0, c_plus=cbar + C1)
    t = traj.t
    Q = (traj.s - 1.0 / cbar) ** 2 + traj.w ** 2
    const = LemmaConstants.from_params(nu, cbar, max(np.max(np.abs(traj.s)), np.max(np.abs(traj.w))))
    r0 = const.lam / 2.0
    ref = np.exp(-r0 * t) + env.window_sup(t)
    # C0 is fitted on the first half and must hold on the second half
    first = t <= 25.0
    C0 = float(np.max(Q[first] / ref[first]))
    holdout = float(np.max(Q[~first] / (C0 * ref[~first])))
    y = combined_y(traj.w, traj.s, const)
    wb = window_bound(traj, const, env, cbar, cbar + C1)
    L = lyapunov_L(traj.w, traj.s, cbar)
    checks = {
        "fitted_envelope_holds_out_of_sample": holdout <= 1.0,
        "below_1e-4_at_t50": Q[-1] < 1e-4,
        "window_bound": bool(np.all(y <= wb * (1 + 1e-6))),
        "comparability": bool(np.all((y >= 0.5 * L * (1 - 1e-8)) & (y <= 2 * L * (1 + 1e-8)))),
    }
    details = {"C0": C0, "r0": r0, "holdout_ratio": holdout, "Q_final": float(Q[-1])}
    return _finish(5, "Lyapunov decay, general envelope", 5.0, start, checks, details)


def check_full_decay(m=1024, dt=1e-3, T=30.0):
    start = time.perf_counter()
    grid = Grid(256)
    solver = LagrangianSolver(nu=1.0, background=decay_background(), m=m, dt=dt, T=T,
                              diag_every=10, grid_n=grid.n)
    solver.fit(*subcritical_initial(grid))
    rec = solver.records_
    t = series(rec, "t")
    finals, fits = {}, {}
    for name in DECAY_NORMS:
        v = series(rec, f"sup_{name}")
        finals[name] = float(v[-1])
        fit = fit_decay_rate(t, v, envelope=True)
        fits[name] = {"rate": fit.r, "quality": fit.quality}
    neutral = float(np.max(series(rec, "neutrality_residual")))
    mom = momentum_check(t, series(rec, "momentum"), 1.0).max_deviation
    checks = {
        "norms_below_1e-4": max(finals.values()) < 1e-4,
        "rates_positive": min(f["rate"] for f in fits.values()) > 0,
        "fit_quality": min(f["quality"] for f in fits.values()) >= 0.98,
        "neutrality": neutral <= 1e-10,
        "momentum_law": mom <= 1e-6,
    }
    details = {"final_norms": finals, "fits": fits, "neutrality_max": neutral, "momentum_deviation": mom}
    return _finish(6, "Full system decay, exponential background", 60.0, start, checks, details)


def check_ion_model(m=512, dt=2e-3, T=30.0):
    start = time.perf_counter()
    grid = Grid(256)
    solver = LagrangianSolver(nu=1.0, background=BackgroundProfile.boltzmann(), m=m, dt=dt, T=T,
                              diag_every=5, grid_n=grid.n)
    solver.fit(*subcritical_initial(grid))
    rec = solver.records_
    rho_minus = float(np.min(series(rec, "rho_min")))
    rho_plus = float(np.max(series(rec, "rho_max")))
    M = float(np.max(series(rec, "sup_dx_u")))
    const = ion_constants(1.0, rho_minus, rho_plus, M, rec[0].E)
    checks = {c.name: c.passed for c in ion_run_checks(rec, const)}
    finals = {name: rec[-1].sup_norms[name] for name in NORM_NAMES}
    checks["norms_below_1e-4"] = max(finals.values()) < 1e-4
    details = {"constants": const.to_dict(), "final_norms": finals}
    return _finish(7, "Ion model free energy and potential bounds", 120.0, start, checks, details)


def _oracle_difference(n, T=1.0):
    grid = Grid(n)
    rho0, u0 = subcritical_initial(grid)
    bg = decay_background()
    lag = LagrangianSolver(nu=1.0, background=bg, m=n, dt=1e-3, T=T, diag_every=1000, grid_n=n).fit(rho0, u0)
    eul = EulerianSolver(nu=1.0, background=bg, T=T, diag_every=10 ** 6).fit(rho0, u0)
    rho_l = reconstruct_density(lag.ensemble_, grid, point_values=False)
    return float(np.max(np.abs(rho_l.values - eul.state_.rho.values)))


def check_cross_solver(n=2048):
    start = time.perf_counter()
    d1 = _oracle_difference(n)
    d2 = _oracle_difference(2 * n)
    ratio = d1 / d2 if d2 > 0 else math.inf
    checks = {"difference": d1 <= 5e-3, "refinement_ratio": 1.5 <= ratio <= 3.0}
    return _finish(8, "Characteristic vs finite-volume oracle", 120.0, start, checks,
                   {"difference": d1, "difference_refined": d2, "ratio": ratio})


def check_energy_residual(m=512, T=2.0):
    start = time.perf_counter()
    grid = Grid(256)
    rho0, u0 = subcritical_initial(grid)
    worst = []
    for dt, every in ((2e-3, 5), (1e-3, 10)):
        s = LagrangianSolver(nu=1.0, background=BackgroundProfile.boltzmann(), m=m, dt=dt, T=T,
                             diag_every=every, grid_n=grid.n).fit(rho0, u0)
        worst.append(float(np.max(series(s.records_[1:], "energy_dissipation_residual"))))
    ratio = worst[0] / worst[1]
    return _finish(9, "Energy dissipation residual order", 60.0, start, {"ratio": 3.2 <= ratio <= 4.8},
                   {"max_residual": worst, "ratio": ratio})


def supercritical_amplitude(nu=1.0, cbar=1.0, factor=2.0):
    """Velocity amplitude whose steepest compression is ``factor`` times the critical ``w0``."""
    wc = critical_w0(1.0 / cbar, nu, cbar)
    return -factor * wc / TWO_PI, wc


def check_blowup(m=256):
    start = time.perf_counter()
    A, wc = supercritical_amplitude()
    grid = Grid(256)
    rho0 = grid.constant(1.0)
    u0 = grid.sample(lambda x: -A * np.sin(TWO_PI * x))
    times = []
    for dt in (2e-3, 1e-3):
        try:
            LagrangianSolver(nu=1.0, m=m, dt=dt, T=5.0).fit(rho0, u0)
            times.append(math.inf)
        except BlowUp as exc:
            times.append(exc.t_star)
    # each characteristic obeys the constant-background ODE exactly
    oracle = blowup_time_constant_c(-TWO_PI * A, 1.0, 1.0, 1.0, S_FLOOR)
    rel = abs(times[0] - times[1]) / times[1] if math.isfinite(times[1]) else math.inf
    checks = {
        "blowup_finite": all(math.isfinite(t) for t in times),
        "dt_stability": rel <= 0.01,
        "matches_phase_plane": math.isfinite(times[1]) and abs(times[1] - oracle) <= 0.01 * oracle,
    }
    details = {"critical_w0": wc, "w0": -TWO_PI * A, "t_star": times, "oracle": oracle, "relative_change": rel}
    return _finish(10, "Blow-up detection", 10.0, start, checks, details)


SUITES = {
    "poisson": (check_poisson_manufactured, check_poisson_boltzmann),
    "phaseplane": (check_phaseplane_oracle, check_blowup),
    "lemma": (check_lyapunov_exponential, check_lyapunov_general),
    "theorem11": (check_full_decay,),
    "ion": (check_ion_model, check_energy_residual),
    "oracle": (check_cross_solver,),
}
SUITE_NAMES = tuple(SUITES) + ("all",)


def suite_checks(name):
    if name == "all":
        return sorted((c for cs in SUITES.values() for c in cs), key=lambda c: _ORDER[c])
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]


_ORDER = {
    check_poisson_manufactured: 1, check_poisson_boltzmann: 2, check_phaseplane_oracle: 3,
    check_lyapunov_exponential: 4, check_lyapunov_general: 5, check_full_decay: 6,
    check_ion_model: 7, check_cross_solver: 8, check_energy_residual: 9, check_blowup: 10,
}


def run_suite(name):
    return [check() for check in suite_checks(name)]
