"""Numerical laboratory for decay of damped pressureless Euler-Poisson flows."""
from .background import BackgroundProfile, Envelope, Variant
from .diagnostics import DecayRateFit, DiagnosticsRecord, fit_decay_rate
from .eulerian import EulerianSolver, FluidState, run_oracle, step_fv
from .exceptions import (
    BlowUp, CFLViolated, ConfigError, CrossingDetected, DomainError, EPLabError,
    InsufficientData, InvalidFieldError, NeutralityViolated, NewtonDiverged,
    UnsupportedVariant, VacuumInitialData, VacuumReached,
)
from .fields import Field, Grid, TrigInterpolant
from .lagrangian import (
    CharacteristicEnsemble, LagrangianSolver, init_ensemble, reconstruct_density,
    run_scenario, step_coupled,
)
from .phaseplane import LemmaConstants, PhaseState, closed_form_constant_c, integrate, verify_lemma
from .poisson import solve_linear_poisson, solve_poisson_boltzmann

__version__ = "0.1.0"
