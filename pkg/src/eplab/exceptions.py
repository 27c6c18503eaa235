"""Exception types raised by the solvers."""


class EPLabError(Exception):
    """Base class for all errors raised by eplab."""


class InvalidFieldError(EPLabError, ValueError):
    pass


class NeutralityViolated(EPLabError, ValueError):
    """The periodic field equation has no solution for the given source.

    ``mean`` carries the offending mean of the source term.
    """

    def __init__(self, mean, tol=None):
        self.mean = float(mean)
        self.tol = tol
        msg = f"neutrality violated: mean(source) = {self.mean:.3e}"
        if tol is not None:
            msg += f" (tolerance {tol:.1e})"
        super().__init__(msg)


class NewtonDiverged(EPLabError, RuntimeError):
    def __init__(self, residual, iterations):
        self.residual = float(residual)
        self.iterations = int(iterations)
        super().__init__(
            f"Newton iteration failed: residual {self.residual:.3e} "
            f"after {self.iterations} iterations"
        )


class UnsupportedVariant(EPLabError, ValueError):
    pass


class BlowUp(EPLabError, RuntimeError):
    """The solution left the classical regime at time ``t_star``."""

    def __init__(self, t_star, reason="specific volume reached the floor"):
        self.t_star = float(t_star)
        self.reason = reason
        super().__init__(f"blow-up at t* = {self.t_star:.6g}: {reason}")


class VacuumInitialData(EPLabError, ValueError):
    pass


class CrossingDetected(EPLabError, RuntimeError):
    pass


class VacuumReached(EPLabError, RuntimeError):
    def __init__(self, t, rho_min):
        self.t = float(t)
        self.rho_min = float(rho_min)
        super().__init__(f"density {self.rho_min:.3e} below floor at t = {self.t:.6g}")


class CFLViolated(EPLabError, ValueError):
    pass


class DomainError(EPLabError, ValueError):
    pass


class InsufficientData(EPLabError, ValueError):
    pass


class ConfigError(EPLabError, ValueError):
    pass
