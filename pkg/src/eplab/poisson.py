"""Linear Poisson and Poisson-Boltzmann solvers on the periodic torus.

Two families live here:

* grid solvers acting on :class:`~eplab.fields.Field` objects, where the
  unknown potential is sampled at uniform grid nodes;
* label-space solvers acting on plain arrays indexed by characteristic
  labels (uniform in the initial position).  In those coordinates the field
  equation reads ``-d/dxi (dphi/dxi / X) = rho0 - c X`` with ``X = dx/dxi``,
  so no interpolation between particles and a grid is needed.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from ._validation import check_same_grid
from .exceptions import NeutralityViolated, NewtonDiverged
from .fields import Field

NEUTRALITY_TOL = 1e-10
NEWTON_TOL = 1e-12
MIN_STEP = 2.0 ** -10
_EPS = np.finfo(float).eps


@dataclass
class NewtonInfo:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else np.inf


def solve_linear_poisson(rho, c, neutrality_tol=NEUTRALITY_TOL):
    """Solve ``-phi'' = rho - c`` with the gauge ``mean(phi) = 0``.

    Raises :class:`NeutralityViolated` if ``|mean(rho - c)|`` exceeds
    ``neutrality_tol``; the mean is otherwise discarded.
    """
    grid = check_same_grid(rho, c)
    src = rho.values - c.values
    m = float(np.mean(src))
    if abs(m) > neutrality_tol:
        raise NeutralityViolated(m, neutrality_tol)
    k = grid.wavenumbers
    sh = np.fft.rfft(src)
    sh[0] = 0.0
    sh[1:] /= k[1:] ** 2
    return Field(grid, np.fft.irfft(sh, n=grid.n))


def newton_jacobian_apply(phi, v):
    """Apply the linearised Poisson-Boltzmann operator ``-v'' + exp(phi) v``."""
    grid = check_same_grid(phi, v)
    return Field(grid, _neg_laplacian(v.values, grid.wavenumbers) + np.exp(phi.values) * v.values)


def _neg_laplacian(v, k):
    vh = np.fft.rfft(v)
    vh *= k ** 2
    return np.fft.irfft(vh, n=v.size)


def boltzmann_residual(phi, rho):
    """Pointwise residual ``-phi'' + exp(phi) - rho``."""
    grid = check_same_grid(phi, rho)
    r = _neg_laplacian(phi.values, grid.wavenumbers) + np.exp(phi.values) - rho.values
    return Field(grid, r)


def solve_cyclic_tridiagonal(lower, diag, upper, rhs):
    """Solve a periodic tridiagonal system by Sherman-Morrison.

    Row ``i`` reads ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]``
    with indices taken cyclically; ``rhs`` may have several columns.
    """
    a = np.asarray(lower, dtype=float)
    b = np.array(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = b.size
    gamma = -b[0]
    b[0] -= gamma
    b[-1] -= a[0] * c[-1] / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = c[-1]
    cols = rhs.reshape(n, -1)
    sol = solve_banded((1, 1), ab, np.column_stack([cols, u]))
    y, z = sol[:, :-1], sol[:, -1]
    vy = y[0] + a[0] / gamma * y[-1]
    vz = z[0] + a[0] / gamma * z[-1]
    x = y - np.outer(z, vy / (1.0 + vz))
    return x.reshape(rhs.shape)


def pcg(apply_a, b, apply_m, x0=None, rtol=1e-14, atol=0.0, maxiter=200):
    """Preconditioned conjugate gradients for a symmetric positive definite operator."""
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_a(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    target = max(rtol * bnorm, atol)
    if np.linalg.norm(r) <= target:
        return x
    z = apply_m(r)
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        ap = apply_a(p)
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= target:
            break
        z = apply_m(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def solve_poisson_boltzmann(rho, phi_guess=None, tol=NEWTON_TOL, max_iter=50,
                            mass_tol=NEUTRALITY_TOL, return_info=False):
    """Solve ``-phi'' + exp(phi) = rho`` on the grid by damped Newton.

    ``rho`` must be positive with unit mean (within ``mass_tol``). Each
    Newton correction is obtained by conjugate gradients on the spectral
    Jacobian, preconditioned by the cyclic tridiagonal finite-difference
    Jacobian. Steps are halved (down to ``2**-10``) until the residual L2
    norm decreases.
    """
    grid = rho.grid
    r_vals = rho.values
    if np.any(r_vals <= 0):
        raise ValueError("Poisson-Boltzmann solve needs a strictly positive density")
    mass_dev = float(np.mean(r_vals)) - 1.0
    if abs(mass_dev) > mass_tol:
        raise NeutralityViolated(mass_dev, mass_tol)
    if phi_guess is None:
        phi = np.zeros(grid.n)
    else:
        check_same_grid(rho, phi_guess)
        phi = np.array(phi_guess.values)
    k = grid.wavenumbers
    h2 = grid.h ** 2
    off = np.full(grid.n, -1.0 / h2)

    def residual(p):
        return _neg_laplacian(p, k) + np.exp(p) - r_vals

    info = NewtonInfo()
    r = residual(phi)
    res = float(np.max(np.abs(r)))
    info.residuals.append(res)
    last_step = np.inf
    for it in range(1, max_iter + 2):
        # spectral second derivatives amplify roundoff by k_max**2
        floor = 4 * _EPS * (k[-1] ** 2 * np.max(np.abs(phi)) + np.max(r_vals))
        if res <= tol or (res <= floor and last_step <= 1e-14 * (1.0 + np.max(np.abs(phi)))):
            info.converged = True
            break
        if it > max_iter:
            raise NewtonDiverged(res, max_iter)
        q = np.exp(phi)
        diag = 2.0 / h2 + q

        def apply_j(v, q=q):
            return _neg_laplacian(v, k) + q * v

        def apply_m(v, diag=diag):
            return solve_cyclic_tridiagonal(off, diag, off, v)

        delta = pcg(apply_j, -r, apply_m, rtol=1e-15, atol=1e-3 * tol)
        accepted = _backtrack(residual, phi, delta, r)
        if accepted is None:
            if res <= floor:
                info.converged = True
                break
            raise NewtonDiverged(res, it)
        step, phi, r = accepted
        res = float(np.max(np.abs(r)))
        last_step = step * float(np.max(np.abs(delta)))
        info.iterations = it
        info.residuals.append(res)
        info.steps.append(step)
    out = Field(grid, phi)
    return (out, info) if return_info else out


def _backtrack(residual, phi, delta, r):
    """Largest step in 1, 1/2, ..., 2**-10 that lowers the residual L2 norm.

    Returns ``(step, new_phi, new_residual)`` or ``None``.
    """
    l2 = np.linalg.norm(r)
    step = 1.0
    while step >= MIN_STEP:
        trial = phi + step * delta
        r_trial = residual(trial)
        if np.linalg.norm(r_trial) < l2:
            return step, trial, r_trial
        step *= 0.5
    return None


class LabelSpectral:
    """Spectral calculus on ``m`` uniformly spaced characteristic labels."""

    def __init__(self, m):
        self.m = int(m)
        self.k = 2.0 * np.pi * np.fft.rfftfreq(self.m, d=1.0 / self.m)
        self.ik = 1j * self.k
        self.ik[-1] = 0.0
        inv = np.zeros_like(self.ik)
        inv[1:-1] = 1.0 / self.ik[1:-1]
        self.inv_ik = inv
        self.k2 = self.k ** 2
        self.k2_odd = self.k2.copy()
        self.k2_odd[-1] = 0.0

    def d(self, f):
        return np.fft.irfft(np.fft.rfft(f) * self.ik, n=self.m)

    def antiderivative(self, f):
        """Zero-mean periodic antiderivative of ``f - mean(f)``."""
        return np.fft.irfft(np.fft.rfft(f) * self.inv_ik, n=self.m)


def solve_label_poisson(ops, rho0, X, c_vals, neutrality_tol=NEUTRALITY_TOL):
    """Electric field and potential at the labels for a prescribed background.

    Returns ``(E, phi)`` with ``E = dphi/dx`` at each characteristic, fixed by
    ``integral E dx = 0`` and ``integral phi dx = 0``.
    """
    f = rho0 - c_vals * X
    mf = float(np.mean(f))
    if abs(mf) > neutrality_tol:
        raise NeutralityViolated(mf, neutrality_tol)
    P = ops.antiderivative(f)
    mx = np.mean(X)
    E = np.mean(P * X) / mx - P
    phi = ops.antiderivative(E * X)
    phi -= np.mean(phi * X) / mx
    return E, phi


def solve_label_boltzmann(ops, rho0, X, phi_guess, tol=NEWTON_TOL, max_iter=50):
    """Poisson-Boltzmann solve in label coordinates.

    Solves ``-D(D phi / X) + exp(phi) X = rho0`` by Newton with CG inner
    solves preconditioned by the averaged constant-coefficient operator.
    Returns ``(E, phi, info)`` where ``E = D phi / X``.
    """
    W = 1.0 / X
    ik, k2 = ops.ik, ops.k2_odd
    m = ops.m

    def residual(p):
        ph = np.fft.rfft(p)
        g = np.fft.irfft(ph * ik, n=m) * W
        return -np.fft.irfft(np.fft.rfft(g) * ik, n=m) + np.exp(p) * X - rho0

    phi = np.array(phi_guess, dtype=float)
    info = NewtonInfo()
    r = residual(phi)
    res = float(np.max(np.abs(r)))
    info.residuals.append(res)
    wbar = float(np.mean(W))
    last_step = np.inf
    for it in range(1, max_iter + 2):
        floor = 4 * _EPS * (k2[-2] * np.max(np.abs(phi)) * np.max(W) + np.max(rho0))
        if res <= tol or (res <= floor and last_step <= 1e-14 * (1.0 + np.max(np.abs(phi)))):
            info.converged = True
            break
        if it > max_iter:
            raise NewtonDiverged(res, max_iter)
        q = np.exp(phi) * X
        sym = 1.0 / (wbar * k2 + float(np.mean(q)))

        def apply_j(v, q=q):
            g = np.fft.irfft(np.fft.rfft(v) * ik, n=m) * W
            return -np.fft.irfft(np.fft.rfft(g) * ik, n=m) + q * v

        def apply_m(v, sym=sym):
            return np.fft.irfft(np.fft.rfft(v) * sym, n=m)

        delta = pcg(apply_j, -r, apply_m, rtol=1e-10, atol=0.1 * tol)
        accepted = _backtrack(residual, phi, delta, r)
        if accepted is None:
            if res <= floor:
                info.converged = True
                break
            raise NewtonDiverged(res, it)
        step, phi, r = accepted
        res = float(np.max(np.abs(r)))
        last_step = step * float(np.max(np.abs(delta)))
        info.iterations = it
        info.residuals.append(res)
        info.steps.append(step)
    E = ops.d(phi) * W
    return E, phi, info
