"""Forward solver for the controlled nonviscous Cahn-Hilliard system.

Galerkin in space (cosine modes), stabilized linearly-implicit Euler in time.
One step ``m -> m+1`` in coefficient space reads::

    w[m+1]   = e w[m] + (1 - e) u[m],                  e = exp(-dt / gamma)
    mu[m+1]  = lam phi[m+1] + P f'(phi[m]) + s (phi[m+1] - phi[m]) - w[m+1]
    phi[m+1] = phi[m] - dt lam mu[m+1]

so each step is a diagonal solve with ``1 + dt lam (lam + s)``.  Mode 0 has
``lam = 0`` and is copied unchanged, which makes the spatial mean exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisMismatchError, BlowUpError, SolverError
from .potential import QuarticPotential
from .spectral import Field, SpaceTimeField, TimeGrid

__all__ = [
    "PhysicsParams",
    "StateTrajectory",
    "solve_control_ode",
    "solve_state",
    "free_energy",
    "energy_history",
    "scheme_residuals",
]


@dataclass(frozen=True)
class PhysicsParams:
    """Relaxation time, potential and scheme stabilization.

    ``stabilization=None`` selects ``max |f''|`` on ``[-2, 2]`` (11 for the
    default quartic).
    """

    gamma: float = 1.0
    potential: QuarticPotential = field(default_factory=QuarticPotential)
    stabilization: float | None = None
    blowup_bound: float = 1e3

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"relaxation time gamma must be positive, got {self.gamma}")
        if self.stabilization is None:
            object.__setattr__(self, "stabilization", self.potential.default_stabilization())
        if not self.stabilization >= 0:
            raise ValueError(f"stabilization must be nonnegative, got {self.stabilization}")


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    phi: SpaceTimeField
    mu: SpaceTimeField
    w: SpaceTimeField
    u: SpaceTimeField
    phi0: Field
    w0: Field
    params: PhysicsParams

    @property
    def basis(self):
        return self.phi.basis

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_times(self.phi.times)

    @property
    def final(self) -> Field:
        return self.phi[-1]


def _control_grid(u: SpaceTimeField) -> TimeGrid:
    if not u.piecewise:
        raise BasisMismatchError("controls must be piecewise constant in time (one row per step)")
    return u.grid


def relax(src: np.ndarray, start: np.ndarray, gamma: float, dt: float) -> np.ndarray:
    """Exact stepping of ``gamma y' + y = src`` with ``src`` constant per step."""
    decay = math.exp(-dt / gamma)
    gain = -math.expm1(-dt / gamma)
    out = np.empty((src.shape[0] + 1, *src.shape[1:]))
    out[0] = start
    for m in range(src.shape[0]):
        out[m + 1] = decay * out[m] + gain * src[m]
    return out


def solve_control_ode(u: SpaceTimeField, w0: Field, gamma: float) -> SpaceTimeField:
    """Solve ``gamma w' + w = u``, ``w(0) = w0`` exactly for piecewise-constant ``u``."""
    if not gamma > 0:
        raise ValueError(f"relaxation time gamma must be positive, got {gamma}")
    grid = _control_grid(u)
    u.basis.check_same(w0.basis)
    return SpaceTimeField(u.basis, u.times, relax(u.coeffs, w0.coeffs, gamma, grid.dt))


def _march_state(basis, dt, params, w, phi0):
    lam = basis.eigenvalues
    s = params.stabilization
    denom = 1.0 + dt * lam * (lam + s)
    pad = basis.padded
    fp = params.potential.full
    n = w.shape[0] - 1
    phi = np.empty_like(w)
    phi[0] = phi0
    fprime = np.empty_like(w)
    for m in range(n + 1):
        nod = basis.to_nodal(phi[m], pad)
        peak = np.max(np.abs(nod))
        if not np.isfinite(peak) or peak > params.blowup_bound:
            raise BlowUpError(f"state left the admissible range (|phi|_inf = {peak:.3e})", step=m)
        fprime[m] = basis.from_nodal(fp(1, nod), pad)
        if m == n:
            break
        phi[m + 1] = (phi[m] + dt * lam * (s * phi[m] - fprime[m] + w[m + 1])) / denom
    return phi, fprime


def solve_state(u: SpaceTimeField, phi0: Field, w0: Field, params: PhysicsParams) -> StateTrajectory:
    """March the state system forward over the time grid of ``u``.

    Returns
    -------
    StateTrajectory
        ``phi``, ``mu``, ``w`` at every time node.  ``mu`` is reconstructed
        from the chemical-potential relation with ``f'`` at the same node.

    Raises
    ------
    BlowUpError
        If the state becomes non-finite or exceeds ``params.blowup_bound``.
    """
    grid = _control_grid(u)
    basis = u.basis
    basis.check_same(phi0.basis)
    basis.check_same(w0.basis)
    if not grid.dt > 0:
        raise SolverError("time step must be positive")
    w = relax(u.coeffs, w0.coeffs, params.gamma, grid.dt)
    phi, fprime = _march_state(basis, grid.dt, params, w, phi0.coeffs)
    mu = basis.eigenvalues * phi + fprime - w
    t = u.times
    return StateTrajectory(
        phi=SpaceTimeField(basis, t, phi),
        mu=SpaceTimeField(basis, t, mu),
        w=SpaceTimeField(basis, t, w),
        u=u,
        phi0=phi0,
        w0=w0,
        params=params,
    )


def scheme_residuals(traj: StateTrajectory) -> dict:
    """Residuals of the discrete equations at the stored nodes.

    ``balance``: max over steps of ``|phi[m+1] - phi[m] + dt lam mu_s[m+1]|``
    with the scheme's lagged chemical potential ``mu_s``; zero up to rounding.
    ``lag``: max ``||mu - mu_s||_H``, the O(dt) gap between the stored
    (same-node) and the scheme's chemical potential.
    """
    basis = traj.basis
    dt = traj.grid.dt
    lam = basis.eigenvalues
    s = traj.params.stabilization
    phi, mu, w = traj.phi.coeffs, traj.mu.coeffs, traj.w.coeffs
    fprime = mu - lam * phi + w
    mu_s = lam * phi[1:] + fprime[:-1] + s * (phi[1:] - phi[:-1]) - w[1:]
    axes = tuple(range(1, basis.dim + 1))
    balance = np.max(np.abs(phi[1:] - phi[:-1] + dt * lam * mu_s))
    lag = np.max(np.sqrt(np.sum((mu[1:] - mu_s) ** 2, axis=axes)))
    return {"balance": float(balance), "lag": float(lag)}


def free_energy(phi: Field, spec: QuarticPotential) -> float:
    """``int 1/2 |grad phi|^2 + f(phi)``; quadrature exact for quartic ``f``."""
    basis = phi.basis
    quad = basis.quadrature(2.0)
    grad = 0.5 * float(np.sum(basis.eigenvalues * phi.coeffs ** 2))
    return grad + float(quad.integrate(spec.full(0, phi.nodal(quad))))


def energy_history(traj: StateTrajectory) -> np.ndarray:
    basis = traj.basis
    quad = basis.quadrature(2.0)
    c = traj.phi.coeffs
    axes = tuple(range(1, basis.dim + 1))
    grad = 0.5 * np.sum(basis.eigenvalues * c ** 2, axis=axes)
    bulk = quad.integrate(traj.params.potential.full(0, basis.to_nodal(c, quad)))
    return grad + bulk
