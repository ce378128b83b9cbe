"""First and second derivatives of the control-to-state map.

Both are instances of one linear system with zero initial data,

    d/dt phi = Laplace mu,
    -Laplace phi - mu - w = a phi + g,
    gamma d/dt w + w = h,

discretized with the same stabilized step as the forward solver and with
``a``, ``g`` frozen at the beginning of each step.  With ``a = -f''(phi*)``
this is the exact derivative of the discrete forward map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatchError
from .spectral import SpaceTimeField, TimeGrid
from .state import StateTrajectory, relax

__all__ = [
    "LinearTangentProblem",
    "TangentTrajectory",
    "solve_auxiliary",
    "solve_linearized",
    "solve_bilinearized",
]


@dataclass(frozen=True, eq=False)
class LinearTangentProblem:
    """Data of the auxiliary linear system.

    Parameters
    ----------
    a_nodal : ndarray, shape (M+1, *padded grid)
        Coefficient multiplying the unknown, sampled on the padded grid at
        every time node (it enters through a pseudo-spectral product).
    g : SpaceTimeField
        Node-valued source in the chemical-potential relation (only its
        Galerkin projection matters).
    h : SpaceTimeField
        Piecewise-constant source of the relaxation equation.
    """

    a_nodal: np.ndarray
    g: SpaceTimeField
    h: SpaceTimeField
    gamma: float
    stabilization: float

    def __post_init__(self):
        if self.g.piecewise or not self.h.piecewise:
            raise BasisMismatchError("g must be node-valued and h piecewise constant")
        self.g.basis.check_same(self.h.basis)
        if not np.array_equal(self.g.times, self.h.times):
            raise BasisMismatchError("g and h live on different time grids")
        a = np.asarray(self.a_nodal, dtype=float)
        expect = (len(self.g.times), *self.g.basis.padded.shape)
        if a.shape != expect:
            raise BasisMismatchError(f"a_nodal has shape {a.shape}, expected {expect}")
        object.__setattr__(self, "a_nodal", a)

    @classmethod
    def from_field(cls, a: SpaceTimeField, g, h, gamma, stabilization) -> "LinearTangentProblem":
        """Build from a node-valued coefficient given by its expansion."""
        return cls(a.nodal(a.basis.padded), g, h, gamma, stabilization)

    @property
    def basis(self):
        return self.g.basis


@dataclass(frozen=True, eq=False)
class TangentTrajectory:
    """Solution ``(phi, mu, w)`` of the auxiliary system.

    For first derivatives these are ``(xi, eta, v)``, for second
    derivatives ``(psi, nu, z)``; both spellings are available.
    """

    phi: SpaceTimeField
    mu: SpaceTimeField
    w: SpaceTimeField

    xi = psi = property(lambda self: self.phi)
    eta = nu = property(lambda self: self.mu)
    v = z = property(lambda self: self.w)


def solve_auxiliary(problem: LinearTangentProblem) -> TangentTrajectory:
    basis = problem.basis
    grid = TimeGrid.from_times(problem.g.times)
    dt = grid.dt
    lam = basis.eigenvalues
    s = problem.stabilization
    denom = 1.0 + dt * lam * (lam + s)
    pad = basis.padded
    a = problem.a_nodal
    g = problem.g.coeffs

    w = relax(problem.h.coeffs, np.zeros(basis.shape), problem.gamma, dt)
    phi = np.zeros_like(w)
    a_phi = np.zeros_like(w)
    for m in range(grid.n_steps + 1):
        a_phi[m] = basis.from_nodal(a[m] * basis.to_nodal(phi[m], pad), pad)
        if m == grid.n_steps:
            break
        phi[m + 1] = (phi[m] + dt * lam * (s * phi[m] + a_phi[m] + g[m] + w[m + 1])) / denom
    mu = lam * phi - w - a_phi - g
    t = problem.g.times
    return TangentTrajectory(SpaceTimeField(basis, t, phi), SpaceTimeField(basis, t, mu),
                             SpaceTimeField(basis, t, w))


def _curvature_nodal(traj: StateTrajectory, order: int) -> np.ndarray:
    basis = traj.basis
    return traj.params.potential.full(order, traj.phi.nodal(basis.padded))


def _check_direction(traj: StateTrajectory, h: SpaceTimeField) -> None:
    traj.basis.check_same(h.basis)
    if not h.piecewise or not np.array_equal(h.times, traj.phi.times):
        raise BasisMismatchError("direction must be piecewise constant on the trajectory's time grid")


def solve_linearized(traj: StateTrajectory, h: SpaceTimeField) -> TangentTrajectory:
    """Directional derivative ``S'(u)[h]`` at the trajectory's control."""
    _check_direction(traj, h)
    g = SpaceTimeField.zeros(traj.basis, traj.phi.times)
    problem = LinearTangentProblem(-_curvature_nodal(traj, 2), g, h, traj.params.gamma,
                                   traj.params.stabilization)
    return solve_auxiliary(problem)


def solve_bilinearized(traj: StateTrajectory, th: TangentTrajectory, tk: TangentTrajectory) -> TangentTrajectory:
    """Second derivative ``S''(u)[h, k]`` from the two first-order tangents."""
    for t in (th, tk):
        t.xi.check_compatible(traj.phi)
    basis = traj.basis
    pad = basis.padded
    prod = _curvature_nodal(traj, 3) * th.xi.nodal(pad) * tk.xi.nodal(pad)
    g = SpaceTimeField(basis, traj.phi.times, -basis.from_nodal(prod, pad))
    h = SpaceTimeField.zeros(basis, traj.phi.times, piecewise=True)
    problem = LinearTangentProblem(-_curvature_nodal(traj, 2), g, h, traj.params.gamma,
                                   traj.params.stabilization)
    return solve_auxiliary(problem)
