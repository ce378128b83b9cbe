"""Backward solver for the adjoint system.

    -d/dt p - Laplace q + f''(phi*) q = g1,    q = -Laplace p,
    -gamma d/dt r + r = q,                      p(T) = g2,  r(T) = 0.

The backward step mirrors the forward scheme: implicit ``lam (lam + s)`` part,
stabilization ``s lam p`` and ``f''(phi*) q`` explicit at the already known
later level::

    (1 + dt lam (lam + s)) p[m] = (1 + dt s lam) p[m+1] - dt P(f''(phi[l]) q[m+1]) + dt g1[m]

``scheme="mirrored"`` uses ``l = m + 1`` and the terminal value ``p[M] = g2``;
its gradient agrees with the discrete cost to O(dt).  ``scheme="consistent"``
uses ``l = m`` and ``p[M] = (g2 + dt/2 g1[M]) / (1 + dt lam (lam + s))``,
which makes it the exact transpose of the forward step for the trapezoidal
tracking term.  In both, ``r`` is advanced by exact exponential integration
with ``q`` held at ``q[m+1]`` on ``[t_m, t_{m+1}]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import Field, SpaceTimeField
from .state import StateTrajectory

__all__ = ["AdjointTrajectory", "solve_adjoint", "build_adjoint_sources", "SCHEMES"]

SCHEMES = ("mirrored", "consistent")


@dataclass(frozen=True, eq=False)
class AdjointTrajectory:
    p: SpaceTimeField
    q: SpaceTimeField
    r: SpaceTimeField
    g2: Field
    scheme: str

    r_interval: np.ndarray

    def control_gradient(self) -> SpaceTimeField:
        """``r`` represented on the piecewise-constant control intervals."""
        return SpaceTimeField(self.r.basis, self.r.times, self.r_interval)


def build_adjoint_sources(traj: StateTrajectory, cost) -> tuple:
    """``g1 = b1 (phi - phi_Q)`` and ``g2 = b2 (phi(T) - phi_Omega)``."""
    g1 = cost.b1 * (traj.phi - cost.phi_Q)
    g2 = cost.b2 * (traj.final - cost.phi_Omega)
    return g1, g2


def solve_adjoint(traj: StateTrajectory, g1: SpaceTimeField, g2: Field, gamma: float | None = None,
                  scheme: str = "mirrored") -> AdjointTrajectory:
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    g1.check_compatible(traj.phi)
    traj.basis.check_same(g2.basis)
    gamma = traj.params.gamma if gamma is None else gamma
    if not gamma > 0:
        raise ValueError("relaxation time gamma must be positive")

    basis = traj.basis
    grid = traj.grid
    dt, n = grid.dt, grid.n_steps
    lam = basis.eigenvalues
    s = traj.params.stabilization
    denom = 1.0 + dt * lam * (lam + s)
    explicit = 1.0 + dt * s * lam
    pad = basis.padded
    fpp = traj.params.potential.full(2, traj.phi.nodal(pad))
    src = g1.coeffs

    p = np.empty_like(src)
    if scheme == "mirrored":
        p[n] = g2.coeffs
        lag = 1
    else:
        p[n] = (g2.coeffs + 0.5 * dt * src[n]) / denom
        lag = 0
    for m in range(n - 1, -1, -1):
        q_next = lam * p[m + 1]
        coupling = basis.from_nodal(fpp[m + lag] * basis.to_nodal(q_next, pad), pad)
        p[m] = (explicit * p[m + 1] - dt * coupling + dt * src[m]) / denom
    q = lam * p

    decay = math.exp(-dt / gamma)
    gain = -math.expm1(-dt / gamma)
    r = np.zeros_like(p)
    for m in range(n - 1, -1, -1):
        r[m] = decay * r[m + 1] + gain * q[m + 1 - lag]
    if scheme == "mirrored":
        # interval mean of r(t) = q_m + (r[m+1] - q_m) exp(-(t_{m+1} - t) / gamma)
        held = q[:-1]
        r_interval = held + (r[1:] - held) * (gamma * gain / dt)
    else:
        # exact discrete gradient of the trapezoidal cost
        r_interval = r[:-1].copy()

    t = traj.phi.times
    return AdjointTrajectory(SpaceTimeField(basis, t, p), SpaceTimeField(basis, t, q),
                             SpaceTimeField(basis, t, r), g2, scheme, r_interval)
