"""Turn a :class:`ProblemConfig` into solver objects."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import read_fields
from .config import ProblemConfig, control_coeffs, parse_preset, spatial_coeffs
from .control import ControlProblem, CostConfig
from .errors import ConfigError
from .potential import QuarticPotential
from .spectral import Field, SpaceTimeField, TimeGrid, build_basis
from .state import PhysicsParams, StateTrajectory, solve_state

__all__ = ["ProblemSetup", "build_setup"]

# independent random streams per preset slot, so adding one preset does not
# shift the others
_STREAMS = {"phi0": 0, "w0": 1, "control": 2, "reference_control": 3, "phi_Q": 4, "phi_Omega": 5}


@dataclass(frozen=True, eq=False)
class ProblemSetup:
    config: ProblemConfig
    basis: object
    grid: TimeGrid
    physics: PhysicsParams
    phi0: Field
    w0: Field
    u0: SpaceTimeField
    reference: StateTrajectory | None
    cost: CostConfig
    problem: ControlProblem


def build_setup(cfg: ProblemConfig, kappa: float | None = None) -> ProblemSetup:
    d = cfg.domain
    basis = build_basis(d.dim, d.lengths, d.modes, d.dealias)
    grid = TimeGrid(cfg.time.T, cfg.time.steps)
    t = grid.nodes
    p = cfg.physics
    physics = PhysicsParams(p.gamma, QuarticPotential(p.scale, p.well), p.stabilization, p.blowup_bound)

    def rng(slot):
        return np.random.default_rng([cfg.run.seed, _STREAMS[slot]])

    phi0 = Field(basis, spatial_coeffs(cfg.data.phi0, basis, rng("phi0")))
    w0 = Field(basis, spatial_coeffs(cfg.data.w0, basis, rng("w0")))
    u0 = SpaceTimeField(basis, t, control_coeffs(cfg.data.control, basis, t, rng("control")))

    c = cfg.cost
    reference = None
    if "reference" in (parse_preset(c.phi_Q)[0], parse_preset(c.phi_Omega)[0]):
        u_ref = SpaceTimeField(basis, t, control_coeffs(cfg.data.reference_control, basis, t,
                                                        rng("reference_control")))
        reference = solve_state(u_ref, phi0, w0, physics)

    name, kw = parse_preset(c.phi_Q)
    if name == "reference":
        phi_Q = reference.phi
    elif name == "file":
        stored = read_fields(kw["path"])[kw.get("field", "phi")]
        basis.check_same(stored.basis)
        if stored.piecewise or not np.allclose(stored.times, t, rtol=0, atol=1e-12):
            raise ConfigError("phi_Q checkpoint does not match the configured time grid")
        phi_Q = SpaceTimeField(basis, t, stored.coeffs)
    else:
        static = spatial_coeffs(c.phi_Q, basis, rng("phi_Q"))
        phi_Q = SpaceTimeField(basis, t, np.broadcast_to(static, (len(t), *basis.shape)))

    if parse_preset(c.phi_Omega)[0] == "reference":
        phi_Omega = reference.final
    else:
        phi_Omega = Field(basis, spatial_coeffs(c.phi_Omega, basis, rng("phi_Omega")))

    cost = CostConfig(c.b1, c.b2, c.b3, c.kappa if kappa is None else kappa, phi_Q, phi_Omega,
                      c.u_low, c.u_high)
    problem = ControlProblem(phi0, w0, physics, cost, cfg.optimizer.adjoint)
    return ProblemSetup(cfg, basis, grid, physics, phi0, w0, u0, reference, cost, problem)
