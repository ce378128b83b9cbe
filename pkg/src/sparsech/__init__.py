"""Sparse optimal control of a nonviscous Cahn-Hilliard system with a
relaxation-type control channel, discretized by a Neumann cosine Galerkin
method in space and a stabilized linearly implicit scheme in time."""

from .adjoint import AdjointTrajectory, build_adjoint_sources, solve_adjoint
from .config import ProblemConfig, load_config, loads_config, serialize_config
from .control import (
    ControlProblem,
    CostConfig,
    OptimizerParams,
    OptimizerReport,
    coercivity_probe,
    critical_cone_check,
    evaluate_cost,
    kkt_residual,
    l1_directional_derivative,
    l1_norm,
    optimize,
    project_critical_cone,
    prox_box_l1,
    recover_multiplier,
    reduced_gradient_smooth,
    second_form,
    sparsity_report,
)
from .errors import (
    BasisMismatchError,
    BlowUpError,
    ConfigError,
    MeanValueError,
    SolverError,
    SparseCHError,
)
from .potential import QuarticPotential, apply_pointwise, eval_derivative
from .sensitivity import LinearTangentProblem, solve_auxiliary, solve_bilinearized, solve_linearized
from .setup import build_setup
from .spectral import (
    Field,
    SpaceTimeField,
    SpectralBasis,
    TimeGrid,
    build_basis,
    dual_norm,
    inner,
    inv_neumann_laplacian,
    laplacian,
    mean,
    norm,
)
from .state import PhysicsParams, StateTrajectory, energy_history, free_energy, solve_control_ode, solve_state

__version__ = "0.1.0"
