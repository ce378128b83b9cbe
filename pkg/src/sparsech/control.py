"""Sparse optimal control: cost, reduced gradient, proximal optimizer and
first/second-order optimality diagnostics.

Controls are handled pointwise on the native collocation grid (one value
per node and time interval); that is where soft thresholding, clipping,
the L1 norm and all sign conditions are evaluated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .adjoint import SCHEMES, AdjointTrajectory, build_adjoint_sources, solve_adjoint
from .errors import BasisMismatchError, SolverError
from .sensitivity import solve_linearized
from .spectral import Field, SpaceTimeField, TimeGrid
from .state import PhysicsParams, StateTrajectory, solve_state

__all__ = [
    "CostConfig",
    "ControlProblem",
    "OptimizerParams",
    "IterateRecord",
    "OptimizerReport",
    "evaluate_cost",
    "l1_norm",
    "l1_directional_derivative",
    "reduced_gradient_smooth",
    "soft_threshold",
    "prox_box_l1",
    "recover_multiplier",
    "kkt_residual",
    "sparsity_report",
    "second_form",
    "critical_cone_check",
    "project_critical_cone",
    "coercivity_probe",
    "optimize",
]

log = logging.getLogger(__name__)

ZERO_TOL = 1e-10


def _nodal(x, basis=None):
    """Control-like argument -> nodal array on the native grid."""
    if isinstance(x, SpaceTimeField):
        return x.nodal(x.basis.native)
    return np.asarray(x, dtype=float)


def _like(template: SpaceTimeField, values: np.ndarray) -> SpaceTimeField:
    return SpaceTimeField.from_nodal(template.basis, template.times, values, template.basis.native)


def _bound_array(b, basis, times):
    if isinstance(b, SpaceTimeField):
        basis.check_same(b.basis)
        if not b.piecewise or not np.array_equal(b.times, times):
            raise BasisMismatchError("bounds must be piecewise constant on the control grid")
        return b.nodal(basis.native)
    return np.asarray(b, dtype=float)


@dataclass(frozen=True, eq=False)
class CostConfig:
    """Weights, targets and box bounds of the sparse tracking problem.

    ``u_low``/``u_high`` may be scalars, arrays broadcastable to the nodal
    control shape ``(M, *modes)``, or piecewise-constant SpaceTimeFields.
    """

    b1: float
    b2: float
    b3: float
    kappa: float
    phi_Q: SpaceTimeField
    phi_Omega: Field
    u_low: object = -np.inf
    u_high: object = np.inf
    lower: np.ndarray = field(init=False, repr=False)
    upper: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (self.b1 >= 0 and self.b2 >= 0 and self.b3 > 0 and self.kappa > 0):
            raise ValueError("cost weights must satisfy b1 >= 0, b2 >= 0, b3 > 0, kappa > 0; got "
                             f"b1={self.b1}, b2={self.b2}, b3={self.b3}, kappa={self.kappa}")
        if self.phi_Q.piecewise:
            raise BasisMismatchError("phi_Q must be node-valued")
        self.phi_Q.basis.check_same(self.phi_Omega.basis)
        basis, times = self.phi_Q.basis, self.phi_Q.times
        lo = _bound_array(self.u_low, basis, times)
        hi = _bound_array(self.u_high, basis, times)
        shape = (len(times) - 1, *basis.shape)
        lo, hi = np.broadcast_to(lo, shape), np.broadcast_to(hi, shape)
        if np.any(lo > hi):
            raise ValueError("box bounds must satisfy u_low <= u_high")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def basis(self):
        return self.phi_Q.basis

    @property
    def times(self):
        return self.phi_Q.times

    def replace(self, **changes) -> "CostConfig":
        kw = {k: getattr(self, k) for k in ("b1", "b2", "b3", "kappa", "phi_Q", "phi_Omega", "u_low", "u_high")}
        kw.update(changes)
        return CostConfig(**kw)


# --------------------------------------------------------------------------- cost

def _control_weights(basis, times) -> np.ndarray:
    """Space-time quadrature weights of the nodal control cells."""
    dt = np.diff(times)
    w = basis.native.cell_weights
    return dt.reshape((-1,) + (1,) * basis.dim) * w


def l1_norm(u: SpaceTimeField) -> float:
    """``int_Q |u|`` with the nodal midpoint rule and piecewise-constant time."""
    return float(np.sum(_control_weights(u.basis, u.times) * np.abs(_nodal(u))))


def l1_directional_derivative(u, v, basis=None, times=None) -> float:
    """One-sided directional derivative of the L1 norm: ``sign(u) v`` where
    ``u != 0`` and ``|v|`` where ``u == 0``."""
    if isinstance(u, SpaceTimeField):
        basis, times = u.basis, u.times
    un, vn = _nodal(u), _nodal(v)
    pw = np.where(un != 0, np.sign(un) * vn, np.abs(vn))
    return float(np.sum(_control_weights(basis, times) * pw))


def evaluate_cost(traj: StateTrajectory, u: SpaceTimeField, cost: CostConfig) -> tuple:
    """Return ``(J, G, J + kappa G)``: smooth tracking part, L1 norm, total."""
    traj.phi.check_compatible(cost.phi_Q)
    traj.basis.check_same(u.basis)
    d = traj.phi - cost.phi_Q
    dT = traj.final - cost.phi_Omega
    J = 0.5 * cost.b1 * d.l2_inner(d) + 0.5 * cost.b2 * float(np.sum(dT.coeffs ** 2)) \
        + 0.5 * cost.b3 * u.l2_inner(u)
    G = l1_norm(u)
    return J, G, J + cost.kappa * G


def reduced_gradient_smooth(u: SpaceTimeField, traj: StateTrajectory, adj: AdjointTrajectory,
                            b3: float) -> SpaceTimeField:
    """``r + b3 u`` on the control intervals: the gradient of the smooth reduced cost."""
    return adj.control_gradient() + b3 * u


# ------------------------------------------------------------------ pointwise maps

def soft_threshold(v, s):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - s, 0.0)


def prox_box_l1(v, tau_kappa: float, lower=-np.inf, upper=np.inf):
    """Minimizer of ``1/2 (u - v)**2 + tau_kappa |u|`` over ``[lower, upper]``, pointwise.

    Accepts arrays/scalars or a piecewise-constant SpaceTimeField (returned as such).
    Clipping the soft-thresholded value is exact for any box, because the
    objective is convex in one variable.
    """
    if tau_kappa < 0:
        raise ValueError("threshold must be nonnegative")
    out = np.clip(soft_threshold(_nodal(v), tau_kappa), lower, upper)
    if isinstance(v, SpaceTimeField):
        return _like(v, out)
    return out


def recover_multiplier(u, r, kappa: float, b3: float | None = None, zero_tol: float = ZERO_TOL):
    """Element of the L1 subdifferential consistent with ``r``.

    ``sign(u)`` where ``|u| > zero_tol``, else ``clip(-r / kappa, -1, 1)``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    un, rn = _nodal(u), _nodal(r)
    lam = np.where(np.abs(un) > zero_tol, np.sign(un), np.clip(-rn / kappa, -1.0, 1.0))
    if isinstance(u, SpaceTimeField):
        return _like(u, lam)
    return lam


def _kkt_map(un, rn, cost, zero_tol=ZERO_TOL):
    lam = recover_multiplier(un, rn, cost.kappa, cost.b3, zero_tol)
    return np.clip(-(rn + cost.kappa * lam) / cost.b3, cost.lower, cost.upper)


def kkt_residual(u: SpaceTimeField, r: SpaceTimeField, cost: CostConfig, zero_tol: float = ZERO_TOL) -> float:
    """``|| u - clip(-(r + kappa lam)/b3, u_low, u_high) ||_{L2(Q)}`` with ``lam`` recovered from ``u``."""
    un, rn = _nodal(u), _nodal(r)
    diff = un - _kkt_map(un, rn, cost, zero_tol)
    return float(np.sqrt(np.sum(_control_weights(u.basis, u.times) * diff ** 2)))


def sparsity_report(u, r, kappa: float, tol: float = 1e-5) -> tuple:
    """``(fraction_zero, violations)`` of the equivalence ``u = 0 <=> |r| <= kappa``."""
    un, rn = _nodal(u), _nodal(r)
    zero = np.abs(un) <= tol
    bad = (zero & (np.abs(rn) > kappa + tol)) | (~zero & (np.abs(rn) < kappa - tol))
    return float(np.mean(zero)), int(np.count_nonzero(bad))


# ------------------------------------------------------------------ second order

def _hessian_form(traj, adj, xi_h, xi_k, h, k, cost) -> float:
    basis = traj.basis
    pad = basis.padded
    f3 = traj.params.potential.full(3, traj.phi.nodal(pad))
    weight = cost.b1 - f3 * adj.q.nodal(pad)
    per_node = pad.integrate(weight * xi_h.nodal(pad) * xi_k.nodal(pad))
    tw = traj.grid.trapezoid_weights()
    terminal = float(np.sum(xi_h.coeffs[-1] * xi_k.coeffs[-1]))
    return float(np.dot(tw, per_node)) + cost.b2 * terminal + cost.b3 * h.l2_inner(k)


def second_form(u: SpaceTimeField, traj: StateTrajectory, adj: AdjointTrajectory,
                h: SpaceTimeField, k: SpaceTimeField, cost: CostConfig) -> float:
    """Second derivative of the smooth reduced cost along ``(h, k)``.

    ``int_Q (b1 - f'''(phi) q) xi_h xi_k + b2 int xi_h(T) xi_k(T) + b3 int_Q h k``
    with trapezoidal time quadrature.
    """
    xh = solve_linearized(traj, h).xi
    xk = xh if k is h else solve_linearized(traj, k).xi
    return _hessian_form(traj, adj, xh, xk, h, k, cost)


def _cone_masks(un, rn, cost, tol):
    # rn is the adjoint r on the control grid; |r + b3 u| = kappa marks the free set
    off = np.abs(np.abs(rn + cost.b3 * un) - cost.kappa) > tol
    at_zero = np.abs(un) <= tol
    nonneg = (np.abs(un - cost.lower) <= tol) | (at_zero & (np.abs(rn + cost.kappa) <= tol))
    nonpos = (np.abs(un - cost.upper) <= tol) | (at_zero & (np.abs(rn - cost.kappa) <= tol))
    return off, nonneg, nonpos


def critical_cone_check(v, u, r, cost: CostConfig, tol: float = 1e-5) -> bool:
    """Pointwise membership of ``v`` in the discrete critical cone at ``u``."""
    vn, un, rn = _nodal(v), _nodal(u), _nodal(r)
    off, nonneg, nonpos = _cone_masks(un, rn, cost, tol)
    ok = np.all(np.abs(vn[off]) <= tol)
    ok &= np.all(vn[nonneg] >= -tol)
    ok &= np.all(vn[nonpos] <= tol)
    return bool(ok)


def project_critical_cone(v, u, r, cost: CostConfig, tol: float = 1e-5):
    """Pointwise projection onto the discrete critical cone."""
    vn, un, rn = _nodal(v), _nodal(u), _nodal(r)
    off, nonneg, nonpos = _cone_masks(un, rn, cost, tol)
    out = np.where(off, 0.0, vn)
    out = np.where(nonneg, np.maximum(out, 0.0), out)
    out = np.where(nonpos, np.minimum(out, 0.0), out)
    if isinstance(v, SpaceTimeField):
        return _like(v, out)
    return out


def coercivity_probe(u: SpaceTimeField, traj: StateTrajectory, adj: AdjointTrajectory,
                     cost: CostConfig, n_samples: int = 50, rng=None, tol: float = 1e-5,
                     return_samples: bool = False):
    """Minimum of ``J''(u)[v, v]`` over random unit directions in the critical cone.

    Returns ``inf`` when every projected direction vanishes.
    """
    rng = np.random.default_rng(rng)
    r = adj.control_gradient()
    un, rn = _nodal(u), _nodal(r)
    weights = _control_weights(u.basis, u.times)
    values = []
    for _ in range(n_samples):
        vn = project_critical_cone(rng.standard_normal(un.shape), un, rn, cost, tol)
        nrm = np.sqrt(np.sum(weights * vn ** 2))
        if nrm == 0.0:
            continue
        v = _like(u, vn / nrm)
        values.append(second_form(u, traj, adj, v, v, cost))
    out = min(values) if values else np.inf
    if return_samples:
        return out, np.array(values)
    return out


# ------------------------------------------------------------------ optimizer

@dataclass(frozen=True, eq=False)
class ControlProblem:
    """State data plus cost: everything the reduced functional needs."""

    phi0: Field
    w0: Field
    physics: PhysicsParams
    cost: CostConfig
    adjoint_scheme: str = "consistent"

    def __post_init__(self):
        if self.adjoint_scheme not in SCHEMES:
            raise ValueError(f"adjoint_scheme must be one of {SCHEMES}")
        self.basis.check_same(self.phi0.basis)
        self.basis.check_same(self.w0.basis)

    @property
    def basis(self):
        return self.cost.basis

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.from_times(self.cost.times)

    def zero_control(self) -> SpaceTimeField:
        return SpaceTimeField.zeros(self.basis, self.cost.times, piecewise=True)

    def control(self, nodal: np.ndarray) -> SpaceTimeField:
        return SpaceTimeField.from_nodal(self.basis, self.cost.times, nodal, self.basis.native)

    def state(self, u: SpaceTimeField) -> StateTrajectory:
        return solve_state(u, self.phi0, self.w0, self.physics)

    def adjoint(self, traj: StateTrajectory, scheme: str | None = None) -> AdjointTrajectory:
        g1, g2 = build_adjoint_sources(traj, self.cost)
        return solve_adjoint(traj, g1, g2, self.physics.gamma, scheme or self.adjoint_scheme)

    def smooth_cost(self, u: SpaceTimeField) -> float:
        return evaluate_cost(self.state(u), u, self.cost)[0]

    def with_cost(self, **changes) -> "ControlProblem":
        return ControlProblem(self.phi0, self.w0, self.physics, self.cost.replace(**changes),
                              self.adjoint_scheme)


@dataclass(frozen=True)
class OptimizerParams:
    max_iter: int = 500
    tol: float = 1e-6
    sigma: float = 0.5
    max_backtracks: int = 60
    step0: float | None = None
    zero_tol: float = ZERO_TOL
    sparsity_tol: float = 1e-5


@dataclass(frozen=True)
class IterateRecord:
    iter: int
    J: float
    G: float
    total: float
    kkt: float
    sparsity_fraction: float
    step: float


@dataclass(eq=False)
class OptimizerReport:
    history: list
    u: SpaceTimeField
    traj: StateTrajectory
    adj: AdjointTrajectory
    multiplier: SpaceTimeField
    converged: bool
    status: str

    @property
    def iterations(self) -> int:
        return self.history[-1].iter if self.history else 0

    @property
    def kkt(self) -> float:
        return self.history[-1].kkt

    @property
    def r(self) -> SpaceTimeField:
        return self.adj.control_gradient()


def _at_iterate(exc: SolverError, it: int) -> SolverError:
    err = type(exc)(f"iterate {it}: {exc}")
    err.step, err.iterate = exc.step, it
    return err


def optimize(u0: SpaceTimeField, problem: ControlProblem, params: OptimizerParams = OptimizerParams(),
             callback=None) -> OptimizerReport:
    """Proximal projected gradient with monotone backtracking.

    ``u+ = prox(u - tau (r + b3 u), tau kappa, box)``; a trial step is accepted
    when ``F(u+) <= F(u) - sigma / tau ||u+ - u||^2`` for the total cost ``F``.
    The first trial step is ``1/b3``; later iterations start from twice the
    last accepted step, capped at ``1/b3``.  Stops when the KKT residual
    reaches ``params.tol`` or after ``params.max_iter`` iterations.
    """
    cost = problem.cost
    basis = problem.basis
    weights = _control_weights(basis, cost.times)
    tau0 = params.step0 if params.step0 is not None else 1.0 / cost.b3

    un = np.clip(_nodal(u0), cost.lower, cost.upper)
    u = problem.control(un)
    try:
        traj = problem.state(u)
        adj = problem.adjoint(traj)
    except SolverError as exc:
        raise _at_iterate(exc, 0) from exc
    J, G, F = evaluate_cost(traj, u, cost)

    history = []
    tau = tau0
    status = "max_iter"
    converged = False
    for it in range(params.max_iter + 1):
        rn = _nodal(adj.control_gradient())
        kkt = float(np.sqrt(np.sum(weights * (un - _kkt_map(un, rn, cost, params.zero_tol)) ** 2)))
        frac = float(np.mean(np.abs(un) <= params.zero_tol))
        history.append(IterateRecord(it, J, G, F, kkt, frac, tau if it else 0.0))
        if callback is not None:
            callback(history[-1])
        if kkt <= params.tol:
            status, converged = "converged", True
            break
        if it == params.max_iter:
            break

        grad = rn + cost.b3 * un
        tau = min(tau0, 2.0 * tau) if it else tau0
        for _ in range(params.max_backtracks):
            trial = np.clip(soft_threshold(un - tau * grad, tau * cost.kappa), cost.lower, cost.upper)
            step_sq = float(np.sum(weights * (trial - un) ** 2))
            ut = problem.control(trial)
            try:
                tt = problem.state(ut)
            except SolverError:
                tau *= 0.5
                continue
            Jt, Gt, Ft = evaluate_cost(tt, ut, cost)
            if Ft <= F - params.sigma / tau * step_sq:
                break
            tau *= 0.5
        else:
            status = "line_search_failed"
            log.warning("backtracking failed at iterate %d (kkt=%.3e)", it, kkt)
            break
        un, u, traj, J, G, F = trial, ut, tt, Jt, Gt, Ft
        try:
            adj = problem.adjoint(traj)
        except SolverError as exc:
            raise _at_iterate(exc, it + 1) from exc

    r = adj.control_gradient()
    lam = recover_multiplier(un, _nodal(r), cost.kappa, cost.b3, params.zero_tol)
    return OptimizerReport(history, u, traj, adj, problem.control(lam), converged, status)
