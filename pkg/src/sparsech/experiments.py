"""Run orchestration shared by the CLI and the verification suites."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ProblemConfig
from .control import OptimizerParams, OptimizerReport, coercivity_probe, optimize, sparsity_report
from .setup import ProblemSetup, build_setup
from .spectral import mean
from .state import StateTrajectory, energy_history

__all__ = ["optimizer_params", "run_optimize", "state_diagnostics", "zero_control_sup_r",
           "SweepEntry", "run_sweep", "sweep_scale"]


def optimizer_params(cfg: ProblemConfig) -> OptimizerParams:
    o = cfg.optimizer
    return OptimizerParams(max_iter=o.max_iter, tol=o.tol, sigma=o.sigma, max_backtracks=o.max_backtracks,
                           zero_tol=o.zero_tol, sparsity_tol=o.sparsity_tol)


def run_optimize(setup: ProblemSetup, callback=None) -> OptimizerReport:
    return optimize(setup.u0, setup.problem, optimizer_params(setup.config), callback)


def state_diagnostics(traj: StateTrajectory) -> np.ndarray:
    """Rows ``(t, mass, energy, |phi|_inf)`` per time node; ``mass`` is the spatial mean."""
    basis = traj.basis
    mass = np.array([mean(f) for f in traj.phi.fields()])
    energy = energy_history(traj)
    sup = np.max(np.abs(traj.phi.nodal(basis.padded)).reshape(len(traj.phi), -1), axis=1)
    return np.column_stack([traj.phi.times, mass, energy, sup])


def zero_control_sup_r(setup: ProblemSetup) -> float:
    """``sup |r|`` on the control grid at ``u = 0``."""
    prob = setup.problem
    u = prob.zero_control()
    adj = prob.adjoint(prob.state(u))
    return float(np.max(np.abs(adj.control_gradient().nodal(setup.basis.native))))


def sweep_scale(cfg: ProblemConfig, setup: ProblemSetup | None = None) -> float:
    if cfg.run.kappa_scale is not None:
        return cfg.run.kappa_scale
    return zero_control_sup_r(setup or build_setup(cfg))


@dataclass(frozen=True)
class SweepEntry:
    kappa: float
    final_total: float
    sparsity_fraction: float
    min_rayleigh: float
    kkt: float
    iterations: int
    converged: bool
    all_zero: bool
    violations: int


def _sweep_one(args) -> SweepEntry:
    cfg, kappa = args
    setup = build_setup(cfg, kappa=kappa)
    rep = run_optimize(setup)
    tol = cfg.optimizer.sparsity_tol
    frac, viol = sparsity_report(rep.u, rep.r, kappa, tol)
    rayleigh = coercivity_probe(rep.u, rep.traj, rep.adj, setup.cost, cfg.run.probe_samples,
                                rng=cfg.run.seed, tol=tol)
    return SweepEntry(kappa, rep.history[-1].total, frac, rayleigh, rep.kkt, rep.iterations,
                      rep.converged, bool(np.all(rep.u.coeffs == 0.0)), viol)


def run_sweep(cfg: ProblemConfig, kappas, workers: int | None = None) -> list:
    """Optimize once per ``kappa``; independent jobs, optionally in worker processes."""
    jobs = [(cfg, float(k)) for k in kappas]
    workers = workers if workers is not None else cfg.run.workers
    if workers <= 0:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers == 1:
        return [_sweep_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_one, jobs))
