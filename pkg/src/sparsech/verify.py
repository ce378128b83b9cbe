"""Named verification suites.

Each suite takes a :class:`ProblemConfig` and returns a :class:`SuiteResult`
holding the measured quantities, the thresholds they were checked against,
and a pass flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ProblemConfig
from .control import (
    coercivity_probe,
    kkt_residual,
    recover_multiplier,
    second_form,
    sparsity_report,
)
from .experiments import run_optimize, run_sweep, sweep_scale
from .sensitivity import solve_bilinearized, solve_linearized
from .setup import ProblemSetup, build_setup
from .spectral import (
    Field,
    SpaceTimeField,
    TimeGrid,
    inner,
    inv_neumann_laplacian,
    laplacian,
    mean,
)
from .state import energy_history, solve_control_ode, solve_state

__all__ = ["SuiteResult", "SUITES", "run_suite", "smooth_coeffs", "smooth_control"]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    message: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.message}"


def smooth_coeffs(rng, shape, amplitude=1.0, decay=0.5) -> np.ndarray:
    k = np.indices(shape).sum(axis=0)
    return amplitude * rng.standard_normal(shape) * np.exp(-decay * k)


def smooth_control(rng, basis, times, amplitude=1.0) -> SpaceTimeField:
    """Random control ``a(x) cos(w1 t) + b(x) sin(w2 t)`` with smooth ``a, b``."""
    left = np.asarray(times)[:-1].reshape((-1,) + (1,) * basis.dim)
    w1, w2 = rng.uniform(0.5, 3.0, size=2)
    a = smooth_coeffs(rng, basis.shape, amplitude)
    b = smooth_coeffs(rng, basis.shape, amplitude)
    return SpaceTimeField(basis, times, a * np.cos(w1 * left) + b * np.sin(w2 * left))


def _slope(eps, vals) -> float:
    return float(np.polyfit(np.log(eps), np.log(vals), 1)[0])


def _rng(cfg, salt):
    return np.random.default_rng([cfg.run.seed, 1000 + salt])


# ------------------------------------------------------------------ suites

def suite_mass(cfg: ProblemConfig, n_samples: int = 10, tol: float = 1e-12) -> SuiteResult:
    s = build_setup(cfg)
    rng = _rng(cfg, 1)
    worst = 0.0
    for _ in range(n_samples):
        u = smooth_control(rng, s.basis, s.grid.nodes)
        phi0 = Field(s.basis, smooth_coeffs(rng, s.basis.shape, 0.3))
        w0 = Field(s.basis, smooth_coeffs(rng, s.basis.shape, 0.5))
        traj = solve_state(u, phi0, w0, s.physics)
        m0 = mean(phi0)
        worst = max(worst, max(abs(mean(f) - m0) for f in traj.phi.fields()))
    ok = worst <= tol
    return SuiteResult("mass", ok, {"max_mean_drift": worst, "tol": tol},
                       f"max |mean(phi(t)) - m0| = {worst:.3e} (tol {tol:g}, {n_samples} samples)")


def suite_energy(cfg: ProblemConfig, rel_slack: float = 1e-13) -> SuiteResult:
    """Free energy along the uncontrolled run (``u = 0``, ``w0 = 0``)."""
    s = build_setup(cfg)
    u = SpaceTimeField.zeros(s.basis, s.grid.nodes, piecewise=True)
    traj = solve_state(u, s.phi0, Field.zeros(s.basis), s.physics)
    E = energy_history(traj)
    rise = float(np.max(np.diff(E)))
    slack = rel_slack * max(1.0, abs(E[0]))
    ok = rise <= slack
    return SuiteResult("energy", ok, {"max_increase": rise, "slack": slack, "E0": float(E[0]),
                                      "ET": float(E[-1]), "stabilization": s.physics.stabilization},
                       f"max step change {rise:.3e} (allowed {slack:.1e}), E: {E[0]:.6g} -> {E[-1]:.6g}")


def suite_nop(cfg: ProblemConfig, n_samples: int = 100, tol: float = 1e-12) -> SuiteResult:
    """Inverse Neumann Laplacian: ``-Lap N f = f`` and symmetry on zero-mean fields."""
    basis = build_setup(cfg).basis
    rng = _rng(cfg, 2)
    inv_err = sym_err = 0.0
    zero = (0,) * basis.dim
    for _ in range(n_samples):
        a, b = rng.standard_normal(basis.shape), rng.standard_normal(basis.shape)
        a[zero] = b[zero] = 0.0
        f, g = Field(basis, a), Field(basis, b)
        back = -laplacian(inv_neumann_laplacian(f))
        inv_err = max(inv_err, float(np.linalg.norm(back.coeffs - a) / np.linalg.norm(a)))
        x, y = inner(f, inv_neumann_laplacian(g)), inner(g, inv_neumann_laplacian(f))
        sym_err = max(sym_err, abs(x - y) / max(abs(x), abs(y)))
    ok = inv_err <= tol and sym_err <= tol
    return SuiteResult("nop", ok, {"inverse_rel": inv_err, "symmetry_rel": sym_err, "tol": tol},
                       f"-Lap N f = f rel {inv_err:.2e}, symmetry rel {sym_err:.2e} (tol {tol:g})")


def suite_ode(cfg: ProblemConfig, tol: float = 1e-13) -> SuiteResult:
    """Relaxation ODE against the closed-form convolution sum."""
    s = build_setup(cfg)
    rng = _rng(cfg, 3)
    gamma = s.physics.gamma
    t = s.grid.nodes
    u = smooth_control(rng, s.basis, t)
    w0 = Field(s.basis, smooth_coeffs(rng, s.basis.shape))
    w = solve_control_ode(u, w0, gamma).coeffs
    err = 0.0
    for m in range(len(t)):
        ref = math.exp(-t[m] / gamma) * w0.coeffs
        for j in range(m):
            ref = ref + u.coeffs[j] * (math.exp(-(t[m] - t[j + 1]) / gamma) - math.exp(-(t[m] - t[j]) / gamma))
        err = max(err, float(np.max(np.abs(w[m] - ref))))
    unit_grid = TimeGrid(1.0, cfg.time.steps)
    one = SpaceTimeField.zeros(s.basis, unit_grid.nodes, piecewise=True) + 1.0
    w_unit = solve_control_ode(one, Field.zeros(s.basis), 1.0)
    unit_err = abs(w_unit[-1].coeffs[(0,) * s.basis.dim] / math.sqrt(s.basis.volume) - (1 - math.exp(-1)))
    ok = err <= tol and unit_err <= tol
    return SuiteResult("ode", ok, {"max_abs_err": err, "unit_err": unit_err, "tol": tol},
                       f"closed-form error {err:.2e}, w(1) - (1 - 1/e) = {unit_err:.2e} (tol {tol:g})")


TAYLOR_EPS = (1e-1, 1e-2, 1e-3, 1e-4)


def _taylor_samples(cfg, n, h_amplitude=1.0):
    s = build_setup(cfg)
    rng = _rng(cfg, 4)
    t = s.grid.nodes
    for _ in range(n):
        yield s, smooth_control(rng, s.basis, t), smooth_control(rng, s.basis, t, h_amplitude)


def suite_taylor1(cfg: ProblemConfig, n_samples: int = 2, band=(1.9, 2.1)) -> SuiteResult:
    slopes, rems = [], []
    for s, u, h in _taylor_samples(cfg, n_samples):
        base = solve_state(u, s.phi0, s.w0, s.physics)
        xi = solve_linearized(base, h).xi
        r = [((solve_state(u + e * h, s.phi0, s.w0, s.physics).phi - base.phi) - e * xi).sup_h_norm()
             for e in TAYLOR_EPS]
        rems.append(r)
        slopes.append(_slope(TAYLOR_EPS, r))
    ok = all(band[0] <= k <= band[1] for k in slopes)
    return SuiteResult("taylor1", ok, {"slopes": slopes, "remainders": rems, "band": band},
                       "slopes " + ", ".join(f"{k:.4f}" for k in slopes) + f" (band {band})")


def suite_taylor2(cfg: ProblemConfig, n_samples: int = 2, band=(2.85, 3.15)) -> SuiteResult:
    # the cubic remainder is small; a large direction keeps it above rounding at eps = 1e-4
    slopes, rems, zmax = [], [], 0.0
    for s, u, h in _taylor_samples(cfg, n_samples, h_amplitude=10.0):
        base = solve_state(u, s.phi0, s.w0, s.physics)
        th = solve_linearized(base, h)
        tb = solve_bilinearized(base, th, th)
        zmax = max(zmax, float(np.max(np.abs(tb.z.coeffs))))
        r = []
        for e in TAYLOR_EPS:
            d = solve_state(u + e * h, s.phi0, s.w0, s.physics).phi - base.phi
            r.append((d - e * th.xi - (0.5 * e * e) * tb.psi).sup_h_norm())
        rems.append(r)
        slopes.append(_slope(TAYLOR_EPS, r))
    ok = all(band[0] <= k <= band[1] for k in slopes) and zmax == 0.0
    return SuiteResult("taylor2", ok, {"slopes": slopes, "remainders": rems, "z_max": zmax, "band": band},
                       "slopes " + ", ".join(f"{k:.4f}" for k in slopes) + f" (band {band}), max|z| = {zmax:g}")


def _refined(cfg: ProblemConfig, factor: int) -> ProblemSetup:
    return build_setup(cfg.replace("time", steps=cfg.time.steps * factor))


def _refinable_control(coeffs_a, coeffs_b, w1, w2, basis, times):
    left = np.asarray(times)[:-1].reshape((-1,) + (1,) * basis.dim)
    return SpaceTimeField(basis, times, coeffs_a * np.cos(w1 * left) + coeffs_b * np.sin(w2 * left))


def suite_gradient(cfg: ProblemConfig, n_dirs: int = 3, tol: float = 1e-3, min_ratio: float = 1.8,
                   fd_eps: float = 1e-4, scheme: str = "mirrored") -> SuiteResult:
    """Adjoint directional derivative vs central differences of the smooth reduced cost.

    Controls and directions are smooth functions of time sampled on each grid,
    so the same continuous problem is compared at ``dt`` and ``dt/2``.
    """
    rng = _rng(cfg, 5)
    shape = build_setup(cfg).basis.shape
    u_data = (smooth_coeffs(rng, shape, 0.5), smooth_coeffs(rng, shape, 0.5), *rng.uniform(0.5, 3.0, 2))
    dirs = [(smooth_coeffs(rng, shape), smooth_coeffs(rng, shape), *rng.uniform(0.5, 3.0, 2))
            for _ in range(n_dirs)]
    errs = {1: [], 2: []}
    consistent = []
    for factor in (1, 2):
        s = _refined(cfg, factor)
        t = s.grid.nodes
        prob = s.problem
        u = _refinable_control(*u_data[:2], *u_data[2:], s.basis, t)
        traj = prob.state(u)
        adj = prob.adjoint(traj, scheme)
        adj_c = prob.adjoint(traj, "consistent")
        for d in dirs:
            h = _refinable_control(*d[:2], *d[2:], s.basis, t)
            fd = (prob.smooth_cost(u + fd_eps * h) - prob.smooth_cost(u - fd_eps * h)) / (2 * fd_eps)
            dd = (adj.control_gradient() + s.cost.b3 * u).l2_inner(h)
            errs[factor].append(abs(dd - fd) / abs(fd))
            if factor == 1:
                consistent.append(abs((adj_c.control_gradient() + s.cost.b3 * u).l2_inner(h) - fd) / abs(fd))
    ratios = [a / b for a, b in zip(errs[1], errs[2])]
    ok = max(errs[1]) <= tol and min(ratios) >= min_ratio
    return SuiteResult("gradient", ok, {"rel_err": errs[1], "rel_err_half_dt": errs[2], "ratios": ratios,
                                        "consistent_rel_err": consistent, "scheme": scheme, "tol": tol},
                       f"{scheme} adjoint: max rel err {max(errs[1]):.2e} (tol {tol:g}), "
                       f"min refinement ratio {min(ratios):.2f} (need {min_ratio}); "
                       f"consistent adjoint max rel err {max(consistent):.1e}")


def suite_hessian(cfg: ProblemConfig, tol: float = 1e-2, sym_tol: float = 1e-10,
                  fd_eps: float = 1e-3, min_ratio: float = 1.8) -> SuiteResult:
    """Second-derivative form vs second central differences, plus symmetry."""
    rng = _rng(cfg, 6)
    shape = build_setup(cfg).basis.shape
    u_data = (smooth_coeffs(rng, shape, 0.5), smooth_coeffs(rng, shape, 0.5), *rng.uniform(0.5, 3.0, 2))
    h_data = (smooth_coeffs(rng, shape), smooth_coeffs(rng, shape), *rng.uniform(0.5, 3.0, 2))
    k_data = (smooth_coeffs(rng, shape), smooth_coeffs(rng, shape), *rng.uniform(0.5, 3.0, 2))
    errs, sym = [], None
    for factor in (1, 2):
        s = _refined(cfg, factor)
        t = s.grid.nodes
        prob = s.problem
        u, h, k = (_refinable_control(*d[:2], *d[2:], s.basis, t) for d in (u_data, h_data, k_data))
        traj = prob.state(u)
        adj = prob.adjoint(traj)
        hh = second_form(u, traj, adj, h, h, s.cost)
        j0 = prob.smooth_cost(u)
        fd = (prob.smooth_cost(u + fd_eps * h) - 2 * j0 + prob.smooth_cost(u - fd_eps * h)) / fd_eps ** 2
        errs.append(abs(hh - fd) / abs(fd))
        if factor == 1:
            hk = second_form(u, traj, adj, h, k, s.cost)
            kh = second_form(u, traj, adj, k, h, s.cost)
            sym = abs(hk - kh) / max(abs(hk), abs(kh))
    ratio = errs[0] / errs[1]
    ok = errs[0] <= tol and sym <= sym_tol and ratio >= min_ratio
    return SuiteResult("hessian", ok, {"rel_err": errs[0], "rel_err_half_dt": errs[1], "ratio": ratio,
                                       "symmetry_rel": sym, "tol": tol},
                       f"rel err {errs[0]:.2e} (tol {tol:g}), refinement ratio {ratio:.2f}, "
                       f"symmetry {sym:.1e} (tol {sym_tol:g})")


def _optimum(cfg):
    s = build_setup(cfg)
    return s, run_optimize(s)


def suite_kkt(cfg: ProblemConfig, tol: float = 1e-6, _cache=None) -> SuiteResult:
    s, rep = _cache or _optimum(cfg)
    totals = [h.total for h in rep.history]
    monotone = all(b <= a for a, b in zip(totals, totals[1:]))
    res = kkt_residual(rep.u, rep.r, s.cost, cfg.optimizer.zero_tol)
    ok = rep.converged and res <= tol and monotone and rep.iterations <= cfg.optimizer.max_iter
    return SuiteResult("kkt", ok, {"kkt": res, "iterations": rep.iterations, "monotone": monotone,
                                   "status": rep.status, "final_total": totals[-1]},
                       f"status {rep.status} after {rep.iterations} iterations, KKT {res:.2e} (tol {tol:g}), "
                       f"monotone total cost: {monotone}")


def suite_sparsity(cfg: ProblemConfig, margin: float = 1e-5, kkt_tol: float = 1e-6, _cache=None) -> SuiteResult:
    s, rep = _cache or _optimum(cfg)
    frac, viol = sparsity_report(rep.u, rep.r, s.cost.kappa, margin)
    res = kkt_residual(rep.u, rep.r, s.cost, cfg.optimizer.zero_tol)
    un = rep.u.nodal(s.basis.native)
    lam = recover_multiplier(un, rep.r.nodal(s.basis.native), s.cost.kappa, s.cost.b3, cfg.optimizer.zero_tol)
    nz = np.abs(un) > cfg.optimizer.zero_tol
    lam_ok = bool(np.all(np.abs(lam) <= 1.0) and np.all(lam[nz] == np.sign(un[nz])))
    ok = viol == 0 and res <= kkt_tol and lam_ok
    return SuiteResult("sparsity", ok, {"fraction_zero": frac, "violations": viol, "kkt": res,
                                        "multiplier_ok": lam_ok},
                       f"zero fraction {frac:.4f}, equivalence violations {viol} (margin {margin:g}), "
                       f"projection residual {res:.2e}, multiplier admissible: {lam_ok}")


def suite_coercivity(cfg: ProblemConfig, n_samples: int | None = None, _cache=None) -> SuiteResult:
    """Sampled second-order check at the tracking optimum and in the pure-control case.

    The pure-control case (``b1 = b2 = 0``) is probed twice: with the configured
    box, where the optimum is ``u = 0`` and the critical cone is trivial, and
    with the lower bound raised to ``kappa / b3``, which is then active with
    ``|r + b3 u| = kappa`` everywhere, so the cone is ``{v >= 0}`` and every
    quotient equals ``b3``.
    """
    n = n_samples or cfg.run.probe_samples
    tol = cfg.optimizer.sparsity_tol
    s, rep = _cache or _optimum(cfg)
    tracking = coercivity_probe(rep.u, rep.traj, rep.adj, s.cost, n, rng=cfg.run.seed, tol=tol)

    b3, kappa = cfg.cost.b3, cfg.cost.kappa
    pure = cfg.replace("cost", b1=0.0, b2=0.0)
    s0, rep0 = _optimum(pure)
    trivial = coercivity_probe(rep0.u, rep0.traj, rep0.adj, s0.cost, n, rng=cfg.run.seed, tol=tol)
    lo = kappa / b3
    active = pure.replace("cost", u_low=lo, u_high=max(cfg.cost.u_high, 2 * lo))
    s1, rep1 = _optimum(active)
    baseline = coercivity_probe(rep1.u, rep1.traj, rep1.adj, s1.cost, n, rng=cfg.run.seed, tol=tol)

    ok = tracking > 0 and trivial >= 0.9 * b3 and baseline >= 0.9 * b3 and math.isfinite(baseline)
    return SuiteResult("coercivity", ok, {"tracking_min": tracking, "pure_trivial_cone_min": trivial,
                                          "pure_active_box_min": baseline, "b3": b3, "samples": n},
                       f"tracking min quotient {tracking:.4e} (> 0); pure-control case {baseline:.6e} "
                       f"with active bound, {trivial} with trivial cone (need >= {0.9 * b3:.3g})")


def suite_sweep(cfg: ProblemConfig, workers: int | None = None) -> SuiteResult:
    s = build_setup(cfg)
    scale = sweep_scale(cfg, s)
    kappas = sorted(k * scale for k in cfg.run.kappas)
    entries = run_sweep(cfg, kappas, workers)
    fr = [e.sparsity_fraction for e in entries]
    monotone = all(b >= a for a, b in zip(fr, fr[1:]))
    sup_r = sweep_scale(cfg.replace("run", kappa_scale=None), s)
    above = [e for e in entries if e.kappa > sup_r]
    zero_ok = all(e.all_zero for e in above)
    ok = monotone and zero_ok and len(above) > 0
    return SuiteResult("sweep", ok, {"kappas": kappas, "fractions": fr, "sup_r0": sup_r,
                                     "entries": [e.__dict__ for e in entries]},
                       f"zero fractions {', '.join(f'{f:.3f}' for f in fr)} (non-decreasing: {monotone}); "
                       f"u* = 0 exactly for all {len(above)} kappa > sup|r(0)| = {sup_r:.4g}: {zero_ok}")


SUITES = {
    "mass": suite_mass,
    "energy": suite_energy,
    "nop": suite_nop,
    "ode": suite_ode,
    "taylor1": suite_taylor1,
    "taylor2": suite_taylor2,
    "gradient": suite_gradient,
    "hessian": suite_hessian,
    "kkt": suite_kkt,
    "sparsity": suite_sparsity,
    "coercivity": suite_coercivity,
    "sweep": suite_sweep,
}


def run_suite(name: str, cfg: ProblemConfig) -> SuiteResult:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}") from None
    return fn(cfg)
