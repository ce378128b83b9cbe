import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import smooth_coeffs, smooth_control
from oracles import cosine_values, midpoints, prox_bruteforce, tracking_cost_1d
from sparsech import (
    BlowUpError,
    ControlProblem,
    CostConfig,
    Field,
    OptimizerParams,
    PhysicsParams,
    SpaceTimeField,
    TimeGrid,
    build_basis,
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
    solve_state,
    sparsity_report,
)


def nodal_control(basis, times, values):
    return SpaceTimeField.from_nodal(basis, times, values, basis.native)


def zero_targets(basis, times):
    return SpaceTimeField.zeros(basis, times), Field.zeros(basis)


@pytest.fixture(scope="module")
def tracking():
    """Small tracking problem: reach the state driven by a reference control."""
    basis = build_basis(1, 2 * math.pi, 32)
    grid = TimeGrid(1.0, 100)
    physics = PhysicsParams()
    r = np.random.default_rng(3)
    phi0 = Field(basis, smooth_coeffs(r, basis.shape, 0.3))
    w0 = Field.zeros(basis)
    ref = solve_state(smooth_control(r, basis, grid.nodes), phi0, w0, physics)
    cost = CostConfig(1.0, 0.0, 1e-2, 1e-3, ref.phi, ref.final, -5.0, 5.0)
    return ControlProblem(phi0, w0, physics, cost)


@pytest.fixture(scope="module")
def solved(tracking):
    return optimize(tracking.zero_control(), tracking)


class TestCost:
    def test_on_target(self, small_state, physics):
        u, phi0, w0 = small_state
        tr = solve_state(u * 0.0, phi0, w0, physics)
        cost = CostConfig(1.0, 1.0, 1.0, 1.0, tr.phi, tr.final)
        assert evaluate_cost(tr, tr.u, cost) == (0.0, 0.0, 0.0)

    def test_constant_control(self):
        basis = build_basis(1, math.pi, 8)
        times = TimeGrid(1.0, 10).nodes
        u = SpaceTimeField.zeros(basis, times, piecewise=True) + 1.0
        tr = solve_state(u, Field.zeros(basis), Field.zeros(basis), PhysicsParams())
        cost = CostConfig(0.0, 0.0, 2.0, 3.0, *zero_targets(basis, times))
        J, G, total = evaluate_cost(tr, u, cost)
        assert J == pytest.approx(math.pi, rel=1e-14)
        assert G == pytest.approx(math.pi, rel=1e-14)
        assert total == pytest.approx(4 * math.pi, rel=1e-14)

    def test_against_direct_quadrature(self, small_state, physics, rng):
        u, phi0, w0 = small_state
        tr = solve_state(u, phi0, w0, physics)
        b = tr.basis
        target = SpaceTimeField(b, tr.phi.times, rng.standard_normal(tr.phi.coeffs.shape) * 0.3)
        final = Field(b, smooth_coeffs(rng, b.shape))
        cost = CostConfig(0.7, 1.3, 0.05, 0.2, target, final)
        J, G, total = evaluate_cost(tr, u, cost)
        J_ref, _ = tracking_cost_1d(tr.phi.coeffs, target.coeffs, tr.final.coeffs, final.coeffs,
                                    u.coeffs, tr.phi.times, b.lengths[0], 0.7, 1.3, 0.05)
        assert abs(J - J_ref) <= 1e-10 * abs(J_ref)
        # the L1 term is the nodal midpoint rule on the collocation grid
        x, w = midpoints(b.lengths[0], b.shape[0])
        dt = np.diff(tr.phi.times)
        G_ref = sum(dt[m] * w * np.sum(np.abs(cosine_values(u.coeffs[m], b.lengths[0], x)))
                    for m in range(len(dt)))
        assert abs(G - G_ref) <= 1e-12 * G_ref
        assert total == pytest.approx(J + 0.2 * G, rel=1e-15)

    def test_l1_homogeneous_and_convex(self, basis1, grid, rng):
        for _ in range(5):
            u = smooth_control(rng, basis1, grid.nodes)
            v = smooth_control(rng, basis1, grid.nodes)
            a = rng.uniform(-3, 3)
            assert l1_norm(a * u) == pytest.approx(abs(a) * l1_norm(u), rel=1e-12)
            assert l1_norm(0.5 * (u + v)) - 0.5 * (l1_norm(u) + l1_norm(v)) <= 1e-12

    def test_directional_derivative(self, basis1, grid, rng):
        un = smooth_control(rng, basis1, grid.nodes).nodal(basis1.native)
        un[np.abs(un) < 0.3] = 0.0
        vn = rng.standard_normal(un.shape)
        u = nodal_control(basis1, grid.nodes, un)
        quotients = [(l1_norm(nodal_control(basis1, grid.nodes, un + t * vn)) - l1_norm(u)) / t
                     for t in (1.0, 0.3, 0.1, 0.03, 0.01)]
        assert all(b <= a + 1e-12 for a, b in zip(quotients, quotients[1:]))
        eps = 1e-7
        fd = (l1_norm(nodal_control(basis1, grid.nodes, un + eps * vn)) - l1_norm(u)) / eps
        dd = l1_directional_derivative(un, vn, basis1, grid.nodes)
        assert abs(fd - dd) <= 1e-6 * abs(dd)

    def test_weight_validation(self, basis1, grid):
        targets = zero_targets(basis1, grid.nodes)
        for bad in [(-1, 0, 1, 1), (0, -1, 1, 1), (0, 0, 0, 1), (0, 0, 1, 0)]:
            with pytest.raises(ValueError):
                CostConfig(*bad, *targets)
        with pytest.raises(ValueError):
            CostConfig(1, 0, 1, 1, *targets, u_low=1.0, u_high=0.0)


class TestPointwise:
    def test_prox_examples(self):
        assert prox_box_l1(0.8, 0.5, -1, 1) == pytest.approx(0.3, abs=1e-15)
        assert prox_box_l1(0.3, 0.5) == 0.0
        assert prox_box_l1(-4.0, 0.5, -1, 1) == -1.0
        with pytest.raises(ValueError):
            prox_box_l1(1.0, -0.1)

    @settings(max_examples=60, deadline=None)
    @given(v=st.floats(-5, 5), s=st.floats(0, 2), a=st.floats(-3, 3), b=st.floats(-3, 3))
    def test_prox_matches_bruteforce(self, v, s, a, b):
        lo, hi = min(a, b), max(a, b)
        assert abs(float(prox_box_l1(v, s, lo, hi)) - prox_bruteforce(v, s, lo, hi)) <= 1e-4

    def test_prox_on_fields(self, basis1, grid, rng):
        u = smooth_control(rng, basis1, grid.nodes)
        out = prox_box_l1(u, 0.2, -0.5, 0.5)
        assert isinstance(out, SpaceTimeField) and out.piecewise
        ref = np.clip(np.sign(un := u.nodal(basis1.native)) * np.maximum(np.abs(un) - 0.2, 0), -0.5, 0.5)
        assert np.max(np.abs(out.nodal(basis1.native) - ref)) <= 1e-12

    def test_multiplier_examples(self):
        kappa = 0.5
        assert np.all(recover_multiplier(np.full(4, 0.2), np.zeros(4), kappa) == 1.0)
        assert np.all(recover_multiplier(np.zeros(4), np.zeros(4), kappa) == 0.0)
        assert np.all(recover_multiplier(np.zeros(4), np.full(4, 2 * kappa), kappa) == -1.0)
        lam = recover_multiplier(np.random.default_rng(0).standard_normal(50), np.random.default_rng(1).standard_normal(50), 0.1)
        assert np.all(np.abs(lam) <= 1.0)

    def test_sparsity_report_examples(self):
        assert sparsity_report(np.zeros(10), np.zeros(10), 1.0) == (1.0, 0)
        u = np.array([0.0, 0.0, 1.0, 1.0])
        r = np.array([0.5, 2.0, -1.0, 0.2])
        assert sparsity_report(u, r, 1.0) == (0.5, 2)


class TestKKT:
    def test_zero_for_pure_control_cost(self, basis1, grid):
        cost = CostConfig(0.0, 0.0, 1e-2, 1e-3, *zero_targets(basis1, grid.nodes))
        zero = SpaceTimeField.zeros(basis1, grid.nodes, piecewise=True)
        assert kkt_residual(zero, zero, cost) == 0.0

    def test_grows_with_perturbation(self, solved, tracking):
        cost = tracking.cost
        assert solved.kkt <= 1e-6
        un = solved.u.nodal(tracking.basis.native)
        rn = solved.r.nodal(tracking.basis.native)
        cell_area = np.diff(cost.times)[5] * np.broadcast_to(tracking.basis.native.cell_weights, tracking.basis.shape)[7]
        for delta in (1e-3, 1e-2, 1e-1):
            pert = un.copy()
            pert[5, 7] += delta
            res = kkt_residual(nodal_control(tracking.basis, cost.times, pert),
                               nodal_control(tracking.basis, cost.times, rn), cost)
            assert res >= 0.5 * delta * math.sqrt(cell_area)

    def test_reduced_gradient(self, tracking, solved):
        g = reduced_gradient_smooth(solved.u, solved.traj, solved.adj, tracking.cost.b3)
        assert (g - solved.r - tracking.cost.b3 * solved.u).sup_h_norm() <= 1e-15


class TestOptimizer:
    def test_pure_control_cost_goes_to_zero(self, basis1, grid, rng):
        cost = CostConfig(0.0, 0.0, 1e-2, 1e-3, *zero_targets(basis1, grid.nodes))
        prob = ControlProblem(Field.zeros(basis1), Field.zeros(basis1), PhysicsParams(), cost)
        rep = optimize(smooth_control(rng, basis1, grid.nodes), prob)
        assert rep.converged
        assert np.max(np.abs(rep.u.nodal(basis1.native))) <= 1e-12

    def test_full_sparsity_fixed_point(self, tracking):
        zero = tracking.zero_control()
        r0 = tracking.adjoint(tracking.state(zero)).control_gradient()
        sup = float(np.max(np.abs(r0.nodal(tracking.basis.native))))
        prob = tracking.with_cost(kappa=1.01 * sup)
        rep = optimize(zero, prob)
        assert rep.converged and rep.iterations == 0
        assert np.all(rep.u.coeffs == 0.0)

    def test_monotone_and_converged(self, solved):
        totals = [h.total for h in solved.history]
        assert solved.converged and solved.status == "converged"
        assert all(b <= a for a, b in zip(totals, totals[1:]))
        assert solved.kkt <= 1e-6

    def test_optimality_structure(self, solved, tracking):
        frac, viol = sparsity_report(solved.u, solved.r, tracking.cost.kappa, 1e-5)
        assert viol == 0 and 0.0 < frac < 1.0
        lam = solved.multiplier.nodal(tracking.basis.native)
        assert np.all(np.abs(lam) <= 1.0 + 1e-12)

    def test_blowup_reports_iterate(self, basis1, grid):
        physics = PhysicsParams(blowup_bound=1.5)
        cost = CostConfig(1.0, 0.0, 1e-2, 1e-3, *zero_targets(basis1, grid.nodes))
        prob = ControlProblem(Field.zeros(basis1), Field.zeros(basis1), physics, cost)
        coeffs = np.zeros((grid.n_steps, *basis1.shape))
        coeffs[:, 1] = 50.0
        with pytest.raises(BlowUpError) as info:
            optimize(SpaceTimeField(basis1, grid.nodes, coeffs), prob, OptimizerParams(max_iter=3))
        assert info.value.iterate == 0 and info.value.step is not None
        assert "iterate 0" in str(info.value)


class TestSecondOrder:
    def test_pure_control_form(self, basis1, grid, rng):
        cost = CostConfig(0.0, 0.0, 0.3, 1e-3, *zero_targets(basis1, grid.nodes))
        prob = ControlProblem(Field(basis1, smooth_coeffs(rng, basis1.shape, 0.3)), Field.zeros(basis1),
                              PhysicsParams(), cost)
        u = smooth_control(rng, basis1, grid.nodes)
        tr = prob.state(u)
        adj = prob.adjoint(tr)
        h = smooth_control(rng, basis1, grid.nodes)
        assert second_form(u, tr, adj, h, h, cost) == pytest.approx(0.3 * h.l2_inner(h), rel=1e-12)

    def test_symmetry_and_b3_shift(self, solved, tracking, rng):
        b, t = tracking.basis, tracking.cost.times
        h, k = smooth_control(rng, b, t), smooth_control(rng, b, t)
        cost = tracking.cost
        hk = second_form(solved.u, solved.traj, solved.adj, h, k, cost)
        kh = second_form(solved.u, solved.traj, solved.adj, k, h, cost)
        assert abs(hk - kh) <= 1e-10 * abs(hk)
        v = h * (1.0 / h.l2_norm())
        base = second_form(solved.u, solved.traj, solved.adj, v, v, cost)
        doubled = second_form(solved.u, solved.traj, solved.adj, v, v, cost.replace(b3=2 * cost.b3))
        assert doubled - base == pytest.approx(cost.b3, rel=1e-10)

    def test_cone_membership(self, solved, tracking, rng):
        cost, b = tracking.cost, tracking.basis
        un, rn = solved.u.nodal(b.native), solved.r.nodal(b.native)
        assert critical_cone_check(np.zeros_like(un), un, rn, cost)
        off = np.abs(np.abs(rn + cost.b3 * un) - cost.kappa) > 1e-5
        assert off.any()
        bad = np.zeros_like(un)
        bad[np.argwhere(off)[0][0], np.argwhere(off)[0][1]] = 1.0
        assert not critical_cone_check(bad, un, rn, cost)
        for _ in range(10):
            v = project_critical_cone(rng.standard_normal(un.shape), un, rn, cost)
            assert critical_cone_check(v, un, rn, cost)

    def test_probe_on_tracking_optimum(self, solved, tracking):
        val, samples = coercivity_probe(solved.u, solved.traj, solved.adj, tracking.cost, 20, rng=0,
                                        return_samples=True)
        assert len(samples) == 20 and val > 0

    def test_probe_pure_control(self, basis1, grid):
        times = grid.nodes
        for b3 in (0.01, 0.02):
            kappa = 1e-3
            cost = CostConfig(0.0, 0.0, b3, kappa, *zero_targets(basis1, times), u_low=kappa / b3)
            prob = ControlProblem(Field.zeros(basis1), Field.zeros(basis1), PhysicsParams(), cost)
            u = prob.control(np.broadcast_to(cost.lower, cost.lower.shape).copy())
            tr = prob.state(u)
            val = coercivity_probe(u, tr, prob.adjoint(tr), cost, 5, rng=1)
            assert val == pytest.approx(b3, rel=1e-10)
        # inactive everywhere: the cone is trivial
        cost = CostConfig(0.0, 0.0, 0.01, 1e-3, *zero_targets(basis1, times))
        prob = ControlProblem(Field.zeros(basis1), Field.zeros(basis1), PhysicsParams(), cost)
        u = prob.zero_control()
        tr = prob.state(u)
        assert coercivity_probe(u, tr, prob.adjoint(tr), cost, 5) == math.inf
