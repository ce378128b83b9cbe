import math

import numpy as np
import pytest

from conftest import smooth_coeffs, smooth_control
from oracles import midpoints, relax_closed_form
from sparsech import (
    BasisMismatchError,
    BlowUpError,
    Field,
    PhysicsParams,
    QuarticPotential,
    SpaceTimeField,
    TimeGrid,
    build_basis,
    energy_history,
    free_energy,
    mean,
    solve_control_ode,
    solve_state,
)
from sparsech.state import scheme_residuals


def unit_control(basis, grid, value=1.0):
    return SpaceTimeField.zeros(basis, grid.nodes, piecewise=True) + value


class TestControlODE:
    def test_unit_step_response(self, basis1):
        grid = TimeGrid(1.0, 400)
        w = solve_control_ode(unit_control(basis1, grid), Field.zeros(basis1), 1.0)
        assert abs(mean(w[-1]) - (1 - math.exp(-1))) <= 1e-13
        assert math.isclose(1 - math.exp(-1), 0.632121, abs_tol=1e-6)

    def test_free_decay(self, basis1):
        grid = TimeGrid(2.0, 50)
        w = solve_control_ode(unit_control(basis1, grid, 0.0), Field.constant(basis1, 3.0), 0.5)
        expect = 3.0 * np.exp(-grid.nodes / 0.5)
        assert np.allclose([mean(f) for f in w.fields()], expect, rtol=1e-13)

    def test_matches_closed_form(self, basis2, rng):
        grid = TimeGrid(1.5, 60)
        u = smooth_control(rng, basis2, grid.nodes)
        w0 = smooth_coeffs(rng, basis2.shape)
        w = solve_control_ode(u, Field(basis2, w0), 0.7)
        ref = relax_closed_form(u.coeffs, w0, 0.7, grid.nodes)
        assert np.max(np.abs(w.coeffs - ref)) <= 1e-13

    def test_rejects_nonpositive_gamma(self, basis1, grid):
        with pytest.raises(ValueError):
            solve_control_ode(unit_control(basis1, grid), Field.zeros(basis1), 0.0)

    def test_midpoint_residual_shrinks(self, basis1, rng):
        a = smooth_coeffs(rng, basis1.shape)

        def residual(n):
            grid = TimeGrid(1.0, n)
            left = grid.nodes[:-1, None]
            u = SpaceTimeField(basis1, grid.nodes, a * np.sin(3 * left))
            w = solve_control_ode(u, Field.zeros(basis1), 0.5).coeffs
            # u sampled at the midpoint of each step, not at its left end
            u_mid = a * np.sin(3 * (left + grid.dt / 2))
            res = 0.5 * (w[1:] - w[:-1]) / grid.dt + 0.5 * (w[1:] + w[:-1]) - u_mid
            return np.max(np.abs(res))

        r1, r2 = residual(100), residual(200)
        assert r1 / r2 >= 1.8


class TestForward:
    def test_uniform_state_is_stationary(self, basis1, grid, physics):
        phi0 = Field.constant(basis1, 0.3)
        traj = solve_state(unit_control(basis1, grid, 0.0), phi0, Field.zeros(basis1), physics)
        assert np.max(np.abs(traj.phi.coeffs - phi0.coeffs)) <= 1e-12
        fp = 0.3 ** 3 - 0.3
        assert np.allclose([mean(m) for m in traj.mu.fields()], fp, atol=1e-12)
        assert np.max(np.abs(traj.mu.coeffs[:, 1:])) <= 1e-12
        assert np.all(traj.w.coeffs == 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_mass_conserved(self, basis1, grid, physics, seed):
        r = np.random.default_rng(seed)
        phi0 = Field(basis1, smooth_coeffs(r, basis1.shape, 0.4))
        traj = solve_state(smooth_control(r, basis1, grid.nodes, 2.0), phi0,
                           Field(basis1, smooth_coeffs(r, basis1.shape)), physics)
        drift = max(abs(mean(f) - mean(phi0)) for f in traj.phi.fields())
        assert drift <= 1e-12

    def test_mass_conserved_2d(self, basis2, physics, rng):
        grid = TimeGrid(0.5, 50)
        phi0 = Field(basis2, smooth_coeffs(rng, basis2.shape, 0.4))
        traj = solve_state(smooth_control(rng, basis2, grid.nodes), phi0, Field.zeros(basis2), physics)
        assert max(abs(mean(f) - mean(phi0)) for f in traj.phi.fields()) <= 1e-12

    def test_energy_non_increasing(self, physics):
        basis = build_basis(1, 2 * math.pi, 64)
        grid = TimeGrid(1.0, 400)
        phi0 = Field(basis, smooth_coeffs(np.random.default_rng(3), basis.shape, 0.05, 0.1))
        traj = solve_state(unit_control(basis, grid, 0.0), phi0, Field.zeros(basis), physics)
        assert physics.stabilization == 11.0
        assert np.all(np.diff(energy_history(traj)) <= 0.0)

    def test_scheme_balance(self, small_state, physics, grid):
        u, phi0, w0 = small_state
        res = scheme_residuals(solve_state(u, phi0, w0, physics))
        assert res["balance"] <= 1e-12
        assert res["lag"] > 0

    def test_blow_up_reports_step(self, basis1, grid):
        params = PhysicsParams(blowup_bound=1.5)
        drive = np.zeros((grid.n_steps, 32))
        drive[:, 1] = 50.0
        u = SpaceTimeField(basis1, grid.nodes, drive)
        with pytest.raises(BlowUpError, match=r"step \d+") as info:
            solve_state(u, Field.constant(basis1, 0.5), Field.zeros(basis1), params)
        assert info.value.step is not None and info.value.step > 0

    def test_requires_piecewise_control(self, basis1, grid, physics):
        node_valued = SpaceTimeField.zeros(basis1, grid.nodes)
        with pytest.raises(BasisMismatchError):
            solve_state(node_valued, Field.zeros(basis1), Field.zeros(basis1), physics)

    def test_basis_mismatch(self, basis1, grid, physics):
        other = build_basis(1, 1.0, 32)
        with pytest.raises(BasisMismatchError):
            solve_state(unit_control(basis1, grid), Field.zeros(other), Field.zeros(basis1), physics)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            PhysicsParams(gamma=-1.0)
        with pytest.raises(ValueError):
            PhysicsParams(stabilization=-0.1)
        assert PhysicsParams(potential=QuarticPotential(scale=1.0)).stabilization == 44.0

    def test_continuous_dependence(self, basis1, grid, physics, rng):
        phi0 = Field(basis1, smooth_coeffs(rng, basis1.shape, 0.3))
        w0 = Field.zeros(basis1)
        ratios = {1.0: [], 0.5: []}
        for _ in range(20):
            u1 = smooth_control(rng, basis1, grid.nodes)
            d = smooth_control(rng, basis1, grid.nodes, 0.2)
            p1 = solve_state(u1, phi0, w0, physics).phi
            for scale in ratios:
                p2 = solve_state(u1 + scale * d, phi0, w0, physics).phi
                ratios[scale].append((p2 - p1).sup_h_norm() / (scale * d).l2_norm())
        k_full, k_half = max(ratios[1.0]), max(ratios[0.5])
        assert 0.5 <= k_half / k_full <= 2.0

    def test_first_order_in_time(self, basis1, physics, rng):
        # the observed order approaches 1 from below as dt shrinks
        phi0 = Field(basis1, smooth_coeffs(rng, basis1.shape, 0.3))
        a = smooth_coeffs(rng, basis1.shape)

        def final(n):
            grid = TimeGrid(1.0, n)
            u = SpaceTimeField(basis1, grid.nodes, a * np.cos(2 * grid.nodes[:-1, None]))
            return solve_state(u, phi0, Field.zeros(basis1), physics).final.coeffs

        f1, f2, f3 = final(400), final(800), final(1600)
        order = math.log2(np.linalg.norm(f1 - f2) / np.linalg.norm(f2 - f3))
        assert order >= 0.95


class TestFreeEnergy:
    basis = build_basis(1, math.pi, 16)

    def test_wells_have_zero_energy(self):
        assert free_energy(Field.constant(self.basis, 1.0), QuarticPotential()) == pytest.approx(0.0, abs=1e-14)

    def test_origin(self):
        assert free_energy(Field.zeros(self.basis), QuarticPotential()) == pytest.approx(math.pi / 4, rel=1e-14)

    def test_cosine_vs_quadrature(self):
        c = np.zeros(16)
        c[1] = math.sqrt(math.pi / 2)
        x, w = midpoints(math.pi, 200)
        ref = np.sum(0.5 * np.sin(x) ** 2 + 0.25 * (np.cos(x) ** 2 - 1) ** 2) * w
        assert abs(free_energy(Field(self.basis, c), QuarticPotential()) - ref) <= 1e-10
