import numpy as np
import pytest

from fiberflow.errors import EmptyMaskError, NonconvergenceError, StabilityError
from fiberflow.families import FamilySpec
from fiberflow.fiber_flow import (boundary_closure, build_grid, dt_stable,
                                  initial_state, ma_rhs, newton_ke, solve_flow,
                                  step)
from fiberflow.oracles import oracle

BALL = FamilySpec(kind="unit_ball")
DISC = FamilySpec(kind="product_disc")


def lattice_points(grid):
    X, Y = np.meshgrid(grid.x, grid.y)
    return X + 1j * Y


def test_grid_mask_matches_defining_function():
    grid = build_grid(BALL, 0.5, h=0.05, eps_cut=0.1)
    Z = lattice_points(grid)
    inside = np.abs(Z) ** 2 + 0.25 - 1.0 < -0.1
    assert np.array_equal(grid.mask, inside)
    assert np.all(grid.interior <= grid.mask)
    assert np.array_equal(grid.ring, grid.mask & ~grid.interior)
    # reference data defined exactly on the mask
    assert np.all(np.isfinite(grid.F[grid.mask]))
    assert not np.any(np.isfinite(grid.F[~grid.mask]))


def test_empty_mask_raises():
    with pytest.raises(EmptyMaskError):
        build_grid(BALL, 0.5, h=0.05, eps_cut=2.0)


def test_grad_norm_bound_on_grid():
    for spec, s in ((BALL, 0.3 + 0.2j), (DISC, 0.1),
                    (FamilySpec(kind="hartogs", hartogs_lambda=1.5), 0.4)):
        grid = build_grid(spec, s, h=0.05, eps_cut=0.02)
        assert np.nanmax(grid.grad_norm_sq[grid.mask]) <= 1.0 + 1e-12


def test_boundary_closure_interpolates_zero_to_ke():
    grid = build_grid(BALL, 0.5, h=0.05, eps_cut=0.1)
    assert np.allclose(boundary_closure(grid, 0.0), 0.0)
    late = boundary_closure(grid, 50.0)
    assert np.allclose(late, -grid.F_ring / 2.0)


def test_product_disc_is_discrete_fixed_point():
    # F = 0 and phi = 0 make the right-hand side vanish (up to the rounding
    # of F itself, which is (1 - |z|^2) + |z|^2 - 1 ~ machine epsilon)
    grid = build_grid(DISC, 0.0, h=0.05, eps_cut=0.05)
    rhs = ma_rhs(grid, np.zeros(grid.shape))
    assert np.max(np.abs(rhs)) <= 1e-15
    result = solve_flow(grid, 0.5, snapshot_times=[0.5], c_cfl=2.0)
    assert np.nanmax(np.abs(result.snapshots[-1].phi)) <= 1e-14


def test_flow_matches_oracle_on_ball():
    orc = oracle("unit_ball")
    s = 0.5
    grid = build_grid(BALL, s, h=0.05, eps_cut=0.01)
    result = solve_flow(grid, 1.0, snapshot_times=[0.5, 1.0], c_cfl=0.4)
    assert not result.breakdown
    for snap in result.snapshots:
        exact = orc.phi(0, s, snap.t)
        assert np.nanmax(np.abs(snap.phi[grid.mask] - exact)) < 1e-7


def test_decay_bound_records():
    grid = build_grid(BALL, 0.5, h=0.05, eps_cut=0.01)
    result = solve_flow(grid, 2.0, snapshot_times=[0.5, 1.0, 2.0], c_cfl=0.4)
    sup_f = np.nanmax(np.abs(grid.F[grid.mask]))
    for rec in result.records:
        assert rec["decay_product"] <= sup_f * 1.05 + 1e-9


def test_oversized_step_rejected():
    grid = build_grid(DISC, 0.0, h=0.1, eps_cut=0.05)
    state = initial_state(grid)
    dt_max = dt_stable(grid, state.phi, c_cfl=4.0)
    with pytest.raises(StabilityError):
        step(state, grid, 2.0 * dt_max)


def test_snapshot_times_hit_exactly():
    grid = build_grid(DISC, 0.0, h=0.1, eps_cut=0.05)
    times = [0.013, 0.4, 0.77]
    result = solve_flow(grid, 1.0, snapshot_times=times, c_cfl=0.4)
    got = [snap.t for snap in result.snapshots]
    assert got == sorted(set(times + [1.0]))


def test_restart_reproduces_uninterrupted_flow():
    orc_spec = FamilySpec(kind="hartogs", hartogs_lambda=1.0)
    grid = build_grid(orc_spec, 0.3, h=0.05, eps_cut=0.02)
    full = solve_flow(grid, 1.0, snapshot_times=[0.4, 1.0], c_cfl=0.4)
    first = solve_flow(grid, 0.4, snapshot_times=[0.4], c_cfl=0.4)
    second = solve_flow(grid, 1.0, snapshot_times=[1.0], c_cfl=0.4,
                        start_state=first.snapshots[-1])
    assert np.array_equal(second.snapshots[-1].phi, full.snapshots[-1].phi)


def test_newton_constant_density_closed_form():
    # constant F: the exact discrete solution is the constant -F/2
    grid = build_grid(BALL, 0.5, h=0.05, eps_cut=0.02)
    result = newton_ke(grid)
    assert result.residual_sup <= 1e-10
    assert np.nanmax(np.abs(result.psi[grid.mask] + grid.F[grid.mask] / 2.0)) < 1e-12
    assert result.quasi_iso_constant == pytest.approx(1.0, abs=1e-10)


def test_newton_manufactured_solution():
    # plant a known non-constant psi* by adjusting F so that psi* solves the
    # discrete equation exactly, then check Newton recovers it
    grid = build_grid(DISC, 0.0, h=0.05, eps_cut=0.1)
    X, Y = np.meshgrid(grid.x, grid.y)
    psi_star = 0.05 * np.exp(X) * np.cos(Y)
    flat = psi_star.ravel()
    lap = (flat[grid.iN] + flat[grid.iS] + flat[grid.iE] + flat[grid.iW]
           - 4.0 * flat[grid.iC])
    w = grid.g_int + lap / (4.0 * grid.h ** 2)
    assert w.min() > 0
    grid.F_int = np.log(w / grid.g_int) - 2.0 * flat[grid.iC]
    grid.F_ring = -2.0 * flat[grid.i_ring] / 2.0 * 2.0  # Dirichlet: -F/2 = psi*
    result = newton_ke(grid, tol=1e-12)
    gap = np.abs(result.psi.ravel()[grid.iC] - flat[grid.iC])
    assert gap.max() < 1e-10
    assert result.iterations >= 1


def test_newton_nonconstant_density_polynomial_family():
    poly = FamilySpec(
        kind="polynomial",
        coefficients=(((1, 1, 0, 0), 1.0), ((0, 0, 0, 0), -1.0),
                      ((2, 2, 0, 0), 0.1),
                      ((1, 0, 0, 1), 0.1), ((0, 1, 1, 0), 0.1)),
        bbox=(-1.2, 1.2, -1.2, 1.2))
    grid = build_grid(poly, 0.2, h=0.04, eps_cut=0.05)
    assert np.nanstd(grid.F[grid.mask]) > 1e-3  # genuinely non-constant
    result = newton_ke(grid)
    assert result.residual_sup <= 1e-10
    assert result.iterations >= 1
    # flow converges to the same discrete solution
    flow = solve_flow(grid, 8.0, snapshot_times=[8.0], c_cfl=2.0)
    gap = np.nanmax(np.abs(flow.snapshots[-1].phi - result.psi)[grid.interior])
    assert gap < 1e-6


def test_newton_iteration_cap():
    grid = build_grid(BALL, 0.5, h=0.1, eps_cut=0.05)
    grid.F_int = grid.F_int + 5.0 * np.sin(10 * np.arange(grid.F_int.size))
    with pytest.raises(NonconvergenceError):
        newton_ke(grid, tol=1e-14, max_iter=1)
