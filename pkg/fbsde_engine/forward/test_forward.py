"""
Tests for jump-adapted grids, the Euler scheme and path ensembles.
"""

import json

import numpy as np
import pytest

from levy_engine.errors import CapacityError, ConfigurationError, DomainError, RefinementRequiredError
from levy_engine.measures.models import LevyModel
from levy_engine.measures.moments import retained_signed_first_moment
from levy_engine.shotnoise.representations import SeriesMethod, SeriesRepresentation
from levy_engine.shotnoise.skeleton import JumpSkeleton, sample_skeleton
from fbsde_engine.forward.ensemble import (
    coarsen_ensemble,
    ensemble_table,
    load_ensemble,
    refine_ensemble,
    save_ensemble,
    simulate_ensemble,
)
from fbsde_engine.forward.euler import euler_step, simulate_path
from fbsde_engine.forward.grid import NodeTag, build_grid, regular_times
from fbsde_engine.problems.benchmarks import diffusion_benchmark, linear_benchmark, nonlinear_forward_problem
from fbsde_engine.problems.problem import FbsdeProblem, constant


SEED = 7


def skeleton_with(times, sizes, horizon=1.0, zeta1=0.0):
    times = np.asarray(times, dtype=float)
    return JumpSkeleton(horizon=horizon, level=1.0, times=times, sizes=np.asarray(sizes, dtype=float),
                        epochs=np.linspace(0.1, 0.9, times.size), count=times.size, zeta1=zeta1)


def forward_problem(b0=0.0, a0=0.0, h0=1.0, x0=0.0, horizon=1.0):
    return FbsdeProblem(
        name="forward_test",
        b=constant(b0), a=constant(a0), h=constant(h0),
        f=lambda t, x, y, z, q: np.zeros(np.shape(y)),
        g=lambda x: np.asarray(x, dtype=float),
        rho=lambda e: np.minimum(1.0, np.abs(e)),
        x0=x0, horizon=horizon, lipschitz_K=1.0,
    )


@pytest.fixture(scope="module")
def gamma_model():
    return LevyModel.gamma(alpha=1.0, beta=1.0)


@pytest.fixture(scope="module")
def bondesson(gamma_model):
    return SeriesRepresentation(gamma_model, SeriesMethod.BONDESSON)


# ----- grid -----

def test_grid_superposes_regular_times_and_jumps():
    grid = build_grid(4, skeleton_with([0.3, 0.6], [1.0, -0.5]))
    assert np.allclose(grid.nodes, [0.0, 0.25, 0.3, 0.5, 0.6, 0.75, 1.0])
    assert list(grid.regular_index) == [0, 1, 3, 5, 6]
    assert list(grid.tags) == [NodeTag.REGULAR, NodeTag.REGULAR, NodeTag.JUMP, NodeTag.REGULAR,
                               NodeTag.JUMP, NodeTag.REGULAR, NodeTag.REGULAR]
    assert grid.jump_sizes[2] == 1.0
    assert grid.jump_sizes[4] == -0.5
    assert grid.jump_sizes.sum() == 0.5


def test_regular_grid_lookup():
    grid = build_grid(4, horizon=1.0)
    assert np.array_equal(grid.nodes, regular_times(4, 1.0))
    for t in [0.0, 0.1, 0.25, 0.3, 0.99, 1.0]:
        assert grid.last_node_at(t) == np.floor(t * 4) / 4
    with pytest.raises(DomainError):
        grid.last_node_at(1.5)


def test_jump_on_regular_node_is_tagged_both():
    grid = build_grid(4, skeleton_with([0.25], [0.7]))
    assert grid.size == 5
    assert grid.tags[1] == NodeTag.BOTH
    assert grid.jump_sizes[1] == 0.7
    assert grid.nodes[1] == 0.25


def test_near_duplicate_jumps_are_merged():
    grid = build_grid(2, skeleton_with([0.3, 0.3 + 1e-16], [1.0, 2.0]))
    assert grid.size == 4
    assert grid.tags[1] == NodeTag.JUMP
    assert grid.jump_sizes[1] == 3.0


def test_jump_at_time_zero_lands_on_next_node():
    grid = build_grid(4, skeleton_with([1e-17], [0.4]))
    assert grid.nodes[0] == 0.0
    assert grid.jump_sizes[0] == 0.0
    assert grid.jump_sizes[1] == 0.4
    assert grid.tags[1] == NodeTag.BOTH


def test_grid_argument_errors():
    with pytest.raises(DomainError):
        build_grid(0, horizon=1.0)
    with pytest.raises(ConfigurationError):
        build_grid(4, skeleton_with([0.3], [1.0]), horizon=2.0)
    with pytest.raises(ConfigurationError):
        build_grid(4)


def test_regular_times_are_shared_bitwise_across_refinements():
    coarse, fine = regular_times(8, 1.7), regular_times(64, 1.7)
    assert np.array_equal(coarse, fine[::8])


# ----- Euler step -----

def test_euler_step_examples():
    jump_only = forward_problem(b0=0.0, a0=0.0, h0=1.0)
    assert euler_step(jump_only, 0.0, 1.0, 0.0, 0.25, 0.0, 0.7) == pytest.approx(1.7)
    drift_only = forward_problem(b0=1.0, a0=0.0, h0=0.0)
    assert euler_step(drift_only, 0.0, 2.0, 0.0, 0.25, 0.3) == pytest.approx(2.25)
    compensated = forward_problem(b0=0.0, a0=0.0, h0=2.0)
    assert euler_step(compensated, 0.4, 0.0, 0.0, 0.5, 0.0) == pytest.approx(-0.4)
    with pytest.raises(DomainError):
        euler_step(drift_only, 0.0, 0.0, 0.5, 0.25, 0.0)


def test_jump_uses_pre_jump_coefficient():
    problem = forward_problem()
    problem = FbsdeProblem(**{**problem.__dict__, "h": lambda t, x: np.asarray(x, dtype=float)})
    # h(X_{t-}) with X_{t-} = 2: 2 + 2·0.5
    assert euler_step(problem, 0.0, 2.0, 0.0, 0.1, 0.0, 0.5) == pytest.approx(3.0)


def test_constant_coefficients_are_exact(gamma_model, bondesson):
    b0, a0, h0, x0 = 0.2, 0.3, 0.5, 1.0
    problem = forward_problem(b0, a0, h0, x0)
    ensemble = simulate_ensemble(problem, gamma_model, bondesson, 10.0, 16, 100, SEED)
    zeta1 = retained_signed_first_moment(gamma_model, bondesson, 10.0)
    assert ensemble.zeta1 == zeta1

    t = ensemble.times
    expected = (x0 + b0 * t + a0 * ensemble.brownian_path()
                + h0 * (np.cumsum(ensemble.jumps, axis=1) - t * zeta1))
    np.testing.assert_allclose(ensemble.states, expected, rtol=1e-12, atol=1e-12)

    for row in range(5):
        skeleton = ensemble.skeletons[row]
        closed = (x0 + b0 + a0 * ensemble.brownian_path()[row, -1]
                  + h0 * (skeleton.sizes.sum() - zeta1))
        assert ensemble.terminal_states()[row] == pytest.approx(closed, rel=1e-12)


def test_stored_path_reproduces_states(gamma_model, bondesson):
    problem = linear_benchmark().problem
    ensemble = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 4, SEED)
    for row in range(ensemble.paths):
        path = ensemble.path(row)
        assert path.states[0] == problem.x0
        replay = simulate_path(problem, path.grid, path.brownian_increments, ensemble.zeta1)
        assert np.array_equal(replay, path.states)


# ----- ensembles -----

def test_ensemble_is_deterministic(gamma_model, bondesson):
    problem = nonlinear_forward_problem()
    first = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 1, SEED)
    second = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 1, SEED)
    assert np.array_equal(first.states, second.states)
    assert np.array_equal(first.brownian_increments, second.brownian_increments)


def test_ensemble_does_not_depend_on_workers(gamma_model, bondesson):
    problem = nonlinear_forward_problem()
    serial = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 40, SEED, num_workers=1)
    threaded = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 40, SEED, num_workers=4, chunk_size=7)
    assert np.array_equal(serial.states, threaded.states)
    assert np.array_equal(serial.times, threaded.times)


def test_rows_follow_path_indices(gamma_model, bondesson):
    problem = linear_benchmark().problem
    full = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 6, SEED)
    part = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 2, SEED, path_indices=[4, 5])
    for row in range(2):
        assert np.array_equal(part.path(row).states, full.path(row + 4).states)


def test_compensated_jumps_have_zero_mean(gamma_model, bondesson):
    ensemble = simulate_ensemble(forward_problem(), gamma_model, bondesson, 30.0, 4, 2000, SEED)
    terminal = ensemble.terminal_states()
    standard_error = terminal.std(ddof=1) / np.sqrt(terminal.size)
    assert abs(terminal.mean()) < 4 * standard_error


def test_diffusion_terminal_variance(gamma_model, bondesson):
    problem = diffusion_benchmark().problem
    paths = 20_000
    ensemble = simulate_ensemble(problem, gamma_model, bondesson, 1.0, 8, paths, SEED)
    variance = ensemble.terminal_states().var(ddof=1)
    assert abs(variance - 1.0) < 4 * np.sqrt(2.0 / paths)


def test_ensemble_argument_errors(gamma_model, bondesson):
    problem = forward_problem()
    with pytest.raises(DomainError):
        simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 0, SEED)
    with pytest.raises(CapacityError):
        simulate_ensemble(problem, gamma_model, bondesson, 5.0, 8, 100, SEED, max_cells=500)
    other = LevyModel.gamma(alpha=2.0, beta=1.0)
    with pytest.raises(ConfigurationError):
        simulate_ensemble(problem, other, bondesson, 5.0, 8, 10, SEED)


def test_regular_aggregates(gamma_model, bondesson):
    ensemble = simulate_ensemble(forward_problem(a0=1.0), gamma_model, bondesson, 5.0, 4, 50, SEED)
    dB = ensemble.regular_brownian_increments()
    assert dB.shape == (50, 4)
    assert np.allclose(dB.sum(axis=1), ensemble.brownian_path()[:, -1])

    sums = ensemble.regular_jump_sums()
    totals = np.array([skeleton.sizes.sum() for skeleton in ensemble.skeletons])
    assert np.allclose(sums.sum(axis=1), totals)

    weighted = ensemble.regular_jump_sums(lambda e: np.minimum(1.0, np.abs(e)))
    expected = np.array([np.sum(np.minimum(1.0, s.sizes) * s.sizes) for s in ensemble.skeletons])
    assert np.allclose(weighted.sum(axis=1), expected)
    assert np.allclose(ensemble.regular_states()[:, 0], 0.0)


def test_coarsen_shares_noise(gamma_model, bondesson):
    problem = nonlinear_forward_problem()
    fine = simulate_ensemble(problem, gamma_model, bondesson, 5.0, 16, 30, SEED)
    coarse = coarsen_ensemble(fine, steps=4, level=2.0)
    assert coarse.steps == 4 and coarse.level == 2.0

    fine_regular = np.take_along_axis(fine.brownian_path(), fine.regular_index[:, ::4], axis=1)
    coarse_regular = np.take_along_axis(coarse.brownian_path(), coarse.regular_index, axis=1)
    np.testing.assert_allclose(coarse_regular, fine_regular, atol=1e-12)

    for row, index in enumerate(fine.path_indices):
        direct = sample_skeleton(gamma_model, bondesson, 2.0, 1.0, SEED, path_index=int(index))
        assert np.array_equal(coarse.skeletons[row].times, direct.times)
        assert np.array_equal(coarse.skeletons[row].sizes, direct.sizes)

    with pytest.raises(RefinementRequiredError):
        coarsen_ensemble(fine, steps=5)
    with pytest.raises(DomainError):
        coarsen_ensemble(fine, level=6.0)


def test_refine_identity_and_errors(gamma_model, bondesson):
    problem = nonlinear_forward_problem()
    coarse = simulate_ensemble(problem, gamma_model, bondesson, 2.0, 4, 10, SEED)
    assert refine_ensemble(coarse, 4) is coarse
    with pytest.raises(RefinementRequiredError):
        refine_ensemble(coarse, 6)
    with pytest.raises(DomainError):
        refine_ensemble(coarse, 8, level=1.0)


def test_refine_keeps_coarse_noise(gamma_model, bondesson):
    problem = nonlinear_forward_problem()
    coarse = simulate_ensemble(problem, gamma_model, bondesson, 2.0, 4, 30, SEED)
    fine = refine_ensemble(coarse, 16, level=5.0)

    coarse_regular = np.take_along_axis(coarse.brownian_path(), coarse.regular_index, axis=1)
    fine_regular = np.take_along_axis(fine.brownian_path(), fine.regular_index[:, ::4], axis=1)
    np.testing.assert_allclose(fine_regular, coarse_regular, atol=1e-12)

    for row in range(coarse.paths):
        kept = fine.skeletons[row].epochs <= 2.0
        assert np.array_equal(fine.skeletons[row].times[kept], coarse.skeletons[row].times)
    # coarsening the refinement recovers the coarse jumps exactly
    back = coarsen_ensemble(fine, steps=4, level=2.0)
    for row in range(coarse.paths):
        assert np.array_equal(back.skeletons[row].sizes, coarse.skeletons[row].sizes)


def test_refine_level_only_keeps_untouched_increments(gamma_model, bondesson):
    problem = forward_problem(a0=1.0)
    coarse = simulate_ensemble(problem, gamma_model, bondesson, 1.0, 4, 20, SEED)
    fine = refine_ensemble(coarse, 4, level=1.5)
    for row in range(coarse.paths):
        if fine.skeletons[row].accepted == coarse.skeletons[row].accepted:
            assert np.array_equal(fine.path(row).brownian_increments, coarse.path(row).brownian_increments)


def test_bridge_increments_have_brownian_variance(gamma_model, bondesson):
    problem = diffusion_benchmark().problem
    coarse = simulate_ensemble(problem, gamma_model, bondesson, 0.5, 2, 20_000, SEED)
    fine = refine_ensemble(coarse, 8)
    dB = fine.regular_brownian_increments()
    # every regular interval has length 1/8
    assert np.all(np.abs(dB.var(axis=0, ddof=1) - 0.125) < 4 * 0.125 * np.sqrt(2.0 / 20_000))


def test_save_and_load(tmp_path, gamma_model, bondesson):
    problem = nonlinear_forward_problem()
    ensemble = simulate_ensemble(problem, gamma_model, bondesson, 3.0, 8, 12, SEED)
    target = save_ensemble(ensemble, tmp_path / "paths" / "ensemble.npz")
    loaded = load_ensemble(target, problem=problem)
    assert loaded.model == gamma_model
    assert loaded.representation == bondesson
    assert loaded.steps == 8 and loaded.level == 3.0 and loaded.seed == SEED
    assert np.array_equal(loaded.states, ensemble.states)
    assert np.array_equal(loaded.regular_index, ensemble.regular_index)
    for before, after in zip(ensemble.skeletons, loaded.skeletons):
        assert np.array_equal(before.sizes, after.sizes)
        assert before.count == after.count

    with pytest.raises(ConfigurationError):
        load_ensemble(target, problem=linear_benchmark().problem)


def test_load_rejects_unknown_format(tmp_path):
    target = tmp_path / "old.npz"
    np.savez(target, metadata=np.array(json.dumps({"format_version": 99})))
    with pytest.raises(ConfigurationError, match="format"):
        load_ensemble(target)


def test_ensemble_table(gamma_model, bondesson):
    ensemble = simulate_ensemble(forward_problem(), gamma_model, bondesson, 3.0, 4, 3, SEED)
    table = ensemble_table(ensemble)
    assert list(table.columns) == ["path_id", "node", "t", "X", "dB", "jump", "tag"]
    assert len(table) == ensemble.lengths.sum()
    assert set(table["tag"]) <= {"regular", "jump", "both"}
