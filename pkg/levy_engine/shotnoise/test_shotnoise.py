"""
Tests for the shot noise representations and jump skeletons.
"""

import numpy as np
import pytest

from levy_engine.errors import ConfigurationError, DomainError
from levy_engine.measures.models import LevyModel
from levy_engine.measures.moments import retained_moment, retained_signed_first_moment
from levy_engine.shotnoise.representations import (
    MarkKind,
    SeriesMethod,
    SeriesRepresentation,
    default_representation,
)
from levy_engine.shotnoise.skeleton import (
    _separate_ties,
    JumpSkeleton,
    sample_epochs,
    sample_skeleton,
    skeleton_table,
)
from levy_engine.utils import StreamTag, make_stream


SEED = 20240611


@pytest.fixture
def gamma_model():
    return LevyModel.gamma(alpha=1.0, beta=1.0)


@pytest.fixture
def bondesson(gamma_model):
    return SeriesRepresentation(gamma_model, SeriesMethod.BONDESSON)


def empty_skeleton(zeta1=1.0, horizon=1.0):
    return JumpSkeleton(horizon=horizon, level=1.0, times=np.zeros(0), sizes=np.zeros(0),
                        epochs=np.zeros(0), count=0, zeta1=zeta1)


# ----- representations -----

def test_unsupported_pairs_are_rejected(gamma_model):
    with pytest.raises(ConfigurationError):
        SeriesRepresentation(gamma_model, SeriesMethod.ROSINSKI_TEMPERED_STABLE)
    with pytest.raises(ConfigurationError):
        SeriesRepresentation(gamma_model, SeriesMethod.BONDESSON, mark_kind=MarkKind.UNIFORM)


def test_default_representations():
    stable = LevyModel.tempered_stable(alpha=0.5, delta=1.0, lam=1.0)
    assert default_representation(stable).method == SeriesMethod.ROSINSKI_TEMPERED_STABLE
    assert default_representation(LevyModel.gamma(1.0, 1.0)).method == SeriesMethod.BONDESSON


@pytest.mark.parametrize("method", [SeriesMethod.INVERSE_LEVY, SeriesMethod.THINNING, SeriesMethod.BONDESSON])
def test_jump_size_nonincreasing_in_epoch(gamma_model, method):
    representation = SeriesRepresentation(gamma_model, method)
    epochs = np.linspace(0.05, 6.0, 50)
    marks = representation.marks_from_uniforms(np.full((epochs.size, representation.mark_dimension), 0.3))
    sizes = representation.jump_size(epochs, marks)
    assert np.all(sizes >= 0)
    assert np.all(np.diff(np.abs(sizes)) <= 1e-15)


def test_atomic_jump_sizes_follow_sorted_atoms():
    model = LevyModel.compound_poisson([(0.5, 1.0), (2.0, 1.0)])
    representation = SeriesRepresentation(model, SeriesMethod.INVERSE_LEVY)
    sizes = representation.jump_size([0.5, 1.0, 1.5, 2.5])
    np.testing.assert_array_equal(sizes, [2.0, 2.0, 0.5, 0.0])


# ----- epochs -----

def test_epochs_are_increasing_and_prefix_consistent():
    long = sample_epochs(400.0, make_stream(SEED, 0, StreamTag.EPOCHS))
    short = sample_epochs(150.0, make_stream(SEED, 0, StreamTag.EPOCHS))
    assert np.all(np.diff(long) > 0)
    assert np.all(long > 0)
    np.testing.assert_array_equal(short, long[:short.size])
    assert sample_epochs(0.0, make_stream(SEED, 0, StreamTag.EPOCHS)).size == 0


def test_epoch_count_is_poisson():
    replications = 10_000
    counts = np.array([
        sample_epochs(5.0, make_stream(SEED, path, StreamTag.EPOCHS)).size
        for path in range(replications)
    ])
    standard_error = np.sqrt(5.0 / replications)
    assert abs(counts.mean() - 5.0) <= 3 * standard_error
    # standard error of the sample variance of a Poisson(λ) count
    variance_error = np.sqrt((5.0 + 2 * 25.0) / replications)
    assert abs(counts.var(ddof=1) - 5.0) <= 3 * variance_error


# ----- skeletons -----

def test_bondesson_skeleton_follows_series(gamma_model, bondesson):
    skeleton = sample_skeleton(gamma_model, bondesson, n=10.0, horizon=1.0, seed=SEED, path_index=3)
    epochs = sample_epochs(10.0, make_stream(SEED, 3, StreamTag.EPOCHS))
    uniforms = make_stream(SEED, 3, StreamTag.MARKS).random((epochs.size, 1))
    expected = np.exp(-epochs) * -np.log1p(-uniforms[:, 0])
    assert skeleton.count == epochs.size
    np.testing.assert_allclose(np.sort(skeleton.sizes), np.sort(expected), rtol=1e-14)
    assert np.all(np.diff(skeleton.times) > 0)
    assert np.all((skeleton.times > 0) & (skeleton.times <= 1.0))


def test_rosinski_skeleton_follows_series():
    model = LevyModel.tempered_stable(alpha=0.5, delta=1.0, lam=1.0)
    representation = SeriesRepresentation(model, SeriesMethod.ROSINSKI_TEMPERED_STABLE)
    skeleton = sample_skeleton(model, representation, n=10.0, horizon=1.0, seed=SEED, path_index=1)
    epochs = sample_epochs(10.0, make_stream(SEED, 1, StreamTag.EPOCHS))
    uniforms = make_stream(SEED, 1, StreamTag.MARKS).random((epochs.size, 2))
    v, u = -np.log1p(-uniforms[:, 0]), uniforms[:, 1]
    expected = np.minimum((0.5 * epochs) ** -2.0, v * u ** 2)
    np.testing.assert_allclose(np.sort(skeleton.sizes), np.sort(expected), rtol=1e-12)


def test_structural_zeros_are_dropped_but_counted(gamma_model):
    representation = SeriesRepresentation(gamma_model, SeriesMethod.THINNING)
    skeleton = sample_skeleton(gamma_model, representation, n=20.0, horizon=1.0, seed=SEED)
    assert skeleton.count > skeleton.accepted
    assert np.all(skeleton.sizes > 0)
    assert 0.0 < skeleton.acceptance_rate < 1.0


def test_empty_skeleton_when_level_is_tiny(gamma_model, bondesson):
    skeleton = sample_skeleton(gamma_model, bondesson, n=1e-9, horizon=1.0, seed=SEED)
    assert skeleton.count == 0
    assert skeleton.times.size == 0


def test_skeleton_argument_checks(gamma_model, bondesson):
    with pytest.raises(DomainError):
        sample_skeleton(gamma_model, bondesson, n=0.0, horizon=1.0, seed=SEED)
    other = SeriesRepresentation(LevyModel.gamma(2.0, 1.0), SeriesMethod.BONDESSON)
    with pytest.raises(ConfigurationError):
        sample_skeleton(gamma_model, other, n=1.0, horizon=1.0, seed=SEED)


def test_same_seed_reproduces_skeleton(gamma_model, bondesson):
    first = sample_skeleton(gamma_model, bondesson, n=8.0, horizon=2.0, seed=SEED, path_index=7)
    second = sample_skeleton(gamma_model, bondesson, n=8.0, horizon=2.0, seed=SEED, path_index=7)
    np.testing.assert_array_equal(first.times, second.times)
    np.testing.assert_array_equal(first.sizes, second.sizes)


@pytest.mark.parametrize("method", list(SeriesMethod)[:4])
def test_higher_level_is_superset(gamma_model, method):
    representation = SeriesRepresentation(gamma_model, method)
    for path in range(20):
        coarse = sample_skeleton(gamma_model, representation, n=3.0, horizon=1.0, seed=SEED, path_index=path)
        fine = sample_skeleton(gamma_model, representation, n=9.0, horizon=1.0, seed=SEED, path_index=path)
        assert np.all(np.isin(coarse.sizes, fine.sizes))
        assert np.all(np.isin(coarse.times, fine.times))
        restricted = fine.restrict(3.0, zeta1=coarse.zeta1)
        np.testing.assert_array_equal(restricted.sizes, coarse.sizes)
        assert restricted.count == coarse.count


# ----- increments -----

def test_increment_of_empty_skeleton_is_drift():
    assert empty_skeleton(zeta1=1.0).increment(0.0, 0.5) == pytest.approx(-0.5)


def test_increment_is_additive(gamma_model, bondesson):
    skeleton = sample_skeleton(gamma_model, bondesson, n=5.0, horizon=1.0, seed=SEED)
    cuts = [0.0, 0.2, 0.55, 0.9, 1.0]
    pieces = sum(skeleton.increment(s, t) for s, t in zip(cuts, cuts[1:]))
    whole = skeleton.increment(0.0, 1.0)
    assert pieces == pytest.approx(whole, abs=1e-13)
    assert whole == pytest.approx(skeleton.sizes.sum() - skeleton.zeta1, abs=1e-13)


def test_increment_domain():
    with pytest.raises(DomainError):
        empty_skeleton().increment(0.6, 0.5)


def test_mean_total_jump_matches_retained_first_moment(gamma_model, bondesson):
    zeta1 = retained_signed_first_moment(gamma_model, bondesson, 30.0)
    paths = 5_000
    totals = np.array([
        sample_skeleton(gamma_model, bondesson, 30.0, 1.0, SEED, path, zeta1=zeta1).sizes.sum()
        for path in range(paths)
    ])
    assert zeta1 == pytest.approx(1.0 - np.exp(-30.0))
    assert abs(totals.mean() - zeta1) <= 4 * totals.std(ddof=1) / np.sqrt(paths)


@pytest.mark.slow
def test_gamma_marginal_mean_and_variance(gamma_model, bondesson):
    zeta1 = retained_signed_first_moment(gamma_model, bondesson, 30.0)
    paths = 100_000
    values = np.array([
        sample_skeleton(gamma_model, bondesson, 30.0, 1.0, SEED, path, zeta1=zeta1).value(1.0)
        for path in range(paths)
    ])
    mean_error = values.std(ddof=1) / np.sqrt(paths)
    assert abs(values.mean() - 1.0) <= 4 * mean_error
    # Gamma(1, 1) has fourth central moment 9
    variance_error = np.sqrt((9.0 - 1.0) / paths)
    assert abs(values.var(ddof=1) - 1.0) <= 4 * variance_error


def test_count_matches_truncated_mass(gamma_model, bondesson):
    zeta1 = retained_moment(gamma_model, bondesson, 5.0, 1.0)
    counts = np.array([
        sample_skeleton(gamma_model, bondesson, 5.0, 1.0, SEED, path, zeta1=zeta1).count
        for path in range(10_000)
    ])
    assert abs(counts.mean() - 5.0) <= 3 * np.sqrt(5.0) / 100


# ----- centering and tables -----

def test_centered_value_subtracts_accumulated_constant():
    model = LevyModel.compound_poisson([(0.5, 1.0), (2.0, 1.0)])
    centered = SeriesRepresentation(model, SeriesMethod.INVERSE_LEVY, centered=True)
    skeleton = sample_skeleton(model, centered, n=2.0, horizon=1.0, seed=SEED)
    assert skeleton.centering == pytest.approx(0.5)
    assert skeleton.value(1.0) == pytest.approx(skeleton.sizes.sum() - 0.5)


def test_tied_times_stay_inside_horizon():
    times, inside = _separate_ties(np.array([0.0, 0.5, 0.5, 1.0, 1.0, 1.0]), horizon=1.0)
    kept = times[inside]
    assert np.all(np.diff(kept) > 0.0)
    assert kept[0] > 0.0 and kept[-1] == 1.0
    # ties at the horizon cannot be separated inside it
    assert inside.sum() == 4


def test_skeleton_table(gamma_model, bondesson):
    skeletons = [sample_skeleton(gamma_model, bondesson, 4.0, 1.0, SEED, path) for path in range(3)]
    table = skeleton_table(skeletons, seed=SEED)
    assert list(table.columns) == ["path_id", "T_i", "J_i", "seed"]
    assert len(table) == sum(s.accepted for s in skeletons)
    assert set(table["seed"]) == {SEED}
