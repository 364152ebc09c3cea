import itertools
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from hyperproto.assignment import (
    AssignmentState,
    assignment_cost,
    batch_cost,
    batch_reassign,
    hungarian,
)
from hyperproto.geometry import pairwise_hyp_distance


def brute_force(cost):
    """Minimum total and the lexicographically smallest permutation reaching it."""
    n = len(cost)
    best, best_perm = None, None
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i][perm[i]] for i in range(n))
        if best is None or total < best:
            best, best_perm = total, perm
    return best, best_perm


def test_examples():
    assert list(hungarian([[1, 2], [2, 1]])) == [0, 1]
    cost = [[4, 1, 3], [2, 0, 5], [3, 2, 2]]
    perm = hungarian(cost)
    assert list(perm) == [1, 0, 2]
    assert assignment_cost(cost, perm) == 5
    assert list(hungarian(np.ones((2, 2)))) == [0, 1]


@pytest.mark.parametrize("bad", [np.ones((2, 3)), [[1.0, np.inf], [0.0, 1.0]], [[np.nan]], np.ones(3)])
def test_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        hungarian(bad)


def test_matches_brute_force_on_random_matrices():
    rng = np.random.default_rng(0)
    for trial in range(200):
        b = int(rng.integers(2, 8))
        cost = rng.uniform(0, 10, (b, b))
        if trial % 3 == 0:
            cost = np.round(cost)  # many ties
        best, best_perm = brute_force(cost.tolist())
        perm = hungarian(cost)
        assert assignment_cost(cost, perm) == best
        assert tuple(perm) == best_perm


@given(st.integers(2, 6).flatmap(lambda b: st.lists(st.integers(0, 3), min_size=b * b, max_size=b * b)))
@settings(max_examples=150, deadline=None)
def test_lexicographic_tie_break(entries):
    b = int(round(len(entries) ** 0.5))
    cost = np.asarray(entries, dtype=float).reshape(b, b)
    best, best_perm = brute_force(cost.tolist())
    assert tuple(hungarian(cost)) == best_perm


def test_large_matrix_against_scipy_and_timing():
    rng = np.random.default_rng(1)
    cost = rng.uniform(0, 10, (128, 128))
    hungarian(cost)  # warm up
    t0 = time.perf_counter()
    perm = hungarian(cost)
    elapsed = time.perf_counter() - t0
    rows, cols = linear_sum_assignment(cost)
    assert assignment_cost(cost, perm) == pytest.approx(cost[rows, cols].sum(), rel=1e-12)
    assert elapsed <= 0.05


def test_state_validation_and_json():
    with pytest.raises(ValueError):
        AssignmentState([0, 0, 1])
    state = AssignmentState.random(10, 3)
    assert state.is_bijection()
    back = AssignmentState.from_json(state.to_json(epoch=4))
    assert np.array_equal(back.particle_of, state.particle_of)


def ball_points(rng, n, r=0.7):
    rad = r * np.sqrt(rng.uniform(0, 1, n))
    ang = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def test_single_member_batch_is_unchanged():
    rng = np.random.default_rng(2)
    state = AssignmentState.random(5, 0)
    new = batch_reassign(ball_points(rng, 1), [3], state, ball_points(rng, 5))
    assert np.array_equal(new.particle_of, state.particle_of)


def test_two_member_swap():
    particles = np.array([[0.5, 0.0], [-0.5, 0.0]])
    features = np.array([[-0.45, 0.0], [0.45, 0.0]])
    state = AssignmentState([0, 1])
    before = batch_cost(features, [0, 1], state, particles)
    new = batch_reassign(features, [0, 1], state, particles)
    assert list(new.particle_of) == [1, 0]
    assert batch_cost(features, [0, 1], new, particles) < before / 2


def test_reject_duplicate_batch_ids():
    with pytest.raises(ValueError):
        batch_reassign(np.zeros((2, 2)), [1, 1], AssignmentState.random(3, 0), np.zeros((3, 2)))


@pytest.mark.parametrize("n", [2, 4, 7])
def test_whole_dataset_batch_is_global_optimum(n):
    rng = np.random.default_rng(n)
    particles = ball_points(rng, n)
    features = ball_points(rng, n)
    state = AssignmentState.random(n, 5)
    new = batch_reassign(features, np.arange(n), state, particles)
    best, _ = brute_force(pairwise_hyp_distance(features, particles).tolist())
    assert batch_cost(features, np.arange(n), new, particles) == pytest.approx(best, rel=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_sequence_of_reassignments(seed):
    rng = np.random.default_rng(seed)
    n = 30
    particles = ball_points(rng, n)
    features = ball_points(rng, n)
    state = AssignmentState.random(n, rng)
    for _ in range(6):
        batch = rng.choice(n, size=int(rng.integers(1, 12)), replace=False)
        before = batch_cost(features[batch], batch, state, particles)
        new = batch_reassign(features[batch], batch, state, particles)
        assert new.is_bijection()
        assert batch_cost(features[batch], batch, new, particles) <= before + 1e-12
        outside = np.setdiff1d(np.arange(n), batch)
        assert np.array_equal(new.particle_of[outside], state.particle_of[outside])
        again = batch_reassign(features[batch], batch, new, particles)
        assert np.array_equal(again.particle_of, new.particle_of)
        state = new
