import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperproto.geometry import (
    BallParams,
    clip_jacobian,
    clip_to_radius,
    exp_map0,
    exp_map0_jacobian,
    hyp_distance,
    hyp_distance_grad,
    pairwise_hyp_distance,
)

LN3 = 1.0986122886681098


def ball_point(max_norm=0.95):
    return st.tuples(
        st.floats(0.0, max_norm), st.floats(0.0, 2 * math.pi)
    ).map(lambda ra: np.array([ra[0] * math.cos(ra[1]), ra[0] * math.sin(ra[1])]))


def test_ball_params_scale():
    ball = BallParams(2.5)
    assert abs(ball.s * ball.s * ball.c - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        BallParams(0.0)


@pytest.mark.parametrize(
    "u, v, expected",
    [
        ((0.3, 0.4), (0.3, 0.4), 0.0),
        ((0.5, 0.0), (0.0, 0.0), LN3),
        ((0.5, 0.0), (-0.5, 0.0), 2 * LN3),
    ],
)
def test_distance_examples(u, v, expected):
    assert hyp_distance(u, v) == pytest.approx(expected, abs=1e-12)


def test_distance_diameter_matches_direct_arcosh():
    # 1 + 2 * 1 / (0.75 * 0.75) = 4.5556
    assert hyp_distance((0.5, 0), (-0.5, 0)) == pytest.approx(math.acosh(1 + 2 / 0.5625), abs=1e-12)


def test_distance_rejects_points_outside():
    with pytest.raises(ValueError):
        hyp_distance((1.0, 0.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        hyp_distance((0.0, 0.0), (0.8, 0.8))


@given(ball_point(), ball_point())
def test_symmetry(u, v):
    assert hyp_distance(u, v) == hyp_distance(v, u)


@given(ball_point(), ball_point(), ball_point())
def test_triangle_inequality(u, v, w):
    assert hyp_distance(u, w) <= hyp_distance(u, v) + hyp_distance(v, w) + 1e-9


@given(ball_point(0.99))
def test_distance_to_origin_closed_form(x):
    assert abs(hyp_distance(np.zeros(2), x) - 2 * math.atanh(np.linalg.norm(x))) <= 1e-9


def test_tiny_separation_is_accurate():
    u = np.array([0.2, 0.1])
    v = u + np.array([1e-10, 0.0])
    # locally d ~ 2 |u - v| / (1 - |u|^2)
    assert hyp_distance(u, v) == pytest.approx(2e-10 / (1 - 0.05), rel=1e-6)


def test_pairwise_matches_scalar():
    rng = np.random.default_rng(3)
    x = clip_to_radius(rng.uniform(-0.8, 0.8, (6, 2)), 0.9)
    y = clip_to_radius(rng.uniform(-0.8, 0.8, (4, 2)), 0.9)
    d = pairwise_hyp_distance(x, y)
    for i in range(6):
        for j in range(4):
            assert d[i, j] == pytest.approx(hyp_distance(x[i], y[j]), rel=1e-9, abs=1e-12)
    assert np.all(np.diag(pairwise_hyp_distance(x)) == 0)


def central_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_distance_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        u = clip_to_radius(rng.uniform(-1, 1, 2), 0.9)
        v = clip_to_radius(rng.uniform(-1, 1, 2), 0.9)
        _, g = hyp_distance_grad(u, v)
        fd = central_difference(lambda p: hyp_distance(p, v), u)
        worst = max(worst, np.max(np.abs(g - fd)) / np.max(np.abs(fd)))
    assert worst <= 1e-5


def test_gradient_zero_at_coincidence():
    _, g = hyp_distance_grad(np.array([0.1, 0.2]), np.array([0.1, 0.2]))
    assert np.all(g == 0)


def test_exp_map_examples():
    assert np.array_equal(exp_map0(np.zeros(2)), np.zeros(2))
    assert exp_map0(np.array([1.0, 0.0])) == pytest.approx([0.7615941559557649, 0.0], abs=1e-12)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_exp_map_direction_and_range(a, b):
    v = np.array([a, b])
    y = exp_map0(v)
    assert np.linalg.norm(y) < 1.0
    if np.linalg.norm(v) > 1e-9:
        cos = y @ v / (np.linalg.norm(y) * np.linalg.norm(v))
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_exp_map_norm_strictly_increasing():
    radii = np.linspace(0.0, 5.0, 200)
    norms = np.linalg.norm(exp_map0(np.column_stack([radii, np.zeros_like(radii)])), axis=1)
    assert np.all(np.diff(norms) > 0)


def test_exp_map_curvature_bound():
    ball = BallParams(4.0)
    y = exp_map0(np.array([3.0, -2.0]), ball)
    assert np.linalg.norm(y) < ball.s


@pytest.mark.parametrize("c", [1.0, 2.0])
def test_exp_map_jacobian(c):
    ball = BallParams(c)
    rng = np.random.default_rng(5)
    for v in [rng.normal(size=2), np.array([1e-6, 2e-6]), np.zeros(2)]:
        jac = exp_map0_jacobian(v, ball)
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-6
            fd = (exp_map0(v + e, ball) - exp_map0(v - e, ball)) / 2e-6
            assert jac[:, i] == pytest.approx(fd, abs=1e-8)


@pytest.mark.parametrize(
    "p, expected",
    [((0.5, 0.0), (0.5, 0.0)), ((0.0, 0.0), (0.0, 0.0)), ((0.9, 0.0), (0.75999, 0.0))],
)
def test_clip_examples(p, expected):
    assert clip_to_radius(np.array(p), 0.76) == pytest.approx(expected, abs=1e-15)


def test_clip_jacobian_outside():
    p = np.array([0.6, 0.7])
    jac = clip_jacobian(p, 0.76)
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1e-7
        fd = (clip_to_radius(p + e, 0.76) - clip_to_radius(p - e, 0.76)) / 2e-7
        assert jac[:, i] == pytest.approx(fd, abs=1e-7)
    assert np.array_equal(clip_jacobian(np.array([0.1, 0.1]), 0.76), np.eye(2))
