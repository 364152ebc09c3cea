import math

import numpy as np
import pytest

from hyperproto.geometry import BallParams, hyp_distance, pairwise_hyp_distance
from hyperproto.packing import (
    COINCIDENT_CAP,
    PackingSpec,
    ParticleSet,
    boundary_loss,
    pack,
    packing_energy,
    per_particle_radius,
    repulsion_loss,
)

# 2 artanh(0.76), the hyperbolic radius of the packing region for c = 1
R_BALL = 1.9924301646902062
R_N_100 = 0.23334407831206919


def test_radius_chain_single_particle_is_whole_region():
    assert per_particle_radius(PackingSpec(n=1)) == pytest.approx(R_BALL, abs=1e-12)


def test_radius_chain_hundred_particles():
    assert per_particle_radius(PackingSpec(n=100)) == pytest.approx(R_N_100, abs=1e-12)


def test_radius_chain_curvature():
    # with scale s, the chain for radius r equals the c=1 chain for r/s, scaled by s
    ball = BallParams(4.0)
    scaled = per_particle_radius(PackingSpec(n=30, r=0.3), ball)
    unit = per_particle_radius(PackingSpec(n=30, r=0.6))
    assert scaled == pytest.approx(ball.s * unit, rel=1e-12)
    with pytest.raises(ValueError):
        per_particle_radius(PackingSpec(n=3, r=0.6), ball)


def test_radius_decreasing_in_n():
    radii = [per_particle_radius(PackingSpec(n=n)) for n in range(1, 60)]
    assert np.all(np.diff(radii) < 0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(n=0), dict(n=3, r=1.0), dict(n=3, r=0.0), dict(n=3, k=0.0), dict(n=3, lr=0.0), dict(n=2.5)],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        PackingSpec(**kwargs)


def points_at_distance(d):
    # two points symmetric about the origin on the x axis
    x = math.tanh(d / 4)
    return np.array([x, 0.0]), np.array([-x, 0.0])


def test_repulsion_examples():
    r_n = 0.4
    assert repulsion_loss(*points_at_distance(2 * r_n), r_n, 1.55) == pytest.approx(0.0, abs=1e-12)
    assert repulsion_loss(*points_at_distance(3 * r_n), r_n, 1.55) == 0.0
    assert repulsion_loss(*points_at_distance(0.5), 0.5, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_repulsion_cap_for_coincident_particles():
    p = np.array([0.2, 0.3])
    assert repulsion_loss(p, p, 0.3, 1.55) == COINCIDENT_CAP


def test_repulsion_positive_inside_contact():
    u, v = points_at_distance(0.2)
    assert repulsion_loss(u, v, 0.3, 1.55) > 0


@pytest.mark.parametrize("norm, expected", [(0.5, 0.0), (0.8, 0.05), (0.75, 0.0)])
def test_boundary_examples(norm, expected):
    assert boundary_loss(np.array([0.0, norm]), 0.76, 0.01) == pytest.approx(expected, abs=1e-12)


def test_energy_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    worst = 0.0
    checked = 0
    while checked < 100:
        spec = PackingSpec(n=4, r=0.5, k=float(rng.uniform(0.5, 3.0)))
        r_n = per_particle_radius(spec)
        x = rng.uniform(-0.55, 0.55, size=(4, 2))
        # stay away from the hinges
        d = pairwise_hyp_distance(x)[np.triu_indices(4, 1)]
        norms = np.linalg.norm(x, axis=1)
        if np.any(np.abs(d - 2 * r_n) < 1e-3) or np.any(np.abs(norms - spec.r + spec.margin) < 1e-3):
            continue
        if np.any(d < 0.05) or np.any(norms > 0.95):
            continue
        _, _, _, grad = packing_energy(x, r_n, spec)
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[idx] = 1e-5
            fd[idx] = (packing_energy(x + e, r_n, spec, False)[0] - packing_energy(x - e, r_n, spec, False)[0]) / 2e-5
        scale = max(np.max(np.abs(fd)), 1e-12)
        worst = max(worst, np.max(np.abs(grad - fd)) / scale)
        checked += 1
    assert worst <= 1e-4


def test_energy_matches_pairwise_definition():
    spec = PackingSpec(n=12, r=0.6)
    r_n = per_particle_radius(spec)
    x = np.random.default_rng(1).uniform(-0.5, 0.5, (12, 2))
    total, rep, bnd, _ = packing_energy(x, r_n, spec)
    brute = sum(repulsion_loss(x[i], x[j], r_n, spec.k) for i in range(12) for j in range(i + 1, 12))
    assert rep == pytest.approx(brute, rel=1e-12)
    assert bnd == pytest.approx(float(np.sum(boundary_loss(x, spec.r, spec.margin))), rel=1e-12)


def test_single_particle_pulled_inside():
    spec = PackingSpec(n=1, epochs=50)
    ps = pack(spec, init=[[0.75, 0.0]])
    assert np.linalg.norm(ps.positions[0]) <= spec.r - spec.margin + 1e-2
    still = pack(spec, init=[[0.1, 0.2]])
    assert np.allclose(still.positions, [[0.1, 0.2]])


def test_two_particles_reach_contact():
    spec = PackingSpec(n=2, r=0.76, k=1.55, epochs=1000)
    ps = pack(spec)
    assert hyp_distance(*ps.positions) >= 2 * ps.r_n - 1e-3


def test_coincident_start_is_separated():
    spec = PackingSpec(n=2, epochs=200)
    ps = pack(spec, init=[[0.1, 0.1], [0.1, 0.1]])
    assert hyp_distance(*ps.positions) > 0.1
    assert ps.final_loss < ps.initial_loss


def test_pack_contained_and_deterministic():
    spec = PackingSpec(n=40, epochs=300, seed=4)
    a, b = pack(spec), pack(spec)
    assert np.array_equal(a.positions, b.positions)
    assert np.all(np.linalg.norm(a.positions, axis=1) <= spec.r)
    assert a.history == b.history


def test_monotone_mode_trend():
    spec = PackingSpec(n=100, epochs=1000)
    h = np.asarray(pack(spec, monotone=True).history)
    assert np.all(h[10:] <= h[:-10] + 1e-6)


def test_particle_file_round_trip(tmp_path):
    ps = pack(PackingSpec(n=10, epochs=20))
    path = tmp_path / "particles.json"
    ps.save(path)
    back = ParticleSet.load(path)
    assert np.array_equal(back.positions, ps.positions)
    assert back.r_n == ps.r_n
    assert back.spec == ps.spec
    assert back.final_loss == ps.final_loss
