import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyboltz import kinematics as kin
from polyboltz.errors import DomainError

from conftest import random_unit

finite = st.floats(-5, 5, allow_nan=False)
energies = st.floats(0, 10, allow_nan=False)
fractions = st.floats(1e-6, 1 - 1e-6)
vec3 = st.tuples(finite, finite, finite)


def unit_from(t):
    a = np.array(t, dtype=float)
    n = np.linalg.norm(a)
    return a / n if n > 1e-3 else np.array([0.0, 0.0, 1.0])


def test_total_energy_examples():
    s, ss = kin.ParticleState([2, 0, 0], 1.0), kin.ParticleState([0, 0, 0], 0.5)
    assert kin.total_energy(s, ss) == pytest.approx(2.5)
    assert kin.total_energy(ss, s) == pytest.approx(2.5)
    z = kin.ParticleState([1, 1, 1], 0.0)
    assert kin.total_energy(z, z) == 0.0


def test_state_validation():
    with pytest.raises(DomainError):
        kin.ParticleState([0, 0, 0], -1.0)
    with pytest.raises(DomainError):
        kin.ParticleState([np.nan, 0, 0], 1.0)
    with pytest.raises(DomainError):
        kin.CollisionParams(0.0, 0.5, [0, 0, 1])
    with pytest.raises(DomainError):
        kin.CollisionParams(0.5, 0.5, [0, 0, 2])


@pytest.mark.parametrize("z, omega, expected", [
    ([0, 1, 0], [1, 0, 0], [0, 1, 0]),
    ([1, 0, 0], [1, 0, 0], [-1, 0, 0]),
    ([1, 0, 0], [math.sqrt(0.5), math.sqrt(0.5), 0], [0, -1, 0]),
])
def test_reflect_examples(z, omega, expected):
    np.testing.assert_allclose(kin.reflect(z, omega), expected, atol=1e-15)


def test_reflect_rejects_non_unit():
    with pytest.raises(DomainError):
        kin.reflect([1, 0, 0], [1, 1, 0])


@given(vec3, vec3)
def test_reflect_isometric_involution(z, w):
    omega = unit_from(w)
    z = np.array(z)
    once = kin.reflect(z, omega)
    assert np.linalg.norm(once) == pytest.approx(np.linalg.norm(z), rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(kin.reflect(once, omega), z, atol=1e-12)


def test_identity_collision_example():
    s, ss = kin.ParticleState([1, 0, 0], 1.0), kin.ParticleState([-1, 0, 0], 1.0)
    a, b = kin.post_collision(s, ss, kin.CollisionParams(0.5, 1 / 3, [0, 0, 1]))
    np.testing.assert_allclose(a.v, [1, 0, 0], atol=1e-14)
    np.testing.assert_allclose(b.v, [-1, 0, 0], atol=1e-14)
    assert a.I == pytest.approx(1.0) and b.I == pytest.approx(1.0)


@settings(max_examples=200)
@given(vec3, vec3, energies, energies, fractions, fractions, vec3)
def test_post_collision_conservation(v, vs, I, Is, r, R, w):
    s, ss = kin.ParticleState(v, I), kin.ParticleState(vs, Is)
    a, b = kin.post_collision(s, ss, kin.CollisionParams(r, R, unit_from(w)))
    E = kin.total_energy(s, ss)
    scale = max(E, 1.0)
    np.testing.assert_allclose(a.v + b.v, s.v + ss.v, atol=1e-12 * max(1.0, np.abs(s.v + ss.v).max(), math.sqrt(scale)))
    assert kin.total_energy(a, b) == pytest.approx(E, rel=1e-12, abs=1e-12)
    g = a.v - b.v
    assert 0.25 * g @ g == pytest.approx(R * E, rel=1e-10, abs=1e-12)
    assert a.I + b.I == pytest.approx((1 - R) * E, rel=1e-12, abs=1e-12)


def test_zero_energy_collision_unchanged():
    s = kin.ParticleState([0.3, 0, 0], 0.0)
    a, b = kin.post_collision(s, s, kin.CollisionParams(0.5, 0.5, [0, 0, 1]))
    np.testing.assert_array_equal(a.v, s.v)
    assert a.I == 0 and b.I == 0


def test_pre_fractions_examples():
    r, R = kin.pre_fractions(kin.ParticleState([2, 0, 0], 1.0), kin.ParticleState([0, 0, 0], 0.5))
    assert R == pytest.approx(0.4) and r == pytest.approx(2 / 3)
    r, R = kin.pre_fractions(kin.ParticleState([1, 2, 3], 1.0), kin.ParticleState([1, 2, 3], 1.0))
    assert R == 0.0 and r == pytest.approx(0.5)
    r, _ = kin.pre_fractions(kin.ParticleState([1, 0, 0], 0.0), kin.ParticleState([0, 0, 0], 2.0))
    assert r == 0.0
    with pytest.raises(DomainError):
        kin.pre_fractions(kin.ParticleState([0, 0, 0], 0.0), kin.ParticleState([0, 0, 0], 0.0))


def test_microreversibility_kinematic(rng):
    m = 2000
    v, vs = rng.normal(size=(m, 3)), rng.normal(size=(m, 3))
    I, Is = rng.exponential(size=m), rng.exponential(size=m)
    r, R = rng.uniform(0.01, 0.99, m), rng.uniform(0.01, 0.99, m)
    omega = random_unit(rng, m)
    vp, vps, Ip, Ips = kin.collide(v, vs, I, Is, r, R, omega)
    # fractions describing the incoming pair, applied to the outgoing pair with the same omega
    rp, Rp = kin.pre_fractions(kin.ParticleState(v, I), kin.ParticleState(vs, Is))
    v2, vs2, I2, Is2 = kin.collide(vp, vps, Ip, Ips, rp, Rp, omega)
    np.testing.assert_allclose(v2, v, atol=1e-10)
    np.testing.assert_allclose(vs2, vs, atol=1e-10)
    np.testing.assert_allclose(I2, I, atol=1e-10)
    np.testing.assert_allclose(Is2, Is, atol=1e-10)


def test_sigma_of_omega_examples(rng):
    g = np.array([0.3, -1.0, 2.0])
    gh = g / np.linalg.norm(g)
    p = kin.sigma_of_omega(g, gh)
    np.testing.assert_allclose(p.sigma, -gh, atol=1e-15)
    assert p.weight == pytest.approx(0.25)
    G = rng.normal(size=(100, 3))
    w = random_unit(rng, 100)
    sp = kin.sigma_of_omega(G, w)
    ghat = G / np.linalg.norm(G, axis=1, keepdims=True)
    np.testing.assert_allclose(np.abs(np.sum(w * ghat, axis=1)), np.linalg.norm(sp.sigma - ghat, axis=1) / 2,
                               atol=1e-14)
    perp = np.array([0.0, 2.0, 1.0]) / math.sqrt(5)
    sing = kin.sigma_of_omega([1.0, 0, 0], perp)
    assert sing.singular and np.isinf(sing.weight)
    with pytest.raises(DomainError):
        kin.sigma_of_omega([0, 0, 0], [0, 0, 1])


@pytest.mark.parametrize("R, E, expected", [(0.25, 1.0, 3 / 128), (1.0, 7.0, 0.0), (0.5, 4.0, 0.5**0.5 * 0.5 * 32 / 16)])
def test_bl_jacobian(R, E, expected):
    assert kin.bl_jacobian(R, E) == pytest.approx(expected, rel=1e-14, abs=0)


def test_bl_jacobian_domain():
    with pytest.raises(DomainError):
        kin.bl_jacobian(1.5, 1.0)


def _anchor(rng):
    return kin.HAnchor(rng.normal(size=3), rng.exponential(), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95),
                       random_unit(rng, 1)[0])


@pytest.mark.parametrize("branch", kin.BRANCHES)
def test_h_roundtrip(branch, rng):
    for _ in range(100):
        a = _anchor(rng)
        star = kin.ParticleState(rng.normal(size=3), rng.exponential() + 0.01)
        x, y = kin.h_map(branch, a, star)
        assert kin.in_domain(branch, a, x, y)
        vs, Is = kin.h_inverse(branch, a, x, y)
        np.testing.assert_allclose(vs, star.v, rtol=1e-10, atol=1e-10)
        assert Is == pytest.approx(star.I, rel=1e-10, abs=1e-10)


def test_h_jacobian_values():
    assert kin.h_jacobian("K2", 0.5, 0.5) == pytest.approx(32)
    assert kin.h_jacobian("K3", 0.5, 0.5) == pytest.approx(32)
    assert kin.h_jacobian("K2", 0.25, 0.5) == pytest.approx(8 / (0.75 * 0.5))
    assert kin.h_jacobian("K3", 0.25, 0.5) == pytest.approx(8 / (0.25 * 0.5))
    with pytest.raises(DomainError):
        kin.h_scale("K4", 0.5, 0.5)


def test_in_domain_boundary():
    a = kin.HAnchor(np.array([0.2, 0.0, 0.0]), 1.0, 0.4, 0.3, np.array([0.0, 0.0, 1.0]))
    y_edge = (1 - a.r) * (1 - a.R) * a.I
    assert not kin.in_domain("K2", a, a.v, 0.5 * y_edge)
    scale = kin.h_scale("K2", a.r, a.R)
    x_center = a.v - math.sqrt(a.R * scale * y_edge) * a.sigma
    assert not kin.in_domain("K2", a, x_center, y_edge)
    with pytest.raises(DomainError):
        kin.h_inverse("K2", a, x_center, y_edge)


def test_in_domain_matches_reconstruction_sign(rng):
    m = 100_000
    a = kin.HAnchor(np.array([0.3, -0.2, 0.1]), 0.7, 0.35, 0.6, np.array([0.6, 0.0, 0.8]))
    x = 2 * rng.normal(size=(m, 3))
    y = rng.exponential(3.0, m)
    for branch in kin.BRANCHES:
        _, Is = kin.h_backward(branch, a.v, a.I, a.r, a.R, a.sigma, x, y)
        np.testing.assert_array_equal(kin.in_domain(branch, a, x, y), Is > 0)


def test_h_companion_completes_collision(rng):
    a = _anchor(rng)
    star = kin.ParticleState(rng.normal(size=3), 0.8)
    E = kin.total_energy(kin.ParticleState(a.v, a.I), star)
    G = 0.5 * (a.v + star.v)
    x, y = kin.h_map("K2", a, star)
    xc, yc = kin.h_companion("K2", a.r, a.R, a.sigma, x, y)
    np.testing.assert_allclose(xc, G + math.sqrt(a.R * E) * a.sigma, atol=1e-12)
    assert yc == pytest.approx(a.r * (1 - a.R) * E)


# -- change-of-variables oracles (two independent charts each) -------------

from oracles import agree, borgnakke_larsen_identity, h_identity, omega_sigma_identity  # noqa: E402


def test_omega_sigma_change_of_variables():
    lhs, rhs = omega_sigma_identity(200_000, 5)
    assert agree(lhs, rhs), (lhs, rhs)


def test_borgnakke_larsen_jacobian():
    lhs, rhs = borgnakke_larsen_identity(200_000, 6)
    assert agree(lhs, rhs), (lhs, rhs)
    assert lhs[1] < 0.05 * abs(lhs[0])


def test_borgnakke_larsen_wrong_jacobian_detected():
    lhs, rhs = borgnakke_larsen_identity(200_000, 6)
    assert not agree((2 * lhs[0], 2 * lhs[1]), rhs)


@pytest.mark.parametrize("branch", kin.BRANCHES)
def test_h_change_of_variables(branch):
    lhs, rhs = h_identity(branch, 200_000, 8)
    assert agree(lhs, rhs), (lhs, rhs)
