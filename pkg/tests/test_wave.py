import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import fresnel_unpolarized
from radarsim.wave import (
    AIR, C_LIGHT, DomainError, Material, MaterialError, MaterialTable, fresnel_reflectance,
    fresnel_split, free_space_return_power, reflect_dir, reflection_energy,
    return_angle_airpath, return_angle_backpath, snell_refract,
)

velocities = st.floats(0.01, C_LIGHT)


def incoming(theta):
    """Unit ray hitting the z=0 plane (normal +z) at incidence angle theta."""
    return np.array([math.sin(theta), 0.0, -math.cos(theta)])


N = np.array([0.0, 0.0, 1.0])


def test_material_validation():
    with pytest.raises(MaterialError, match="A\\+B"):
        Material("m", 0.1, 0.7, 0.5)
    with pytest.raises(MaterialError):
        Material("m", 0.4)
    with pytest.raises(MaterialError):
        Material("m", 0.1, -0.1)
    assert Material("m", 0.1, 0.2, 0.3).S == pytest.approx(0.5)


def test_material_table_requires_air_first():
    t = MaterialTable.with_air([Material("wall", 0.1)])
    assert t.materials[0] == AIR
    assert t.index("wall") == 1
    with pytest.raises(ValueError):
        MaterialTable([Material("wall", 0.1)])
    with pytest.raises(ValueError):
        t.index("glass")


def test_reflect_examples():
    np.testing.assert_allclose(reflect_dir([0, 0, -1], N), [0, 0, 1])
    r = reflect_dir(incoming(math.radians(30)), N)
    assert math.degrees(math.acos(r @ N)) == pytest.approx(30.0)
    assert r[0] > 0


def test_reflect_coplanar(rng):
    for _ in range(200):
        v, n = rng.normal(size=(2, 3))
        v /= np.linalg.norm(v)
        n /= np.linalg.norm(n)
        r = reflect_dir(v, n)
        assert abs(np.dot(np.cross(v, n), r)) < 1e-12
        assert np.linalg.norm(r) == pytest.approx(1.0)


def test_snell_examples():
    np.testing.assert_allclose(snell_refract([0, 0, -1], N, 0.3, 0.15), [0, 0, -1], atol=1e-15)
    t = snell_refract(incoming(math.radians(30)), N, 0.3, 0.15)
    theta2 = math.degrees(math.acos(-t @ N))
    assert math.sin(math.radians(theta2)) == pytest.approx(0.25, abs=1e-12)
    assert theta2 == pytest.approx(14.4775, abs=1e-4)
    assert snell_refract(incoming(math.radians(60)), N, 0.15, 0.3) is None


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.5), velocities, velocities)
def test_snell_reciprocity(theta, v1, v2):
    v0 = incoming(theta)
    t = snell_refract(v0, N, v1, v2)
    if t is None:
        return
    back = snell_refract(-t, -N, v2, v1)
    assert back is not None
    np.testing.assert_allclose(back, -v0, atol=1e-9)


def test_fresnel_examples():
    s = fresnel_split(0.0, 0.3, 0.15, 1.0)
    assert s.reflected == pytest.approx(1 / 9, abs=1e-15)
    assert s.refracted == pytest.approx(8 / 9, abs=1e-15)
    s = fresnel_split(0.7, 0.2, 0.2, 2.0)
    assert s.reflected == 0.0 and s.refracted == 2.0
    assert fresnel_reflectance(math.cos(math.radians(89.999)), 0.3, 0.1) > 0.999


def test_fresnel_matches_textbook(rng):
    for _ in range(500):
        theta = rng.uniform(0, math.pi / 2 - 1e-6)
        v1, v2 = rng.uniform(0.02, C_LIGHT, 2)
        expected = fresnel_unpolarized(theta, C_LIGHT / v1, C_LIGHT / v2)
        assert fresnel_reflectance(math.cos(theta), v1, v2) == pytest.approx(expected, abs=1e-12)


def test_fresnel_total_internal_reflection():
    crit = math.asin(0.15 / 0.3)
    assert fresnel_reflectance(math.cos(crit + 1e-3), 0.15, 0.3) == 1.0


def test_fresnel_energy_conservation(rng):
    theta = rng.uniform(0, math.pi / 2, 10_000)
    v = rng.uniform(0.01, C_LIGHT, (10_000, 2))
    e0 = rng.uniform(1e-6, 1e3, 10_000)
    for t, (v1, v2), e in zip(theta, v, e0):
        s = fresnel_split(t, v1, v2, e)
        assert s.reflected >= 0 and s.refracted >= 0
        assert abs(s.reflected + s.refracted - e) <= 1e-12 * e


@pytest.mark.parametrize("v1,v2", [(0.3, 0.1), (0.1, 0.3), (0.2, 0.25)])
def test_fresnel_monotone_below_critical(v1, v2):
    crit = math.asin(min(1.0, v1 / v2))
    thetas = np.linspace(0, crit, 2000, endpoint=False)
    R = np.array([fresnel_reflectance(math.cos(t), v1, v2) for t in thetas])
    assert np.all(np.diff(R) >= -1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 0.99), st.floats(0, 0.99), st.floats(1e-6, 200.0), st.floats(1e-6, 1e3))
def test_lobe_endpoints_exact(A, B, C, E1):
    if A + B >= 1:
        return
    m = Material("m", 0.1, A, B, C)
    assert reflection_energy(E1, 0.0, m) == pytest.approx(E1, rel=1e-15)
    assert reflection_energy(E1, math.pi / 2, m) == A * E1


def test_lobe_zero_exponent_keeps_specular_share():
    # cos(w)^0 = 1, so the specular share is flat and the pi/2 value is A + S
    m = Material("m", 0.1, 0.2, 0.3, 0.0)
    assert reflection_energy(1.0, math.pi / 2, m) == pytest.approx(0.7)


def test_lobe_lambertian_and_clamp():
    m = Material("m", 0.1, 0.0, 1.0 - 1e-12, 5.0)
    for w in np.linspace(0, math.pi / 2, 7):
        assert reflection_energy(1.0, w, m) == pytest.approx(math.cos(w), abs=1e-11)
    m = Material("m", 0.1, 0.2, 0.3, 8.0)
    assert reflection_energy(1.0, 2.5, m) == reflection_energy(1.0, math.pi / 2, m)


def test_lobe_non_increasing(rng):
    for _ in range(50):
        A, B = rng.uniform(0, 0.5, 2)
        m = Material("m", 0.1, A, B, rng.uniform(0.1, 50))
        w = np.linspace(0, math.pi / 2, 200)
        e = np.array([reflection_energy(1.0, x, m) for x in w])
        assert np.all(np.diff(e) <= 1e-15)


def test_backpath_angle_examples():
    v0 = np.array([0.0, 0.0, -1.0])
    assert return_angle_backpath(v0, reflect_dir(v0, N)) == pytest.approx(0.0, abs=1e-15)
    v0 = incoming(math.radians(30))
    assert math.degrees(return_angle_backpath(v0, reflect_dir(v0, N))) == pytest.approx(60.0)


def test_backpath_matches_incidence_geometry(rng):
    for _ in range(200):
        v0, n = rng.normal(size=(2, 3))
        v0 /= np.linalg.norm(v0)
        n /= np.linalg.norm(n)
        if v0 @ n > 0:
            n = -n
        theta = math.acos(-v0 @ n)
        assert return_angle_backpath(v0, reflect_dir(v0, n)) == pytest.approx(2 * theta, abs=1e-9)


def test_airpath_angle():
    hit = np.array([5.0, 0.0, 0.0])
    v1 = np.array([-1.0, 0.0, 0.0])
    assert return_angle_airpath(v1, hit, [0, 0, 0]) == pytest.approx(0.0)
    assert return_angle_airpath(v1, hit, [5, 3, 0]) == pytest.approx(math.pi / 2)
    v0 = incoming(0.4)
    hit = np.zeros(3)
    sensor = hit - 7.0 * v0
    assert return_angle_airpath(reflect_dir(v0, N), hit, sensor) == pytest.approx(
        return_angle_backpath(v0, reflect_dir(v0, N)), abs=1e-12)
    with pytest.raises(DomainError):
        return_angle_airpath(v1, hit, hit)


def test_radar_equation():
    p = free_space_return_power(1, 1, 1, 1, 1)
    assert p == pytest.approx(5.0393e-4, rel=1e-4)
    assert p == pytest.approx((4 * math.pi) ** -3, rel=1e-15)
    assert free_space_return_power(1, 1, 1, 1, 2) == pytest.approx(p / 16)
    assert free_space_return_power(1, 1, 2, 1, 1) == pytest.approx(4 * p)
