import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oirssim.errors import DomainError, GeometryError
from oirssim.geometry import (HALF_PI, Plane, Room, incidence_cosines, normal_from_angles,
                              plane_axes, reflect, source_image_point, specular_angles,
                              specular_angles_array, unit)

from conftest import L_REF, R_REF, U_REF

angles = st.floats(-HALF_PI, HALF_PI, exclude_max=True)
coords = st.floats(-5, 5)
vectors = st.tuples(coords, coords, coords).filter(lambda v: np.linalg.norm(v) > 1e-3)


@pytest.mark.parametrize("roll, yaw, expected", [
    (0.0, 0.0, (0.0, 1.0, 0.0)),
    (-math.pi / 2, 0.0, (0.0, 0.0, 1.0)),
    (math.pi / 4, math.pi / 4, (0.5, 0.5, -math.sqrt(0.5))),
])
def test_normal_from_angles_values(roll, yaw, expected):
    np.testing.assert_allclose(normal_from_angles(roll, yaw), expected, atol=1e-15)


@pytest.mark.parametrize("roll, yaw", [(math.pi / 2, 0.0), (0.0, 2.0), (float("nan"), 0.0)])
def test_normal_from_angles_rejects_out_of_domain(roll, yaw):
    with pytest.raises(DomainError):
        normal_from_angles(roll, yaw)


def test_normal_unit_norm_on_many_random_angles():
    rng = np.random.default_rng(1)
    w = rng.uniform(-HALF_PI, HALF_PI, 10_000)
    g = rng.uniform(-HALF_PI, HALF_PI, 10_000)
    np.testing.assert_allclose(np.linalg.norm(normal_from_angles(w, g), axis=-1), 1.0, atol=1e-14)


def test_reflect_examples():
    np.testing.assert_allclose(reflect([0, 0, -1], [0, 0, 1]), [0, 0, 1])
    d = np.array([1.0, 0.0, -1.0]) / math.sqrt(2)
    np.testing.assert_allclose(reflect(d, [0, 0, 1]), np.array([1.0, 0.0, 1.0]) / math.sqrt(2))


@given(vectors, vectors)
def test_reflect_is_an_isometric_involution(d, n):
    d, n = unit(d), unit(n)
    r = reflect(d, n)
    assert abs(np.linalg.norm(r) - 1.0) < 1e-12
    np.testing.assert_allclose(reflect(r, n), d, atol=1e-12)


def test_source_image_point_symmetric_case():
    # mirror at the origin facing +z; transmission plane z = 1
    R = np.zeros(3)
    P = np.array([1.0, 0.0, 1.0])
    img = source_image_point(R, [0, 0, 1], P, Plane([0, 0, 1], [0, 0, 1]))
    np.testing.assert_allclose(img, [-1.0, 0.0, 1.0], atol=1e-12)


def test_source_image_point_closes_the_reference_path():
    # mirror oriented for the specular path L -> R -> U
    w, g = specular_angles(L_REF, R_REF, U_REF)
    n = normal_from_angles(w, g)
    img = source_image_point(R_REF, n, U_REF, Plane([0, 0, 3], [0, 0, -1]))
    np.testing.assert_allclose(img, L_REF, atol=1e-12)
    # reflection-law residual
    out = reflect(unit(R_REF - img), n)
    np.testing.assert_allclose(out, unit(U_REF - R_REF), atol=1e-12)


def test_source_image_point_parallel_ray_is_none():
    # ray reflected horizontally never meets the ceiling
    R = np.array([0.0, 0.0, 1.0])
    P = np.array([1.0, 0.0, 1.0])
    assert source_image_point(R, [1, 0, 0], P, Plane([0, 0, 3], [0, 0, -1])) is None


@given(vectors, vectors, st.tuples(coords, coords, coords))
def test_source_image_point_satisfies_reflection_law(n, p_off, q):
    n = unit(n)
    R = np.zeros(3)
    P = R + np.asarray(p_off)
    plane = Plane(np.asarray(q) + [0, 0, 6], [0, 0, 1])
    img = source_image_point(R, n, P, plane)
    if img is None or np.linalg.norm(img - R) < 1e-6:
        return
    np.testing.assert_allclose(reflect(unit(R - img), n), unit(P - R), atol=1e-9)


def test_incidence_cosines_trivial_cases():
    ct, _ = incidence_cosines([0, 0, 3], [0, 0, 1], [5, 0, 0], [0, 0, -1], [0, 0, 1])
    assert ct == pytest.approx(1.0)
    _, cp = incidence_cosines([5, 0, 3], [0, 0, 1], [0, 0, 0], [0, 0, -1], [0, 0, 1])
    assert cp == pytest.approx(1.0)


def test_incidence_cosines_reference_geometry_by_angles():
    ct, cp = incidence_cosines(L_REF, R_REF, U_REF, [0, 0, -1], [0, 0, 1])
    # theta: angle between straight down and the L -> R ray (dy = -2, dz = -1.5)
    theta = math.atan2(2.0, 1.5)
    phi = math.atan2(2.0, 1.5)
    assert ct == pytest.approx(math.cos(theta), abs=1e-12)
    assert cp == pytest.approx(math.cos(phi), abs=1e-12)


@given(st.floats(0.1, 10))
def test_incidence_cosines_scale_invariant(scale):
    base = incidence_cosines(L_REF, R_REF, U_REF, [0, 0, -1], [0, 0, 1])
    scaled = incidence_cosines(R_REF + scale * (L_REF - R_REF), R_REF, R_REF + scale * (U_REF - R_REF),
                               [0, 0, -1], [0, 0, 1])
    np.testing.assert_allclose(scaled, base, atol=1e-12)


def test_incidence_cosines_rejects_coincident_points():
    with pytest.raises(DomainError):
        incidence_cosines(R_REF, R_REF, U_REF, [0, 0, -1], [0, 0, 1])


def test_specular_angles_reflect_onto_target():
    rng = np.random.default_rng(3)
    for _ in range(50):
        U = np.array([rng.uniform(0, 4), rng.uniform(0.5, 4), 0.0])
        w, g = specular_angles(L_REF, R_REF, U)
        out = reflect(unit(R_REF - L_REF), normal_from_angles(w, g))
        np.testing.assert_allclose(out, unit(U - R_REF), atol=1e-12)


def test_specular_angles_array_matches_scalar():
    U = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [3.5, 0.5, 0.0]])
    w, g = specular_angles_array(L_REF, R_REF, U)
    for k in range(3):
        assert (w[k], g[k]) == pytest.approx(specular_angles(L_REF, R_REF, U[k]), abs=1e-14)


def test_plane_axes_orthonormal():
    for n in ([0, 0, 1], [1, 0, 0], [0.3, -0.2, 0.9]):
        t1, t2 = plane_axes(n)
        m = np.stack([t1, t2, unit(n)])
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-14)


def test_room_floor_grid_and_bounds():
    room = Room()
    x, y = room.floor_grid(0.5)
    assert len(x) == 8 and x[0] == pytest.approx(0.25) and y[-1] == pytest.approx(3.75)
    assert room.contains([4, 4, 3]) and not room.contains([4.1, 0, 0])
    with pytest.raises(GeometryError):
        Room(0, 1, 1)
