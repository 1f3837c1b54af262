import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import box_mesh, refined_box_integral
from pdwg.element import HEX_LAYOUT, element_load
from pdwg.manufactured import get_solution
from pdwg.mesh import build_unit_cube_mesh
from pdwg.quadrature import cell_rule, face_rule, gauss_legendre_01
from pdwg.weak import face_tangents


def test_cell_rule_integrates_one():
    m = box_mesh([0.3, -1, 2], [0.5, 2.0, 0.25])
    assert abs(cell_rule(m, 0, 3).integrate(np.ones(27)) - 0.25) <= 1e-14


def test_cell_rule_xyz():
    m = build_unit_cube_mesh(1)
    rule = cell_rule(m, 0, 2)
    assert abs(rule.integrate(np.prod(rule.points, axis=-1)) - 0.125) <= 1e-14


def sin3(p):
    return np.prod(np.sin(np.pi * p), axis=-1)


def test_cell_rule_sin_product_is_tensor_gauss():
    # A 6-point Gauss rule on sin(pi x) misses by ~3.5e-11 per axis; the triple
    # product inherits that, which puts the 3D error at 2.0e-10.
    m = build_unit_cube_mesh(1)
    rule6 = cell_rule(m, 0, 6)
    x, w = gauss_legendre_01(6)
    one_d = np.sum(w * np.sin(np.pi * x))
    assert abs(rule6.integrate(sin3(rule6.points)) - one_d**3) <= 1e-15
    exact = (2 / np.pi) ** 3
    assert abs(rule6.integrate(sin3(rule6.points)) - exact) < 2.1e-10
    rule7 = cell_rule(m, 0, 7)
    assert abs(rule7.integrate(sin3(rule7.points)) - exact) <= 1e-10


def test_face_rule_area_and_xy():
    m = build_unit_cube_mesh(1)
    for f in range(6):
        rule = face_rule(m, f, 2)
        assert abs(rule.integrate(np.ones(4)) - m.face_areas[f]) <= 1e-14
    bottom = int(np.nonzero(np.all(m.face_centroids == [0.5, 0.5, 0.0], axis=1))[0][0])
    rule = face_rule(m, bottom, 2)
    assert abs(rule.integrate(rule.points[:, 0] * rule.points[:, 1]) - 0.25) <= 1e-14


@pytest.mark.parametrize("q", [0, -2])
def test_rules_reject_nonpositive_order(q):
    m = build_unit_cube_mesh(1)
    with pytest.raises(ValueError):
        cell_rule(m, 0, q)
    with pytest.raises(ValueError):
        face_rule(m, 0, q)


@given(
    st.integers(1, 6),
    st.lists(st.integers(0, 11), min_size=3, max_size=3),
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    st.lists(st.floats(0.1, 2), min_size=3, max_size=3),
)
def test_monomial_exactness(q, powers, lower, size):
    powers = [min(p, 2 * q - 1) for p in powers]
    m = box_mesh(lower, size)
    rule = cell_rule(m, 0, q)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - m.volumes[0]) <= 1e-12 * max(1.0, m.volumes[0])
    values = np.prod(rule.points ** np.array(powers), axis=-1)
    lo, hi = np.array(lower), np.array(lower) + np.array(size)
    exact = np.prod([(hi[d] ** (p + 1) - lo[d] ** (p + 1)) / (p + 1) for d, p in enumerate(powers)])
    assert rule.integrate(values) == pytest.approx(exact, rel=1e-10, abs=1e-10)


@given(st.integers(1, 6))
def test_face_weights_sum_to_area(q):
    m = box_mesh([0, 0, 0], [0.7, 1.3, 2.1])
    for f in range(6):
        rule = face_rule(m, f, q)
        assert np.all(rule.weights > 0)
        assert abs(rule.weights.sum() - m.face_areas[f]) <= 1e-12


def test_u2_tangential_trace_matches_refined_quadrature():
    m = build_unit_cube_mesh(2)
    sol = get_solution("u2")
    tangents = face_tangents(m.face_normals)
    qb = HEX_LAYOUT.q_b.start
    e = 0
    load = element_load(m, e, sol.data(), q=8)
    checked = 0
    for local, f in enumerate(m.element_faces[e]):
        if m.face_elements[f, 1] >= 0:
            continue
        n = m.outward_normals[e, local]
        loop = m.vertices[m.face_vertices[f]]
        lo, hi = loop.min(axis=0), loop.max(axis=0)
        for k in range(2):
            ref = refined_box_integral(
                lambda p: np.cross(sol.u(p), n) @ tangents[f, k], lo, hi, pieces=8, q=10
            )
            assert abs(load[qb + 2 * local + k] - ref) <= 1e-10
            checked += 1
    assert checked == 6
