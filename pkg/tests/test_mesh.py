import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from traveltime.errors import MeshError, PointLocationError
from traveltime.mesh import (build_mesh, check_conforming, face_geometry, locate_point,
                             mark_fixed_fraction, min_angle, refine, uniform_refine)

from conftest import SQUARE_T, SQUARE_V, square_tagger


def test_square_faces(square):
    assert square.n_vertices == 4
    assert square.n_elements == 2
    assert square.n_faces == 5
    assert np.sum(square.face_right >= 0) == 1


def test_hole_is_rejected():
    # 3x3 grid of squares with the middle one missing
    xs = np.linspace(0, 3, 4)
    V = np.array([[x, y] for y in xs for x in xs])
    T = []
    for j in range(3):
        for i in range(3):
            if (i, j) == (1, 1):
                continue
            a, b = j * 4 + i, j * 4 + i + 1
            c, d = a + 4, b + 4
            T += [[a, b, d], [a, d, c]]
    with pytest.raises(MeshError, match="non-conforming"):
        build_mesh(V, T, lambda m, e: "n")


def test_hanging_node_is_rejected():
    V = np.vstack([SQUARE_V, [[0.5, 0.5]]])
    T = [[0, 1, 4], [1, 2, 4], [0, 2, 3]]
    with pytest.raises(MeshError, match="non-conforming"):
        build_mesh(V, T, lambda m, e: "n")


def test_inverted_triangle_is_rejected():
    with pytest.raises(MeshError, match="inverted"):
        build_mesh(SQUARE_V, [[0, 2, 1], [0, 2, 3]], square_tagger)


def test_untagged_face_is_rejected():
    with pytest.raises(MeshError, match="untagged"):
        build_mesh(SQUARE_V, SQUARE_T, lambda m, e: None if m[1] == 0 else "d")


def test_refine_both_marked(square):
    fine = refine(square, {0, 1})
    assert fine.n_elements == 8
    check_conforming(fine)
    assert np.all(fine.green_parent[:, 0] < 0)


def test_refine_one_marked(square):
    fine = refine(square, {0})
    assert fine.n_elements == 6
    check_conforming(fine)
    assert np.sum(fine.green_parent[:, 0] >= 0) == 2
    assert fine.area.sum() == pytest.approx(1.0, abs=1e-14)


def test_refine_empty_is_identity(square):
    assert refine(square, set()) is square


def test_green_element_marked_reverts_to_red(square):
    m1 = refine(square, {0})
    green = int(np.flatnonzero(m1.green_parent[:, 0] >= 0)[0])
    m2 = refine(m1, {green})
    check_conforming(m2)
    # both original triangles end up red-refined
    assert m2.n_elements == 8
    assert np.all(m2.green_parent[:, 0] < 0)


def test_region_inherited():
    m = build_mesh(SQUARE_V, SQUARE_T, square_tagger, element_region=[3, 7])
    fine = refine(m, {0})
    for e in range(fine.n_elements):
        c = fine.centroid[e]
        assert fine.element_region[e] == (3 if c[0] > c[1] else 7)


@pytest.mark.parametrize("seed", range(6))
def test_random_refinement_stays_conforming(square, seed):
    rng = random.Random(seed)
    m = square
    for _ in range(8):
        k = max(1, m.n_elements // 5)
        before = m.area.sum()
        m = refine(m, rng.sample(range(m.n_elements), k))
        check_conforming(m)
        assert abs(m.area.sum() - before) <= 1e-12 * before
        # interior faces have exactly two neighbours
        interior = m.face_right >= 0
        assert interior.sum() == m.n_faces - len(m.boundary_faces)
    # green closure keeps angles bounded away from zero (atan(1/3) for this start)
    assert min_angle(m) >= math.atan(1 / 3) - 1e-12


def test_boundary_tags_survive_refinement():
    V = SQUARE_V
    tag = lambda mid, e: "top" if abs(mid[1] - 1) < 1e-12 else "rest"
    m = build_mesh(V, SQUARE_T, tag)
    for _ in range(3):
        m = refine(m, range(0, m.n_elements, 3))
    for f in m.boundary_faces:
        mid = m.vertices[m.faces[f]].mean(axis=0)
        assert m.face_tag[f] == tag(mid, None)


def test_uniform_red_keeps_min_angle():
    V = [[0, 0], [3, 0], [0.4, 1.1], [2.5, 1.7]]
    T = [[0, 1, 2], [1, 3, 2]]
    m = build_mesh(V, T, lambda a, b: "d")
    a0 = min_angle(m)
    for _ in range(5):
        m = uniform_refine(m)
        assert min_angle(m) == pytest.approx(a0, rel=1e-12)
        assert m.area.sum() == pytest.approx(0.5 * 3 * 1.1 + 0.5 * abs(
            (3 - 0.4) * (1.7 - 1.1) - (0 - 1.1) * (2.5 - 0.4)), rel=1e-12)


def test_marking_examples():
    assert mark_fixed_fraction([4, 1, 3, 2], 0.25) == {0}
    assert mark_fixed_fraction([1, 1, 1, 1], 0.5) == {0, 1}
    assert mark_fixed_fraction([-5, 2], 0.5) == {0}
    assert mark_fixed_fraction([0, 0, 0], 0.5) == set()


def test_marking_two_element_exhaustive():
    # brute force over the order on |eta| for all sign patterns
    for a in (-3.0, -1.0, 1.0, 3.0):
        for b in (-2.0, 2.0):
            expect = {0} if abs(a) > abs(b) else {1}
            assert mark_fixed_fraction([a, b], 0.5) == expect


def test_marking_rejects_bad_fraction():
    with pytest.raises(ValueError):
        mark_fixed_fraction([1, 2], 0.0)
    with pytest.raises(ValueError):
        mark_fixed_fraction([1, 2], 1.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=40, unique=True),
       st.floats(0.01, 1.0), st.randoms(use_true_random=False))
def test_marking_permutation_equivariant(values, fraction, rnd):
    eta = np.array(values)
    if len(np.unique(np.abs(eta))) != len(eta):
        return
    perm = list(range(len(eta)))
    rnd.shuffle(perm)
    perm = np.array(perm)
    marked = mark_fixed_fraction(eta, fraction)
    marked_perm = mark_fixed_fraction(eta[perm], fraction)
    assert {int(perm[i]) for i in marked_perm} == marked
    if np.any(eta != 0):
        assert len(marked) == min(len(eta), math.ceil(fraction * len(eta) - 1e-9))


def test_locate_point(square):
    m = uniform_refine(square, 2)
    for e in (0, 3, 17):
        assert locate_point(m, m.centroid[e]) == e
    for f in np.flatnonzero(m.face_right >= 0)[:10]:
        mid = m.vertices[m.faces[f]].mean(axis=0)
        assert locate_point(m, mid) == min(m.face_left[f], m.face_right[f])
    with pytest.raises(PointLocationError):
        locate_point(m, (1.5, 0.5))


def test_face_geometry(square):
    for f in square.boundary_faces:
        n, L, (a, b) = face_geometry(square, f)
        mid = 0.5 * (a + b)
        if mid[1] == 0.0:
            np.testing.assert_allclose(n, [0, -1], atol=1e-15)
            assert L == 1.0
        if mid[0] == 0.0:
            np.testing.assert_allclose(n, [-1, 0], atol=1e-15)
    f = int(np.flatnonzero(square.face_right >= 0)[0])
    n, L, _ = face_geometry(square, f)
    assert abs(n @ np.array([1.0, 1.0])) < 1e-15
    assert np.linalg.norm(n) == pytest.approx(1.0)
    assert L == pytest.approx(math.sqrt(2))
    # left -> right orientation
    left, right = square.face_left[f], square.face_right[f]
    assert n @ (square.centroid[right] - square.centroid[left]) > 0


def test_boundary_normals_point_outward():
    m = uniform_refine(build_mesh(SQUARE_V, SQUARE_T, square_tagger), 2)
    for f in m.boundary_faces:
        n = m.face_normal[f]
        mid = m.vertices[m.faces[f]].mean(axis=0)
        assert n @ (mid - m.centroid[m.face_left[f]]) > 0
