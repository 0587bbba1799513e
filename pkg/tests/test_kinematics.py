import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, HalfspaceIntersection

from hermval.bodies import Ball, Empty, Polytope, cube, random_polytope
from hermval.geomlin import ComplexStructure, RandomStream, sample_unitary
from hermval.intrinsic import Estimate
from hermval.kinematics import (
    _polygon_measure,
    _crofton_batch,
    _crofton_generic,
    c2_phi,
    c2_psi,
    complex_crofton_lhs,
    kappa_indices,
    lagrangian_crofton_lhs,
    phi_klain_formula,
    principal_kinematic_lhs,
)
from hermval.montecarlo import mean_and_error

J2 = ComplexStructure(2)
J3 = ComplexStructure(3)


def test_kappa_indices_n2():
    assert kappa_indices(2) == [(0, 4, 0, 0), (1, 3, 0, 0), (2, 2, 0, 0), (2, 2, 0, 1),
                                (2, 2, 1, 0), (2, 2, 1, 1), (3, 1, 0, 0), (4, 0, 0, 0)]


def test_pk_two_balls_exact():
    # B_r + B_r = B_{2r}: kappa_4 (2r)^4
    r = 0.7
    est = principal_kinematic_lhs(Ball(np.zeros(4), r), Ball(np.ones(4), r))
    assert est.samples == 0
    assert est.value == pytest.approx(math.pi**2 / 2 * (2 * r) ** 4)


def test_pk_empty():
    assert principal_kinematic_lhs(Empty(4), cube(4)).value == 0.0


def test_pk_point_limit():
    P = random_polytope(4, 8, 3)
    pt = Polytope(np.array([[0.3, 0.1, -0.2, 0.5]]))
    est = principal_kinematic_lhs(P, pt, J2, RandomStream(1), 8)
    assert est.value == pytest.approx(P.volume)


def test_pk_symmetric():
    # vol(K1 - rho K2) = vol(K2 - rho^-1 K1) and rho^-1 is Haar too
    P, Q = random_polytope(4, 7, 4), random_polytope(4, 7, 5)
    a = principal_kinematic_lhs(P, Q, J2, RandomStream(2), 64)
    b = principal_kinematic_lhs(Q, P, J2, RandomStream(3), 64)
    assert a.agrees_with(b)


def test_pk_unitary_invariance():
    P, Q = random_polytope(4, 7, 4), random_polytope(4, 7, 5)
    rho = J2.realify_matrix(sample_unitary(2, RandomStream(7)))
    a = principal_kinematic_lhs(P, Q, J2, RandomStream(2), 64)
    b = principal_kinematic_lhs(P.transform(rho), Q.translate([1, 2, 3, 4]), J2, RandomStream(2), 64)
    assert b.agrees_with(a)


def test_c2_ball_values():
    # projections of B^4 on 2-planes are unit disks
    B = Ball(np.zeros(4), 1.0)
    assert c2_phi(B, 1, 200).value == pytest.approx(math.pi)
    assert c2_psi(B, 1, 200).value == pytest.approx(math.pi)


def test_phi_klain_formula_range():
    for x in (0.0, 0.5, 1.0):
        assert 0.25 <= phi_klain_formula([x, 0, 0]) <= 0.5


def test_lagrangian_crofton_methods_agree():
    K = cube(4)
    a = lagrangian_crofton_lhs(K, J2, RandomStream(1), 4000, "reduced")
    b = lagrangian_crofton_lhs(K, J2, RandomStream(2), 1000, "direct")
    assert a.agrees_with(b)


def test_lagrangian_crofton_ball_exact():
    est = lagrangian_crofton_lhs(Ball(np.zeros(4), 1.0), J2, RandomStream(1), 400)
    assert est.value == pytest.approx(math.pi)


def test_lagrangian_crofton_bad_method():
    with pytest.raises(ValueError):
        lagrangian_crofton_lhs(cube(4), J2, 0, 10, "nope")


def _polygon_ref(a, c, j):
    hs = np.hstack([a, -c[:, None]])
    try:
        pts = HalfspaceIntersection(hs, np.zeros(2)).intersections
        hull = ConvexHull(pts)
    except Exception:
        return None
    return {1: hull.area / 2, 2: hull.volume}[j]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 9))
def test_polygon_measure_matches_qhull(seed, m):
    g = RandomStream(seed).generator
    a = g.normal(size=(m, 2))
    c = g.uniform(0.2, 2.0, size=m)
    # a surrounding box keeps the polygon bounded
    a = np.vstack([a, np.eye(2), -np.eye(2)])
    c = np.concatenate([c, 3.0 * np.ones(4)])
    for j in (1, 2):
        ref = _polygon_ref(a, c, j)
        got = _polygon_measure(a[None], c[None], j)[0]
        assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_polygon_measure_empty():
    a = np.array([[[1.0, 0.0], [-1.0, 0.0], [0, 1.0], [0, -1.0]]])
    c = np.array([[-1.0, -1.0, 1.0, 1.0]])
    assert _polygon_measure(a, c, 1)[0] == 0.0
    assert _polygon_measure(a, c, 0)[0] == 0.0


@pytest.mark.parametrize("K", [Ball(np.array([0.2, 0, 0, 0.1, 0, 0]), 1.0), cube(6)], ids=["ball", "cube"])
def test_crofton_batch_matches_generic(K):
    s = RandomStream(11)
    a = mean_and_error(np.concatenate([_crofton_batch(K, J3, 1, 2, 1, s.child(i), 500) for i in range(8)]))
    b = mean_and_error(_crofton_generic(K, J3, 1, 2, 1, RandomStream(12), 300))
    assert Estimate(*a).agrees_with(Estimate(*b))


def test_complex_crofton_index_check():
    with pytest.raises(ValueError):
        complex_crofton_lhs(cube(6), 2, 1, 2, J3, 0, 10)


def test_complex_crofton_homogeneity():
    # the integral of U_{3,1} over complex 2-flats is homogeneous of degree 3 + 2
    B = Ball(np.zeros(6), 1.0)
    a = complex_crofton_lhs(B, 3, 1, 2, J3, RandomStream(5), 20_000)
    b = complex_crofton_lhs(Ball(np.zeros(6), 1.5), 3, 1, 2, J3, RandomStream(5), 20_000)
    assert b.value == pytest.approx(1.5**5 * a.value, rel=1e-9)
