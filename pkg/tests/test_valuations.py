import math

import numpy as np
import pytest

from hermval.bodies import Ball, Empty, Parallel, Polytope, box, cube, random_polytope
from hermval.geomlin import ComplexStructure, RandomStream, Subspace, sample_orthogonal, sample_subspace, sample_unitary
from hermval.intrinsic import Estimate, intrinsic_volume
from hermval.valuations import (
    C_valuation,
    U_valuation,
    basis_range,
    constant_klain,
    cosine_transform,
    duality,
    eval_C,
    eval_U,
    gram_report,
    intrinsic_valuation,
    kazarnovskii,
    kazarnovskii_face_factor,
    kazarnovskii_span,
    klain_function,
    lambda_op,
    planar_intrinsic_volume,
    projected_intrinsic_volumes,
    ratio_report,
    verify_lefschetz,
    verify_U_equals_dual_C,
    volume_valuation,
)

J2 = ComplexStructure(2)
P4 = random_polytope(4, 9, 21)


def test_c_euler_characteristic_exact():
    for l in (1, 2):
        est = eval_C(0, l, P4, J2, 1)
        assert est.value == 1.0 and est.samples == 0


def test_c_full_l_is_intrinsic_volume():
    for k in range(5):
        assert eval_C(k, 2, P4, J2, 1).value == pytest.approx(intrinsic_volume(P4, k).value)


def test_c_top_degree_is_volume():
    est = eval_C(4, 2, P4, J2, 2, 500)
    assert est.value == pytest.approx(P4.volume)


def test_u_p0_is_intrinsic_volume():
    for k in range(5):
        est = eval_U(k, 0, P4, J2, 1)
        assert est.value == pytest.approx(intrinsic_volume(P4, k).value)
        assert est.samples == 0


def test_u_ball_closed_form():
    # sections and projections of a ball are balls: U_{2,1}(B^4) = pi
    est = eval_U(2, 1, Ball(np.zeros(4), 1.0), J2, 1, 200)
    assert est.value == pytest.approx(math.pi)


def test_u_section_matches_projection():
    a = eval_U(2, 1, P4, J2, RandomStream(2), 4000, method="projection")
    b = eval_U(2, 1, P4, J2, RandomStream(3), 400, method="section")
    assert a.agrees_with(b)


def test_u21_is_complex_line_projection_mean():
    # U_{2p,p}(K) = E_F vol_{2p}(Pr_F K) over complex p-planes
    a = eval_U(2, 1, P4, J2, RandomStream(4), 4000)
    b = eval_C(2, 1, P4, J2, RandomStream(5), 4000)
    assert a.agrees_with(b)


def test_empty_is_zero():
    for phi in (C_valuation(2, 1, 2), U_valuation(2, 1, 2), intrinsic_valuation(2)):
        assert phi(Empty(4)).value == 0.0


def test_index_errors():
    with pytest.raises(ValueError):
        eval_U(2, 2, P4, J2)
    with pytest.raises(ValueError):
        eval_C(5, 1, P4, J2)


def test_unitary_and_translation_invariance():
    rho = J2.realify_matrix(sample_unitary(2, RandomStream(6)))
    Q = P4.transform(rho).translate([1.0, -2.0, 0.5, 3.0])
    for phi in (C_valuation(2, 1, 2, 4000), U_valuation(3, 1, 2, 300)):
        a, b = phi(P4, RandomStream(7)), phi(Q, RandomStream(8))
        assert a.agrees_with(b), phi


def test_homogeneity():
    lam = 1.7
    a = eval_C(2, 1, P4, J2, RandomStream(9), 4000)
    b = eval_C(2, 1, P4.scale(lam), J2, RandomStream(9), 4000)
    # common random numbers: exact scaling
    assert b.value == pytest.approx(lam**2 * a.value, rel=1e-9)


def test_planar_intrinsic_volume():
    sq = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]])
    assert planar_intrinsic_volume(sq, 1) == pytest.approx(2.0)
    assert planar_intrinsic_volume(sq, 2) == pytest.approx(1.0)
    seg = np.array([[0.0, 0], [3.0, 4.0]])
    assert planar_intrinsic_volume(seg, 1) == pytest.approx(5.0)


def test_projected_parallelotope_matches_polytope():
    Q = box([1.0, 2.0, 0.5, 1.5])
    F = np.stack([sample_subspace(2, 4, RandomStream(i)).frame for i in range(20)])
    a = projected_intrinsic_volumes(Q, F, 1)
    b = projected_intrinsic_volumes(Polytope(Q.vertices), F, 1)
    assert np.allclose(a, b)


def test_klain_of_intrinsic_volume_is_one():
    f = klain_function(intrinsic_valuation(2), 4)
    for i in range(5):
        assert f(sample_subspace(2, 4, RandomStream(i))).value == pytest.approx(1.0)


def test_klain_probe_invariance():
    E = sample_subspace(2, 4, RandomStream(1))
    a = klain_function(C_valuation(2, 1, 2, 20_000), 4)(E, RandomStream(2))
    b = klain_function(C_valuation(2, 1, 2, 20_000), 4, probe="simplex")(E, RandomStream(3))
    assert a.agrees_with(b)


def test_klain_dimension_check():
    f = klain_function(intrinsic_valuation(2), 4)
    with pytest.raises(ValueError):
        f(sample_subspace(1, 4, 0))


def test_duality_anchors():
    chi = constant_klain(0, 4, 1.0, "chi")
    vol = klain_function(volume_valuation(4), 4)
    full = Subspace(np.eye(4), 4)
    assert duality(chi)(full).value == pytest.approx(vol(full).value, abs=1e-12)
    f = klain_function(C_valuation(2, 1, 2, 2000), 4)
    E = sample_subspace(2, 4, RandomStream(3))
    assert duality(duality(f))(E, RandomStream(4)).value == pytest.approx(f(E, RandomStream(4)).value, abs=1e-12)


def test_lambda_of_volume_is_surface_area():
    # Lambda vol = d/de vol(K + eD) at 0 = 2 V_{d-1} (kappa_1 = 2)
    K = cube(3)
    est = lambda_op(volume_valuation(3), K, RandomStream(1))
    assert est.value == pytest.approx(2 * 3.0, rel=1e-6)


def test_lambda_lowers_degree():
    phi = C_valuation(2, 1, 2, 2000)
    a = lambda_op(phi, P4, RandomStream(5))
    b = lambda_op(phi, P4.scale(2.0), RandomStream(5))
    assert b.agrees_with(2.0 * a)


def test_cosine_transform_commutes_with_rotation():
    f = constant_klain(2, 4)
    T = cosine_transform(f, 2, 2, N=20_000)
    E = sample_subspace(2, 4, RandomStream(1))
    R = sample_orthogonal(4, RandomStream(2))
    a, b = T(E, RandomStream(3)), T(E.transform(R), RandomStream(4))
    assert a.agrees_with(b)


def test_kazarnovskii_point_and_invariance():
    J = J2
    assert kazarnovskii(Polytope(np.zeros((1, 4))), J).value == 0.0
    a = kazarnovskii(P4, J)
    assert kazarnovskii(P4.translate([1, 2, 3, 4]), J).value == pytest.approx(a.value)
    assert kazarnovskii(P4.scale(1.5), J).value == pytest.approx(1.5**2 * a.value)


def test_kazarnovskii_face_factor_methods_agree():
    L = sample_subspace(2, 4, RandomStream(7))
    exact = kazarnovskii_face_factor(L.frame, J2)
    mc = kazarnovskii_face_factor(L.frame, J2, "hit-or-miss", RandomStream(8), 40_000)
    assert mc.agrees_with(exact)


def test_kazarnovskii_additivity():
    C = box([2.0, 1.0, 1.0, 1.0])
    left, right = box([1.0, 1.0, 1.0, 1.0]), box([1.0, 1.0, 1.0, 1.0]).translate([1, 0, 0, 0])
    mid = Polytope(np.array([[1.0, y, z, w] for y in (0, 1) for z in (0, 1) for w in (0, 1)]))
    lhs = kazarnovskii(C, J2).value
    rhs = kazarnovskii(left, J2).value + kazarnovskii(right, J2).value - kazarnovskii(mid, J2).value
    assert lhs == pytest.approx(rhs)


def test_kazarnovskii_span_small():
    r = kazarnovskii_span(2, RandomStream(1), 4000, 20)
    assert r["residual"] < 0.05


def test_ratio_report_excludes_zero_denominators():
    num = [Estimate(2.0, 0.01), Estimate(4.0, 0.01), Estimate(1.0, 0.01)]
    den = [Estimate(1.0, 0.01), Estimate(2.0, 0.01), Estimate(0.0, 0.1)]
    r = ratio_report(num, den)
    assert r["excluded"] == 1 and r["mean_ratio"] == pytest.approx(2.0)


def test_lefschetz_small():
    r = verify_lefschetz(1, 1, 2, RandomStream(2), 2000, 5)
    assert r["spread"] < 0.05


def test_u_dual_c_small():
    r = verify_U_equals_dual_C(2, 1, 2, RandomStream(3), 4000, 6)
    assert r["spread"] < 0.06


def test_basis_range():
    assert [len(basis_range(k, 2)) for k in range(5)] == [1, 1, 2, 1, 1]
    assert basis_range(3, 2, paper_range=True) == [0, 1]


def test_gram_rank_k2():
    r = gram_report(2, 2, RandomStream(4), 20_000, 40)
    assert r["rank"] == 2 and r["gap"] >= 10


def test_parallel_body_c():
    K = Parallel(Polytope(np.array([[0.0, 0, 0, 0], [1.0, 0, 0, 0]])), 0.5)
    a = eval_C(1, 1, K, J2, RandomStream(5), 4000)
    assert a.value > 0 and a.std_error > 0
