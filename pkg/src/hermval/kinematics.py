"""Kinematic and Crofton integrals and the least-squares constants behind them.

Conventions: probability Haar measure on U(n) and on every compact
Grassmannian, Lebesgue measure on translations and affine offsets,
``V_0 = chi``.  Fitted constants only have meaning under this stamp.
"""
from __future__ import annotations

import math

import numpy as np

from .bodies import (
    Ball,
    Parallel,
    Polytope,
    as_nonempty,
    box,
    cube,
    distances,
    minkowski_sum_polytopes,
    random_polytope,
    section,
)
from .estimators import ConstantFitRegressor
from .geomlin import (
    AffineFlat,
    ComplexStructure,
    Subspace,
    as_stream,
    complement_frames,
    complex_haar_frames,
    gr24_plane,
    lagrangian_frames,
    sample_sphere_half,
    sample_unitary,
)
from .intrinsic import Estimate, body_volume, intrinsic_volume
from .montecarlo import chunked_samples, mean_and_error
from .valuations import (
    ValuationEvaluator,
    basis_range,
    eval_U,
    klain_function,
    projected_intrinsic_volumes,
)

DEFAULT_SAMPLES = 4000


def _structure(K, J):
    if J is not None:
        return J
    if K.ambient_dim % 2:
        raise ValueError("body must live in R^{2n}")
    return ComplexStructure(K.ambient_dim // 2)


def _split(K):
    """``(polytope or None for a point, radius, center)`` of a body."""
    if isinstance(K, Ball):
        return None, K.radius, K.center
    if isinstance(K, Parallel):
        return K.polytope, K.eps, None
    return K, 0.0, None


# -- principal kinematic formula ------------------------------------------

def principal_kinematic_lhs(K1, K2, J=None, rng=None, N=DEFAULT_SAMPLES):
    """``int chi(K1 cap g K2) dg`` over ``g`` in ``IU(n)``.

    For convex bodies the translation integral is
    ``vol(K1 + (-rho K2))``, so only the unitary part ``rho`` is sampled.
    Pairs involving a ball are rotation-free and exact.
    """
    J = _structure(K1, J)
    stream = as_stream(rng)
    if K1.is_empty or K2.is_empty or as_nonempty(K1).is_empty or as_nonempty(K2).is_empty:
        return Estimate(0.0, 0.0, 0, stream.seed, "exact")
    P1, e1, _ = _split(K1)
    P2, e2, _ = _split(K2)
    eps = e1 + e2
    if P1 is None or P2 is None:
        # one side is a ball: the sum is a parallel body of the other side
        P = P2 if P1 is None else P1
        if P is None:
            d = K1.ambient_dim
            return Estimate(body_volume(Ball(np.zeros(d), eps)), 0.0, 0, stream.seed, "exact")
        return Estimate(body_volume(Parallel(P, eps) if eps else P), 0.0, 0, stream.seed, "exact")

    def draw(sub, size):
        out = np.empty(size)
        for s in range(size):
            rho = J.realify_matrix(sample_unitary(J.n, sub.child(s)))
            Q = minkowski_sum_polytopes(P1, P2.transform(-rho))
            out[s] = Q.volume if eps == 0 else body_volume(Parallel(Q, eps))
        return out

    mean, err = mean_and_error(chunked_samples(draw, N, stream, chunk=64))
    return Estimate(mean, err, N, stream.seed, "minkowski" if eps == 0 else "minkowski+steiner")


def kappa_indices(n):
    """``(k1, k2, p1, p2)`` with ``k1 + k2 = 2n`` over the independent ``p`` ranges."""
    out = []
    for k1 in range(2 * n + 1):
        k2 = 2 * n - k1
        for p1 in basis_range(k1, n):
            for p2 in basis_range(k2, n):
                out.append((k1, k2, p1, p2))
    return out


class BasisCache:
    """Memoised ``U_{k,p}`` estimates per body (keyed by object identity)."""

    def __init__(self, n, rng=None, N=DEFAULT_SAMPLES):
        self.J = ComplexStructure(n)
        self.stream = as_stream(rng)
        self.N = N
        self._cache = {}
        self._ids = {}

    def __call__(self, K, k, p):
        key = (id(K), k, p)
        if key not in self._cache:
            idx = self._ids.setdefault(id(K), len(self._ids))
            sub = self.stream.child(idx).child(k).child(p)
            self._cache[key] = (K, eval_U(k, p, K, self.J, sub, self.N))
        return self._cache[key][1]


def _design_row(cache, indices, K1, K2):
    row, err = [], []
    for k1, k2, p1, p2 in indices:
        a, b = cache(K1, k1, p1), cache(K2, k2, p2)
        row.append(a.value * b.value)
        err.append(math.hypot(a.value * b.std_error, b.value * a.std_error))
    return row, err


def solve_kappa(n, test_pairs, rng=None, N=DEFAULT_SAMPLES, N_basis=20_000, max_condition=1e6):
    """Least-squares constants of the principal kinematic formula.

    Returns the fitted :class:`~hermval.estimators.ConstantFit` and the
    fitted regressor (for held-out prediction).
    """
    if n != 2:
        raise ValueError("the kinematic constants are supported at n = 2")
    indices = kappa_indices(n)
    if len(test_pairs) < 1.5 * len(indices):
        raise ValueError(f"need at least {math.ceil(1.5 * len(indices))} pairs for "
                         f"{len(indices)} unknowns, got {len(test_pairs)}")
    stream = as_stream(rng)
    J = ComplexStructure(n)
    cache = BasisCache(n, stream.child(0), N_basis)
    X, Xe, y, ye = [], [], [], []
    for i, (K1, K2) in enumerate(test_pairs):
        row, err = _design_row(cache, indices, K1, K2)
        lhs = principal_kinematic_lhs(K1, K2, J, stream.child(1).child(i), N)
        X.append(row)
        Xe.append(err)
        y.append(lhs.value)
        ye.append(lhs.std_error)
    reg = ConstantFitRegressor(max_condition=max_condition).fit(
        np.array(X), np.array(y), np.array(ye), np.array(Xe))
    fit = reg.to_constant_fit(indices, n=n, rows=len(y))
    return fit, reg, cache


def predict_kappa_pair(reg, cache, K1, K2, n=2):
    row, err = _design_row(cache, kappa_indices(n), K1, K2)
    return float(reg.predict([row])[0]), float(reg.predict_err([row], [err])[0])


# -- Lagrangian Crofton formula and the C^2 identities --------------------

def _projection_mean(K, frames_fn, N, stream, j):
    def draw(sub, size):
        return projected_intrinsic_volumes(K, frames_fn(size, sub), j, sub.child(1))

    mean, err = mean_and_error(chunked_samples(draw, N, stream))
    return Estimate(mean, err, N, stream.seed)


def lagrangian_crofton_lhs(K, J=None, rng=None, N=DEFAULT_SAMPLES, method="reduced"):
    """``int chi(E cap K) dE`` over affine Lagrangian planes ``E = x + F``.

    ``"reduced"``: ``E_F vol_n(Pr_{F^perp} K)`` with exact projection
    volumes.  ``"direct"``: offsets ``x`` uniform in the bounding box of
    ``Pr_{F^perp} K`` and a nonemptiness test of the section.
    """
    J = _structure(K, J)
    stream = as_stream(rng)
    if K.is_empty or as_nonempty(K).is_empty:
        return Estimate(0.0, 0.0, 0, stream.seed)
    n = J.n
    if method == "reduced":
        return _projection_mean(
            K, lambda size, sub: complement_frames(lagrangian_frames(J, size, sub)), N, stream, n)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")

    def draw(sub, size):
        L = lagrangian_frames(J, size, sub)
        C = complement_frames(L)
        U = sub.generator.random((size, n))
        out = np.empty(size)
        for s in range(size):
            lo, hi = K.support_box(C[s])
            t = lo + (hi - lo) * U[s]
            w = float(np.prod(hi - lo))
            if isinstance(K, Parallel):
                hit = distances(Polytope(K.polytope.vertices @ C[s].T), t[None])[0] <= K.eps
            else:
                flat = AffineFlat(Subspace(L[s], 2 * n), t @ C[s], w)
                hit = not as_nonempty(section(K, flat)).is_empty
            out[s] = w * hit
        return out

    mean, err = mean_and_error(chunked_samples(draw, N, stream))
    return Estimate(mean, err, N, stream.seed)


def c2_phi(K, rng=None, N=DEFAULT_SAMPLES):
    """Mean projection area onto complex lines of ``C^2``."""
    J = ComplexStructure(2)
    return _projection_mean(K, lambda size, sub: complex_haar_frames(1, J, size, sub),
                            N, as_stream(rng), 2)


def c2_psi(K, rng=None, N=DEFAULT_SAMPLES):
    """Mean projection area onto Lagrangian planes of ``C^2``."""
    J = ComplexStructure(2)
    return _projection_mean(K, lambda size, sub: lagrangian_frames(J, size, sub),
                            N, as_stream(rng), 2)


def c2_phi_valuation(N=DEFAULT_SAMPLES, seed=0):
    return ValuationEvaluator("phi", 2, lambda K, s: c2_phi(K, s, N), seed, {"n": 2, "N": N})


def c2_psi_valuation(N=DEFAULT_SAMPLES, seed=0):
    return ValuationEvaluator("psi", 2, lambda K, s: c2_psi(K, s, N), seed, {"n": 2, "N": N})


def phi_klain_formula(t2):
    """Closed-form Klain function of ``phi`` at ``gr24_plane(t1, t2)`` (unit-area probe)."""
    return (t2[0] - 0.5) ** 2 + 0.25


def verify_phi_klain(rng=None, N=DEFAULT_SAMPLES, n_planes=20, sigma=3.0):
    """Monte-Carlo Klain function of ``phi`` against the closed form on random planes."""
    stream = as_stream(rng)
    f = klain_function(c2_phi_valuation(N), 4)
    rows = []
    for i in range(n_planes):
        t1 = sample_sphere_half(stream.child(i).child(0))
        t2 = sample_sphere_half(stream.child(i).child(1))
        est = f(gr24_plane(t1, t2), stream.child(i).child(2))
        want = float(phi_klain_formula(t2))
        dev = float(abs(est.value - want) / (est.std_error + 1e-12))
        rows.append({"t1": t1.tolist(), "t2": t2.tolist(), "value": est.value, "sigma": est.std_error,
                     "expected": want, "deviation_sigma": dev, "pass": bool(dev <= sigma)})
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


def verify_c2_identity(test_bodies, rng=None, N=DEFAULT_SAMPLES, sigma=3.0, max_rel_sigma=0.01):
    """``phi + 2 psi - V_2`` per body; pass iff within ``sigma`` and ``std / V_2 <= 1%``."""
    stream = as_stream(rng)
    rows = []
    for i, K in enumerate(test_bodies):
        phi = c2_phi(K, stream.child(i).child(0), N)
        psi = c2_psi(K, stream.child(i).child(1), N)
        v2 = intrinsic_volume(K, 2, stream.child(i).child(2))
        delta = phi + 2 * psi - v2
        floor = 1e-9 * max(1.0, abs(v2.value))
        dev = abs(delta.value) / (delta.std_error + floor)
        rel = delta.std_error / abs(v2.value)
        rows.append({"body": i, "phi": phi.value, "psi": psi.value, "V2": v2.value,
                     "delta": delta.value, "sigma": delta.std_error, "deviation_sigma": dev,
                     "relative_sigma": rel,
                     "pass": bool(abs(delta.value) <= sigma * delta.std_error + floor and rel <= max_rel_sigma)})
    return {"rows": rows, "pass": all(r["pass"] for r in rows)}


def solve_beta(n, test_bodies, rng=None, N=DEFAULT_SAMPLES, N_basis=None, max_condition=1e6):
    """Constants ``beta_p`` with ``LHS = sum_p beta_p U_{n,p}``."""
    if n != 2:
        raise ValueError("the Lagrangian constants are supported at n = 2")
    if len(test_bodies) < 4:
        raise ValueError("need at least 4 bodies")
    stream = as_stream(rng)
    J = ComplexStructure(n)
    ps = list(range(n // 2 + 1))
    cache = BasisCache(n, stream.child(0), N if N_basis is None else N_basis)
    X, Xe, y, ye = [], [], [], []
    for i, K in enumerate(test_bodies):
        vals = [cache(K, n, p) for p in ps]
        lhs = lagrangian_crofton_lhs(K, J, stream.child(1).child(i), N)
        X.append([v.value for v in vals])
        Xe.append([v.std_error for v in vals])
        y.append(lhs.value)
        ye.append(lhs.std_error)
    reg = ConstantFitRegressor(max_condition=max_condition).fit(
        np.array(X), np.array(y), np.array(ye), np.array(Xe))
    return reg.to_constant_fit(ps, n=n, rows=len(y)), reg, cache


# -- complex Crofton formula ----------------------------------------------

def _polygon_measure(a, c, j):
    """``V_j`` of the planar polygons ``{w : a_i . w <= c_i}`` (batched).

    ``a`` has shape ``(N, m, 2)``, ``c`` shape ``(N, m)``. Each constraint
    line is clipped by all the others; the surviving segment is its edge.
    """
    norm = np.linalg.norm(a, axis=2)
    ok = norm > 1e-12
    # a degenerate row 0 <= c with c < 0 empties the polygon
    dead = np.any(~ok & (c < 0), axis=1)
    safe = np.where(ok, norm, 1.0)
    an = a / safe[..., None]
    cn = np.where(ok, c / safe, np.inf)
    tang = np.stack([-an[..., 1], an[..., 0]], axis=-1)
    p0 = an * cn[..., None]
    p0 = np.where(ok[..., None], p0, 0.0)
    # s_ij = a_j . t_i,  r_ij = c_j - a_j . p_i
    s = np.einsum("nik,njk->nij", tang, an)
    r = cn[:, None, :] - np.einsum("nik,njk->nij", p0, an)
    valid = ok[:, None, :] & ~np.eye(a.shape[1], dtype=bool)[None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = r / s
    tiny = 1e-14
    upper = np.where(valid & (s > tiny), ratio, np.inf).min(axis=2)
    lower = np.where(valid & (s < -tiny), ratio, -np.inf).max(axis=2)
    blocked = np.any(valid & (np.abs(s) <= tiny) & (r < 0), axis=2)
    length = np.clip(upper - lower, 0.0, None)
    length = np.where(ok & ~blocked & np.isfinite(length), length, 0.0)
    length[dead] = 0.0
    if j == 1:
        return 0.5 * length.sum(axis=1)
    if j == 2:
        return 0.5 * np.where(ok, cn * length, 0.0).sum(axis=1)
    if j == 0:
        return (length.sum(axis=1) > 0).astype(float)
    raise ValueError("planar polygons have V_0, V_1, V_2 only")


def _crofton_batch(K, J, p, q, j, sub, size):
    """Single-sample nested estimate for ``size`` outer draws (final dim 2)."""
    Jq = ComplexStructure(q)
    G = complex_haar_frames(q, J, size, sub)              # (N, 2q, 2n)
    C = complement_frames(G)                               # (N, 2n-2q, 2n)
    Fz = complex_haar_frames(p, Jq, size, sub.child(1))    # (N, 2p, 2q)
    D = complement_frames(Fz)                              # (N, 2q-2p, 2q)
    u1 = sub.generator.random((size, C.shape[1]))
    u2 = sub.child(2).generator.random((size, Fz.shape[1]))
    if isinstance(K, Ball):
        c = K.center
        cc = np.einsum("nij,j->ni", C, c)
        lo, hi = cc - K.radius, cc + K.radius
        xs = lo + (hi - lo) * u1
        w1 = np.prod(hi - lo, axis=1)
        r1sq = K.radius ** 2 - ((cc - xs) ** 2).sum(axis=1)
        zc = np.einsum("nij,j->ni", G, c)                  # ball centre in E coords
        r1 = np.sqrt(np.clip(r1sq, 0.0, None))
        fc = np.einsum("nij,nj->ni", Fz, zc)
        lo2, hi2 = fc - r1[:, None], fc + r1[:, None]
        ys = lo2 + (hi2 - lo2) * u2
        w2 = np.prod(hi2 - lo2, axis=1)
        r2sq = r1sq - ((fc - ys) ** 2).sum(axis=1)
        r2 = np.sqrt(np.clip(r2sq, 0.0, None))
        hit = (r1sq > 0) & (r2sq > 0)
        val = {0: np.ones(size), 1: math.pi * r2, 2: math.pi * r2 ** 2}[j]
        return np.where(hit, w1 * w2 * val, 0.0)
    A, b = K.hrep
    V = K.vertices
    pc = np.einsum("vd,nkd->nvk", V, C)
    lo, hi = pc.min(axis=1), pc.max(axis=1)
    xs = lo + (hi - lo) * u1
    w1 = np.prod(hi - lo, axis=1)
    x = np.einsum("nk,nkd->nd", xs, C)
    AG = np.einsum("md,nkd->nmk", A, G)                    # (N, m, 2q)
    bE = b[None, :] - x @ A.T                              # (N, m)
    pv = np.einsum("vd,nkd->nvk", V, G)                    # vertices in E coords
    pf = np.einsum("nvk,njk->nvj", pv, Fz)
    lo2, hi2 = pf.min(axis=1), pf.max(axis=1)
    ys = lo2 + (hi2 - lo2) * u2
    w2 = np.prod(hi2 - lo2, axis=1)
    y = np.einsum("nk,nkd->nd", ys, Fz)
    a2 = np.einsum("nmk,njk->nmj", AG, D)
    c2 = bE - np.einsum("nmk,nk->nm", AG, y)
    return w1 * w2 * _polygon_measure(a2, c2, j)


def _crofton_generic(K, J, p, q, j, sub, size):
    n = J.n
    Jq = ComplexStructure(q)
    G = complex_haar_frames(q, J, size, sub)
    C = complement_frames(G)
    Fz = complex_haar_frames(p, Jq, size, sub.child(1))
    D = complement_frames(Fz)
    out = np.zeros(size)
    for s in range(size):
        lo, hi = K.support_box(C[s])
        x = lo + (hi - lo) * sub.child(2).child(s).generator.random(len(lo))
        w1 = float(np.prod(hi - lo))
        S = as_nonempty(section(K, AffineFlat(Subspace(G[s], 2 * n), x @ C[s], w1)))
        if S.is_empty:
            continue
        lo2, hi2 = S.support_box(Fz[s])
        y = lo2 + (hi2 - lo2) * sub.child(3).child(s).generator.random(len(lo2))
        w2 = float(np.prod(hi2 - lo2))
        T = as_nonempty(section(S, AffineFlat(Subspace(D[s], 2 * q), y @ Fz[s], w2)))
        out[s] = w1 * w2 * intrinsic_volume(T, j, sub.child(4).child(s)).value
    return out


def complex_crofton_lhs(K, k, p, q, J=None, rng=None, N=100_000):
    """``int U_{k,p}(K cap E) dE`` over affine complex ``q``-flats ``E``.

    One inner sample per outer flat: the flat's offset is uniform in the
    bounding box of ``Pr_{E^perp} K`` (weight: box volume), and inside the
    flat ``U_{k,p}`` is sampled through one complex ``p``-plane and one
    offset likewise.  The box of the inner offset is that of the projected
    body, a superset of the projected section.
    """
    J = _structure(K, J)
    n = J.n
    if not (0 < q < n and 0 < 2 * p < k < 2 * q):
        raise ValueError(f"need 0 < q < n and 0 < 2p < k < 2q; got k={k}, p={p}, q={q}, n={n}")
    stream = as_stream(rng)
    if K.is_empty or as_nonempty(K).is_empty:
        return Estimate(0.0, 0.0, 0, stream.seed)
    if isinstance(K, Parallel):
        raise ValueError("sections of parallel bodies are not supported")
    j = k - 2 * p
    fast = (2 * q - 2 * p == 2) and (isinstance(K, Ball) or K.is_full_dim)
    batch = _crofton_batch if fast else _crofton_generic

    def draw(sub, size):
        return batch(K, J, p, q, j, sub, size)

    mean, err = mean_and_error(chunked_samples(draw, N, stream, chunk=1024))
    return Estimate(mean, err, N, stream.seed, "nested")


def solve_gamma(n, k, p, q, test_bodies, rng=None, N=100_000, max_condition=1e6):
    """Constants ``gamma_r`` with ``LHS = sum_r gamma_r U_{k + 2(n-q), r}``.

    The summation index ``r`` is independent of the fixed ``p`` of the
    left-hand side; it runs over the independent range of ``U``.
    """
    if n != 3:
        raise ValueError("the complex Crofton constants are supported at n = 3")
    stream = as_stream(rng)
    J = ComplexStructure(n)
    kk = k + 2 * (n - q)
    rs = basis_range(kk, n)
    if len(test_bodies) < max(2, len(rs) + 1):
        raise ValueError("need more bodies than unknowns")
    cache = BasisCache(n, stream.child(0), 20_000)
    X, Xe, y, ye = [], [], [], []
    for i, K in enumerate(test_bodies):
        vals = [cache(K, kk, r) for r in rs]
        lhs = complex_crofton_lhs(K, k, p, q, J, stream.child(1).child(i), N)
        X.append([v.value for v in vals])
        Xe.append([v.std_error for v in vals])
        y.append(lhs.value)
        ye.append(lhs.std_error)
    reg = ConstantFitRegressor(max_condition=max_condition).fit(
        np.array(X), np.array(y), np.array(ye), np.array(Xe))
    return reg.to_constant_fit(rs, n=n, k=k, p=p, q=q, rows=len(y)), reg, cache


# -- standard test bodies -------------------------------------------------

def _slabs(n, long=3.0, short=0.4):
    """Boxes stretched along a complex line and along a Lagrangian plane."""
    cplx = [short] * (2 * n)
    cplx[0] = cplx[n] = long
    lag = [long] * n + [short] * n
    return box(cplx), box(lag)


def default_kappa_pairs(rng=None, n=2):
    """Training pairs and one held-out pair for :func:`solve_kappa`.

    Mixes random hull polytopes, complex-line and Lagrangian slabs, balls
    and a thickened segment, so the products ``U U`` are not degenerate.
    """
    stream = as_stream(rng)
    d = 2 * n
    P = [random_polytope(d, 2 * d, stream.child(i)) for i in range(5)]
    cs, ls = _slabs(n)
    B1 = Ball(np.zeros(d), 1.0)
    B2 = Ball(np.ones(d), 0.5)
    seg = Parallel(Polytope(np.array([np.zeros(d), 2.0 * np.eye(d)[0]])), 0.5)
    train = [(P[0], P[1]), (P[2], cs), (P[3], ls), (cs, ls), (cs, cs), (ls, ls),
             (P[0], B1), (B2, P[1]), (cs, B1), (ls, B2), (seg, B1), (B1, B2),
             (P[1], P[2]), (seg, B2)]
    return train, (P[4], P[0])


def default_beta_bodies(rng=None, n=2):
    """Training bodies and one held-out body for :func:`solve_beta`."""
    stream = as_stream(rng)
    d = 2 * n
    P = [random_polytope(d, 2 * d, stream.child(i)) for i in range(5)]
    cs, ls = _slabs(n)
    seg = Parallel(Polytope(np.array([np.zeros(d), 2.0 * np.eye(d)[0]])), 0.5)
    return P[:4] + [cs, ls, Ball(np.zeros(d), 1.0), seg], P[4]


def default_gamma_bodies(rng=None, n=3):
    stream = as_stream(rng)
    d = 2 * n
    P = [random_polytope(d, 2 * d, stream.child(i)) for i in range(4)]
    cs, ls = _slabs(n, 2.0, 0.5)
    return P[:3] + [Ball(np.zeros(d), 1.0), cs, ls, cube(d)], P[3]
