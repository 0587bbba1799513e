"""Unitarily invariant valuations on C^n and their Klain functions.

Every Grassmannian here carries its probability Haar measure and every
affine flat family carries probability directions times Lebesgue
offsets.  Valuations are wrapped as :class:`ValuationEvaluator` closures
returning :class:`~hermval.intrinsic.Estimate` values.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .bodies import (
    Ball,
    ConvergenceError,
    Empty,
    Parallel,
    Parallelotope,
    Polytope,
    _local_volume,
    as_nonempty,
    ball_volume,
    external_angle_exact,
    external_angle_mc_fast,
    parallelotope_iv,
    section,
    unit_cube_in,
)
from .geomlin import (
    AffineFlat,
    ComplexStructure,
    Subspace,
    as_stream,
    batch_abs_cos,
    complement_frames,
    complex_haar_frames,
    haar_frames,
    sample_subspace,
)
from .intrinsic import (
    Estimate,
    ball_intrinsic_volume,
    chebyshev_nodes,
    intrinsic_volume,
    steiner_coefficient,
)
from .montecarlo import chunked_samples, mean_and_error

DEFAULT_SAMPLES = 4000


# -- evaluator types -------------------------------------------------------

class ValuationEvaluator:
    """A valuation of fixed degree as a closure ``Body -> Estimate``.

    Parameters
    ----------
    name : str
    degree : int
        Homogeneity degree ``k``.
    fn : callable
        ``fn(K, stream) -> Estimate``.
    seed : int
        Seed used when :meth:`evaluate` gets no stream.
    """

    def __init__(self, name, degree, fn, seed=0, params=None):
        self.name = name
        self.degree = degree
        self._fn = fn
        self.seed = seed
        self.params = dict(params or {})

    def evaluate(self, K, rng=None):
        stream = as_stream(self.seed if rng is None else rng)
        if K.is_empty or (isinstance(K, Polytope) and as_nonempty(K).is_empty):
            return Estimate(0.0, 0.0, 0, stream.seed)
        return self._fn(K, stream)

    __call__ = evaluate

    def to_json(self):
        return {"name": self.name, "degree": self.degree, **self.params}

    def __repr__(self):
        return f"ValuationEvaluator({self.name}, degree={self.degree})"


class KlainFunction:
    """Density ``f(E)`` of a degree-``k`` valuation restricted to ``k``-planes.

    ``fn(E, stream)`` returns an Estimate (or a float for exact functions).
    """

    def __init__(self, degree, ambient_dim, fn, name="klain", seed=0):
        self.degree = degree
        self.ambient_dim = ambient_dim
        self._fn = fn
        self.name = name
        self.seed = seed

    def __call__(self, E, rng=None):
        if E.dim != self.degree or E.ambient_dim != self.ambient_dim:
            raise ValueError(f"{self.name} lives on Gr_{self.degree}(R^{self.ambient_dim}), "
                             f"got a {E.dim}-plane of R^{E.ambient_dim}")
        out = self._fn(E, as_stream(self.seed if rng is None else rng))
        return out if isinstance(out, Estimate) else Estimate(float(out))

    def values(self, subspaces, rng=None):
        stream = as_stream(self.seed if rng is None else rng)
        return [self(E, stream.child(i)) for i, E in enumerate(subspaces)]

    def __repr__(self):
        return f"KlainFunction({self.name}, Gr_{self.degree}(R^{self.ambient_dim}))"


def _structure(K, J):
    if J is None:
        if K.ambient_dim % 2:
            raise ValueError("body must live in an even-dimensional space R^{2n}")
        return ComplexStructure(K.ambient_dim // 2)
    if J.dim != K.ambient_dim:
        raise ValueError(f"body lives in R^{K.ambient_dim}, complex structure in R^{J.dim}")
    return J


# -- projected intrinsic volumes ------------------------------------------

def planar_intrinsic_volume(points, j):
    """``V_j`` of the convex hull of planar points."""
    if j == 0:
        return 1.0
    try:
        hull = ConvexHull(points)
    except QhullError:
        # collinear or coincident points: a segment
        c = points - points.mean(axis=0)
        length = float(np.ptp(c @ np.linalg.svd(c, full_matrices=False)[2][0])) if len(c) > 1 else 0.0
        return length if j == 1 else 0.0
    return float(hull.volume) if j == 2 else 0.5 * float(hull.area)


def projected_intrinsic_volumes(K, F, j, stream=None):
    """``V_j(Pr_F K)`` for stacked frames ``F`` of shape ``(N, m, d)``.

    Balls, parallel bodies and parallelotopes are handled in closed form;
    polytopes go through exact projected volumes where possible and the
    face formula otherwise.
    """
    F = np.asarray(F, dtype=float)
    N, m, _ = F.shape
    if j == 0:
        return np.ones(N)
    if j > m:
        return np.zeros(N)
    if isinstance(K, Ball):
        return np.full(N, ball_intrinsic_volume(m, j, K.radius))
    if isinstance(K, Parallel):
        total = np.zeros(N)
        for i in range(j + 1):
            total += (steiner_coefficient(m, i, j) * K.eps ** (j - i)
                      * projected_intrinsic_volumes(K.polytope, F, i, stream))
        return total
    if isinstance(K, Parallelotope) and K.generators.shape[0] <= m:
        return parallelotope_iv(K.generators @ F.transpose(0, 2, 1), j)
    if not isinstance(K, Polytope):
        raise TypeError(f"unsupported body {K!r}")
    a = K.affine_dim
    if j > a:
        return np.zeros(N)
    if j == a:
        _, hull = K.affine_hull
        return K.volume * batch_abs_cos(hull.frame[None], F)
    coords = K.vertices @ F.transpose(0, 2, 1)
    if j == m:
        return np.array([_local_volume(c) for c in coords])
    if m == 2:
        return np.array([planar_intrinsic_volume(c, j) for c in coords])
    stream = as_stream(stream)
    return np.array([intrinsic_volume(Polytope(c), j, stream.child(s)).value
                     for s, c in enumerate(coords)])


# -- C_{k,l} ---------------------------------------------------------------

def eval_C(k, l, K, J=None, rng=None, N=DEFAULT_SAMPLES):
    """``C_{k,l}(K) = E_F V_k(Pr_F K)`` over Haar complex ``l``-planes ``F``.

    Parameters
    ----------
    k, l : int
        ``0 <= k <= 2n`` and ``k/2 <= l <= n``.
    K : Body
        Body in ``R^{2n}``.
    """
    J = _structure(K, J)
    n = J.n
    if not (0 <= k <= 2 * n and 2 * l >= k and l <= n):
        raise ValueError(f"C_(k,l) needs 0 <= k <= 2n and k/2 <= l <= n; got k={k}, l={l}, n={n}")
    stream = as_stream(rng)
    if isinstance(K, Empty) or K.is_empty:
        return Estimate(0.0, 0.0, 0, stream.seed)
    if k == 0:
        return Estimate(1.0, 0.0, 0, stream.seed)
    if l == n:
        # the complex Grassmannian is a single point
        est = intrinsic_volume(K, k, stream)
        return Estimate(est.value, est.std_error, est.samples, stream.seed)

    def draw(sub, size):
        F = complex_haar_frames(l, J, size, sub)
        return projected_intrinsic_volumes(K, F, k, sub.child(1))

    mean, err = mean_and_error(chunked_samples(draw, N, stream))
    return Estimate(mean, err, N, stream.seed)


# -- U_{k,p} ---------------------------------------------------------------

def eval_U(k, p, K, J=None, rng=None, N=DEFAULT_SAMPLES, method="auto"):
    """``U_{k,p}(K) = E_F int_{x in F} V_{k-2p}(K cap (x + F^perp)) dx``.

    ``F`` runs over Haar complex ``p``-planes.

    method : {"auto", "section", "projection", "fibre"}
        ``"section"`` samples ``x`` uniformly in the bounding box of
        ``Pr_F K`` and weights by the box volume. ``"projection"`` (only for
        ``k == 2p``) integrates the indicator exactly as
        ``vol_{2p}(Pr_F K)``. ``"fibre"`` (only for a polytope of affine
        dimension ``k``) uses the exact fibre integral
        ``vol_k(K) |cos(F, aff K)|``. ``"auto"`` picks the cheapest exact
        route available.
    """
    J = _structure(K, J)
    n = J.n
    if not 0 <= 2 * p <= k <= 2 * n:
        raise ValueError(f"U_(k,p) needs 0 <= 2p <= k <= 2n; got k={k}, p={p}, n={n}")
    stream = as_stream(rng)
    if isinstance(K, Empty) or K.is_empty:
        return Estimate(0.0, 0.0, 0, stream.seed)
    if p == 0:
        # a single flat: the whole space
        est = intrinsic_volume(K, k, stream)
        return Estimate(est.value, est.std_error, est.samples, stream.seed)
    lower_dim = isinstance(K, Polytope) and not isinstance(K, Parallel) and K.affine_dim == k
    if method == "auto":
        method = "projection" if k == 2 * p else "fibre" if lower_dim else "section"
    if method == "projection":
        if k != 2 * p:
            raise ValueError("the projection route needs k == 2p")

        def draw(sub, size):
            return projected_intrinsic_volumes(K, complex_haar_frames(p, J, size, sub), k)
    elif method == "fibre":
        if not lower_dim:
            raise ValueError("the fibre route needs a polytope of affine dimension k")
        _, hull = K.affine_hull
        vol = K.volume

        def draw(sub, size):
            return vol * batch_abs_cos(complex_haar_frames(p, J, size, sub), hull.frame[None])
    elif method == "section":
        if isinstance(K, Parallel):
            raise ValueError("sections of parallel bodies are not supported; "
                             "use k == 2p (projection route) or a polytope/ball")
        j = k - 2 * p

        def draw(sub, size):
            F = complex_haar_frames(p, J, size, sub)
            comp = complement_frames(F)
            U = sub.generator.random((size, 2 * p))
            out = np.empty(size)
            for s in range(size):
                lo, hi = K.support_box(F[s])
                x = lo + (hi - lo) * U[s]
                flat = AffineFlat(Subspace(comp[s], 2 * n), x @ F[s], float(np.prod(hi - lo)))
                S = as_nonempty(section(K, flat))
                out[s] = flat.weight * intrinsic_volume(S, j, sub.child(s)).value
            return out
    else:
        raise ValueError(f"unknown method {method!r}")
    mean, err = mean_and_error(chunked_samples(draw, N, stream))
    return Estimate(mean, err, N, stream.seed)


# -- evaluator factories ---------------------------------------------------

def intrinsic_valuation(k, N=20_000, seed=0):
    return ValuationEvaluator(f"V{k}", k, lambda K, s: intrinsic_volume(K, k, s, N), seed,
                              {"k": k})


def euler_characteristic(seed=0):
    return ValuationEvaluator("chi", 0, lambda K, s: Estimate(1.0, 0.0, 0, s.seed), seed)


def volume_valuation(d, seed=0):
    return ValuationEvaluator("vol", d, lambda K, s: intrinsic_volume(K, d, s), seed, {"d": d})


def C_valuation(k, l, n, N=DEFAULT_SAMPLES, seed=0):
    J = ComplexStructure(n)
    return ValuationEvaluator(f"C{k},{l}", k, lambda K, s: eval_C(k, l, K, J, s, N), seed,
                              {"k": k, "l": l, "n": n})


def U_valuation(k, p, n, N=DEFAULT_SAMPLES, seed=0, method="auto"):
    J = ComplexStructure(n)
    return ValuationEvaluator(f"U{k},{p}", k, lambda K, s: eval_U(k, p, K, J, s, N, method),
                              seed, {"k": k, "p": p, "n": n})


def kazarnovskii_valuation(n, method="exact", N=20_000, seed=0):
    J = ComplexStructure(n)
    return ValuationEvaluator("kaz", n, lambda K, s: kazarnovskii(K, J, s, N, method), seed,
                              {"n": n, "method": method})


# -- Klain functions -------------------------------------------------------

def klain_probe(E, probe="cube"):
    """Unit cube (volume 1) or standard simplex (volume 1/k!) inside ``E``."""
    if probe == "cube":
        return unit_cube_in(E), 1.0
    if probe == "simplex":
        pts = np.vstack([np.zeros(E.ambient_dim), E.frame])
        return Polytope(pts), 1.0 / math.factorial(E.dim)
    raise ValueError(f"unknown probe {probe!r}")


def klain_function(phi, ambient_dim=None, probe="cube"):
    """``f(E) = phi(Q_E) / vol_k(Q_E)`` for a probe ``Q_E`` in ``E``."""
    k = phi.degree
    d = ambient_dim if ambient_dim is not None else 2 * phi.params.get("n", 0) or phi.params.get("d")
    if not d:
        raise ValueError("ambient dimension unknown; pass ambient_dim")

    def fn(E, stream):
        Q, vol = klain_probe(E, probe)
        est = phi.evaluate(Q, stream)
        return est / vol

    return KlainFunction(k, d, fn, f"klain({phi.name})", phi.seed)


def duality(f):
    """Klain function of the dual valuation: ``E -> f(E^perp)``."""
    d = f.ambient_dim

    def fn(E, stream):
        return f(E.complement(), stream)

    return KlainFunction(d - f.degree, d, fn, f"dual({f.name})", f.seed)


def constant_klain(degree, ambient_dim, value=1.0, name="const"):
    return KlainFunction(degree, ambient_dim, lambda E, s: float(value), name)


# -- Lambda ----------------------------------------------------------------

def _enlarge(K, eps):
    if isinstance(K, Ball):
        return Ball(K.center, K.radius + eps)
    if isinstance(K, Parallel):
        return Parallel(K.polytope, K.eps + eps)
    if isinstance(K, Polytope):
        return Parallel(K, eps)
    raise TypeError(f"cannot form a parallel body of {K!r}")


def _body_scale(K):
    if isinstance(K, Ball):
        return K.radius
    P = K.polytope if isinstance(K, Parallel) else K
    V = P.vertices
    r = float(np.linalg.norm(V - V.mean(axis=0), axis=1).max())
    return r + (K.eps if isinstance(K, Parallel) else 0.0)


def lambda_op(phi, K, rng=None, eps_max=None, batches=8, degree=None):
    """``(Lambda phi)(K) = d/d eps phi(K + eps D)`` at ``eps = 0``.

    ``phi`` is evaluated at ``degree + 1`` Chebyshev nodes in
    ``(0, eps_max]`` with one shared stream per batch (common random
    numbers), a variance-weighted polynomial fit of degree ``degree``
    (default: the ambient dimension) gives the derivative, and the spread
    over independent batches gives the standard error.
    """
    d = K.ambient_dim
    deg = d if degree is None else degree
    stream = as_stream(rng)
    if eps_max is None:
        eps_max = 0.5 * max(_body_scale(K), 1.0)
    nodes = chebyshev_nodes(deg + 1, 0.0, eps_max)
    X = np.vander(nodes / eps_max, deg + 1, increasing=True)
    cond = np.linalg.cond(X)
    if cond > 1e8:
        raise ConvergenceError(f"Lambda fit ill-conditioned (cond={cond:.3g})")
    derivs, exact = [], True
    for b in range(batches):
        sub = stream.child(b)
        ests = [phi.evaluate(_enlarge(K, e), sub) for e in nodes]
        y = np.array([e.value for e in ests])
        s = np.array([e.std_error for e in ests])
        exact = exact and not np.any(s > 0)
        w = 1.0 / np.maximum(s, 1e-300) ** 2 if np.all(s > 0) else np.ones_like(y)
        sw = np.sqrt(w)
        coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
        derivs.append(coef[1] / eps_max)
        if exact:
            break
    if exact:
        return Estimate(float(derivs[0]), 0.0, 0, stream.seed)
    mean, err = mean_and_error(derivs)
    samples = sum(getattr(e, "samples", 0) for e in ests) * batches
    return Estimate(mean, err, samples, stream.seed)


def lambda_valuation(phi, batches=8, eps_max=None):
    if phi.degree < 1:
        raise ValueError("Lambda of a degree-0 valuation is zero; nothing to wrap")
    return ValuationEvaluator(f"Lambda({phi.name})", phi.degree - 1,
                              lambda K, s: lambda_op(phi, K, s, eps_max, batches), phi.seed,
                              {**phi.params, "lambda_of": phi.name})


# -- cosine transform ------------------------------------------------------

def cosine_transform(f, j, i, rng=None, N=DEFAULT_SAMPLES, ambient_dim=None, sampler=None):
    """``(T_{j,i} f)(F) = E_E |cos(E, F)| f(E)`` over Haar ``E`` in ``Gr_i``.

    Parameters
    ----------
    f : KlainFunction or callable
        Function on ``Gr_i``; a callable may return floats or Estimates.
        ``None`` means the constant 1.
    sampler : callable, optional
        ``sampler(size, stream) -> frames`` replacing Haar measure on
        ``Gr_i``; e.g. complex Grassmannian frames for the measure
        concentrated on complex planes.

    Returns
    -------
    KlainFunction
        Evaluator on ``Gr_j``.
    """
    d = ambient_dim if ambient_dim is not None else getattr(f, "ambient_dim", None)
    if d is None:
        raise ValueError("ambient dimension unknown; pass ambient_dim")
    if sampler is None:
        def sampler(size, stream):
            return haar_frames(i, d, size, stream)

    def fn(F, stream):
        def draw(sub, size):
            E = sampler(size, sub)
            if i <= j:
                c = batch_abs_cos(E, F.frame[None])
            else:
                c = batch_abs_cos(complement_frames(E), F.complement().frame[None])
            if f is None:
                return c
            vals = np.empty(size)
            for s in range(size):
                v = f(Subspace(E[s], d), sub.child(s)) if isinstance(f, KlainFunction) else f(Subspace(E[s], d))
                vals[s] = v.value if isinstance(v, Estimate) else float(v)
            return c * vals

        mean, err = mean_and_error(chunked_samples(draw, N, stream))
        return Estimate(mean, err, N, stream.seed)

    return KlainFunction(j, d, fn, f"T_{j},{i}({getattr(f, 'name', 'f')})")


# -- Kazarnovskii pseudovolume ---------------------------------------------

def kazarnovskii_face_factor(L, J, method="exact", rng=None, N=20_000):
    """``vol_{2n}(D_L + D_{JL})`` for a real ``n``-plane ``L`` (frame rows).

    The two unit ``n``-balls live in ``L`` and ``JL``; the sum is
    ``2n``-dimensional exactly when ``L`` is totally real, and has
    volume ``k_n^2 |det[L; JL]|``.  ``method="hit-or-miss"`` estimates the
    same volume by sampling the box ``[-2, 2]^{2n}`` and decomposing each
    point as ``a + b`` with ``a in L``, ``b in JL``.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n = J.n
    if L.shape != (n, 2 * n):
        raise ValueError(f"need an n-frame in R^{2 * n}, got shape {L.shape}")
    M = np.vstack([L, J.apply(L)])
    det = abs(float(np.linalg.det(M)))
    if method == "exact":
        return Estimate(ball_volume(n) ** 2 * det)
    if method != "hit-or-miss":
        raise ValueError(f"unknown method {method!r}")
    stream = as_stream(rng)
    if det <= 1e-8:
        # the sum lies in a proper subspace: zero 2n-volume
        return Estimate(0.0, 0.0, N, stream.seed)
    Minv = np.linalg.inv(M)

    def draw(sub, size):
        X = sub.generator.uniform(-2.0, 2.0, (size, 2 * n))
        coef = X @ Minv  # rows: (alpha, beta) with x = alpha L + beta JL
        return ((np.linalg.norm(coef[:, :n], axis=1) <= 1.0)
                & (np.linalg.norm(coef[:, n:], axis=1) <= 1.0))

    p, err = mean_and_error(chunked_samples(draw, N, stream))
    box = 4.0 ** (2 * n)
    return Estimate(box * p, box * err, N, stream.seed)


def kazarnovskii(P, J=None, rng=None, N=20_000, method="exact"):
    """Pseudovolume ``sum_F gamma(F) vol_n(F) f(F)`` over ``n``-faces (``kappa = 1``)."""
    J = _structure(P, J)
    stream = as_stream(rng)
    if isinstance(P, (Ball, Parallel)):
        raise TypeError("the face formula needs a polytope")
    P = as_nonempty(P)
    if P.is_empty or P.affine_dim < J.n:
        return Estimate(0.0, 0.0, 0, stream.seed)
    n = J.n
    angle_rng = stream.child(0)
    total, var, samples = 0.0, 0.0, 0
    for idx, F in enumerate(P.faces(n)):
        gamma = external_angle_exact(P, F)
        g_err = 0.0
        if gamma is None:
            gamma, g_err = external_angle_mc_fast(P, F, angle_rng.child(idx).generator, N)
            samples = N
        fac = kazarnovskii_face_factor(F.direction.frame, J, method, stream.child(1).child(idx), N)
        samples = max(samples, fac.samples)
        total += gamma * F.volume * fac.value
        var += (F.volume * fac.value * g_err) ** 2 + (gamma * F.volume * fac.std_error) ** 2
    return Estimate(total, math.sqrt(var), samples, stream.seed)


# -- verification reports --------------------------------------------------

def ratio_report(num, den, sigma=3.0):
    """Ratios of paired estimates with relative spread (CV = std / |mean|).

    Pairs whose denominator is consistent with zero are excluded.
    """
    ratios, errs, excluded = [], [], 0
    for a, b in zip(num, den):
        if abs(b.value) <= sigma * b.std_error or b.value == 0:
            excluded += 1
            continue
        r = a.value / b.value
        e = abs(r) * math.hypot(a.std_error / a.value if a.value else 0.0, b.std_error / b.value)
        ratios.append(r)
        errs.append(e)
    ratios = np.array(ratios)
    mean = float(ratios.mean()) if len(ratios) else float("nan")
    spread = float(ratios.std(ddof=1) / abs(mean)) if len(ratios) > 1 else 0.0
    noise = float(np.sqrt(np.mean(np.square(errs))) / abs(mean)) if len(errs) else 0.0
    return {"mean_ratio": mean, "spread": spread, "expected_spread": noise,
            "ratios": ratios.tolist(), "excluded": excluded}


def verify_lefschetz(k, l, n, rng=None, N=DEFAULT_SAMPLES, n_subspaces=20, batches=8):
    """Klain ratio of ``Lambda C_{k+1,l}`` to ``C_{k,l}`` on random ``k``-planes."""
    stream = as_stream(rng)
    d = 2 * n
    num = klain_function(lambda_valuation(C_valuation(k + 1, l, n, N), batches), d)
    den = klain_function(C_valuation(k, l, n, N), d)
    planes = [sample_subspace(k, d, stream.child(0).child(i)) for i in range(n_subspaces)]
    a = [num(E, stream.child(1).child(i)) for i, E in enumerate(planes)]
    b = [den(E, stream.child(2).child(i)) for i, E in enumerate(planes)]
    return {"k": k, "l": l, "n": n, **ratio_report(a, b)}


def verify_U_equals_dual_C(k, p, n, rng=None, N=DEFAULT_SAMPLES, n_subspaces=20):
    """Ratio ``klain(U_{k,p})(L) / klain(C_{2n-k,n-p})(L^perp)`` on random ``L``."""
    if not 0 <= 2 * p <= k <= 2 * n:
        raise ValueError(f"need 0 <= 2p <= k <= 2n; got k={k}, p={p}, n={n}")
    stream = as_stream(rng)
    d = 2 * n
    fU = klain_function(U_valuation(k, p, n, N), d)
    fC = klain_function(C_valuation(d - k, n - p, n, N), d)
    planes = [sample_subspace(k, d, stream.child(0).child(i)) for i in range(n_subspaces)]
    a = [fU(L, stream.child(1).child(i)) for i, L in enumerate(planes)]
    b = [fC(L.complement(), stream.child(2).child(i)) for i, L in enumerate(planes)]
    return {"k": k, "p": p, "n": n, **ratio_report(a, b)}


def basis_range(k, n, paper_range=False):
    """Admissible ``p`` for ``U_{k,p}``: ``p <= min(k, 2n-k)/2`` (or ``k/2``)."""
    top = k // 2 if paper_range else min(k, 2 * n - k) // 2
    return list(range(top + 1))


def gram_report(k, n, rng=None, N=DEFAULT_SAMPLES, n_subspaces=40, paper_range=False, sigma=3.0):
    """Numerical rank of the Klain functions of ``{U_{k,p}}`` at random planes.

    Singular values above ``sigma * ||noise||_F`` (the Frobenius norm of the
    matrix of standard errors) are retained; ``gap`` is the smallest
    retained value over the larger of the noise floor and the largest
    discarded value.
    """
    stream = as_stream(rng)
    d = 2 * n
    ps = basis_range(k, n, paper_range)
    planes = [sample_subspace(k, d, stream.child(0).child(i)) for i in range(n_subspaces)]
    M = np.zeros((n_subspaces, len(ps)))
    S = np.zeros_like(M)
    for c, p in enumerate(ps):
        f = klain_function(U_valuation(k, p, n, N), d)
        for r, L in enumerate(planes):
            est = f(L, stream.child(1 + c).child(r))
            M[r, c], S[r, c] = est.value, est.std_error
    sv = np.linalg.svd(M, compute_uv=False)
    floor = sigma * float(np.linalg.norm(S))
    rank = int(np.sum(sv > floor))
    expected = 1 + min(k // 2, (2 * n - k) // 2)
    kept = sv[rank - 1] if rank else 0.0
    dropped = sv[rank] if rank < len(sv) else 0.0
    denom = max(floor, dropped)
    # exact Klain values with nothing discarded: the gap is unbounded
    gap = 0.0 if not rank else float(kept / denom) if denom > 0 else math.inf
    return {"k": k, "n": n, "p_values": ps, "singular_values": sv.tolist(), "noise_floor": floor,
            "rank": rank, "expected_rank": expected, "gap": gap}


def kazarnovskii_span(n, rng=None, N=DEFAULT_SAMPLES, n_subspaces=40):
    """Fit ``klain(P) ~ sum_l alpha_l klain(C_{n,l})`` over ``n/2 <= l <= n``.

    Returns the coefficients (under ``kappa = 1``) and the relative
    least-squares residual.
    """
    stream = as_stream(rng)
    d = 2 * n
    ls = list(range(math.ceil(n / 2), n + 1))
    planes = [sample_subspace(n, d, stream.child(0).child(i)) for i in range(n_subspaces)]
    fk = klain_function(kazarnovskii_valuation(n), d)
    y = np.array([fk(E, stream.child(1).child(i)).value for i, E in enumerate(planes)])
    X = np.zeros((n_subspaces, len(ls)))
    for c, l in enumerate(ls):
        f = klain_function(C_valuation(n, l, n, N), d)
        X[:, c] = [f(E, stream.child(2 + c).child(i)).value for i, E in enumerate(planes)]
    alpha = np.linalg.lstsq(X, y, rcond=None)[0]
    residual = float(np.linalg.norm(y - X @ alpha) / np.linalg.norm(y))
    return {"n": n, "l_values": ls, "alpha": alpha.tolist(), "residual": residual,
            "condition": float(np.linalg.cond(X / np.linalg.norm(X, axis=0)))}
