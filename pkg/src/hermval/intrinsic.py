"""Intrinsic volumes by the face formula, with Steiner and Kubota oracles.

Normalisation: ``V_0 = chi`` (1 on non-empty convex bodies), ``V_d = vol``,
and ``V_k`` of a ``k``-dimensional body is its ``k``-volume, so that
``V_j(B^d_r) = C(d, j) k_d / k_{d-j} r^j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bodies import (
    Ball,
    ConvergenceError,
    Empty,
    Parallel,
    Parallelotope,
    Polytope,
    _local_volume,
    ball_volume,
    distances,
    external_angle_exact,
    external_angle_mc_fast,
)
from .geomlin import as_stream, sample_subspace
from .montecarlo import chunked_samples, mean_and_error

CONVENTION = "V0=chi;Haar=prob;dx=Lebesgue"
ANGLE_SAMPLES = 20_000


@dataclass(frozen=True)
class Estimate:
    """Monte-Carlo value with its standard error.

    ``samples == 0`` marks an exact result (``std_error == 0``).
    """

    value: float
    std_error: float = 0.0
    samples: int = 0
    seed: int = 0
    method: str | None = None

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be non-negative")

    @property
    def exact(self):
        return self.samples == 0

    def __float__(self):
        return float(self.value)

    def __add__(self, other):
        other = as_estimate(other)
        return Estimate(self.value + other.value, math.hypot(self.std_error, other.std_error),
                        max(self.samples, other.samples), self.seed)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_estimate(other)
        return Estimate(self.value - other.value, math.hypot(self.std_error, other.std_error),
                        max(self.samples, other.samples), self.seed)

    def __rsub__(self, other):
        return as_estimate(other) - self

    def __mul__(self, c):
        if isinstance(c, Estimate):
            raise TypeError("use product() for estimate times estimate")
        return Estimate(c * self.value, abs(c) * self.std_error, self.samples, self.seed)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def agrees_with(self, other, sigma=3.0, rel_floor=1e-9):
        """``|a - b| <= sigma * combined_error`` with a rounding floor."""
        other = as_estimate(other)
        diff = abs(self.value - other.value)
        err = math.hypot(self.std_error, other.std_error)
        floor = rel_floor * max(1.0, abs(self.value), abs(other.value))
        return diff <= sigma * err + floor

    def to_json(self):
        return {
            "value": self.value,
            "std_error": self.std_error,
            "samples": self.samples,
            "seed": self.seed,
            "convention": CONVENTION,
            **({"method": self.method} if self.method else {}),
        }


def as_estimate(x):
    return x if isinstance(x, Estimate) else Estimate(float(x))


def product(a, b):
    """Product of independent estimates (first-order error)."""
    a, b = as_estimate(a), as_estimate(b)
    err = math.hypot(a.value * b.std_error, b.value * a.std_error)
    return Estimate(a.value * b.value, err, max(a.samples, b.samples), a.seed)


def ratio(a, b):
    a, b = as_estimate(a), as_estimate(b)
    val = a.value / b.value
    err = abs(val) * math.hypot(a.std_error / a.value if a.value else 0.0, b.std_error / b.value)
    return Estimate(val, err, max(a.samples, b.samples), a.seed)


def ball_intrinsic_volume(d, j, r=1.0):
    """``V_j`` of a radius-``r`` ball in ``R^d``."""
    return math.comb(d, j) * ball_volume(d) / ball_volume(d - j) * r ** j


def steiner_coefficient(d, i, j):
    """Coefficient of ``eps^{j-i} V_i(K)`` in ``V_j(K + eps D)`` in ``R^d``."""
    return math.comb(d - i, j - i) * ball_volume(d - i) / ball_volume(d - j)


# -- face formula ----------------------------------------------------------

def _polytope_iv(P, j, stream, N):
    m = P.affine_dim
    if m < 0:
        return Estimate(0.0)
    if j > m:
        return Estimate(0.0)
    if j == m:
        return Estimate(P.volume)
    if j == 0:
        return Estimate(1.0)
    if isinstance(P, Parallelotope):
        return Estimate(P.intrinsic_volume(j))
    cache = P.__dict__.setdefault("_iv_cache", {})
    if j in cache:
        return cache[j]
    total, var, used = 0.0, 0.0, 0
    for idx, F in enumerate(P.faces(j)):
        gamma = external_angle_exact(P, F)
        if gamma is None:
            g, s = external_angle_mc_fast(P, F, stream.child(idx).generator, N)
            total += g * F.volume
            var += (s * F.volume) ** 2
            used = N
        else:
            total += gamma * F.volume
    est = Estimate(total, math.sqrt(var), used, stream.seed)
    if used == 0:
        cache[j] = est
    return est


def intrinsic_volume(K, j, rng=None, N=ANGLE_SAMPLES):
    """``V_j(K)`` as an :class:`Estimate`.

    Exact for balls, and for polytopes whenever every external angle needed
    has codimension at most 3; higher codimension angles are sampled.
    """
    d = K.ambient_dim
    if not 0 <= j <= d:
        raise ValueError(f"intrinsic volume index {j} outside 0..{d}")
    if isinstance(K, Empty) or K.is_empty:
        return Estimate(0.0)
    stream = as_stream(rng)
    if isinstance(K, Ball):
        return Estimate(ball_intrinsic_volume(d, j, K.radius))
    if isinstance(K, Parallel):
        total = Estimate(0.0)
        for i in range(j + 1):
            vi = _polytope_iv(K.polytope, i, stream.child(i), N)
            total = total + steiner_coefficient(d, i, j) * K.eps ** (j - i) * vi
        return total
    if isinstance(K, Polytope):
        return _polytope_iv(K, j, stream, N)
    raise TypeError(f"unsupported body {K!r}")


def intrinsic_volumes(K, rng=None, N=ANGLE_SAMPLES):
    return [intrinsic_volume(K, j, rng, N) for j in range(K.ambient_dim + 1)]


def body_volume(K):
    """Exact ``d``-volume (Steiner polynomial for parallel bodies)."""
    d = K.ambient_dim
    return float(intrinsic_volume(K, d).value)


# -- Steiner oracle --------------------------------------------------------

def chebyshev_nodes(count, lo, hi):
    k = np.arange(count)
    x = np.cos((2 * k + 1) * np.pi / (2 * count))
    return np.sort(lo + (hi - lo) * (x + 1) / 2)


def _sampling_region(P, center, radius, eps):
    """Smaller of the eps-expanded bounding box and the ball of radius
    ``radius + eps`` about ``center``; both contain ``P + eps D``."""
    d = P.ambient_dim
    lo = P.vertices.min(axis=0) - eps
    hi = P.vertices.max(axis=0) + eps
    vbox = float(np.prod(hi - lo))
    rb = radius + eps
    vball = ball_volume(d) * rb ** d
    if vbox <= vball:
        return (lambda g, m: lo + (hi - lo) * g.random((m, d))), vbox

    def ball(g, m):
        U = g.standard_normal((m, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        return center + U * (rb * g.random(m) ** (1.0 / d))[:, None]

    return ball, vball


def steiner_nodes(P, count=None, lo=0.05, hi=3.0):
    """Default eps nodes: Chebyshev points on ``[lo, hi]`` times the
    circumradius about the vertex centroid."""
    V = P.vertices
    s = float(np.linalg.norm(V - V.mean(axis=0), axis=1).max())
    return chebyshev_nodes(P.ambient_dim + 1 if count is None else count, lo * s, hi * s)


def steiner_oracle(P, rng=None, N=1_000_000, nodes=None, method="local", N_volume=None):
    """All ``V_j(P)`` from sampled volumes of parallel bodies ``P + eps D``.

    Parameters
    ----------
    P : Polytope
        Full-dimensional polytope.
    N : int
        Points spent on the parallel-body shells (split evenly over nodes).
    nodes : array_like, optional
        The eps values; defaults to :func:`steiner_nodes`.
    method : {"local", "fit"}
        ``"local"`` splits each hit of ``P + eps D`` by the dimension ``j``
        of the face nearest to it. Hits tied to ``j``-faces fill a region of
        volume ``k_{d-j} eps^{d-j} V_j(P)``, so every coefficient of the
        Steiner polynomial is read off directly and the node estimates are
        pooled by inverse variance. ``"fit"`` uses plain hit counts and a
        least-squares polynomial fit; it is kept for comparison but is far
        noisier for the low-order coefficients.
    N_volume : int, optional
        Points for the containment-only volume stratum (default ``2 N``).

    Returns
    -------
    list of Estimate
        ``V_0 .. V_d``.
    """
    d = P.ambient_dim
    if not P.is_full_dim:
        raise ValueError("Steiner oracle needs a full-dimensional polytope")
    stream = as_stream(rng)
    nodes = steiner_nodes(P) if nodes is None else np.asarray(nodes, dtype=float)
    if np.any(nodes <= 0):
        raise ValueError("eps nodes must be positive")
    if method == "fit":
        return _steiner_fit(P, stream, N, nodes)
    if method != "local":
        raise ValueError(f"unknown method {method!r}")
    V = P.vertices
    center = V.mean(axis=0)
    radius = float(np.linalg.norm(V - center, axis=1).max())
    n = max(1, N // len(nodes))
    per_scale, per_p = [], []
    for i, eps in enumerate(nodes):
        draw_pts, vol = _sampling_region(P, center, radius, eps)

        def draw(sub, m, draw_pts=draw_pts, eps=eps):
            dist, dim = distances(P, draw_pts(sub.generator, m), return_dim=True)
            near = dist <= eps
            return np.stack([(dim == j) & near for j in range(d)], axis=1)

        hits = chunked_samples(draw, n, stream.child(i), chunk=8192)
        per_p.append(hits.mean(axis=0))
        per_scale.append([vol / (ball_volume(d - j) * eps ** (d - j)) for j in range(d)])
    per_p = np.array(per_p)
    per_scale = np.array(per_scale)
    out = []
    for j in range(d):
        sc, p = per_scale[:, j], per_p[:, j]
        est = sc * p
        # variances from the pooled value, not the per-node counts, so a
        # node with no hits does not get infinite weight
        pp = np.clip(est.mean() / sc, 1e-12, 1.0)
        var = sc ** 2 * pp * (1 - pp) / n
        w = (1 / var) / (1 / var).sum()
        out.append(Estimate(float(w @ est), float(math.sqrt(w @ (var * w))), N, stream.seed))
    Nv = 2 * N if N_volume is None else N_volume
    draw_pts, vol = _sampling_region(P, center, radius, 0.0)
    inside = chunked_samples(lambda sub, m: P.contains(draw_pts(sub.generator, m)),
                             Nv, stream.child(len(nodes)), chunk=65536)
    p = float(inside.mean())
    out.append(Estimate(vol * p, vol * math.sqrt(p * (1 - p) / Nv), Nv, stream.seed))
    return out


def _steiner_fit(P, stream, N, nodes):
    d = P.ambient_dim
    X = np.vander(nodes, d + 1, increasing=True)
    cond = np.linalg.cond(X)
    if cond > 1e8:
        raise ConvergenceError(f"Steiner fit ill-conditioned (cond={cond:.3g}); use other eps nodes")
    V = P.vertices
    emax = nodes.max()
    lo = V.min(axis=0) - emax
    hi = V.max(axis=0) + emax
    box = float(np.prod(hi - lo))

    def draw(sub, m):
        dist = distances(P, lo + (hi - lo) * sub.generator.random((m, d)))
        return dist[:, None] <= nodes[None, :]

    p = chunked_samples(draw, N, stream, chunk=8192).mean(axis=0)
    y = box * p
    # nested hit sets: cov(1[a], 1[b]) = p_min - p_a p_b
    cov = box ** 2 * (np.minimum.outer(p, p) - np.outer(p, p)) / N
    if len(nodes) == d + 1:
        B = np.linalg.inv(X)
    else:
        Wi = np.linalg.pinv(cov)
        B = np.linalg.solve(X.T @ Wi @ X, X.T @ Wi)
    coef = B @ y
    coef_cov = B @ cov @ B.T
    out = []
    for j in range(d + 1):
        k = ball_volume(d - j)
        out.append(Estimate(float(coef[d - j] / k),
                            float(math.sqrt(max(coef_cov[d - j, d - j], 0.0)) / k), N, stream.seed))
    return out


# -- Kubota oracle ---------------------------------------------------------

@lru_cache(maxsize=None)
def kubota_constant(d, j):
    """``c(d, j)`` making ``c * E[vol_j(Pr_E B^d)]`` equal ``V_j(B^d)``.

    Every projection of the unit ball is a unit ``j``-ball, so the mean
    projection volume of the calibration body is ``k_j``.
    """
    return ball_intrinsic_volume(d, j) / ball_volume(j)


def projection_volume(K, E):
    """``vol_j(Pr_E K)`` for ``j = dim E``."""
    j = E.dim
    if j == 0:
        return 1.0
    if isinstance(K, Ball):
        return ball_volume(j) * K.radius ** j
    if isinstance(K, Parallel):
        Q = Polytope(E.coords(K.polytope.vertices))
        return body_volume(Parallel(Q, K.eps))
    return _local_volume(E.coords(K.vertices))


def kubota_oracle(K, j, rng=None, N=10_000):
    """``V_j(K) = c(d, j) * E_E vol_j(Pr_E K)`` over Haar ``E`` in ``Gr_j``."""
    d = K.ambient_dim
    if not 0 <= j <= d:
        raise ValueError(f"index {j} outside 0..{d}")
    stream = as_stream(rng)
    if isinstance(K, Empty) or K.is_empty:
        return Estimate(0.0, 0.0, N, stream.seed)
    c = kubota_constant(d, j)

    def draw(sub, m):
        if j == 1 and isinstance(K, Polytope):
            U = sub.generator.standard_normal((m, d))
            U /= np.linalg.norm(U, axis=1, keepdims=True)
            proj = U @ K.vertices.T
            return proj.max(axis=1) - proj.min(axis=1)
        return [projection_volume(K, sample_subspace(j, d, sub)) for _ in range(m)]

    vals = chunked_samples(draw, N, stream)
    mean, err = mean_and_error(vals)
    return Estimate(c * mean, c * err, N, stream.seed)
