"""Convex bodies in R^d (d <= 6): polytopes, balls and outer parallel bodies.

Polytopes carry a V-representation, a derived H-representation and a
face lattice.  A polytope of lower affine dimension is handled inside its
affine hull; all face, angle and volume computations are intrinsic.
"""
from __future__ import annotations

import itertools
import math
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .geomlin import Subspace, as_stream

MAX_DIM = 6
TIGHT_TOL = 1e-9
DEDUP_TOL = 1e-8
MINKOWSKI_CAP = 10_000


class ConvergenceError(ArithmeticError):
    """An iterative numerical routine failed to converge."""


def ball_volume(m):
    """Volume of the unit ball in ``R^m`` by ``k_m = 2 pi / m * k_{m-2}``."""
    if m < 0:
        raise ValueError("negative dimension")
    vol = 1.0 if m % 2 == 0 else 2.0
    for j in range(2 if m % 2 == 0 else 3, m + 1, 2):
        vol *= 2.0 * math.pi / j
    return vol


def _affine_frame(points, tol):
    """Origin and orthonormal rows spanning the affine hull of ``points``."""
    origin = points.mean(axis=0)
    centered = points - origin
    if len(points) == 1:
        return origin, np.zeros((0, points.shape[1]))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(1.0, float(np.abs(points).max()))
    rank = int((s > tol * scale * max(1, len(points)) ** 0.5).sum())
    return origin, vt[:rank]


def _dedup(points, tol=DEDUP_TOL):
    keep = []
    for p in points:
        if not any(np.abs(p - q).max() <= tol for q in keep):
            keep.append(p)
    return np.array(keep)


def _polygon_area(pts):
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    p = pts[np.argsort(ang)]
    x, y = p[:, 0], p[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _local_volume(pts):
    """Volume of the convex hull of full-dimensional points in R^m."""
    m = pts.shape[1]
    if m == 0:
        return 1.0
    if m == 1:
        return float(pts.max() - pts.min())
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return 0.0
    if m == 2:
        return _polygon_area(pts[hull.vertices])
    return float(hull.volume)


class Face:
    """A face of a polytope: vertex indices plus its linear direction."""

    def __init__(self, polytope, mask, dim):
        self.polytope = polytope
        self.mask = mask
        self.dim = dim
        self.vertex_ids = tuple(i for i in range(polytope.n_vertices) if mask >> i & 1)

    @property
    def vertices(self):
        return self.polytope.vertices[list(self.vertex_ids)]

    @property
    def ref_point(self):
        return self.vertices[0]

    @cached_property
    def direction(self):
        pts = self.vertices
        if self.dim == 0:
            return Subspace(np.zeros((0, pts.shape[1])), pts.shape[1])
        _, _, vt = np.linalg.svd(pts - pts[0], full_matrices=False)
        return Subspace(vt[: self.dim], pts.shape[1])

    @cached_property
    def volume(self):
        if self.dim == 0:
            return 1.0
        pts = self.vertices
        return _local_volume(self.direction.coords(pts - pts[0]))

    @cached_property
    def facet_ids(self):
        """Indices of facets of the parent polytope containing this face."""
        P = self.polytope
        return tuple(i for i, m in enumerate(P._facet_masks) if m & self.mask == self.mask)

    def __repr__(self):
        return f"Face(dim={self.dim}, vertices={self.vertex_ids})"


class Body:
    """Common interface of convex bodies."""

    ambient_dim: int
    is_empty = False

    def support(self, u):
        raise NotImplementedError

    def support_many(self, U):
        return np.array([self.support(u) for u in np.atleast_2d(U)])

    def support_box(self, frame):
        """``(lo, hi)`` of the projection onto the rows of ``frame``."""
        frame = np.atleast_2d(frame)
        if frame.shape[0] == 0:
            return np.zeros(0), np.zeros(0)
        hi = self.support_many(frame)
        lo = -self.support_many(-frame)
        return lo, hi

    def translate(self, t):
        raise NotImplementedError

    def transform(self, matrix):
        """Image under a linear (orthogonal) map."""
        raise NotImplementedError

    def scale(self, lam):
        raise NotImplementedError


class Empty(Body):
    is_empty = True

    def __init__(self, ambient_dim):
        self.ambient_dim = int(ambient_dim)

    def support(self, u):
        return -math.inf

    def translate(self, t):
        return self

    def transform(self, matrix):
        return Empty(np.asarray(matrix).shape[0])

    def scale(self, lam):
        return self

    def to_json(self):
        return {"type": "empty", "ambient_dim": self.ambient_dim}

    def __repr__(self):
        return f"Empty({self.ambient_dim})"


class Ball(Body):
    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float).ravel()
        self.radius = float(radius)
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        self.ambient_dim = self.center.size

    def support(self, u):
        return float(np.dot(u, self.center) + self.radius * np.linalg.norm(u))

    def support_many(self, U):
        U = np.atleast_2d(U)
        return U @ self.center + self.radius * np.linalg.norm(U, axis=1)

    def translate(self, t):
        return Ball(self.center + t, self.radius)

    def transform(self, matrix):
        return Ball(np.asarray(matrix) @ self.center, self.radius)

    def scale(self, lam):
        return Ball(lam * self.center, lam * self.radius)

    def contains(self, X, tol=0.0):
        X = np.atleast_2d(X)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius + tol

    def to_json(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Ball(dim={self.ambient_dim}, r={self.radius:g})"


class Parallel(Body):
    """Outer parallel body ``P + eps D``."""

    def __init__(self, polytope, eps):
        if eps < 0:
            raise ValueError("parallel distance must be non-negative")
        self.polytope = polytope
        self.eps = float(eps)
        self.ambient_dim = polytope.ambient_dim

    def support(self, u):
        return self.polytope.support(u) + self.eps * float(np.linalg.norm(u))

    def support_many(self, U):
        U = np.atleast_2d(U)
        return self.polytope.support_many(U) + self.eps * np.linalg.norm(U, axis=1)

    def translate(self, t):
        return Parallel(self.polytope.translate(t), self.eps)

    def transform(self, matrix):
        return Parallel(self.polytope.transform(matrix), self.eps)

    def scale(self, lam):
        return Parallel(self.polytope.scale(lam), lam * self.eps)

    def to_json(self):
        return {"type": "parallel", "polytope": self.polytope.to_json(), "eps": self.eps}

    def __repr__(self):
        return f"Parallel({self.polytope!r}, eps={self.eps:g})"


class Polytope(Body):
    """Convex polytope from vertices, or lazily from halfspaces.

    Parameters
    ----------
    vertices : (m, d) array_like, optional
        Any finite point set; the hull is taken.
    halfspaces : tuple (A, b), optional
        ``A x <= b``.  Vertices are enumerated on demand.
    bound_points : (m, d) array_like, optional
        Points whose hull contains the polytope; used for support bounds of
        H-described polytopes without enumerating vertices.
    """

    def __init__(self, vertices=None, *, halfspaces=None, bound_points=None, ambient_dim=None):
        if vertices is None and halfspaces is None:
            raise ValueError("need vertices or halfspaces")
        if vertices is not None:
            pts = np.atleast_2d(np.asarray(vertices, dtype=float))
            if pts.size == 0:
                raise ValueError("empty vertex list; use Empty")
            self.ambient_dim = pts.shape[1]
            self._points = pts
            self._halfspaces = None
        else:
            A, b = halfspaces
            A = np.atleast_2d(np.asarray(A, dtype=float))
            self.ambient_dim = A.shape[1] if ambient_dim is None else ambient_dim
            self._points = None
            self._halfspaces = (A, np.asarray(b, dtype=float).ravel())
        if self.ambient_dim > MAX_DIM:
            raise ValueError(f"ambient dimension {self.ambient_dim} exceeds {MAX_DIM}")
        self._bound_points = None if bound_points is None else np.atleast_2d(bound_points)

    # -- representation --------------------------------------------------

    @cached_property
    def _scale(self):
        pts = self._points if self._points is not None else self._bound_points
        if pts is None:
            return 1.0
        return max(1.0, float(np.abs(pts).max()))

    @property
    def vertices(self):
        return self._hull_data["vertices"]

    @property
    def n_vertices(self):
        return len(self.vertices)

    def _enumerate_vertices(self):
        A, b = self._halfspaces
        d = self.ambient_dim
        norms = np.linalg.norm(A, axis=1)
        live = norms > 1e-12
        if np.any(b[~live] < -TIGHT_TOL):
            raise _EmptyPolytope
        A, b, norms = A[live], b[live], norms[live]
        if d == 0:
            return np.zeros((1, 0))
        A, b = A / norms[:, None], b / norms
        # Chebyshev centre: max r s.t. A x + r <= b
        c = np.zeros(d + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=np.hstack([A, np.ones((len(A), 1))]), b_ub=b,
                      bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status != 0 or res.x[-1] <= 1e-10:
            raise _EmptyPolytope
        center = res.x[:d]
        if d == 1:
            lo = max((bi / ai for ai, bi in zip(A[:, 0], b) if ai < 0), default=-math.inf)
            hi = min((bi / ai for ai, bi in zip(A[:, 0], b) if ai > 0), default=math.inf)
            return np.array([[lo], [hi]])
        hs = HalfspaceIntersection(np.hstack([A, -b[:, None]]), center)
        return _dedup(hs.intersections)

    @cached_property
    def _hull_data(self):
        if self._points is None:
            self._points = self._enumerate_vertices()
        pts = _dedup(self._points)
        tol = TIGHT_TOL * max(1.0, float(np.abs(pts).max()))
        origin, basis = _affine_frame(pts, TIGHT_TOL)
        m = basis.shape[0]
        local = (pts - origin) @ basis.T
        if m == 0:
            verts_local = local[:1]
            eqs = np.zeros((0, 1))
        elif m == 1:
            idx = [int(np.argmin(local[:, 0])), int(np.argmax(local[:, 0]))]
            verts_local = local[idx]
            eqs = np.array([[-1.0, -verts_local[0, 0]], [1.0, verts_local[1, 0]]])
        else:
            hull = ConvexHull(local)
            verts_local = local[np.sort(hull.vertices)]
            eqs = _merge_facets(hull.equations, tol)
            # Qhull reports n.x + off <= 0; store as n.x <= b
            eqs = np.hstack([eqs[:, :-1], -eqs[:, -1:]])
        vertices = origin + verts_local @ basis
        masks = []
        for row in eqs:
            on = np.abs(verts_local @ row[:-1] - row[-1]) <= tol
            masks.append(sum(1 << i for i in np.flatnonzero(on)))
        return {
            "vertices": vertices,
            "origin": origin,
            "basis": basis,
            "local": verts_local,
            "local_eqs": eqs,
            "masks": masks,
            "tol": tol,
        }

    @property
    def affine_dim(self):
        try:
            return self._hull_data["basis"].shape[0]
        except _EmptyPolytope:
            return -1

    @property
    def is_full_dim(self):
        return self.affine_dim == self.ambient_dim

    @cached_property
    def is_empty(self):
        if self._points is not None:
            return False
        try:
            self.vertices
        except _EmptyPolytope:
            return True
        return False

    @property
    def affine_hull(self):
        h = self._hull_data
        return h["origin"], Subspace(h["basis"], self.ambient_dim) if h["basis"].size else Subspace(np.zeros((0, self.ambient_dim)), self.ambient_dim)

    @property
    def halfspaces(self):
        """``(A, b)`` without forcing vertex enumeration."""
        if self._halfspaces is not None and "_hull_data" not in self.__dict__:
            return self._halfspaces
        return self.hrep

    @cached_property
    def hrep(self):
        """``(A, b)`` with unit rows: facets of the polytope within its affine hull,
        plus equality pairs for the orthogonal complement of the hull."""
        h = self._hull_data
        basis, origin = h["basis"], h["origin"]
        eqs = h["local_eqs"]
        A = eqs[:, :-1] @ basis if len(eqs) else np.zeros((0, self.ambient_dim))
        b = eqs[:, -1] + A @ origin if len(eqs) else np.zeros(0)
        if basis.shape[0] < self.ambient_dim:
            comp = Subspace(basis, self.ambient_dim).complement().frame if basis.size else np.eye(self.ambient_dim)
            off = comp @ origin
            A = np.vstack([A, comp, -comp])
            b = np.concatenate([b, off, -off])
        return A, b

    @property
    def facet_count(self):
        return len(self._facet_masks)

    @property
    def _facet_masks(self):
        return self._hull_data["masks"]

    # -- face lattice ------------------------------------------------------

    @cached_property
    def face_lattice(self):
        """Dict ``dim -> list[Face]`` including the polytope itself."""
        h = self._hull_data
        m = h["basis"].shape[0]
        nv = len(h["vertices"])
        full = (1 << nv) - 1
        lattice = {m: [Face(self, full, m)]}
        if m == 0:
            return lattice
        facets = list(dict.fromkeys(h["masks"]))
        found = set(facets)
        frontier = facets
        while frontier:
            new = []
            for a in frontier:
                for f in facets:
                    c = a & f
                    if c and c != a and c not in found:
                        found.add(c)
                        new.append(c)
            frontier = new
        local = h["local"]
        for mask in found:
            ids = [i for i in range(nv) if mask >> i & 1]
            if len(ids) == 1:
                dim = 0
            else:
                pts = local[ids] - local[ids[0]]
                s = np.linalg.svd(pts, compute_uv=False)
                dim = int((s > h["tol"] * 10).sum())
            lattice.setdefault(dim, []).append(Face(self, mask, dim))
        for dim in range(m + 1):
            lattice.setdefault(dim, [])
            lattice[dim].sort(key=lambda F: F.vertex_ids)
        return lattice

    def faces(self, j):
        m = self.affine_dim
        if not 0 <= j <= max(m, 0):
            raise ValueError(f"face dimension {j} out of range for a {m}-polytope")
        return self.face_lattice[j]

    def is_face(self, face):
        return any(F.mask == face.mask for F in self.face_lattice.get(face.dim, []))

    def f_vector(self):
        m = self.affine_dim
        return [len(self.face_lattice[j]) for j in range(m + 1)]

    def local_normals(self, face):
        """Outer unit normals (in affine-hull coordinates) of facets containing ``face``."""
        eqs = self._hull_data["local_eqs"]
        return eqs[list(face.facet_ids), :-1]

    # -- metric ------------------------------------------------------------

    @cached_property
    def volume(self):
        """Volume inside the affine hull (0-dim: 1)."""
        h = self._hull_data
        return _local_volume(h["local"])

    def support(self, u):
        return float(np.max(self._support_points() @ np.asarray(u, dtype=float)))

    def support_many(self, U):
        return (np.atleast_2d(U) @ self._support_points().T).max(axis=1)

    def _support_points(self):
        if self._points is None and self._bound_points is not None:
            return self._bound_points
        return self.vertices

    def contains(self, X, tol=None):
        A, b = self.hrep
        tol = self._hull_data["tol"] if tol is None else tol
        X = np.atleast_2d(X)
        return np.all(X @ A.T <= b + tol, axis=1)

    def translate(self, t):
        return Polytope(self.vertices + np.asarray(t, dtype=float))

    def transform(self, matrix):
        return Polytope(self.vertices @ np.asarray(matrix, dtype=float).T)

    def scale(self, lam):
        return Polytope(lam * self.vertices)

    def to_json(self):
        return {"type": "polytope", "vertices": self.vertices.tolist()}

    def __repr__(self):
        try:
            return f"Polytope(dim={self.affine_dim}/{self.ambient_dim}, vertices={self.n_vertices})"
        except _EmptyPolytope:
            return "Polytope(empty)"


class Parallelotope(Polytope):
    """``origin + sum t_i a_i`` with ``t in [0, 1]^m`` and independent ``a_i``.

    Intrinsic volumes have the closed form
    ``V_j = sum over j-subsets S of vol_j(parallelotope(a_S))``, and the
    same holds for every linear image with independent image generators,
    which gives fast exact projection paths.
    """

    def __init__(self, origin, generators):
        gens = np.atleast_2d(np.asarray(generators, dtype=float))
        origin = np.asarray(origin, dtype=float).ravel()
        if gens.shape[1] != origin.shape[0]:
            raise ValueError("generators and origin disagree on dimension")
        s = np.linalg.svd(gens, compute_uv=False)
        if gens.shape[0] > gens.shape[1] or s.min() <= 1e-12 * max(1.0, s.max()):
            raise ValueError("parallelotope generators must be linearly independent")
        m = gens.shape[0]
        combos = np.array(np.meshgrid(*[[0.0, 1.0]] * m, indexing="ij")).reshape(m, -1).T
        super().__init__(origin + combos @ gens)
        self.origin = origin
        self.generators = gens

    def translate(self, t):
        return Parallelotope(self.origin + np.asarray(t, dtype=float), self.generators)

    def transform(self, matrix):
        M = np.asarray(matrix, dtype=float)
        return Parallelotope(M @ self.origin, self.generators @ M.T)

    def scale(self, lam):
        if lam == 0:
            return Polytope(np.zeros((1, self.ambient_dim)))
        return Parallelotope(lam * self.origin, lam * self.generators)

    def intrinsic_volume(self, j):
        return float(parallelotope_iv(self.generators[None], j)[0])

    def to_json(self):
        return {"type": "parallelotope", "origin": self.origin.tolist(),
                "generators": self.generators.tolist()}


def parallelotope_iv(G, j):
    """``V_j`` of parallelotopes with generator rows ``G[s]`` (shape ``(N, m, d)``).

    Dependent image generators (a degenerate projection) give the
    subset formula applied as is, which is only exact while the
    generators stay independent; for ``j == m`` it is always exact.
    """
    G = np.asarray(G, dtype=float)
    m = G.shape[1]
    if j == 0:
        return np.ones(G.shape[0])
    if j > m:
        return np.zeros(G.shape[0])
    total = np.zeros(G.shape[0])
    for S in itertools.combinations(range(m), j):
        GS = G[:, list(S), :]
        det = np.linalg.det(GS @ GS.transpose(0, 2, 1))
        total += np.sqrt(np.maximum(det, 0.0))
    return total


class _EmptyPolytope(Exception):
    pass


def _merge_facets(equations, tol):
    """Distinct supporting hyperplanes among Qhull's triangulated facets."""
    out = []
    for eq in equations:
        if not any(np.abs(eq - o).max() <= 1e3 * tol for o in out):
            out.append(eq)
    return np.array(out)


def hull_hrep(vertices):
    """Polytope (minimal vertices, facets, face lattice) from a point set."""
    P = Polytope(vertices)
    P.vertices  # derive eagerly; raises on invalid input
    return P


def faces(P, j):
    return P.faces(j)


def volume(P):
    if P.is_empty:
        return 0.0
    return P.volume


def support(K, u):
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("support direction must be a unit vector")
    return K.support(u)


def project(K, E):
    """Orthogonal projection of ``K`` onto ``E``, in ``E``'s coordinates."""
    if K.ambient_dim != E.ambient_dim:
        raise ValueError("body and subspace dimensions differ")
    if isinstance(K, Empty):
        return Empty(E.dim)
    if isinstance(K, Ball):
        return Ball(E.coords(K.center), K.radius)
    if isinstance(K, Parallel):
        return Parallel(project(K.polytope, E), K.eps)
    if E.dim == 0:
        return Polytope(np.zeros((1, 0)))
    return Polytope(E.coords(K.vertices))


def section(K, flat):
    """``K`` intersected with an affine flat, in the flat's coordinates."""
    B = flat.direction.frame
    o = flat.offset
    m = flat.dim
    if isinstance(K, Empty):
        return Empty(m)
    if isinstance(K, Ball):
        rel = K.center - o
        inplane = B @ rel
        gap2 = float(rel @ rel - inplane @ inplane)
        if gap2 >= K.radius ** 2:
            return Empty(m)
        if m == 0:
            return Polytope(np.zeros((1, 0)))
        return Ball(inplane, math.sqrt(K.radius ** 2 - gap2))
    if isinstance(K, Parallel):
        raise ValueError("sections of parallel bodies are not supported")
    A, b = K.halfspaces
    A_loc = A @ B.T
    b_loc = b - A @ o
    if m == 0:
        return Polytope(np.zeros((1, 0))) if np.all(b_loc >= -TIGHT_TOL * K._scale) else Empty(0)
    bound = K._support_points()
    S = Polytope(halfspaces=(A_loc, b_loc), bound_points=(bound - o) @ B.T, ambient_dim=m)
    return S


def as_nonempty(K):
    """``K`` or an :class:`Empty` if ``K`` is an empty H-polytope."""
    if isinstance(K, Polytope) and K.is_empty:
        return Empty(K.ambient_dim)
    return K


# -- external angles -------------------------------------------------------

def _cone_solid_angle_3d(gens):
    """Normalised solid angle of the pointed cone spanned by unit 3-vectors."""
    axis = gens.mean(axis=0)
    axis /= np.linalg.norm(axis)
    ref = gens[0] - (gens[0] @ axis) * axis
    ref /= np.linalg.norm(ref)
    other = np.cross(axis, ref)
    ang = np.arctan2(gens @ other, gens @ ref)
    g = gens[np.argsort(ang)]
    total = 0.0
    a = g[0]
    for b, c in zip(g[1:-1], g[2:]):
        num = abs(float(a @ np.cross(b, c)))
        den = 1.0 + float(a @ b + b @ c + c @ a)
        total += 2.0 * math.atan2(num, den)
    return total / (4.0 * math.pi)


def external_angle_exact(P, F):
    """Exact external angle for codimension <= 3 inside the affine hull.

    Returns ``None`` when the codimension is larger.
    """
    m = P.affine_dim
    c = m - F.dim
    if c == 0:
        return 1.0
    if c == 1:
        return 0.5
    if c > 3:
        return None
    normals = P.local_normals(F)
    h = P._hull_data
    face_dir = F.direction.frame @ h["basis"].T if F.dim else np.zeros((0, m))
    comp = Subspace(face_dir, m).complement().frame if F.dim else np.eye(m)
    g = normals @ comp.T
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    if c == 2:
        # a ridge lies in exactly two facets
        cosang = float(np.clip(g[0] @ g[1], -1.0, 1.0))
        return math.acos(cosang) / (2.0 * math.pi)
    return _cone_solid_angle_3d(g)


def external_angle(P, F, rng, N=20_000):
    """Monte-Carlo external angle: fraction of random unit normals to ``F``
    (within the affine hull) whose support set is exactly ``F``."""
    from .intrinsic import Estimate  # intrinsic imports bodies

    if not P.is_face(F):
        raise ValueError("not a face of this polytope")
    stream = as_stream(rng)
    h = P._hull_data
    m = P.affine_dim
    local = h["local"]
    face_dir = F.direction.frame @ h["basis"].T if F.dim else np.zeros((0, m))
    comp = Subspace(face_dir, m).complement().frame if F.dim else np.eye(m)
    if comp.shape[0] == 0:
        return Estimate(1.0, 0.0, 0, stream.seed)
    U = stream.generator.standard_normal((N, comp.shape[0])) @ comp
    proj = U @ local.T  # N x V
    top = proj.max(axis=1, keepdims=True)
    scale = max(1.0, float(np.abs(local).max()))
    hit = np.abs(proj - top) <= TIGHT_TOL * scale * np.linalg.norm(U, axis=1, keepdims=True)
    want = np.zeros(len(local), dtype=bool)
    want[list(F.vertex_ids)] = True
    ok = np.all(hit == want[None, :], axis=1)
    p = ok.mean()
    return Estimate(float(p), float(math.sqrt(p * (1 - p) / N)), N, stream.seed)


def external_angle_mc_fast(P, F, gen, N):
    """Normal-cone membership estimate used for codimension >= 4."""
    h = P._hull_data
    m = P.affine_dim
    local = h["local"]
    face_dir = F.direction.frame @ h["basis"].T if F.dim else np.zeros((0, m))
    comp = Subspace(face_dir, m).complement().frame if F.dim else np.eye(m)
    U = gen.standard_normal((N, comp.shape[0])) @ comp
    ref = local[F.vertex_ids[0]]
    diffs = local - ref
    ok = np.all(U @ diffs.T <= TIGHT_TOL * max(1.0, float(np.abs(local).max())), axis=1)
    p = float(ok.mean())
    return p, math.sqrt(p * (1 - p) / N)


# -- distance --------------------------------------------------------------

def distance(P, x, tol=1e-9, max_iter=1000):
    """Euclidean distance from ``x`` to ``P`` by Wolfe's minimum-norm-point
    active-set method on the vertex set."""
    V = P.vertices - np.asarray(x, dtype=float)
    if P.contains(np.asarray(x, dtype=float)[None, :])[0]:
        return 0.0
    point = _wolfe_min_norm(V, tol, max_iter)
    return float(np.linalg.norm(point))


def _wolfe_min_norm(V, tol, max_iter):
    scale = max(1.0, float(np.abs(V).max()))
    j = int(np.argmin((V * V).sum(axis=1)))
    S = [j]
    lam = np.array([1.0])
    x = V[j].copy()
    for it in range(max_iter):
        scores = V @ x
        j = int(np.argmin(scores))
        if x @ x - scores[j] <= tol * scale * scale or j in S:
            return x
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            W = V[S]
            # affine minimiser over aff(W): solve [W W^T 1; 1^T 0]
            k = len(S)
            M = np.zeros((k + 1, k + 1))
            M[:k, :k] = W @ W.T
            M[:k, k] = 1.0
            M[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            mu = np.linalg.lstsq(M, rhs, rcond=None)[0][:k]
            if np.all(mu > tol):
                lam = mu
                x = mu @ W
                break
            neg = mu <= tol
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - mu), np.inf)
            theta = float(np.min(ratios[neg])) if np.any(neg) else 1.0
            theta = min(max(theta, 0.0), 1.0)
            lam = lam + theta * (mu - lam)
            keep = lam > tol
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep]
            lam /= lam.sum()
            x = lam @ V[S]
    raise ConvergenceError(f"min-norm-point did not converge in {max_iter} iterations "
                           f"(|x|={np.linalg.norm(x):.3g}, active={len(S)})")


def distances(P, X, return_dim=False):
    """Distances from many points to ``P`` (vectorised, exact).

    For each face the projection onto its affine hull is a candidate nearest
    point when it lies in ``P``; the smallest candidate distance wins.

    With ``return_dim`` also returns the dimension of the face whose
    relative interior holds the nearest point (``affine_dim`` for points of
    ``P``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    A, b = P.hrep
    tol = P._hull_data["tol"] * 10
    m = P.affine_dim
    inside = np.all(X @ A.T <= b + tol, axis=1)
    out = np.zeros(len(X))
    dims = np.full(len(X), m)
    Y = X[~inside]
    if not len(Y):
        return (out, dims) if return_dim else out
    best = np.full(len(Y), np.inf)
    bdim = np.full(len(Y), m)
    for dim in range(m if m == P.ambient_dim else m + 1):
        for F in P.face_lattice[dim]:
            o = F.ref_point
            R = Y - o
            if dim:
                B = F.direction.frame
                c = R @ B.T
                proj = o + c @ B
                d2 = (R * R).sum(axis=1) - (c * c).sum(axis=1)
                ok = np.all(proj @ A.T <= b + tol, axis=1)
            else:
                d2 = (R * R).sum(axis=1)
                ok = np.ones(len(Y), dtype=bool)
            upd = ok & (d2 < best)
            best[upd] = d2[upd]
            bdim[upd] = dim
    out[~inside] = np.sqrt(np.maximum(best, 0.0))
    dims[~inside] = bdim
    return (out, dims) if return_dim else out


def minkowski_sum_polytopes(P, Q, cap=MINKOWSKI_CAP):
    if P.ambient_dim != Q.ambient_dim:
        raise ValueError("polytopes live in different spaces")
    V, W = P.vertices, Q.vertices
    if len(V) * len(W) > cap:
        raise ValueError(f"{len(V) * len(W)} pairwise sums exceed the cap of {cap}; "
                         "use coarser bodies")
    pts = (V[:, None, :] + W[None, :, :]).reshape(-1, P.ambient_dim)
    return Polytope(pts)


def minkowski_sum(K1, K2):
    """Minkowski sum of polytopes / balls / parallel bodies."""
    def split(K):
        if isinstance(K, Ball):
            return Polytope(K.center[None, :]), K.radius
        if isinstance(K, Parallel):
            return K.polytope, K.eps
        return K, 0.0

    P1, e1 = split(K1)
    P2, e2 = split(K2)
    P = minkowski_sum_polytopes(P1, P2)
    eps = e1 + e2
    if eps == 0.0:
        return P
    if P.n_vertices == 1:
        return Ball(P.vertices[0], eps)
    return Parallel(P, eps)


# -- constructors and JSON -------------------------------------------------

def cube(d, side=1.0, center=None):
    origin = np.zeros(d) if center is None else np.asarray(center, dtype=float) - side / 2
    return Parallelotope(origin, side * np.eye(d))


def box(lengths):
    return Parallelotope(np.zeros(len(lengths)), np.diag(np.asarray(lengths, dtype=float)))


def unit_cube_in(E, origin=None):
    """Unit cube spanned by the frame of subspace ``E`` (the Klain probe)."""
    o = np.zeros(E.ambient_dim) if origin is None else np.asarray(origin, dtype=float)
    if E.dim == 0:
        return Polytope(o[None, :])
    return Parallelotope(o, E.frame)


def simplex(d):
    return Polytope(np.vstack([np.zeros(d), np.eye(d)]))


def cross_polytope(d, radius=1.0):
    return Polytope(np.vstack([radius * np.eye(d), -radius * np.eye(d)]))


def random_polytope(d, n_points, rng, scale=1.0):
    gen = as_stream(rng).generator
    return Polytope(scale * gen.standard_normal((n_points, d)))


def body_from_json(obj):
    """Parse the body JSON schema; raises ``ValueError`` naming bad fields."""
    if not isinstance(obj, dict):
        raise ValueError("body: expected a JSON object")
    kind = obj.get("type")
    try:
        if kind == "polytope":
            verts = obj["vertices"]
            arr = np.asarray(verts, dtype=float)
            if arr.ndim != 2 or arr.shape[0] == 0:
                raise ValueError("vertices: expected a non-empty list of equal-length points")
            return Polytope(arr)
        if kind == "parallelotope":
            for key in ("origin", "generators"):
                if key not in obj:
                    raise ValueError(f"{key}: missing")
            return Parallelotope(obj["origin"], obj["generators"])
        if kind == "ball":
            if "center" not in obj:
                raise ValueError("center: missing")
            if "radius" not in obj:
                raise ValueError("radius: missing")
            c = np.asarray(obj["center"], dtype=float)
            if c.ndim != 1:
                raise ValueError("center: expected a flat list of numbers")
            r = float(obj["radius"])
            if not r > 0:
                raise ValueError("radius: must be positive")
            return Ball(c, r)
        if kind == "parallel":
            if "polytope" not in obj:
                raise ValueError("polytope: missing")
            if "eps" not in obj:
                raise ValueError("eps: missing")
            P = body_from_json(obj["polytope"])
            if not isinstance(P, Polytope):
                raise ValueError("polytope: must be of type 'polytope'")
            eps = float(obj["eps"])
            if eps < 0:
                raise ValueError("eps: must be non-negative")
            return Parallel(P, eps)
    except KeyError as exc:
        raise ValueError(f"{exc.args[0]}: missing") from None
    except (TypeError,) as exc:
        raise ValueError(f"body: malformed numeric data ({exc})") from None
    raise ValueError(f"type: unknown body type {kind!r}")
