"""Frames, the fixed complex structure, angle cosines and Haar sampling.

Conventions
-----------
``R^{2n}`` is laid out as ``(x_1..x_n, y_1..y_n)`` with ``z_m = x_m + i y_m``
and ``J(x, y) = (-y, x)``.  A complex ``n x l`` matrix ``Z`` is realified
column by column as ``(Re z, Im z)`` and ``J(Re z, Im z) = (Re iz, Im iz)``.

The quaternion picture of ``C^2`` used by :func:`gr24_plane` takes the
complex structure to be right multiplication by ``i`` and writes
``h = z_1 + j z_2``.  For ``h = a + b i + c j + d k`` this gives
``z_1 = a + b i`` and ``z_2 = c - d i``, i.e. the isometry
``(a, b, c, d) -> (a, c, b, -d)`` into the block layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FRAME_TOL = 1e-10


class RandomStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Children are derived by extending the spawn key, so the draws of a
    child depend only on its key path and never on how many threads
    consume the parent.
    """

    def __init__(self, seed=0, stream_id=0, _key=None):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id)
        self._key = tuple(_key) if _key is not None else (self.stream_id,)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, index):
        return RandomStream(self.seed, self.stream_id, self._key + (int(index),))

    def children(self, count):
        return [self.child(i) for i in range(count)]

    # thin pass-throughs used all over the package
    def normal(self, *args, **kwargs):
        return self.generator.normal(*args, **kwargs)

    def uniform(self, *args, **kwargs):
        return self.generator.uniform(*args, **kwargs)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, key={self._key})"


def as_stream(rng):
    if isinstance(rng, RandomStream):
        return rng
    if rng is None:
        return RandomStream(0)
    return RandomStream(int(rng))


def _orthonormalize(vectors, tol=FRAME_TOL):
    """Rows of ``vectors`` -> orthonormal rows spanning the same space."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if vectors.shape[0] == 0:
        return vectors
    q, r = np.linalg.qr(vectors.T)
    diag = np.abs(np.diag(r))
    if diag.min() <= tol * max(1.0, diag.max()):
        raise ValueError("frame vectors are linearly dependent")
    return q.T


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of ``R^d`` carried by an orthonormal frame.

    ``frame`` has shape ``(dim, ambient_dim)``; each row is a basis vector.
    Frames that drift from orthonormality are re-orthonormalized on
    construction.
    """

    frame: np.ndarray
    ambient_dim: int = field(default=None)

    def __post_init__(self):
        frame = np.asarray(self.frame, dtype=float)
        if frame.ndim == 1:
            frame = frame.reshape(0, frame.shape[0]) if frame.size == 0 else frame[None, :]
        d = self.ambient_dim if self.ambient_dim is not None else frame.shape[1]
        if frame.shape[0] == 0:
            frame = np.zeros((0, d))
        if frame.shape[1] != d:
            raise ValueError(f"frame vectors have length {frame.shape[1]}, expected {d}")
        if frame.shape[0] > d:
            raise ValueError("more frame vectors than ambient dimensions")
        if frame.shape[0]:
            gram = frame @ frame.T
            if np.abs(gram - np.eye(frame.shape[0])).max() > FRAME_TOL:
                frame = _orthonormalize(frame)
        frame.setflags(write=False)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "ambient_dim", int(d))

    @property
    def dim(self):
        return self.frame.shape[0]

    @classmethod
    def span(cls, vectors, ambient_dim=None):
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        return cls(_orthonormalize(vectors), ambient_dim)

    @classmethod
    def full(cls, d):
        return cls(np.eye(d), d)

    @classmethod
    def coordinate(cls, indices, d):
        return cls(np.eye(d)[list(indices)], d)

    def projector(self):
        return self.frame.T @ self.frame

    def complement(self):
        d = self.ambient_dim
        if self.dim == 0:
            return Subspace(np.eye(d), d)
        if self.dim == d:
            return Subspace(np.zeros((0, d)), d)
        # null space of the frame; rows of vt beyond dim span the complement
        _, _, vt = np.linalg.svd(self.frame, full_matrices=True)
        return Subspace(vt[self.dim:], d)

    def coords(self, points):
        """Coordinates of ``points`` (rows) in this frame."""
        return np.asarray(points, dtype=float) @ self.frame.T

    def embed(self, coords):
        return np.asarray(coords, dtype=float) @ self.frame

    def transform(self, matrix):
        """Image under an orthogonal ``matrix``."""
        return Subspace(self.frame @ np.asarray(matrix, dtype=float).T, self.ambient_dim)

    def distance_to(self, points):
        """Euclidean distance of each point (row) from the subspace."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        resid = points - self.embed(self.coords(points))
        return np.linalg.norm(resid, axis=1)

    def to_json(self):
        return {"ambient_dim": self.ambient_dim, "dim": self.dim, "frame": self.frame.tolist()}

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


@dataclass(frozen=True, eq=False)
class AffineFlat:
    """``offset + direction`` with ``offset`` orthogonal to ``direction``.

    ``weight`` records the importance weight (bounding-box volume) when the
    flat was drawn by :func:`sample_affine_flat`.
    """

    direction: Subspace
    offset: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=float).reshape(self.direction.ambient_dim)
        # canonical representative: drop any component along the direction
        offset = offset - self.direction.embed(self.direction.coords(offset))
        offset.setflags(write=False)
        object.__setattr__(self, "offset", offset)

    @property
    def dim(self):
        return self.direction.dim

    @property
    def ambient_dim(self):
        return self.direction.ambient_dim

    def to_local(self, points):
        return self.direction.coords(np.asarray(points, dtype=float) - self.offset)

    def to_ambient(self, coords):
        return self.offset + self.direction.embed(coords)


class ComplexStructure:
    """Standard complex structure on ``R^{2n}``: ``J(x, y) = (-y, x)``."""

    def __init__(self, n):
        if n < 1:
            raise ValueError("complex dimension must be positive")
        self.n = int(n)
        eye = np.eye(self.n)
        zero = np.zeros((self.n, self.n))
        self.matrix = np.block([[zero, -eye], [eye, zero]])
        self.matrix.setflags(write=False)

    @property
    def dim(self):
        return 2 * self.n

    def apply(self, vectors):
        """Apply ``J`` to row vectors."""
        return np.asarray(vectors, dtype=float) @ self.matrix.T

    def realify_vectors(self, z):
        """Columns of complex ``z`` (n x m) -> real rows of length 2n."""
        z = np.asarray(z, dtype=complex).reshape(self.n, -1)
        return np.concatenate([z.real, z.imag], axis=0).T

    def realify_matrix(self, u):
        """Complex ``n x n`` matrix -> real ``2n x 2n`` matrix acting on rows' coordinates."""
        u = np.asarray(u, dtype=complex)
        return np.block([[u.real, -u.imag], [u.imag, u.real]])

    def is_invariant(self, space, tol=1e-9):
        return float(space.distance_to(self.apply(space.frame)).max(initial=0.0)) <= tol

    def __repr__(self):
        return f"ComplexStructure(n={self.n})"


def _check_stream(rng):
    return as_stream(rng).generator


def _haar_qr(gauss):
    """Orthonormal columns from a Gaussian matrix with the sign/phase of R fixed."""
    q, r = np.linalg.qr(gauss)
    diag = np.diag(r)
    phase = diag / np.abs(diag)
    return q * phase[None, :]


def sample_subspace(k, d, rng):
    """Haar-random ``k``-plane in ``R^d``."""
    if not 0 <= k <= d:
        raise ValueError(f"need 0 <= k <= d, got k={k}, d={d}")
    gen = _check_stream(rng)
    if k == 0:
        return Subspace(np.zeros((0, d)), d)
    q = _haar_qr(gen.standard_normal((d, k)))
    return Subspace(q.T, d)


def sample_orthogonal(d, rng):
    gen = _check_stream(rng)
    return _haar_qr(gen.standard_normal((d, d)))


def sample_unitary(n, rng):
    """Haar-random ``n x n`` unitary matrix."""
    gen = _check_stream(rng)
    z = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
    q = _haar_qr(z)
    if np.abs(q.conj().T @ q - np.eye(n)).max() > 1e-8:
        raise ArithmeticError("unitary sampling lost rank")
    return q


def complex_span(z, J):
    """Real ``2l``-plane spanned by the complex columns of ``z``.

    Frame order is ``(v_1..v_l, Jv_1..Jv_l)`` for a unitary basis ``v``,
    so flat coordinates inherit the block convention.
    """
    z = np.asarray(z, dtype=complex).reshape(J.n, -1)
    q, _ = np.linalg.qr(z)
    re = J.realify_vectors(q)
    return Subspace(np.concatenate([re, J.apply(re)], axis=0), J.dim)


def sample_complex_subspace(l, J, rng):
    """Haar-random complex ``l``-plane of ``C^n`` as a real ``2l``-plane."""
    if not 0 <= l <= J.n:
        raise ValueError(f"need 0 <= l <= n, got l={l}, n={J.n}")
    gen = _check_stream(rng)
    if l == 0:
        return Subspace(np.zeros((0, J.dim)), J.dim)
    z = gen.standard_normal((J.n, l)) + 1j * gen.standard_normal((J.n, l))
    q = _haar_qr(z)
    re = J.realify_vectors(q)
    return Subspace(np.concatenate([re, J.apply(re)], axis=0), J.dim)


def lagrangian_from_unitary(u, J):
    """``U(R^n_x)`` for a unitary ``u``."""
    return Subspace(J.realify_vectors(u), J.dim)


def sample_lagrangian(J, rng):
    return lagrangian_from_unitary(sample_unitary(J.n, rng), J)


def sample_affine_flat(direction_sampler, K, rng):
    """Random affine flat ``x + F^perp`` meeting the bounding box of ``Pr_F K``.

    ``direction_sampler(stream)`` returns ``F``; ``x`` is uniform in the
    axis-aligned box of the projection of ``K`` onto ``F`` (in ``F``'s
    frame) and the box volume is stored as ``flat.weight``.
    """
    if getattr(K, "is_empty", False):
        raise ValueError("cannot sample flats for an empty body")
    stream = as_stream(rng)
    F = direction_sampler(stream)
    lo, hi = K.support_box(F.frame)
    t = lo + (hi - lo) * stream.generator.random(F.dim)
    weight = float(np.prod(hi - lo)) if F.dim else 1.0
    return AffineFlat(F.complement(), F.embed(t), weight)


# --- batched samplers (frames as arrays of shape (size, k, d)) ------------

def haar_frames(k, d, size, rng):
    """``size`` Haar-random ``k``-planes of ``R^d`` as stacked frames."""
    if not 0 <= k <= d:
        raise ValueError(f"need 0 <= k <= d, got k={k}, d={d}")
    gen = _check_stream(rng)
    if k == 0:
        return np.zeros((size, 0, d))
    q, _ = np.linalg.qr(gen.standard_normal((size, d, k)))
    return q.transpose(0, 2, 1)


def _complex_gauss(gen, shape):
    return gen.standard_normal(shape) + 1j * gen.standard_normal(shape)


def _realify_batch(q, J):
    """Complex columns ``(size, n, l)`` -> real rows ``(size, l, 2n)``."""
    re = np.concatenate([q.real, q.imag], axis=1).transpose(0, 2, 1)
    return re


def complex_haar_frames(l, J, size, rng):
    """``size`` Haar-random complex ``l``-planes, rows ``(v, Jv)`` ordered."""
    if not 0 <= l <= J.n:
        raise ValueError(f"need 0 <= l <= n, got l={l}, n={J.n}")
    gen = _check_stream(rng)
    if l == 0:
        return np.zeros((size, 0, J.dim))
    q, _ = np.linalg.qr(_complex_gauss(gen, (size, J.n, l)))
    re = _realify_batch(q, J)
    return np.concatenate([re, re @ J.matrix.T], axis=1)


def lagrangian_frames(J, size, rng):
    """``size`` Haar-random Lagrangian ``n``-planes ``U(R^n_x)``."""
    gen = _check_stream(rng)
    q, r = np.linalg.qr(_complex_gauss(gen, (size, J.n, J.n)))
    diag = np.diagonal(r, axis1=1, axis2=2)
    q = q * (diag / np.abs(diag))[:, None, :]
    return _realify_batch(q, J)


def batch_abs_cos(A, B):
    """``|cos(A_s, B_s)|`` for frames with ``dim A <= dim B`` (broadcasting)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-2] > B.shape[-2]:
        raise ValueError("batch_abs_cos needs dim A <= dim B; take complements first")
    if A.shape[-2] == 0:
        return np.ones(np.broadcast_shapes(A.shape[:-2], B.shape[:-2]))
    M = A @ np.swapaxes(B, -1, -2)
    # product of singular values = sqrt(det M M^t), without the sqrt's
    # loss of accuracy near zero
    return np.clip(np.prod(np.linalg.svd(M, compute_uv=False), axis=-1), 0.0, 1.0)


def complement_frames(F):
    """Orthonormal complements of stacked frames ``(size, k, d)``."""
    F = np.asarray(F, dtype=float)
    k, d = F.shape[-2:]
    if k == 0:
        return np.broadcast_to(np.eye(d), F.shape[:-2] + (d, d)).copy()
    _, _, vt = np.linalg.svd(F, full_matrices=True)
    return vt[..., k:, :]


def cosine_angle(E, F):
    """``|cos(E, F)|``: projection distortion of volumes from E onto F."""
    if E.ambient_dim != F.ambient_dim:
        raise ValueError("subspaces live in different ambient spaces")
    if E.dim > F.dim:
        E, F = E.complement(), F.complement()
    if E.dim == 0:
        return 1.0
    sv = np.linalg.svd(E.frame @ F.frame.T, compute_uv=False)
    return float(min(1.0, np.prod(sv)))


def principal_angles(E, F):
    """Principal angles between equal-or-smaller ``E`` and ``F`` (radians)."""
    s = np.linalg.svd(E.frame @ F.frame.T, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


# --- quaternions ---------------------------------------------------------

def qmul(p, q):
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.array([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ])


def qconj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quaternion_to_block(h):
    """Isometry ``H -> R^4`` into the block layout (see module docstring)."""
    a, b, c, d = h
    return np.array([a, c, b, -d])


def hopf_point(q):
    """``q -> (1/2, 0, 0) + vec(q i q^-1) / 2`` on the radius-1/2 sphere."""
    v = qmul(qmul(q, np.array([0.0, 1.0, 0.0, 0.0])), qconj(q))
    return np.array([0.5, 0.0, 0.0]) + 0.5 * v[1:]


def hopf_lift(t, tol=1e-9):
    """Unit quaternion ``q`` with ``hopf_point(q) == t``."""
    t = np.asarray(t, dtype=float)
    u = 2.0 * (t - np.array([0.5, 0.0, 0.0]))
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"point {t} is not on the sphere of radius 1/2 about (1/2,0,0)")
    u = u / norm
    a = np.array([1.0, 0.0, 0.0])
    dot = float(a @ u)
    if dot < -1.0 + 1e-12:
        return np.array([0.0, 0.0, 1.0, 0.0])
    q = np.concatenate([[1.0 + dot], np.cross(a, u)])
    return q / np.linalg.norm(q)


E0_QUATERNION = (np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0, 0.0]))


def gr24_plane(t1, t2):
    """Oriented 2-plane of ``R^4 = H`` labelled by ``(t1, t2)`` in ``S^2 x S^2``.

    ``E_0 = span{1, i}`` sits at ``((1,0,0), (1,0,0))`` and ``(q_1, q_2)``
    acts by ``x -> q_1 x q_2^{-1}``.  In the block layout ``E_0`` is the
    first complex coordinate axis.
    """
    q1, q2 = hopf_lift(t1), hopf_lift(t2)
    q2inv = qconj(q2)
    vecs = [quaternion_to_block(qmul(qmul(q1, e), q2inv)) for e in E0_QUATERNION]
    return Subspace(np.array(vecs), 4)


def sample_sphere_half(rng, size=None):
    """Uniform points on the radius-1/2 sphere about ``(1/2, 0, 0)``."""
    gen = _check_stream(rng)
    shape = (3,) if size is None else (size, 3)
    g = gen.standard_normal(shape)
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    return np.array([0.5, 0.0, 0.0]) + 0.5 * g


def strichartz_hwv(E, J):
    """``det[A(k) A(k)^t]`` for a ``k``-plane, ``k`` even and ``k <= n``.

    Coordinates are taken in the ordered basis
    ``e_1..e_k, i e_1, -i e_2, i e_3, ..., -i e_k, ...``.
    """
    k = E.dim
    if k % 2 or k > J.n:
        raise ValueError(f"need even k <= n, got k={k}, n={J.n}")
    if E.ambient_dim != J.dim:
        raise ValueError("subspace and complex structure disagree on dimension")
    n = J.n
    X = E.frame.T  # 2n x k, columns are frame vectors
    signs = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    rows = np.concatenate([X[:k], signs[:, None] * X[n:n + k]], axis=0)
    A = rows[0::2] + 1j * rows[1::2]
    return complex(np.linalg.det(A @ A.T))
