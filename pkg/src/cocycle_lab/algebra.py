"""SU(2), su(2) and SO(3) arithmetic on unit quaternions.

Storage convention: a quaternion is ``[w, x, y, z]`` with the imaginary units
realized as

    I = diag(i, -i),   J = [[0, 1], [-1, 0]],   K = [[0, i], [i, 0]],

so ``q`` has matrix ``[[w + i x, y + i z], [-y + i z, w - i x]]``.  An su(2)
element ``{t, z}`` (matrix ``[[i t, z], [-conj(z), -i t]]``) is the pure
quaternion ``(0, t, Re z, Im z)``.  Batched arrays use a trailing axis of
length 4 (group) or 3 (algebra, ordered ``t, Re z, Im z``).

The projection to SO(3) reads the su(2) vector in the frame ``(Re z, Im z, t)``,
so the diagonal flow ``E_{1/2}(x)`` becomes the rotation by ``2 pi x`` about the
third axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class GapTooLarge(ValueError):
    """Consecutive samples of a loop are too far apart to lift reliably."""


# ---------------------------------------------------------------------------
# batched quaternion kernels


def qmul(p, q):
    """Hamilton product, renormalized to unit length."""
    return normalize(_raw_mul(p, q))


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def qinv(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qexp(v):
    """Exponential of su(2) vectors ``(..., 3)`` -> unit quaternions ``(..., 4)``."""
    v = np.asarray(v, dtype=float)
    w = np.linalg.norm(v, axis=-1, keepdims=True)
    # sin(w)/w with the w -> 0 limit
    sinc = np.sinc(w / np.pi)
    return np.concatenate([np.cos(w), sinc * v], axis=-1)


def qlog(q):
    """Principal logarithm; the angle returned lies in [0, pi]."""
    q = np.asarray(q, dtype=float)
    w = q[..., :1]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1, keepdims=True)
    ang = np.arctan2(s, w)
    scale = np.where(s > 1e-300, ang / np.where(s > 1e-300, s, 1.0), 1.0)
    return scale * v


def qpow(q, s):
    """Geodesic power ``exp(s * log q)`` (principal branch)."""
    return qexp(np.asarray(s)[..., None] * qlog(q))


def qdist(p, q):
    """Projective distance ``min(|p - q|, |p + q|)``: zero iff equal in SO(3)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return np.minimum(np.linalg.norm(p - q, axis=-1), np.linalg.norm(p + q, axis=-1))


def conjugate_vector(q, v):
    """``q v q^{-1}`` for su(2) vectors ``v``; the result is exactly norm preserving."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    zero = np.zeros(v.shape[:-1] + (1,))
    pure = np.concatenate([zero, v], axis=-1)
    return _raw_mul(_raw_mul(q, pure), qinv(q))[..., 1:]


def _raw_mul(p, q):
    pw, px, py, pz = np.moveaxis(np.asarray(p, dtype=float), -1, 0)
    qw, qx, qy, qz = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ], axis=-1)


def to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    m[..., 0, 0] = w + 1j * x
    m[..., 0, 1] = y + 1j * z
    m[..., 1, 0] = -y + 1j * z
    m[..., 1, 1] = w - 1j * x
    return m


def from_matrix(m):
    m = np.asarray(m, dtype=complex)
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    return normalize(np.stack([a.real, a.imag, b.real, b.imag], axis=-1))


def to_so3(q):
    """Rotation matrices of ``q`` in the frame ``(Re z, Im z, t)``."""
    q = np.asarray(q, dtype=float)
    w, c, a, b = np.moveaxis(q, -1, 0)
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (b * b + c * c)
    R[..., 0, 1] = 2 * (a * b - c * w)
    R[..., 0, 2] = 2 * (a * c + b * w)
    R[..., 1, 0] = 2 * (a * b + c * w)
    R[..., 1, 1] = 1 - 2 * (a * a + c * c)
    R[..., 1, 2] = 2 * (b * c - a * w)
    R[..., 2, 0] = 2 * (a * c - b * w)
    R[..., 2, 1] = 2 * (b * c + a * w)
    R[..., 2, 2] = 1 - 2 * (a * a + b * b)
    return R


def from_so3(R):
    """One of the two lifts of each rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    flat = R.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for i, m in enumerate(flat):
        tr = np.trace(m)
        cands = [tr, m[0, 0], m[1, 1], m[2, 2]]
        j = int(np.argmax(cands))
        if j == 0:
            s = 2.0 * np.sqrt(1.0 + tr)
            w = 0.25 * s
            a = (m[2, 1] - m[1, 2]) / s
            b = (m[0, 2] - m[2, 0]) / s
            c = (m[1, 0] - m[0, 1]) / s
        elif j == 1:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            w = (m[2, 1] - m[1, 2]) / s
            a = 0.25 * s
            b = (m[0, 1] + m[1, 0]) / s
            c = (m[0, 2] + m[2, 0]) / s
        elif j == 2:
            s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            w = (m[0, 2] - m[2, 0]) / s
            a = (m[0, 1] + m[1, 0]) / s
            b = 0.25 * s
            c = (m[1, 2] + m[2, 1]) / s
        else:
            s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            w = (m[1, 0] - m[0, 1]) / s
            a = (m[0, 2] + m[2, 0]) / s
            b = (m[1, 2] + m[2, 1]) / s
            c = 0.25 * s
        # frame (a, b, c) = (Re z, Im z, t) -> storage (w, t, Re z, Im z)
        out[i] = (w, c, a, b)
    return normalize(out.reshape(R.shape[:-2] + (4,)))


def e_half_q(x):
    """Batched ``E_{1/2}(x)`` quaternions."""
    return e_r_q(0.5, x)


def e_r_q(r, x):
    th = 2 * np.pi * r * np.asarray(x, dtype=float)
    z = np.zeros_like(th)
    return np.stack([np.cos(th), np.sin(th), z, z], axis=-1)


def align_signs(q, ref=None):
    """Flip signs so consecutive quaternions (or each vs ``ref``) have positive overlap."""
    q = np.array(q, dtype=float)
    if ref is not None:
        s = np.sign(np.sum(q * ref, axis=-1))
        s[s == 0] = 1.0
        return q * s[..., None]
    for i in range(1, len(q)):
        if np.dot(q[i], q[i - 1]) < 0:
            q[i] = -q[i]
    return q


def mean_rotation(q):
    """Chordal mean of a cloud of quaternions, sign-aligned to the first sample."""
    q = np.asarray(q, dtype=float).reshape(-1, 4)
    q = align_signs(q, ref=q[0])
    return normalize(q.mean(axis=0))


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class Su2Vector:
    t: float
    z: complex

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "z", complex(self.z))

    @classmethod
    def from_array(cls, v):
        return cls(v[0], complex(v[1], v[2]))

    def as_array(self):
        return np.array([self.t, self.z.real, self.z.imag])

    def norm(self):
        return float(np.hypot(self.t, abs(self.z)))

    def matrix(self):
        return np.array([[1j * self.t, self.z], [-np.conj(self.z), -1j * self.t]])

    def __add__(self, other):
        return Su2Vector(self.t + other.t, self.z + other.z)

    def __sub__(self, other):
        return Su2Vector(self.t - other.t, self.z - other.z)

    def __mul__(self, s):
        return Su2Vector(self.t * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self):
        return Su2Vector(-self.t, -self.z)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Unit quaternion; an element of SU(2) and, modulo sign, of SO(3)."""

    q: np.ndarray

    def __post_init__(self):
        q = normalize(np.array(self.q, dtype=float).reshape(4))
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_matrix(cls, m):
        return cls(from_matrix(m))

    def __mul__(self, other):
        return GroupElement(qmul(self.q, other.q))

    def __neg__(self):
        return GroupElement(-self.q)

    def inv(self):
        return GroupElement(qinv(self.q))

    def matrix(self):
        return to_matrix(self.q)

    def so3(self):
        return to_so3(self.q)

    def log(self):
        return Su2Vector.from_array(qlog(self.q))

    def distance(self, other):
        """SO(3) distance between lifts (sign-blind)."""
        return float(qdist(self.q, other.q))

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return bool(np.array_equal(self.q, other.q))

    def __hash__(self):
        return hash(self.q.tobytes())

    def __repr__(self):
        w, x, y, z = self.q
        return f"GroupElement([{w:.6g}, {x:.6g}, {y:.6g}, {z:.6g}])"


IDENTITY = GroupElement([1.0, 0.0, 0.0, 0.0])
MINUS_IDENTITY = GroupElement([-1.0, 0.0, 0.0, 0.0])
# [[0, 1], [-1, 0]]: anti-commutes with the E_{1/2} flow, FLIP^2 = -Id
FLIP = GroupElement([0.0, 0.0, 1.0, 0.0])


class HomotopyClass(str, Enum):
    TRIVIAL = "trivial"
    NONTRIVIAL = "nontrivial"


# ---------------------------------------------------------------------------
# operations


def su2_exp(H: Su2Vector) -> GroupElement:
    return GroupElement(qexp(H.as_array()))


def e_r(r, x) -> GroupElement:
    """``diag(exp(2 i pi r x), exp(-2 i pi r x))``; ``2r`` must be an integer."""
    if abs(2 * r - round(2 * r)) > 1e-12:
        raise ValueError(f"r must be a half-integer, got {r}")
    return GroupElement(e_r_q(r, x))


def ad_action(g: GroupElement, H: Su2Vector) -> Su2Vector:
    return Su2Vector.from_array(conjugate_vector(g.q, H.as_array()))


def cover_project(g: GroupElement) -> np.ndarray:
    return to_so3(g.q)


def path_lift(samples, max_gap=np.pi / 2, closure_tol=1e-8):
    """Continuous SU(2) lift of a closed loop of rotation matrices.

    Returns ``(lifts, homotopy_class)``; the class is nontrivial iff the lift
    ends at minus its starting point.
    """
    R = np.asarray(samples, dtype=float)
    if np.max(np.abs(R[0] - R[-1])) > closure_tol:
        raise ValueError("loop is not closed: first and last samples differ")
    q = from_so3(R)
    q = align_signs(q)
    overlap = np.abs(np.sum(q[1:] * q[:-1], axis=-1))
    gaps = 2 * np.arccos(np.clip(overlap, -1.0, 1.0))
    if gaps.size and gaps.max() > max_gap:
        i = int(np.argmax(gaps))
        raise GapTooLarge(f"rotation gap {gaps[i]:.3g} rad between samples {i} and {i + 1}")
    cls = HomotopyClass.NONTRIVIAL if np.dot(q[0], q[-1]) < 0 else HomotopyClass.TRIVIAL
    return [GroupElement(v) for v in q], cls
