"""Z^2-actions, unimodular base change and the two-periodic reduction pipeline.

An action is a pair of commuting cocycles ``(b1, A1), (b2, A2)`` over the real
line.  Frequencies are tracked by integer coordinates in the frame ``(1, alpha)``
so base changes act on them exactly.  The word ``Phi1^p Phi2^q`` has generator
``A1_p(x + q b2) A2_q(x)`` and frequency ``p b1 + q b2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import (HomotopyClass, align_signs, e_half_q, qdist, qexp, qinv, qlog, qmul,
                      qpow)
from .arithmetic import PreconditionError, check_dc_tilde, continued_fraction
from .cocycle import Cocycle, degree_estimate, homotopy_class, iterate
from .reduction import distance_to_constant, reduce_near_constant

DEFECT_GRID = 64
ACCEPT_DEFECT = 1e-8
NORMALIZED_TOL = 1e-7


class NotUnimodular(ValueError):
    pass


class SeamMatchFailed(ArithmeticError):
    pass


class PeriodicityCheckFailed(ArithmeticError):
    pass


class PipelineError(Exception):
    """A failure inside :func:`two_periodic_pipeline`, tagged with its stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage, self.cause = stage, cause

    @property
    def is_precondition(self):
        return isinstance(self.cause, PreconditionError)


def _identity(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape + (4,))
    out[..., 0] = 1.0
    return out


# ---------------------------------------------------------------------------
# actions


@dataclass(frozen=True, eq=False)
class Z2Action:
    first: Cocycle
    second: Cocycle
    alpha: float
    coords: tuple = ((1, 0), (0, 1))  # frequencies as (c0, c1) with b = c0 + c1 alpha
    commutation_defect: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(tuple(int(v) for v in r) for r in self.coords))
        object.__setattr__(self, "commutation_defect", _defect(self.first, self.second))

    @property
    def frequencies(self):
        return tuple(c0 + c1 * self.alpha for c0, c1 in self.coords)

    def to_dict(self):
        return {"alpha": self.alpha, "coords": [list(r) for r in self.coords],
                "frequencies": list(self.frequencies),
                "commutation_defect": self.commutation_defect}


def _defect(c1: Cocycle, c2: Cocycle, grid=DEFECT_GRID):
    x = np.arange(grid) / grid
    lhs = qmul(c1(x + c2.freq), c2(x))
    rhs = qmul(c2(x + c1.freq), c1(x))
    return float(np.max(qdist(lhs, rhs)))


def make_action(c: Cocycle) -> Z2Action:
    """``((1, Id), c)`` for a 1-periodic ``c`` over ``alpha``."""
    if c.period != 1:
        raise PreconditionError("make_action needs a 1-periodic generator")
    unit = Cocycle(1.0, _identity, 1, "Id")
    return Z2Action(unit, c, c.freq, ((1, 0), (0, 1)))


def word(a: Z2Action, p: int, q: int) -> Cocycle:
    c1, c2 = a.first, a.second

    def gen(x):
        x = np.asarray(x, dtype=float)
        return qmul(iterate(c1, p, x + q * c2.freq), iterate(c2, q, x))
    freq = p * c1.freq + q * c2.freq
    return Cocycle(freq, gen, None, f"w({p},{q})")


def cf_matrix(alpha):
    a = continued_fraction(alpha, 1).partial_quotients[0]
    return np.array([[a, 1], [1, 0]], dtype=int)


def _require_commuting(a: Z2Action):
    if a.commutation_defect > ACCEPT_DEFECT:
        raise PreconditionError(f"generators do not commute: defect {a.commutation_defect:.2e}")


def _integer_inverse(M):
    M = np.asarray(M)
    if M.shape != (2, 2) or not np.issubdtype(M.dtype, np.integer):
        raise NotUnimodular("base change needs a 2x2 integer matrix")
    det = int(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    if abs(det) != 1:
        raise NotUnimodular(f"det = {det}")
    return det * np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]], dtype=int)


def base_change(a: Z2Action, M) -> Z2Action:
    """Act by ``M``: the new generators are the words with exponent rows ``M^{-1}``.

    With ``M = [[a, 1], [1, 0]]`` this sends ``((1, Id), (alpha, A))`` to
    ``((alpha, A), (1 - a alpha, A_{-a}))``.  No change of scale is applied.
    """
    r = _integer_inverse(M)
    _require_commuting(a)
    coords = np.asarray(a.coords)
    new_coords = r @ coords
    first = word(a, int(r[0, 0]), int(r[0, 1]))
    second = word(a, int(r[1, 0]), int(r[1, 1]))
    return Z2Action(first, second, a.alpha, tuple(map(tuple, new_coords)))


def conjugate_action(a: Z2Action, B) -> Z2Action:
    """Conjugate both generators by the line map ``B``."""
    def conj(c):
        def gen(x):
            x = np.asarray(x, dtype=float)
            return qmul(qmul(B(x + c.freq), c(x)), qinv(B(x)))
        return Cocycle(c.freq, gen, None, f"B.{c.label}")
    return Z2Action(conj(a.first), conj(a.second), a.alpha, a.coords)


# ---------------------------------------------------------------------------
# normalizer


@dataclass(frozen=True, eq=False)
class RealLineMap:
    """A map ``R -> SU(2)`` sampled on ``[0, length]``; evaluation is exact everywhere."""
    length: float
    step: float
    samples: np.ndarray = field(repr=False)
    evaluator: Callable = field(repr=False)

    @classmethod
    def sample(cls, fn, length, step):
        n = int(math.ceil(length / step)) + 1
        return cls(float(length), float(step), fn(step * np.arange(n)), fn)

    def __call__(self, x):
        return self.evaluator(np.asarray(x, dtype=float))


def smooth_transition(t, order=None):
    """Flat-ended step ``[0, 1] -> [0, 1]``.

    ``order=None`` is the C^infinity blend built on ``exp(-1/t)``; an integer
    order ``n`` gives the polynomial smoothstep whose first ``n`` derivatives
    vanish at both ends.
    """
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    if order is None:
        def f(s):
            return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        return f(t) / (f(t) + f(1.0 - t))
    n = int(order)
    return t ** (n + 1) * sum(math.comb(n + k, k) * math.comb(2 * n + 1, n - k) * (-t) ** k
                              for k in range(n + 1))


def model_normalizer(alpha, shift=0.0):
    """Exact ``B`` with ``B(x + alpha) A E_{1/2}(x + shift) B(x)^{-1} = Id``.

    ``B(x) = exp(-(x/alpha)(pi/2) J) E_{1/2}(x/2 + d)`` with ``d = (shift - alpha/2)/2``;
    the flip ``A`` commutes with the ``J`` direction and anti-commutes with ``E``.
    """
    d = (shift - alpha / 2) / 2

    def B(x):
        x = np.asarray(x, dtype=float)
        v = np.stack([np.zeros_like(x), -(x / alpha) * np.pi / 2, np.zeros_like(x)], axis=-1)
        return qmul(qexp(v), e_half_q(x / 2 + d))
    return B


def constant_normalizer(C, alpha):
    """Exact ``B(x) = C^{-x/alpha}`` for the constant cocycle ``(alpha, C)``."""
    C = np.asarray(C, dtype=float)

    def B(x):
        return qpow(C, -np.asarray(x, dtype=float) / alpha)
    return B


def _normalizer(G, alpha, reference, seam_order):
    def seed(x):
        P = reference(x)
        Q = qmul(reference(x - alpha), qinv(G(x - alpha)))
        L = qlog(align_signs(qmul(qinv(P), Q), ref=np.array([1.0, 0.0, 0.0, 0.0])))
        phi = smooth_transition(x / alpha, seam_order)
        return qmul(P, qexp(phi[..., None] * L))

    def B(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        j = np.floor(x / alpha).astype(int)
        r = x - j * alpha
        out = seed(r)
        # forward: B(r + (i+1) alpha) = B(r + i alpha) G(r + i alpha)^{-1}
        for i in range(max(int(j.max(initial=0)), 0)):
            m = j > i
            out[m] = qmul(out[m], qinv(G(r[m] + i * alpha)))
        # backward: B(y) = B(y + alpha) G(y)
        for i in range(max(int(-j.min(initial=0)), 0)):
            m = j < -i
            out[m] = qmul(out[m], G(r[m] - (i + 1) * alpha))
        return out
    return B, seed


def _seam_check(B, alpha, seam_order, tol):
    """Compare one-sided derivatives of ``B`` at the seam ``x = alpha``.

    A continuous k-th derivative makes the gap between one-sided k-th
    differences shrink linearly with the step; a jump keeps it fixed.
    """
    order = 2 if seam_order is None else int(seam_order)
    base = B(np.array([alpha]))[0]

    def gaps(h):
        s = h * np.arange(-order, order + 1)
        V = qlog(align_signs(qmul(qinv(base), B(alpha + s)), ref=np.array([1.0, 0, 0, 0])))
        out = []
        for k in range(1, order + 1):
            w = np.array([(-1) ** (k - i) * math.comb(k, i) for i in range(k + 1)], dtype=float)
            right = w @ V[order:order + k + 1] / h ** k
            left = w @ V[order - k:order + 1] / h ** k
            size = max(np.linalg.norm(right), np.linalg.norm(left))
            out.append((float(np.linalg.norm(right - left)), float(size)))
        return out, float(np.linalg.norm(V[order]))

    h = alpha * 1e-3
    coarse, value = gaps(h)
    fine, _ = gaps(h / 2)
    if value > 1e-12:
        raise SeamMatchFailed("seam value mismatch")
    for k, ((g1, _), (g2, size)) in enumerate(zip(coarse, fine), start=1):
        if g2 > 0.75 * g1 and g2 > tol * size and g2 > 1e-8:
            raise SeamMatchFailed(f"derivative {k} jumps by {g2:.3e} at the seam")


def normalize_action(a: Z2Action, seam_order=2, reference=None, length=None, samples_per_alpha=64,
                     seam_tol=0.1):
    """Conjugate the first generator ``(alpha, G)`` to ``(alpha, Id)``.

    ``B`` is seeded on ``[0, alpha)`` by geodesic interpolation between the
    reference ``P(x)`` and ``P(x - alpha) G(x - alpha)^{-1}``, reparametrized by
    a flat-ended step, then propagated by ``B(x + alpha) = B(x) G(x)^{-1}``.
    Returns ``(B, normalized, NF)`` with ``NF(x) = B(x + 1) B(x)^{-1}``.
    """
    _require_commuting(a)
    G = a.first
    alpha = G.freq
    if not 0 < alpha < 1:
        raise PreconditionError("the first generator must have frequency in (0, 1)")
    if reference is None:
        reference = _identity
    Bfn, _ = _normalizer(G, alpha, reference, seam_order)
    length = 3 + 2 * alpha if length is None else length
    B = RealLineMap.sample(Bfn, length, alpha / samples_per_alpha)
    _seam_check(B, alpha, seam_order, seam_tol)
    normalized = conjugate_action(a, B)

    def NF(x):
        x = np.asarray(x, dtype=float)
        return qmul(B(x + 1.0), qinv(B(x)))

    x = alpha * np.arange(256) / 256
    first_defect = float(np.max(qdist(normalized.first(x), _identity(x))))
    if first_defect > NORMALIZED_TOL:
        raise PeriodicityCheckFailed(f"first generator is {first_defect:.2e} from Id")
    per = float(np.max(qdist(NF(x + alpha), NF(x))))
    if per > NORMALIZED_TOL:
        raise PeriodicityCheckFailed(f"NF is not alpha-periodic: defect {per:.2e}")
    return B, normalized, NF


def nf_periodicity_defect(NF, alpha, grid=256):
    x = alpha * np.arange(grid) / grid
    return float(np.max(qdist(NF(x + alpha), NF(x))))


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineResult:
    final: Z2Action
    distance_to_constant: float
    distances: list
    trace: dict = field(repr=False)

    def trace_json(self):
        return json.dumps(self.trace, indent=2, sort_keys=True)

    def distances_csv(self, header=None):
        lines = [f"# {header}"] if header else []
        lines.append("m,distance_to_constant")
        lines += [f"{m},{d!r}" for m, d in enumerate(self.distances)]
        return "\n".join(lines) + "\n"


def check_pipeline_preconditions(c: Cocycle, gamma=10.0, tau=2.0, K=64, degree_n=64,
                                 degree_max=0.05):
    if homotopy_class(c) is not HomotopyClass.NONTRIVIAL:
        raise PreconditionError("generator is homotopic to the identity")
    deg = degree_estimate(c, degree_n, grid=256, check=False)
    if deg > degree_max:
        raise PreconditionError(f"degree estimate {deg:.3f} is not small")
    rep = check_dc_tilde(c.freq, gamma, tau, K)
    if not rep.satisfied:
        raise PreconditionError(f"alpha fails the DC~ window at k = {rep.worst_k}")
    return {"degree_estimate": deg, "dc_tilde_margin": rep.min_margin}


def two_periodic_pipeline(c: Cocycle, steps=3, N=32, grid=256, seam_order=None,
                          gamma=10.0, tau=2.0, K=64) -> PipelineResult:
    """One renormalization step, then reduction of ``NF_2`` and passage to a 2-periodic action.

    ``D_m`` is the composed conjugation after ``m`` constant-base steps on
    ``y -> NF_2(alpha y)`` over the frequency ``(2 - 2 a alpha) / alpha``.
    The final action is ``((2, D_m(. + 2) NF_2(.) D_m(.)^{-1}), (alpha, Id))``.
    """
    trace = {"gauge": "A = [[0, 1], [-1, 0]]", "stages": []}

    def stage(name, fn):
        try:
            return fn()
        except PipelineError:
            raise
        except (ArithmeticError, ValueError) as e:
            raise PipelineError(name, e) from e

    pre = stage("preconditions", lambda: check_pipeline_preconditions(c, gamma, tau, K))
    trace["preconditions"] = pre
    alpha = c.freq

    action = stage("make_action", lambda: make_action(c))
    trace["stages"].append({"stage": "make_action", **action.to_dict()})

    M = cf_matrix(alpha)
    a = int(M[0, 0])
    renorm = stage("base_change", lambda: base_change(action, M))
    trace["stages"].append({"stage": "base_change", "matrix": M.tolist(), **renorm.to_dict()})

    reference = model_normalizer(alpha, 0.0)
    B, normalized, NF = stage("normalize_action",
                              lambda: normalize_action(renorm, seam_order, reference))
    trace["stages"].append({"stage": "normalize_action", "seam_order": seam_order,
                            "nf_periodicity_defect": nf_periodicity_defect(NF, alpha),
                            **normalized.to_dict()})

    sign = (-1.0) ** a

    def NF2(x):
        x = np.asarray(x, dtype=float)
        return sign * qmul(B(x + 2.0), qinv(B(x)))

    xs = alpha * np.arange(grid) / grid
    nf2_identity = float(np.max(qdist(qmul(NF(xs + 1 - a * alpha), NF(xs)),
                                      qmul(NF(xs + 1), NF(xs)))))
    beta = (2 - 2 * a * alpha) / alpha

    def H(y):
        return NF2(alpha * np.asarray(y, dtype=float))

    conjs, dists, _ = stage("reduce_nf2", lambda: reduce_near_constant(beta, H, steps, N, grid))
    trace["stages"].append({"stage": "reduce_nf2", "frequency": 2 - 2 * a * alpha,
                            "nf2_identity_defect": nf2_identity, "distances": dists})

    def final_action(Dt):
        def D(x):
            return Dt(np.asarray(x, dtype=float) / alpha)
        pair = Z2Action(Cocycle(alpha, _identity, None, "Id"),
                        Cocycle(2 - 2 * a * alpha, NF2, None, "NF2"),
                        alpha, ((0, 1), (2, -2 * a)))
        pair = conjugate_action(pair, D)
        # back to the lattice generated by 2 and alpha: (Phi1^{2a} Phi2, Phi1)
        return base_change(pair, np.array([[0, 1], [1, -2 * a]]))

    distances = []
    final = None
    for Dt in conjs:
        final = stage("final_normalization", lambda: final_action(Dt))
        distances.append(_action_distance(final, alpha, grid))
    trace["stages"].append({"stage": "final_normalization", **final.to_dict(),
                            "distances": distances})
    return PipelineResult(final, distances[-1], distances, trace)


def _action_distance(a: Z2Action, alpha, grid):
    """Largest sup distance of the generators to their nearest constants, over one alpha-cell."""
    out = 0.0
    for g in (a.first, a.second):
        out = max(out, distance_to_constant(g, grid, period=alpha))
    return out
