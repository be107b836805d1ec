"""Quasi-periodic cocycles ``(alpha, A(.))`` over circle (or line) translations.

Generators are vectorized: ``c(x)`` takes an array of base points and returns
quaternions with a trailing axis of length 4.  ``period`` is the SO(3) period
of the generator; the SU(2) lift may change sign over one period (the model
cocycles built on ``E_{1/2}`` do).  ``period=None`` marks maps over the real
line, as produced by renormalization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .algebra import (FLIP, GroupElement, HomotopyClass, e_half_q, e_r_q, path_lift,
                      qdist, qexp, qinv, qlog, qmul, to_so3)


class PeriodMismatch(ValueError):
    pass


class UnderResolved(ArithmeticError):
    pass


@dataclass(frozen=True)
class NormalFormParams:
    alpha_n: float
    z_n: complex

    def __post_init__(self):
        object.__setattr__(self, "alpha_n", float(self.alpha_n))
        object.__setattr__(self, "z_n", complex(self.z_n))


@dataclass(frozen=True, eq=False)
class Cocycle:
    freq: float
    generator: Callable
    period: Optional[int] = 1
    label: str = ""
    recipe: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        p = self.period
        if p is not None and (int(p) != p or p < 1):
            raise PeriodMismatch(f"generator period must be a positive integer, got {p}")

    def __call__(self, x):
        return self.generator(np.asarray(x, dtype=float))

    def at(self, x) -> GroupElement:
        return GroupElement(self(float(x)))

    def periodicity_defect(self, probe=64):
        if self.period is None:
            return 0.0
        x = self.period * np.arange(probe) / probe
        return float(np.max(qdist(self(x + self.period), self(x))))


# ---------------------------------------------------------------------------
# constructors


def constant_cocycle(alpha, g):
    q = np.asarray(g.q if isinstance(g, GroupElement) else g, dtype=float)
    return Cocycle(alpha, lambda x: np.broadcast_to(q, np.shape(x) + (4,)).copy(), 1,
                   "constant", {"name": "constant", "q": q.tolist()})


def e_r_cocycle(alpha, r=1.0):
    """``(alpha, E_r(.))``; ``r = 1/2`` is the model rotation ``R_{2 pi .}``."""
    return Cocycle(alpha, lambda x: e_r_q(r, x), 1, f"E_{r}", {"name": "e_r", "r": r})


def flip_rotation_cocycle(alpha):
    """``(alpha, A R_{2 pi .})``: zero degree, non-homotopic to the identity."""
    return Cocycle(alpha, lambda x: qmul(FLIP.q, e_half_q(x)), 1, "A E_1/2",
                   {"name": "flip_rotation"})


def model_cocycle(alpha, field_fn=None):
    """``(alpha, A E_{1/2}(x + alpha/2) exp(U(x)))`` with ``U`` an su(2)-valued map."""
    def gen(x):
        base = qmul(FLIP.q, e_half_q(x + alpha / 2))
        if field_fn is None:
            return base
        return qmul(base, qexp(field_fn(x)))
    return Cocycle(alpha, gen, 1, "model chart")


def normal_form_cocycle(nf: NormalFormParams):
    z = nf.z_n
    tail = qexp(np.array([0.0, z.real, z.imag]))

    def gen(x):
        return qmul(qmul(FLIP.q, e_half_q(x)), tail)
    return Cocycle(nf.alpha_n, gen, 1, "normal form",
                   {"name": "normal_form", "alpha_n": nf.alpha_n, "z_n": [z.real, z.imag]})


def second_iterate_closed_form(nf: NormalFormParams):
    """The displayed closed form ``(2a, E_{1/2}(a) exp{0, conj z} exp{0, e^{2 i pi .} z})``."""
    a, z = nf.alpha_n, nf.z_n
    left = qmul(e_half_q(a), qexp(np.array([0.0, z.real, -z.imag])))

    def gen(x):
        x = np.asarray(x, dtype=float)
        w = z * np.exp(2j * np.pi * x)
        v = np.stack([np.zeros_like(x), w.real, w.imag], axis=-1)
        return qmul(left, qexp(v))
    return Cocycle(2 * a, gen, 1, "second iterate closed form",
                   {"name": "second_iterate_closed_form", "alpha_n": a, "z_n": [z.real, z.imag]})


# ---------------------------------------------------------------------------
# operations


def iterate(c: Cocycle, n: int, x):
    """``A_n(x)``; negative ``n`` gives ``A_{-n}(x + n alpha)^{-1}``."""
    x = np.asarray(x, dtype=float)
    n = int(n)
    if n < 0:
        return qinv(iterate(c, -n, x + n * c.freq))
    out = np.zeros(x.shape + (4,))
    out[..., 0] = 1.0
    for j in range(n):
        out = qmul(c(x + j * c.freq), out)
    return out


def _combined_period(p, q):
    if p is None or q is None:
        return None
    if p % q and q % p:
        raise PeriodMismatch(f"periods {p} and {q} are not multiples of each other")
    return math.lcm(p, q)


def conjugate(c: Cocycle, B, B_period=1):
    """``(alpha, B(. + alpha) A(.) B(.)^{-1})``.  ``B`` is a vectorized quaternion map."""
    period = _combined_period(c.period, B_period)

    def gen(x):
        return qmul(qmul(B(x + c.freq), c(x)), qinv(B(x)))
    return Cocycle(c.freq, gen, period, f"conj({c.label})")


def second_iterate(c: Cocycle):
    return Cocycle(2 * c.freq, lambda x: qmul(c(x + c.freq), c(x)), c.period,
                   f"({c.label})^2")


def untwist(c: Cocycle):
    """Conjugation by ``x -> E_{1/2}(x)``, a 1-periodic map in SO(3).

    This is the gauge in which the second iterate of the normal form takes the
    displayed closed form.
    """
    return conjugate(c, e_half_q, 1)


def degree_estimate(c: Cocycle, n: int, grid: int = 1024, check=True):
    """Mean logarithmic-derivative norm of ``A_n`` over one period, divided by ``2 pi n``.

    The derivative is a symmetric difference taken in the group,
    ``log(A_n(x+h) A_n(x-h)^{-1}) / 2h``, so it is exact for one-parameter
    subgroups and the model ``(alpha, E_1)`` scores exactly 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    value = _degree_once(c, n, grid)
    if check:
        finer = _degree_once(c, n, 2 * grid)
        if abs(finer - value) > 1e-3:
            raise UnderResolved(f"degree estimate moved by {abs(finer - value):.2e} "
                                f"when the grid doubled from {grid}")
    return value


def _degree_once(c, n, grid):
    p = c.period or 1
    h = p / grid
    x = p * np.arange(grid) / grid
    fwd = iterate(c, n, x + h)
    bwd = iterate(c, n, x - h)
    d = qlog(qmul(fwd, qinv(bwd))) / (2 * h)
    return float(np.mean(np.linalg.norm(d, axis=-1)) / (2 * np.pi * n))


def homotopy_class(c: Cocycle, samples=512) -> HomotopyClass:
    if c.period != 1:
        raise ValueError("homotopy class needs a 1-periodic generator")
    x = np.linspace(0.0, 1.0, samples + 1)
    R = to_so3(c(x))
    R[-1] = R[0] if np.max(np.abs(R[-1] - R[0])) < 1e-8 else R[-1]
    return path_lift(R)[1]


def so3_distance(c1: Cocycle, c2: Cocycle, grid=256):
    """Sup over a period grid of the sign-blind distance between generators."""
    p = c1.period or 1
    x = p * np.arange(grid) / grid
    return float(np.max(qdist(c1(x), c2(x))))


# ---------------------------------------------------------------------------
# serialization


def _grid_generator(samples, lift_period):
    q = np.asarray(samples, dtype=float)
    M = q.shape[0]
    coeffs = np.fft.fft(q, axis=0) / M
    k = np.fft.fftfreq(M, d=1.0 / M)

    def gen(x):
        x = np.asarray(x, dtype=float)
        ph = np.exp(2j * np.pi * np.multiply.outer(x, k) / lift_period)
        vals = np.real(ph @ coeffs)
        return vals / np.linalg.norm(vals, axis=-1, keepdims=True)
    return gen


def to_dict(c: Cocycle, grid=256):
    if c.recipe is not None:
        return {"freq": c.freq, "period": c.period, "kind": "closed_form", "payload": c.recipe}
    if c.period is None:
        raise ValueError("line cocycles have no finite serialization")
    # one full SU(2) period: twice the SO(3) period covers sign-flipping lifts
    lift_period = 2 * c.period
    x = lift_period * np.arange(grid) / grid
    return {"freq": c.freq, "period": c.period, "kind": "grid",
            "payload": {"lift_period": lift_period, "samples": c(x).tolist()}}


def from_dict(d) -> Cocycle:
    freq, period, payload = float(d["freq"]), d["period"], d["payload"]
    if d["kind"] == "grid":
        gen = _grid_generator(payload["samples"], payload["lift_period"])
        return Cocycle(freq, gen, period, "grid")
    name = payload["name"]
    if name == "constant":
        return constant_cocycle(freq, np.array(payload["q"]))
    if name == "e_r":
        return e_r_cocycle(freq, payload["r"])
    if name == "flip_rotation":
        return flip_rotation_cocycle(freq)
    if name == "normal_form":
        return normal_form_cocycle(NormalFormParams(payload["alpha_n"], complex(*payload["z_n"])))
    if name == "second_iterate_closed_form":
        return second_iterate_closed_form(
            NormalFormParams(payload["alpha_n"], complex(*payload["z_n"])))
    raise ValueError(f"unknown closed form {name!r}")


def to_json(c: Cocycle, grid=256):
    return json.dumps(to_dict(c, grid))


def from_json(s):
    return from_dict(json.loads(s))
