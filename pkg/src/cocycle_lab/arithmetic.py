"""Continued fractions, the Gauss map and finite-window Diophantine certificates.

All conditions quantify over ``1 <= |k| <= K`` only; the reports carry the
signed margin so callers can see how close a window came to failing.  Negative
``k`` never needs a separate pass: ``|-k a|_Z = |k a|_Z`` and
``|-k a - 1/2|_Z = |k a - 1/2|_Z``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from mpmath import mp, mpf

WORKING_DPS = 50
EARLY_STOP = 1e-14


class DepthTruncated(UserWarning):
    """The expansion stopped before the requested depth (rational-looking input)."""


class PrecisionExhausted(ArithmeticError):
    """Gauss iteration has amplified rounding beyond half the working digits."""


class PreconditionError(ValueError):
    pass


class Condition(str, Enum):
    DC = "DC"
    DC_TILDE = "DC_TILDE"


@dataclass(frozen=True)
class ContinuedFraction:
    alpha: float
    partial_quotients: tuple
    convergents: tuple  # (p_n, q_n) for n = 1..d
    gauss_iterates: tuple = field(default=(), repr=False)

    @property
    def depth(self):
        return len(self.partial_quotients)


@dataclass(frozen=True)
class DiophantineReport:
    condition: Condition
    gamma: float
    tau: float
    depth_K: int
    min_margin: float
    worst_k: int
    satisfied: bool

    def to_dict(self):
        d = asdict(self)
        d["condition"] = self.condition.value
        return d


def dist_z(x):
    """Distance to the nearest integer; works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    d = np.abs(x - np.round(x))
    return float(d) if d.ndim == 0 else d


def golden():
    return (math.sqrt(5.0) - 1.0) / 2.0


def gauss_map(x):
    y = 1 / x
    return y - math.floor(y) if isinstance(y, float) else y - mp.floor(y)


def continued_fraction(alpha, depth: int) -> ContinuedFraction:
    """Expansion ``alpha = [0; a_1, a_2, ...]`` by repeated Gauss map in 50-digit arithmetic."""
    if depth < 1:
        raise ValueError("depth must be positive")
    with mp.workdps(WORKING_DPS):
        x = mpf(alpha)
        if not 0 < x < 1:
            raise ValueError("alpha must lie in (0, 1)")
        quotients, iterates = [], [float(x)]
        p_prev, q_prev, p, q = 1, 0, 0, 1
        convergents = []
        for _ in range(depth):
            y = 1 / x
            a = int(mp.floor(y))
            x = y - a
            quotients.append(a)
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
            convergents.append((p, q))
            iterates.append(float(x))
            if x < EARLY_STOP:
                if len(quotients) < depth:
                    warnings.warn(f"expansion of {alpha} stopped at depth {len(quotients)}",
                                  DepthTruncated, stacklevel=2)
                break
    return ContinuedFraction(float(mpf(alpha)), tuple(quotients), tuple(convergents),
                             tuple(iterates))


def _report(condition, gamma, tau, K, margins):
    i = int(np.argmin(margins))
    m = float(margins[i])
    return DiophantineReport(condition, float(gamma), float(tau), int(K), m, i + 1, m >= 0)


def _check_args(gamma, tau, K):
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if K < 1:
        raise ValueError("K must be >= 1")


def check_dc(alpha, gamma, tau, K) -> DiophantineReport:
    _check_args(gamma, tau, K)
    k = np.arange(1, K + 1, dtype=float)
    margins = dist_z(k * float(alpha)) - (1.0 / gamma) / k ** tau
    return _report(Condition.DC, gamma, tau, K, margins)


def check_dc_tilde(alpha, gamma, tau, K) -> DiophantineReport:
    _check_args(gamma, tau, K)
    k = np.arange(1, K + 1, dtype=float)
    margins = dist_z(k * float(alpha) - 0.5) - (1.0 / gamma) / k ** tau
    return _report(Condition.DC_TILDE, gamma, tau, K, margins)


def gauss_orbit(alpha, n, dps=WORKING_DPS):
    """``G^j(alpha)`` for ``j = 0..n`` as mp numbers.

    Raises PrecisionExhausted once the accumulated derivative of ``G^j``
    (the product of ``1/x^2`` along the orbit) exceeds half the working digits.
    """
    with mp.workdps(dps):
        x = mpf(alpha)
        out = [x]
        lost = 0.0
        for j in range(n):
            if x == 0:
                raise PrecisionExhausted(f"orbit hit 0 at step {j}: alpha is rational")
            lost += -2.0 * float(mp.log10(x))
            if lost > dps / 2:
                raise PrecisionExhausted(
                    f"Gauss step {j + 1} would lose {lost:.1f} of {dps} digits")
            x = gauss_map(x)
            out.append(x)
    return out


def check_rdc_tilde_finite(alpha, gamma, tau, gauss_depth, K):
    """``(n, report)`` for every ``n <= gauss_depth`` where ``G^n(alpha)`` passes the window."""
    hits = []
    for n, x in enumerate(gauss_orbit(alpha, gauss_depth)):
        rep = check_dc_tilde(float(x), gamma, tau, K)
        if rep.satisfied:
            hits.append((n, rep))
    return hits


def doubling_lemma_check(alpha, gamma, tau, K, with_dc=False) -> bool:
    """Probe ``alpha in DC~(gamma, tau) => 2 alpha in DC(gamma/2, tau)`` on a window.

    With ``with_dc=True`` the hypothesis is strengthened to
    ``alpha in DC~(gamma, tau) and alpha in DC(gamma, tau)``, which covers the
    half-lattice ``(1/2)Z`` that ``|2 k alpha|_Z`` actually measures.
    """
    if not check_dc_tilde(alpha, gamma, tau, K).satisfied:
        raise PreconditionError("alpha does not pass the DC~ window")
    if with_dc and not check_dc(alpha, gamma, tau, K).satisfied:
        raise PreconditionError("alpha does not pass the DC window")
    two = (2.0 * float(alpha)) % 1.0
    return check_dc(two, gamma / 2.0, tau, K).satisfied


def liouville_like(base=2, terms=4):
    """Partial sum of ``sum_n base^(-n!)``: a Liouville number to double precision."""
    return sum(float(base) ** -math.factorial(n) for n in range(1, terms + 1))
