"""Finitely supported Fourier series on circles of integer period.

A :class:`FourierMap` of period ``p`` and half-width ``N`` stores the dense
coefficient vector for ``k = -N..N``; mode ``k`` is the character
``exp(2 i pi k x / p)``.  Coefficients are the source of truth, grids are views.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np


class AliasingDetected(ValueError):
    pass


class SymmetryViolated(ValueError):
    pass


class Symmetry(str, Enum):
    REAL_VALUED = "REAL_VALUED"
    NONE = "NONE"


@dataclass(frozen=True, eq=False)
class FourierMap:
    period: int
    coeffs: np.ndarray
    symmetry: Symmetry = Symmetry.NONE

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).reshape(-1)
        if c.size % 2 != 1:
            raise ValueError("coefficient vector must have odd length 2N+1")
        if int(self.period) != self.period or self.period < 1:
            raise ValueError("period must be a positive integer")
        sym = Symmetry(self.symmetry)
        if sym is Symmetry.REAL_VALUED:
            if np.max(np.abs(c - np.conj(c[::-1])), initial=0.0) > 1e-12 * max(1.0, np.abs(c).max()):
                raise SymmetryViolated("coeff(-k) != conj(coeff(k))")
            c = 0.5 * (c + np.conj(c[::-1]))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "period", int(self.period))
        object.__setattr__(self, "symmetry", sym)

    # -- construction -----------------------------------------------------

    @classmethod
    def zeros(cls, N=0, period=1, symmetry=Symmetry.NONE):
        return cls(period, np.zeros(2 * N + 1), symmetry)

    @classmethod
    def from_modes(cls, modes, period=1, symmetry=Symmetry.NONE):
        """Build from a ``{k: coeff}`` dictionary."""
        N = max((abs(int(k)) for k in modes), default=0)
        c = np.zeros(2 * N + 1, dtype=complex)
        for k, v in modes.items():
            c[int(k) + N] = v
        return cls(period, c, symmetry)

    # -- structure ---------------------------------------------------------

    @property
    def N(self):
        return (self.coeffs.size - 1) // 2

    @property
    def modes(self):
        return np.arange(-self.N, self.N + 1)

    @property
    def is_real(self):
        return self.symmetry is Symmetry.REAL_VALUED

    def coeff(self, k):
        k = int(k)
        return complex(self.coeffs[k + self.N]) if abs(k) <= self.N else 0j

    def support(self, tol=0.0):
        return [int(k) for k, c in zip(self.modes, self.coeffs) if abs(c) > tol]

    def padded(self, N):
        """Same map with half-width ``N`` (zero-padding or truncation)."""
        if N == self.N:
            return self
        c = np.zeros(2 * N + 1, dtype=complex)
        m = min(N, self.N)
        c[N - m:N + m + 1] = self.coeffs[self.N - m:self.N + m + 1]
        return FourierMap(self.period, c, self.symmetry)

    def truncate(self, N):
        return self.padded(min(N, self.N))

    def tail(self, N):
        """The part of the map carried by modes ``|k| > N``."""
        c = self.coeffs.copy()
        m = min(N, self.N)
        c[self.N - m:self.N + m + 1] = 0
        return FourierMap(self.period, c, self.symmetry)

    # -- evaluation ----------------------------------------------------------

    def __call__(self, x):
        return synthesize(self, x)

    def grid(self, M):
        return self(self.period * np.arange(M) / M)

    # -- algebra -------------------------------------------------------------

    def _binary(self, other, op):
        if self.period != other.period:
            raise ValueError("period mismatch")
        N = max(self.N, other.N)
        a, b = self.padded(N).coeffs, other.padded(N).coeffs
        sym = Symmetry.REAL_VALUED if self.is_real and other.is_real else Symmetry.NONE
        return FourierMap(self.period, op(a, b), sym)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, s):
        s = complex(s)
        sym = self.symmetry if s.imag == 0 else Symmetry.NONE
        return FourierMap(self.period, self.coeffs * s, sym)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def conj(self):
        """Coefficients of ``x -> conj(f(x))``."""
        return FourierMap(self.period, np.conj(self.coeffs[::-1]), self.symmetry)

    def shift(self, a):
        """Coefficients of ``x -> f(x + a)``."""
        ph = np.exp(2j * np.pi * self.modes * a / self.period)
        return FourierMap(self.period, self.coeffs * ph, self.symmetry)

    def twist(self, j):
        """Coefficients of ``x -> exp(2 i pi j x / p) f(x)`` (index shift by ``j``)."""
        c = np.zeros(2 * (self.N + abs(j)) + 1, dtype=complex)
        c[abs(j) + j:abs(j) + j + self.coeffs.size] = self.coeffs
        return FourierMap(self.period, c, Symmetry.NONE)

    def embed(self, factor):
        """Same function viewed on a circle ``factor`` times longer (k -> factor*k)."""
        factor = int(factor)
        c = np.zeros(2 * self.N * factor + 1, dtype=complex)
        c[::factor] = self.coeffs
        return FourierMap(self.period * factor, c, self.symmetry)

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        return {
            "period": self.period,
            "entries": [[int(k), float(c.real), float(c.imag)]
                        for k, c in zip(self.modes, self.coeffs)],
            "symmetry": self.symmetry.value,
        }

    @classmethod
    def from_dict(cls, d):
        entries = d["entries"]
        N = max((abs(int(e[0])) for e in entries), default=0)
        c = np.zeros(2 * N + 1, dtype=complex)
        for k, re, im in entries:
            c[int(k) + N] = complex(re, im)
        return cls(int(d["period"]), c, Symmetry(d.get("symmetry", "NONE")))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def analyze(samples, period=1, N=None, symmetry=None, check_aliasing=True, alias_tol=1e-8):
    """Fourier coefficients of samples on the uniform grid ``x_j = p j / M``.

    Modes are kept up to ``N`` (default ``(M-1)//2``).  With ``check_aliasing``
    the discarded energy must stay below ``alias_tol`` of the total.
    """
    s = np.asarray(samples)
    M = s.size
    if N is None:
        N = (M - 1) // 2
    if M < 2 * N + 1:
        raise ValueError(f"{M} samples cannot resolve {2 * N + 1} modes")
    F = np.fft.fft(s) / M
    k = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    keep = np.abs(k) <= N
    if M % 2 == 0:
        keep &= k != -M // 2  # Nyquist bin is ambiguous
    if check_aliasing:
        total = np.sum(np.abs(F) ** 2)
        dropped = np.sum(np.abs(F[~keep]) ** 2)
        if total > 0 and dropped > alias_tol * total:
            raise AliasingDetected(f"energy fraction {dropped / total:.2e} above |k| = {N}")
    c = np.zeros(2 * N + 1, dtype=complex)
    c[k[keep] + N] = F[keep]
    if symmetry is None:
        symmetry = Symmetry.REAL_VALUED if np.isrealobj(s) else Symmetry.NONE
    return FourierMap(period, c, symmetry)


def synthesize(f: FourierMap, x):
    x = np.asarray(x, dtype=float)
    ph = np.exp(2j * np.pi * np.multiply.outer(x, f.modes) / f.period)
    out = ph @ f.coeffs
    return complex(out) if out.ndim == 0 else out


def norm_c0(f: FourierMap, grid_size=None):
    if grid_size is None:
        grid_size = max(4 * (2 * f.N + 1), 64)
    return float(np.max(np.abs(f.grid(grid_size)), initial=0.0))


def norm_sobolev(f: FourierMap, s):
    w = (1.0 + np.abs(f.modes)) ** (2 * s)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def multiply(f: FourierMap, g: FourierMap, N=None):
    """Pointwise product, computed on a grid four times the combined support."""
    if f.period != g.period:
        raise ValueError("period mismatch")
    M = 4 * (f.N + g.N + 1)
    prod = f.grid(M) * g.grid(M)
    sym = Symmetry.REAL_VALUED if f.is_real and g.is_real else Symmetry.NONE
    if sym is Symmetry.REAL_VALUED:
        prod = prod.real
    return analyze(prod, f.period, N=f.N + g.N if N is None else N, symmetry=sym,
                   check_aliasing=N is None)


def su2_map(U_t: FourierMap, U_z: FourierMap):
    """``x -> (t, Re z, Im z)`` array-valued map of the pair ``{U_t, U_z}``."""
    if not U_t.is_real:
        raise SymmetryViolated("the diagonal component must be REAL_VALUED")
    if U_t.period != U_z.period:
        raise ValueError("period mismatch")

    def field(x):
        t = np.asarray(U_t(x))
        if np.max(np.abs(np.imag(t)), initial=0.0) > 1e-10:
            raise SymmetryViolated("diagonal component evaluated to a complex value")
        z = np.asarray(U_z(x))
        return np.stack([np.real(t), z.real, z.imag], axis=-1)

    return field


def random_map(rng, N, amplitude, period=1, symmetry=Symmetry.NONE, decay=1.0):
    """Random band-limited map with ``|k| <= N`` rescaled to C^0 size ``amplitude``."""
    k = np.arange(-N, N + 1)
    c = (rng.normal(size=k.size) + 1j * rng.normal(size=k.size)) * np.exp(-decay * np.abs(k))
    if Symmetry(symmetry) is Symmetry.REAL_VALUED:
        c = 0.5 * (c + np.conj(c[::-1]))
    f = FourierMap(period, c, symmetry)
    return f * (amplitude / norm_c0(f, 64 * (N + 1)))
