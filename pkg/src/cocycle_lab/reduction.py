"""Linearized conjugation equations and the KAM loop for the model chart.

Model chart: ``(alpha, A E_{1/2}(x + alpha/2) exp(U(x)))`` with ``U = {U_t, U_z}``
1-periodic.  The two cohomological equations solved mode by mode are

    B_t(x + alpha) + B_t(x)                    = -U_t(x)
    exp(-2 i pi x) B_z(x + alpha) - conj(B_z(x)) = -U_z(x)

In the chart, conjugating by ``exp(S)`` removes ``U`` to first order when

    S_t = -B_t[U_t],   S_z = w conj(B_z[conj(w) U_z]),   w = exp(-i pi alpha / 2),

where ``B_t[.]``, ``B_z[.]`` are the solutions of the equations above.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .algebra import (FLIP, e_half_q, mean_rotation, align_signs, conjugate_vector, qexp,
                      qinv, qlog, qmul)
from .arithmetic import PreconditionError, check_dc_tilde
from .cocycle import Cocycle, NormalFormParams, model_cocycle, second_iterate_closed_form
from .fourier import FourierMap, Symmetry, analyze, su2_map

DEFAULT_GAMMA = 10.0
DEFAULT_TAU = 2.0
EPS0 = 1e-3
CHART_ANGLE = np.pi / 4  # su(2) norm; rotation angle pi/2 in SO(3)


class SmallDenominator(ArithmeticError):
    def __init__(self, mode, value, guard):
        super().__init__(f"|divisor| = {value:.3e} < guard {guard:.3e} at mode {mode}")
        self.mode, self.value, self.guard = mode, value, guard


class ChartEscape(ArithmeticError):
    pass


class Stalled(ArithmeticError):
    pass


class ZeroLeadingCoefficient(ValueError):
    pass


def default_guard(N, gamma=DEFAULT_GAMMA, tau=DEFAULT_TAU):
    """Lower bound ``4 gamma^-1 / N^tau`` implied by a DC~ window on the divisors up to ``N``."""
    return 4.0 / gamma / max(N, 1) ** tau


# ---------------------------------------------------------------------------
# cohomological equations


def diagonal_divisors(modes, alpha, period=1):
    return np.exp(2j * np.pi * np.asarray(modes) * alpha / period) + 1.0


def solve_diagonal(U_t: FourierMap, alpha, guard=None):
    """Solve ``B(x + alpha) + B(x) = -U_t(x)``; mode 0 divides by 2, so nothing obstructs."""
    den = diagonal_divisors(U_t.modes, alpha, U_t.period)
    if guard is None:
        guard = default_guard(U_t.N)
    bad = np.abs(den) < guard
    if bad.any():
        k = int(U_t.modes[np.argmax(bad)])
        raise SmallDenominator(k, float(np.abs(den[k + U_t.N])), guard)
    return FourierMap(U_t.period, -U_t.coeffs / den, U_t.symmetry)


def offdiagonal_divisors(N, alpha):
    """Determinants ``exp(2 i pi (2m+1) alpha) - 1`` of the mode pairs ``m = 0..N``."""
    m = np.arange(N + 1)
    return np.exp(2j * np.pi * (2 * m + 1) * alpha) - 1.0


def solve_offdiagonal(U_z: FourierMap, alpha, guard=None):
    """Solve ``exp(-2 i pi x) B(x + alpha) - conj(B(x)) = -U_z(x)``.

    Mode ``j`` of the left side is ``b_{j+1} e^{2 i pi (j+1) alpha} - conj(b_{-j})``,
    so the modes ``j = m`` and ``j = -m-1`` couple ``X = b_{m+1}`` and
    ``Y = conj(b_{-m})`` through a 2x2 system with determinant
    ``exp(2 i pi (2m+1) alpha) - 1``.
    """
    if U_z.period != 1:
        raise ValueError("the twisted equation is posed on the period-1 circle")
    N = U_z.N
    if guard is None:
        guard = default_guard(2 * N + 1)
    det = offdiagonal_divisors(N, alpha)
    bad = np.abs(det) < guard
    if bad.any():
        m = int(np.argmax(bad))
        raise SmallDenominator(m, float(np.abs(det[m])), guard)
    b = np.zeros(2 * (N + 1) + 1, dtype=complex)
    off = N + 1
    for m in range(N + 1):
        u_m = U_z.coeff(m)
        u_pair = np.conj(U_z.coeff(-m - 1))
        Y = -(u_m + u_pair * np.exp(2j * np.pi * (m + 1) * alpha)) / det[m]
        X = Y * np.exp(2j * np.pi * m * alpha) + u_pair
        b[m + 1 + off] = X
        b[-m + off] = np.conj(Y)
    return FourierMap(1, b, Symmetry.NONE)


def diagonal_residual(B_t, U_t, alpha, grid=512):
    x = U_t.period * np.arange(grid) / grid
    return float(np.max(np.abs(B_t(x + alpha) + B_t(x) + U_t(x))))


def offdiagonal_residual(B_z, U_z, alpha, grid=512):
    x = np.arange(grid) / grid
    r = np.exp(-2j * np.pi * x) * B_z(x + alpha) - np.conj(B_z(x)) + U_z(x)
    return float(np.max(np.abs(r)))


# ---------------------------------------------------------------------------
# one step in the model chart


@dataclass(frozen=True)
class ModelPerturbation:
    """Chart data ``(alpha, U_t, U_z)`` of ``(alpha, A E_{1/2}(. + alpha/2) exp U)``."""
    alpha: float
    U_t: FourierMap
    U_z: FourierMap

    def field(self):
        return su2_map(self.U_t, self.U_z)

    def cocycle(self) -> Cocycle:
        return model_cocycle(self.alpha, self.field())

    def size(self, grid=None):
        N = max(self.U_t.N, self.U_z.N)
        grid = grid or max(64, 4 * (2 * N + 1))
        x = np.arange(grid) / grid
        return float(np.max(np.linalg.norm(self.field()(x), axis=-1)))


@dataclass(frozen=True)
class ReductionStepReport:
    step_index: int
    truncation_N: int
    input_size: float
    output_size: float
    min_denominator: float
    conjugation_size: float

    FIELDS = ("step", "N", "input_size", "output_size", "min_denominator", "conjugation_size")

    def row(self):
        return [self.step_index, self.truncation_N, repr(self.input_size),
                repr(self.output_size), repr(self.min_denominator), repr(self.conjugation_size)]


def reports_to_csv(reports, header=None):
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ReductionStepReport.FIELDS)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def _chart_grid(N):
    M = 64
    while M < 8 * (N + 2):
        M *= 2
    return M


def _extract_chart(alpha, G, M):
    """Read ``U`` back from generator samples ``G`` on the ``M``-grid."""
    x = np.arange(M) / M
    base = qmul(FLIP.q, e_half_q(x + alpha / 2))
    rel = qmul(qinv(base), G)
    rel = align_signs(rel, ref=np.array([1.0, 0.0, 0.0, 0.0]))
    V = qlog(rel)
    ang = np.linalg.norm(V, axis=-1)
    if ang.max() > CHART_ANGLE:
        raise ChartEscape(f"chart angle {ang.max():.3f} exceeds {CHART_ANGLE:.3f}")
    U_t = analyze(V[:, 0], 1, M // 2 - 1, Symmetry.REAL_VALUED, check_aliasing=False)
    U_z = analyze(V[:, 1] + 1j * V[:, 2], 1, M // 2 - 1, Symmetry.NONE, check_aliasing=False)
    return U_t, U_z, float(ang.max())


def linearized_conjugation(state: ModelPerturbation, N, guard_diag=None, guard_off=None):
    """Fourier data ``(S_t, S_z)`` of the conjugation ``exp(S)`` killing ``U`` to first order."""
    a = state.alpha
    w = np.exp(-1j * np.pi * a / 2)
    Ut = state.U_t.truncate(N)
    Uz = state.U_z.truncate(N)
    S_t = -solve_diagonal(Ut, a, guard_diag)
    S_z = solve_offdiagonal(Uz * np.conj(w), a, guard_off).conj() * w
    den = min(float(np.abs(diagonal_divisors(Ut.modes, a)).min()),
              float(np.abs(offdiagonal_divisors(Uz.N, a)).min()))
    return S_t, S_z, den


def local_reduction_step(state: ModelPerturbation, truncation_N, step_index=0,
                         gamma=DEFAULT_GAMMA, tau=DEFAULT_TAU):
    """One Newton step: truncate, solve, conjugate, re-read the chart.

    Returns ``((S_t, S_z), next_state, report)``.
    """
    N = int(truncation_N)
    S_t, S_z, den = linearized_conjugation(
        state, N, default_guard(N, gamma, tau), default_guard(2 * N + 1, gamma, tau))
    M = _chart_grid(max(N, state.U_t.N, state.U_z.N))
    x = np.arange(M) / M
    a = state.alpha
    S = su2_map(S_t, S_z)
    G = state.cocycle()(x)
    G_new = qmul(qmul(qexp(S(x + a)), G), qexp(-S(x)))
    U_t, U_z, _ = _extract_chart(a, G_new, M)
    nxt = ModelPerturbation(a, U_t, U_z)
    in_size = float(np.max(np.linalg.norm(state.field()(x), axis=-1)))
    out_size = float(np.max(np.linalg.norm(qlog(align_signs(
        qmul(qinv(qmul(FLIP.q, e_half_q(x + a / 2))), G_new), ref=np.array([1.0, 0, 0, 0]))),
        axis=-1)))
    conj_size = float(np.max(np.linalg.norm(S(x), axis=-1)))
    rep = ReductionStepReport(step_index, N, in_size, out_size, den, conj_size)
    return (S_t, S_z), nxt, rep


@dataclass
class KamResult:
    normal_form: NormalFormParams
    reports: list
    conjugations: list = field(default_factory=list, repr=False)
    final: ModelPerturbation = field(default=None, repr=False)

    def __iter__(self):
        yield self.normal_form
        yield self.reports

    def accumulated(self):
        """Vectorized map ``x -> W_k(x) ... W_1(x)`` of the composed conjugation."""
        conj = list(self.conjugations)

        def W(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape + (4,))
            out[..., 0] = 1.0
            for S_t, S_z in conj:
                out = qmul(qexp(su2_map(S_t, S_z)(x)), out)
            return out
        return W


def chart_to_normal_form(alpha, u0):
    """Constant chart remainder ``{0, u0}`` to the ``z`` of ``(alpha, A E_{1/2}(.) exp{0, z})``.

    Conjugation by the constant ``E_{1/2}(-alpha/4)`` maps the normal form to
    the chart with ``u0 = exp(-i pi alpha / 2) z``.
    """
    return complex(u0) * np.exp(1j * np.pi * alpha / 2)


def kam_reduce(state: ModelPerturbation, schedule=(8, 16, 32, 64), tol=1e-10, max_steps=12,
               gamma=DEFAULT_GAMMA, tau=DEFAULT_TAU, eps0=EPS0, check_window=True):
    """Iterate :func:`local_reduction_step` until the chart remainder is below ``tol``."""
    schedule = list(schedule)
    if check_window:
        rep = check_dc_tilde(state.alpha, gamma, tau, max(schedule))
        if not rep.satisfied:
            raise PreconditionError(f"alpha fails the DC~({gamma}, {tau}) window: worst k = "
                                    f"{rep.worst_k}, margin {rep.min_margin:.3e}")
        size = state.size()
        if size > eps0 * (1 + 1e-9):
            raise PreconditionError(f"initial perturbation {size:.3e} exceeds eps0 = {eps0:.1e}")
    reports, conj = [], []
    current = state
    size = current.size()
    stalls = 0
    step = 0
    while size >= tol:
        if step >= max_steps:
            raise Stalled(f"tolerance {tol:.1e} not reached in {max_steps} steps")
        N = schedule[min(step, len(schedule) - 1)]
        S, current, rep = local_reduction_step(current, N, step, gamma, tau)
        reports.append(rep)
        conj.append(S)
        stalls = stalls + 1 if rep.output_size >= rep.input_size else 0
        if stalls >= 3:
            raise Stalled(f"no decay for 3 consecutive steps (last size {rep.output_size:.3e})")
        size = rep.output_size
        step += 1
    nf = NormalFormParams(current.alpha, chart_to_normal_form(current.alpha,
                                                              current.U_z.coeff(0)))
    return KamResult(nf, reports, conj, current)


# ---------------------------------------------------------------------------
# constant-base reduction (second iterates, renormalized actions)


def _diagonalizer(C):
    """Constant ``Q`` with ``Q C Q^{-1} = exp(rho I)``; returns ``(Q, rho)``."""
    v = np.asarray(C[1:], dtype=float)
    s = np.linalg.norm(v)
    if s < 1e-14:
        return np.array([1.0, 0.0, 0.0, 0.0]), float(np.arctan2(0.0, C[0]))
    u = v / s
    e = np.array([1.0, 0.0, 0.0])
    axis = np.cross(u, e)
    sa = np.linalg.norm(axis)
    ang = np.arctan2(sa, np.dot(u, e))
    if sa < 1e-14:
        axis = np.array([0.0, 1.0, 0.0])
    else:
        axis = axis / sa
    Q = np.concatenate([[np.cos(ang / 2)], np.sin(ang / 2) * axis])
    return Q, float(np.arctan2(s, C[0]))


@dataclass(frozen=True)
class ConstantBaseStep:
    constant: np.ndarray
    rotation: np.ndarray
    S_t: FourierMap
    S_z: FourierMap
    input_size: float
    min_denominator: float
    resonant_modes: tuple

    def conjugation(self):
        """Vectorized ``y -> Q^{-1} exp(S(y)) Q``."""
        Q, S = self.rotation, su2_map(self.S_t, self.S_z)

        def W(y):
            return qmul(qmul(qinv(Q), qexp(S(y))), Q)
        return W


def constant_base_step(freq, H, N, grid=256, constant=None, guard=1e-6):
    """Linearized step for ``y -> H(y)`` near a constant over the rotation by ``freq``.

    ``H`` is a 1-periodic vectorized quaternion map.  The constant defaults to
    the chordal mean of the samples.  Modes whose divisor falls below
    ``guard`` are left in place (resonant), as is the diagonal mean.
    """
    y = np.arange(grid) / grid
    h = H(y)
    C = mean_rotation(h) if constant is None else np.asarray(constant, dtype=float)
    rel = align_signs(qmul(qinv(C), h), ref=np.array([1.0, 0.0, 0.0, 0.0]))
    V = qlog(rel)
    Q, rho = _diagonalizer(C)
    Vr = conjugate_vector(Q, V)
    Vt = analyze(Vr[:, 0], 1, N, Symmetry.REAL_VALUED, check_aliasing=False)
    Vz = analyze(Vr[:, 1] + 1j * Vr[:, 2], 1, N, Symmetry.NONE, check_aliasing=False)
    k = Vt.modes
    dt = np.exp(2j * np.pi * k * freq) - 1.0
    dz = np.exp(-2j * rho) * np.exp(2j * np.pi * k * freq) - 1.0
    keep_t = (k != 0) & (np.abs(dt) >= guard)
    keep_z = np.abs(dz) >= guard
    st = np.zeros_like(Vt.coeffs)
    sz = np.zeros_like(Vz.coeffs)
    st[keep_t] = -Vt.coeffs[keep_t] / dt[keep_t]
    sz[keep_z] = -Vz.coeffs[keep_z] / dz[keep_z]
    resonant = tuple(int(m) for m in k[~keep_z])
    den = float(min(np.abs(dt[k != 0]).min(initial=np.inf), np.abs(dz).min()))
    return ConstantBaseStep(C, Q, FourierMap(1, st, Symmetry.REAL_VALUED),
                            FourierMap(1, sz), float(np.linalg.norm(V, axis=-1).max()),
                            den, resonant)


def conjugate_map(freq, H, W):
    """``y -> W(y + freq) H(y) W(y)^{-1}``."""
    def H_new(y):
        y = np.asarray(y, dtype=float)
        return qmul(qmul(W(y + freq), H(y)), qinv(W(y)))
    return H_new


def distance_to_constant(H, grid=256, period=1.0):
    y = period * np.arange(grid) / grid
    h = H(y)
    C = mean_rotation(h)
    return float(np.max(np.minimum(np.linalg.norm(h - C, axis=-1),
                                   np.linalg.norm(h + C, axis=-1))))


def reduce_near_constant(freq, H, steps=3, N=32, grid=256, guard=1e-6):
    """Repeated :func:`constant_base_step`; returns the list of conjugations and distances.

    ``conjugations[m]`` is the composed 1-periodic map ``D_m`` after ``m``
    steps (``D_0`` the identity), and ``distances[m]`` the sup distance of the
    conjugated map to the nearest constant.
    """
    def ident(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape + (4,))
        out[..., 0] = 1.0
        return out

    D = ident
    current = H
    conjugations, distances, steps_out = [D], [distance_to_constant(H, grid)], []
    for _ in range(steps):
        st = constant_base_step(freq, current, N, grid, guard=guard)
        W = st.conjugation()
        current = conjugate_map(freq, current, W)
        D = _compose(W, D)
        conjugations.append(D)
        distances.append(distance_to_constant(current, grid))
        steps_out.append(st)
    return conjugations, distances, steps_out


def _compose(W, D):
    def out(y):
        return qmul(W(y), D(y))
    return out


def explicit_second_iterate_conjugation(nf: NormalFormParams):
    """Closed-form first-order conjugation for the second iterate's closed form.

    Over ``2 alpha`` with base ``E_{1/2}(alpha)``, the first-order perturbation
    ``{0, conj(z) + z e^{2 i pi x}}`` is removed by ``exp{0, s0 + s1 e^{2 i pi x}}``
    with ``s0 = -conj(z) / (e^{-2 i pi alpha} - 1)`` and
    ``s1 = -z / (e^{2 i pi alpha} - 1)``.
    """
    a, z = nf.alpha_n, nf.z_n
    s0 = -np.conj(z) / (np.exp(-2j * np.pi * a) - 1.0)
    s1 = -z / (np.exp(2j * np.pi * a) - 1.0)

    def W(x):
        x = np.asarray(x, dtype=float)
        w = s0 + s1 * np.exp(2j * np.pi * x)
        return qexp(np.stack([np.zeros_like(x), w.real, w.imag], axis=-1))
    return W


def reduce_second_iterate_once(nf: NormalFormParams, C=None, grid=256):
    """One explicit step on the closed-form second iterate over ``2 alpha_n``.

    Returns the remainder as the chart pair ``(V_t, V_z)`` of
    ``E_{1/2}(alpha_n) exp(V(x))`` and a check flag: every mode outside
    ``[-2, 2]`` must be of higher order (``<= |z|^3``) and, when ``C`` is given,
    the sup size must be ``<= C |z|^2``.
    """
    if abs(nf.z_n) > 0.1:
        raise PreconditionError("|z_n| must be <= 0.1")
    closed = second_iterate_closed_form(nf)
    H = conjugate_map(closed.freq, closed, explicit_second_iterate_conjugation(nf))
    base = e_half_q(nf.alpha_n)
    y = np.arange(grid) / grid
    V = qlog(align_signs(qmul(qinv(base), H(y)), ref=np.array([1.0, 0.0, 0.0, 0.0])))
    V_t = analyze(V[:, 0], 1, grid // 2 - 1, Symmetry.REAL_VALUED, check_aliasing=False)
    V_z = analyze(V[:, 1] + 1j * V[:, 2], 1, grid // 2 - 1, Symmetry.NONE, check_aliasing=False)
    z = abs(nf.z_n)
    outside = max(np.abs(V_t.tail(2).coeffs).max(), np.abs(V_z.tail(2).coeffs).max())
    ok = bool(outside <= max(z ** 3, 1e-14))
    if C is not None:
        ok = ok and bool(np.linalg.norm(V, axis=-1).max() <= C * z ** 2 + 1e-14)
    return (V_t, V_z), ok


def second_iterate_remainder_size(pair, grid=256):
    V_t, V_z = pair
    y = np.arange(grid) / grid
    return float(np.max(np.linalg.norm(su2_map(V_t, V_z)(y), axis=-1)))


# ---------------------------------------------------------------------------
# obstruction gauge


@dataclass(frozen=True)
class ObstructionPair:
    """Off-diagonal obstruction ``z0 + z1 exp(2 i pi x)``."""
    z0: complex
    z1: complex

    def field(self):
        def f(x):
            x = np.asarray(x, dtype=float)
            w = self.z0 + self.z1 * np.exp(2j * np.pi * x)
            return np.stack([np.zeros_like(x), w.real, w.imag], axis=-1)
        return f


def normalize_obstruction(p: ObstructionPair) -> ObstructionPair:
    """Rotate the phase of ``z0`` away with the diagonal constant ``E_{1/2}(-arg(z0)/2pi)``.

    The conjugation multiplies both coefficients by ``exp(-i arg z0)``; the
    leading one becomes ``|z0|``, leaving three real parameters.
    """
    if p.z0 == 0:
        raise ZeroLeadingCoefficient("phase of z0 is undefined")
    r = abs(p.z0)
    phase = np.conj(p.z0) / r
    return ObstructionPair(complex(r), complex(p.z1 * phase))


def obstruction_gauge(p: ObstructionPair):
    """The diagonal constant realizing :func:`normalize_obstruction`, as a quaternion."""
    theta = np.angle(p.z0) / (2 * np.pi)
    return e_half_q(-theta)
