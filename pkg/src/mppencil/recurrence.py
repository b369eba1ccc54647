"""Solutions of the three-term recurrence of a tridiagonal pencil.

All routines evaluate pointwise; ``z`` may be a scalar or any numpy array,
in which case every returned sequence carries the index on axis 0 and the
shape of ``z`` on the remaining axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import TridiagonalPencil
from .errors import (
    BackwardBreakdown,
    IllConditionedB,
    NodeCollision,
    OrderTooLarge,
    PoleAtPoint,
)

IDENTITY_TOL = 1e-10
CROSS_TOL = 1e-9
POLE_TOL = 1e-14
_BIG = 2.0**200
_SMALL = 2.0**-200


def _ldexp_complex(x, e):
    x = np.asarray(x, dtype=complex)
    return np.ldexp(x.real, e) + 1j * np.ldexp(x.imag, e)


@dataclass(frozen=True)
class RecurrenceTable:
    """q_n(z), p_n(z) for n = 0..N.

    When built with ``renormalize=True`` the stored values are mantissas:
    the true pair is ``(q[n], p[n]) * 2**exponents[n]``.  Ratios such as
    ``p[n]/q[n]`` are unaffected.
    """

    z: complex | np.ndarray
    q: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)
    exponents: np.ndarray = field(repr=False)

    q_minus1 = 0.0
    p_minus1 = -1.0

    @property
    def N(self) -> int:
        return self.q.shape[0] - 1

    def true_q(self):
        return _ldexp_complex(self.q, self.exponents)

    def true_p(self):
        return _ldexp_complex(self.p, self.exponents)

    def recheck(self, pencil: TridiagonalPencil) -> float:
        """Max relative residual of the recurrence over all stored triples.

        Works on mantissas expressed in the exponent frame of ``y_{n+1}``, so
        renormalized tables are checked without overflow.
        """
        if self.N < 1:
            return 0.0
        N = self.N
        beta = pencil.beta_at(self.z, N)
        prod = np.ones_like(self.q[:N])
        if N > 1:
            prod[1:] = pencil.alphaL_at(self.z, N - 1) * pencil.alphaR_at(self.z, N - 1)
        e = self.exponents
        s1 = np.exp2((e[:-1] - e[1:]).astype(float))
        s2 = np.ones_like(s1)
        s2[1:] = np.exp2((e[:-2] - e[2:]).astype(float))
        worst = 0.0
        for y, y_m1 in ((self.q, self.q_minus1), (self.p, self.p_minus1)):
            prev = np.concatenate([np.full((1,) + y.shape[1:], y_m1, dtype=complex), y[:-2]]) * s2
            cur = y[:-1] * s1
            lhs = y[1:]
            scale = np.abs(beta * cur) + np.abs(prod * prev) + np.abs(lhs)
            with np.errstate(invalid="ignore", divide="ignore"):
                r = np.where(scale > 0, np.abs(lhs - (beta * cur - prod * prev)) / scale, 0.0)
            worst = max(worst, float(np.max(r)))
        return worst


def eval_table(pencil: TridiagonalPencil, z, N: int, renormalize: bool = False) -> RecurrenceTable:
    """Forward recurrence ``y_{n+1} = beta_n y_n - alphaL_{n-1} alphaR_{n-1} y_{n-1}``."""
    if N > pencil.length:
        raise OrderTooLarge(f"order {N} exceeds pencil length {pencil.length}")
    z_arr = np.asarray(z, dtype=complex)
    shape = z_arr.shape
    q = np.empty((N + 1,) + shape, dtype=complex)
    p = np.empty_like(q)
    ex = np.zeros((N + 1,) + shape, dtype=int)
    q[0], p[0] = 1.0, 0.0
    if N == 0:
        return RecurrenceTable(z, q, p, ex)
    beta = pencil.beta_at(z_arr, N)
    prod = np.ones((N,) + shape, dtype=complex)
    if N > 1:
        prod[1:] = pencil.alphaL_at(z_arr, N - 1) * pencil.alphaR_at(z_arr, N - 1)

    q_prev = np.zeros(shape, dtype=complex)
    p_prev = np.full(shape, -1.0, dtype=complex)
    q_cur = np.ones(shape, dtype=complex)
    p_cur = np.zeros(shape, dtype=complex)
    e = np.zeros(shape, dtype=int)
    for n in range(N):
        q_next = beta[n] * q_cur - prod[n] * q_prev
        p_next = beta[n] * p_cur - prod[n] * p_prev
        q_prev, p_prev = q_cur, p_cur
        q_cur, p_cur = q_next, p_next
        if renormalize:
            mag = np.maximum(np.abs(q_cur), np.abs(p_cur))
            s = np.where((mag > _BIG) | ((mag < _SMALL) & (mag > 0)), np.frexp(mag)[1], 0)
            if np.any(s):
                q_prev, p_prev = _ldexp_complex(q_prev, -s), _ldexp_complex(p_prev, -s)
                q_cur, p_cur = _ldexp_complex(q_cur, -s), _ldexp_complex(p_cur, -s)
                e = e + s
        q[n + 1], p[n + 1], ex[n + 1] = q_cur, p_cur, e
    return RecurrenceTable(z, q, p, ex)


def dense_solve_m(pencil: TridiagonalPencil, z: complex, n: int) -> complex:
    """``<(z B_n - A_n)^{-1} e_0, e_0>`` by a dense linear solve."""
    M = pencil.pencil_matrix(z, n)
    e0 = np.zeros(n, dtype=complex)
    e0[0] = 1.0
    return complex(np.linalg.solve(M, e0)[0])


@dataclass(frozen=True)
class ScaledTable:
    """Left/right scaled solutions and the linearized errors built from ``phi``."""

    z: complex
    phi: complex
    qL: np.ndarray = field(repr=False)
    qR: np.ndarray = field(repr=False)
    pL: np.ndarray = field(repr=False)
    pR: np.ndarray = field(repr=False)
    rL: np.ndarray = field(repr=False)
    rR: np.ndarray = field(repr=False)
    alphaL: np.ndarray = field(repr=False)
    alphaR: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.qL.shape[0] - 1


def _check_nodes(aL, aR, z, pencil, N):
    scaleL = np.abs(pencil._coeffs[1][0][:N]) + np.abs(pencil._coeffs[1][1][:N]) * np.max(np.abs(z))
    scaleR = np.abs(pencil._coeffs[2][0][:N]) + np.abs(pencil._coeffs[2][1][:N]) * np.max(np.abs(z))
    for k in range(N):
        if np.any(np.abs(aL[k]) <= POLE_TOL * scaleL[k]) or np.any(np.abs(aR[k]) <= POLE_TOL * scaleR[k]):
            raise NodeCollision(k)


def scaled_table(pencil: TridiagonalPencil, z, N: int, phi=None) -> ScaledTable:
    """Scaled solutions q^{L,R}, p^{L,R}, r^{L,R} for n = 0..N.

    The scaled sequences are propagated through their own recurrences
    ``alphaL_n y_{n+1} = beta_n y_n - alphaR_{n-1} y_{n-1}`` (left) and
    ``alphaR_n y_{n+1} = beta_n y_n - alphaL_{n-1} y_{n-1}`` (right), which
    avoids forming the running products explicitly.

    ``phi`` defaults to the dense-solve m-function of a section of order
    ``min(2N, len(pencil))``.
    """
    if N > len(pencil.alphaL):
        raise OrderTooLarge(f"scaled order {N} needs {N} alpha entries, have {len(pencil.alphaL)}")
    z_arr = np.asarray(z, dtype=complex)
    shape = z_arr.shape
    if phi is None:
        order = max(1, min(2 * N, pencil.length))
        if shape:
            phi = np.vectorize(lambda zz: dense_solve_m(pencil, zz, order), otypes=[complex])(z_arr)
        else:
            phi = dense_solve_m(pencil, complex(z_arr), order)
    phi_arr = np.asarray(phi, dtype=complex)

    beta = pencil.beta_at(z_arr, N + 1) if N + 1 <= pencil.length else pencil.beta_at(z_arr, N)
    aL = pencil.alphaL_at(z_arr, N)
    aR = pencil.alphaR_at(z_arr, N)
    _check_nodes(aL, aR, z_arr, pencil, N)

    def run(lead, trail, y0, ym1):
        y = np.empty((N + 1,) + shape, dtype=complex)
        y[0] = y0
        prev = np.broadcast_to(np.asarray(ym1, dtype=complex), shape)
        for n in range(N):
            t = trail[n - 1] if n > 0 else 1.0
            y[n + 1] = (beta[n] * y[n] - t * prev) / lead[n]
            prev = y[n]
        return y

    one = np.ones(shape, dtype=complex)
    zero = np.zeros(shape, dtype=complex)
    qL = run(aL, aR, one, zero)
    pL = run(aL, aR, zero, -one)
    qR = run(aR, aL, one, zero)
    pR = run(aR, aL, zero, -one)
    rL = qL * phi_arr - pL
    rR = qR * phi_arr - pR
    return ScaledTable(z, phi, qL, qR, pL, pR, rL, rR, aL, aR)


def wronskian_residual(scaled: ScaledTable, n: int) -> float:
    """``|alphaL_n qL_{n+1} rR_n - alphaR_n qL_n rR_{n+1} - 1|`` (Liouville-Ostrogradsky, scaled)."""
    s = scaled
    val = s.alphaL[n] * s.qL[n + 1] * s.rR[n] - s.alphaR[n] * s.qL[n] * s.rR[n + 1]
    return float(np.max(np.abs(val - 1.0)))


def _effective_order(pencil, n):
    if n > pencil.length:
        if pencil.terminal:
            return pencil.length
        raise OrderTooLarge(f"order {n} exceeds pencil length {pencil.length}")
    return n


def convergent(pencil: TridiagonalPencil, z, n: int, tol: float = POLE_TOL):
    """C_n(z) = p_n(z)/q_n(z), the n-th convergent (``n >= 1``).

    On a terminal pencil, orders past its length return the final convergent.
    Raises PoleAtPoint when q_n(z) vanishes relative to the size of the terms
    it is formed from.
    """
    if n < 1:
        raise ValueError("convergent order must be >= 1")
    n = _effective_order(pencil, n)
    t = eval_table(pencil, z, n, renormalize=True)
    qn, pn = t.q[n], t.p[n]
    # scale of the terms that cancel in q_n (in mantissa units of index n)
    beta = pencil.beta_at(z, n)[n - 1]
    prev_term = np.abs(beta * t.q[n - 1]) * np.exp2(t.exponents[n - 1] - t.exponents[n])
    if n >= 2:
        prod = pencil.alphaL[n - 2](z) * pencil.alphaR[n - 2](z)
        prev_term = prev_term + np.abs(prod * t.q[n - 2]) * np.exp2(t.exponents[n - 2] - t.exponents[n])
    if np.any((qn == 0) | (np.abs(qn) <= tol * prev_term)):
        raise PoleAtPoint(f"q_{n} vanishes at z={z!r}")
    c = pn / qn
    return complex(c) if np.ndim(c) == 0 else c


def convergents(pencil: TridiagonalPencil, z, N: int) -> np.ndarray:
    """All convergents C_1..C_N (index 0 holds C_1); no pole checking."""
    N = _effective_order(pencil, N)
    t = eval_table(pencil, z, N, renormalize=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return t.p[1:] / t.q[1:]


def cf_backward_eval(pencil: TridiagonalPencil, z, n: int, tol: float = 0.0):
    """Bottom-up evaluation of ``1/beta_0 - aL_0 aR_0/beta_1 - ... - /beta_{n-1}``."""
    if n < 1:
        raise ValueError("order must be >= 1")
    n = _effective_order(pencil, n)
    z = np.asarray(z, dtype=complex)
    t = pencil.beta[n - 1](z)
    for k in range(n - 2, -1, -1):
        if np.any(np.abs(t) <= tol * np.abs(pencil.beta[k + 1](z))) or np.any(t == 0):
            raise BackwardBreakdown(k + 1)
        t = pencil.beta[k](z) - pencil.alphaL[k](z) * pencil.alphaR[k](z) / t
    if np.any(t == 0):
        raise BackwardBreakdown(0)
    c = 1.0 / t
    return complex(c) if np.ndim(c) == 0 else c


def alpha_product(pencil: TridiagonalPencil, z, n: int):
    """``prod_{k<n} alphaL_k(z) alphaR_k(z)`` (1 for n = 0)."""
    out = np.ones(np.shape(z), dtype=complex)
    for k in range(n):
        out = out * pencil.alphaL[k](z) * pencil.alphaR[k](z)
    return out


def ostrogradsky_residual(table: RecurrenceTable, pencil: TridiagonalPencil, n: int) -> float:
    """``|p_{n+1} q_n - p_n q_{n+1} - prod| / (1 + |prod|)``.

    Evaluated on mantissas with the exponents folded into the product, so a
    renormalized table gives the same value as an unscaled one.
    """
    if table.N < n + 1:
        raise OrderTooLarge("table too short for the requested index")
    q, p, e = table.q, table.p, table.exponents
    lhs = p[n + 1] * q[n] - p[n] * q[n + 1]
    shift = e[n] + e[n + 1]
    prod = alpha_product(pencil, table.z, n)
    lhs_true = _ldexp_complex(lhs, shift)
    r = np.abs(lhs_true - prod) / (1.0 + np.abs(prod))
    return float(np.max(r))


def ostrogradsky_relative(table: RecurrenceTable, pencil: TridiagonalPencil, n: int) -> float:
    """Same identity measured against the size of the cancelling terms.

    ``|p_{n+1} q_n - p_n q_{n+1} - prod| / (|p_{n+1} q_n| + |p_n q_{n+1}| + |prod|)``;
    this is the floating-point relative residual of the identity.
    """
    q, p, e = table.q, table.p, table.exponents
    a = p[n + 1] * q[n]
    b = p[n] * q[n + 1]
    prod = _ldexp_complex(alpha_product(pencil, table.z, n), -(e[n] + e[n + 1]))
    r = np.abs(a - b - prod) / (np.abs(a) + np.abs(b) + np.abs(prod))
    return float(np.max(r))


def zeros_of_qn(pencil: TridiagonalPencil, n: int, cond_bound: float = 1e12) -> np.ndarray:
    """Roots of q_n: generalized eigenvalues of the n-th section, via B^{-1} A."""
    A, B = pencil.matrices(n)
    return _gen_eigs(A, B, cond_bound)


def zeros_of_pn(pencil: TridiagonalPencil, n: int, cond_bound: float = 1e12) -> np.ndarray:
    """Roots of p_n = det(z B_[1:n-1] - A_[1:n-1])."""
    A, B = pencil.matrices(n)
    return _gen_eigs(A[1:, 1:], B[1:, 1:], cond_bound)


def _gen_eigs(A, B, cond_bound):
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    c = np.linalg.cond(B)
    if not np.isfinite(c) or c > cond_bound:
        raise IllConditionedB(f"cond(B_section) = {c:.3g} exceeds {cond_bound:.3g}")
    return np.linalg.eigvals(np.linalg.solve(B, A))
