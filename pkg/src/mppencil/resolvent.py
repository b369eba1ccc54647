"""Resolvents of finite sections, m-function estimates and decay diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import LinearPoly, TridiagonalPencil
from .errors import NoStabilization, SingularSection
from .recurrence import ScaledTable, eval_table

SINGULAR_TOL = 1e-8


@dataclass(frozen=True)
class ResolventProbe:
    z: complex
    order: int
    entries: np.ndarray = field(repr=False)
    kappa: float
    inv_norm: float
    residual: float

    @property
    def m(self) -> complex:
        return complex(self.entries[0, 0])


def probe_matrix(M, z: complex = 0j) -> ResolventProbe:
    """Inverse, condition number and inversion residual of a dense matrix."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    s = np.linalg.svd(M, compute_uv=False)
    if s[-1] == 0:
        raise SingularSection(f"section of order {n} is singular at z={z!r}")
    R = np.linalg.inv(M)
    residual = np.linalg.norm(R @ M - np.eye(n), 2)
    if not np.isfinite(residual) or residual > SINGULAR_TOL:
        raise SingularSection(f"inversion residual {residual:.3g} at z={z!r}, order {n}")
    return ResolventProbe(complex(z), n, R, float(s[0] / s[-1]), float(1.0 / s[-1]), float(residual))


def resolvent_probe(pencil: TridiagonalPencil, z: complex, n: int) -> ResolventProbe:
    """Dense inverse of the n-th section of ``zB - A`` with its condition number."""
    return probe_matrix(pencil.pencil_matrix(z, n), z)


@dataclass(frozen=True)
class DecayFit:
    gamma_fit: float
    delta_fit: float
    gamma_bound: float
    delta_bound: float
    violations: int
    envelope: np.ndarray = field(repr=False)


def decay_bounds(kappa: float, inv_norm: float) -> tuple[float, float]:
    """``(gamma, delta)`` of the geometric entry bound for a tridiagonal inverse."""
    if kappa <= 1.0:
        return np.inf, 0.0
    delta = np.sqrt((kappa - 1.0) / (kappa + 1.0))
    gamma = 3.0 * inv_norm / delta**2 * max(kappa, (1.0 + kappa) ** 2 / (2.0 * kappa))
    return float(gamma), float(delta)


def decay_fit(probe: ResolventProbe) -> DecayFit:
    """Fit ``|R_jk| ~ gamma * delta**|j-k|`` and compare with the a priori bound.

    The fit is a least-squares line through ``log max_{|j-k|=d} |R_jk|``
    against ``d``, i.e. through the upper envelope of the entries.
    """
    n = probe.order
    if n < 4:
        raise ValueError("decay fit needs a section of order >= 4")
    absR = np.abs(probe.entries)
    dist = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    env = np.array([absR[dist == d].max() for d in range(n)])
    tiny = env[0] * 1e-300 if env[0] > 0 else 0.0
    mask = env > tiny
    if mask[1:].sum() == 0:
        gamma_fit, delta_fit = float(env[0]), 0.0
    else:
        d = np.arange(n)[mask]
        slope, intercept = np.polyfit(d, np.log(env[mask]), 1)
        gamma_fit, delta_fit = float(np.exp(intercept)), float(min(np.exp(slope), 1.0))
    gamma_b, delta_b = decay_bounds(probe.kappa, probe.inv_norm)
    with np.errstate(invalid="ignore", over="ignore"):
        bound = gamma_b * np.power(delta_b, dist)
    bound = np.where(dist == 0, gamma_b, bound)
    violations = int(np.sum(absR > bound * (1 + 1e-12)))
    return DecayFit(gamma_fit, delta_fit, gamma_b, delta_b, violations, env)


def entry_formula(scaled: ScaledTable, j: int, k: int) -> complex:
    """Resolvent entry from recurrence solutions: ``rR_j qL_k`` (j >= k) or ``qR_j rL_k``."""
    if j >= k:
        return scaled.rR[j] * scaled.qL[k]
    return scaled.qR[j] * scaled.rL[k]


@dataclass(frozen=True)
class MEstimate:
    z: complex
    N: int
    value: complex
    epsilon: int
    u_xi: complex
    error_estimate: float
    stabilized: bool


def select_convergent(pencil: TridiagonalPencil, z, xi, N: int):
    """Selected convergent ``m_[0:N-1+eps]`` = C_{N+eps} together with eps and u_N(xi)."""
    L = pencil.length
    if N + 1 > L and pencil.terminal:
        tz = eval_table(pencil, z, L, renormalize=True)
        return complex(tz.p[L] / tz.q[L]), 0, complex(np.nan)
    tx = eval_table(pencil, xi, N + 1, renormalize=True)
    u = tx.q[N] / tx.q[N + 1] * np.exp2(float(tx.exponents[N] - tx.exponents[N + 1]))
    eps = 0 if abs(u) < 1 else 1
    tz = eval_table(pencil, z, N + eps, renormalize=True)
    return complex(tz.p[N + eps] / tz.q[N + eps]), eps, complex(u)


def u_sequence(pencil: TridiagonalPencil, xi, N: int) -> np.ndarray:
    """``u_n(xi) = q_n(xi)/q_{n+1}(xi)`` for n = 0..N-1."""
    t = eval_table(pencil, xi, N, renormalize=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return t.q[:-1] / t.q[1:] * np.exp2((t.exponents[:-1] - t.exponents[1:]).astype(float))


def m_function(pencil: TridiagonalPencil, z: complex, N: int, xi=None, tol: float = 1e-8) -> MEstimate:
    """m-function estimate by the subsequence rule.

    ``eps = 0`` when ``|u_N(xi)| < 1`` and 1 otherwise; the returned value is
    the convergent of the section ``[0 : N-1+eps]``.  The error estimate is the
    change from the selection made at ``N - 1``.  A change above ``tol``
    (relative to ``max(1, |value|)``) emits :class:`NoStabilization`.
    """
    if N < 4:
        raise ValueError("m_function needs N >= 4")
    xi = z if xi is None else xi
    value, eps, u = select_convergent(pencil, z, xi, N)
    prev, _, _ = select_convergent(pencil, z, xi, N - 1)
    err = abs(value - prev)
    ok = bool(np.isfinite(err) and err <= tol * max(1.0, abs(value)))
    if not ok:
        warnings.warn(
            f"convergents at z={z!r} moved by {err:.3g} between orders {N - 1} and {N}",
            NoStabilization,
            stacklevel=2,
        )
    return MEstimate(complex(z), N, value, eps, u, float(err), ok)


def kappa_stabilization(pencil: TridiagonalPencil, z: complex, n: int, factor: float = 4.0):
    """Heuristic resolvent-set test: ``(kappa_n, kappa_2n, accepted)``.

    ``z`` is accepted when the section condition number at order ``2n`` is
    within ``factor`` of the one at order ``n``.
    """
    n2 = min(2 * n, pencil.length)
    k1 = np.linalg.cond(pencil.pencil_matrix(z, n))
    k2 = np.linalg.cond(pencil.pencil_matrix(z, n2))
    return float(k1), float(k2), bool(k2 <= factor * k1)


def example_pencil(nodes, n: int) -> TridiagonalPencil:
    """Pencil ``U* diag(d) U`` with ``d_k(z) = (z - z_k)/(1 + |z_k|)``.

    ``U`` is unit upper bidiagonal with ``-1/2`` on the superdiagonal, which
    gives ``beta_k = d_k + d_{k-1}/4`` and ``alphaL_k = alphaR_k = d_k/2``.
    The resolvent set of the infinite pencil is the complement of the closure
    of the nodes.
    """
    nodes = [complex(v) for v in nodes]
    if n > len(nodes):
        raise ValueError(f"need at least {n} nodes, got {len(nodes)}")
    d = [LinearPoly(-zk / (1 + abs(zk)), 1.0 / (1 + abs(zk))) for zk in nodes[:n]]
    beta = []
    for k in range(n):
        if k == 0:
            beta.append(d[0])
        else:
            beta.append(LinearPoly(d[k].c0 + d[k - 1].c0 / 4, d[k].c1 + d[k - 1].c1 / 4))
    alpha = [dk.scaled(0.5) for dk in d]
    return TridiagonalPencil(beta, alpha, alpha)


def example_factors(nodes, n: int):
    """``(U, d)`` of the factorized form, for cross-checks."""
    U = np.eye(n, dtype=complex) - 0.5 * np.eye(n, k=1)
    zk = np.asarray(nodes[:n], dtype=complex)
    return U, (lambda z: (z - zk) / (1 + np.abs(zk)))
