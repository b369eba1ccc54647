"""LU/UL factorizations of a pencil at a point and the Darboux-type transforms.

Also holds the contour quadrature used for the orthogonality functional
``S(g) = (1/2 pi i) \\oint g(zeta) m(zeta) dzeta`` and its relatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import TridiagonalPencil, node_sequence
from .errors import (
    CoincidentPoints,
    GeometryViolation,
    NodeCollision,
    SingularBDet,
    ZeroPivot,
    ZeroY,
)
from .recurrence import POLE_TOL, ScaledTable, eval_table, scaled_table

DEFAULT_POINTS = 512
WINDING_TOL = 1e-10


# ---------------------------------------------------------------------------
# Contours


@dataclass(frozen=True)
class Contour:
    """Trapezoid discretization of a counter-clockwise circle or ellipse.

    ``weights`` are the increments ``dzeta`` so that
    ``sum(f(nodes) * weights)`` approximates the contour integral of ``f``.
    """

    center: complex
    radius: float | tuple[float, float]
    M: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @classmethod
    def circle(cls, center: complex, radius: float, M: int = DEFAULT_POINTS) -> "Contour":
        theta = 2 * np.pi * np.arange(M) / M
        e = np.exp(1j * theta)
        return cls(complex(center), float(radius), M, center + radius * e, 1j * radius * e * (2 * np.pi / M))

    @classmethod
    def ellipse(cls, center: complex, ra: float, rb: float, M: int = DEFAULT_POINTS) -> "Contour":
        theta = 2 * np.pi * np.arange(M) / M
        nodes = center + ra * np.cos(theta) + 1j * rb * np.sin(theta)
        w = (-ra * np.sin(theta) + 1j * rb * np.cos(theta)) * (2 * np.pi / M)
        return cls(complex(center), (float(ra), float(rb)), M, nodes, w)

    @classmethod
    def bernstein(cls, a: float, b: float, rho: float, M: int = DEFAULT_POINTS) -> "Contour":
        """Ellipse with foci a, b and parameter ``rho > 1``."""
        h = (b - a) / 4
        return cls.ellipse((a + b) / 2, h * (rho + 1 / rho), h * (rho - 1 / rho), M)

    @classmethod
    def from_dict(cls, d: dict) -> "Contour":
        c = complex(*d.get("center", (0.0, 0.0)))
        M = int(d.get("points", DEFAULT_POINTS))
        r = d["radius"]
        if isinstance(r, (list, tuple)):
            return cls.ellipse(c, float(r[0]), float(r[1]), M)
        return cls.circle(c, float(r), M)

    def to_dict(self) -> dict:
        r = list(self.radius) if isinstance(self.radius, tuple) else self.radius
        return {"center": [self.center.real, self.center.imag], "radius": r, "points": self.M}

    def winding(self, z) -> np.ndarray:
        """``(1/2 pi i) sum w_l / (nodes_l - z)``: 1 inside, 0 outside."""
        z = np.asarray(z, dtype=complex)
        return (self.weights / (self.nodes - z[..., None])).sum(axis=-1) / (2j * np.pi)

    def inside(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex) - self.center
        if isinstance(self.radius, tuple):
            ra, rb = self.radius
            return (z.real / ra) ** 2 + (z.imag / rb) ** 2 < 1
        return np.abs(z) < self.radius

    def check(self, inside=(), outside=(), tol: float = WINDING_TOL) -> None:
        """Raise GeometryViolation unless the points sit where stated and the
        discrete winding number confirms it to ``tol``."""
        inside = np.atleast_1d(np.asarray(inside, dtype=complex))
        outside = np.atleast_1d(np.asarray(outside, dtype=complex))
        if inside.size and (not np.all(self.inside(inside)) or np.max(np.abs(self.winding(inside) - 1)) > tol):
            raise GeometryViolation("a point required inside the contour is not enclosed")
        if outside.size and (np.any(self.inside(outside)) or np.max(np.abs(self.winding(outside))) > tol):
            raise GeometryViolation("a point required outside the contour is enclosed or too close")

    def integrate(self, values) -> complex:
        """``(1/2 pi i) \\oint f``, ``values`` sampled on the nodes (last axis)."""
        return np.sum(np.asarray(values) * self.weights, axis=-1) / (2j * np.pi)


def _rho(z, a, b):
    w = (2 * np.asarray(z, dtype=complex) - a - b) / (b - a)
    s = np.sqrt(w - 1) * np.sqrt(w + 1)
    return np.abs(w + s)


def default_contour(interval, exclude=(), M: int = DEFAULT_POINTS, kind: str = "ellipse", rho_max: float = 1.5) -> Contour:
    """Contour around ``[a, b]`` keeping the ``exclude`` points outside.

    ``kind="ellipse"`` (default) gives the Bernstein ellipse with parameter
    ``min(sqrt(rho_min), rho_max)``, ``rho_min`` the smallest ellipse
    parameter of an excluded point.  Staying close to the interval keeps
    polynomial-growth integrands small, which is what limits the attainable
    accuracy (the trapezoid error itself decays like ``rho**-M``).

    ``kind="circle"`` gives the circle centred at ``(a+b)/2`` of radius
    ``(b-a)/2 + margin``, margin half the smallest distance from the interval
    to an excluded point; it falls back to the ellipse when an excluded point
    would be resolved poorly.
    """
    a, b = map(float, interval)
    if not b > a:
        raise ValueError("interval must satisfy a < b")
    ex = np.atleast_1d(np.asarray(exclude, dtype=complex))
    c = (a + b) / 2
    rho_min = float(_rho(ex, a, b).min()) if ex.size else np.inf
    if rho_min <= 1.0:
        raise GeometryViolation("an excluded point lies on the interval")
    if kind == "circle":
        if ex.size == 0:
            return Contour.circle(c, b - a, M)
        margin = 0.5 * float(np.abs(ex - np.clip(ex.real, a, b)).min())
        r = (b - a) / 2 + margin
        factor = float(np.max(r / np.abs(ex - c)))
        if factor < 1 and factor**M < 1e-15:
            return Contour.circle(c, r, M)
    elif kind != "ellipse":
        raise ValueError(f"unknown contour kind {kind!r}")
    return Contour.bernstein(a, b, min(np.sqrt(rho_min), rho_max), M)


# ---------------------------------------------------------------------------
# LU / UL factorizations


def _true_ratio(t, i, j):
    """q_i/q_j from a renormalized table."""
    return t.q[i] / t.q[j] * np.exp2(float(t.exponents[i] - t.exponents[j]))


@dataclass(frozen=True)
class LUFactors:
    z: complex
    d: np.ndarray
    vL: np.ndarray
    vR: np.ndarray

    def reconstruct(self, n: int | None = None) -> np.ndarray:
        n = self.d.size if n is None else n
        L = np.eye(n, dtype=complex) - np.diag(self.vL[: n - 1], -1)
        U = np.eye(n, dtype=complex) - np.diag(self.vR[: n - 1], 1)
        return L @ np.diag(self.d[:n]) @ U


def lu_factorize(pencil: TridiagonalPencil, z: complex, n: int, tol: float = POLE_TOL) -> LUFactors:
    """``zB - A = L D U`` on the leading n x n block.

    ``d_k = q_{k+1}/q_k`` and ``vL_k = alphaL_k q_k / q_{k+1}``; exists iff no
    q_k(z) vanishes.
    """
    t = eval_table(pencil, z, n, renormalize=True)
    beta = pencil.beta_at(z, n)
    for k in range(1, n + 1):
        ref = abs(beta[k - 1] * t.q[k - 1]) * np.exp2(float(t.exponents[k - 1] - t.exponents[k]))
        if t.q[k] == 0 or abs(t.q[k]) <= tol * ref:
            raise ZeroPivot(k)
    d = np.array([_true_ratio(t, k + 1, k) for k in range(n)], dtype=complex)
    m = min(n, len(pencil.alphaL))
    aL = np.array([pencil.alphaL[k](z) for k in range(m)], dtype=complex)
    aR = np.array([pencil.alphaR[k](z) for k in range(m)], dtype=complex)
    return LUFactors(complex(z), d, aL / d[:m], aR / d[:m])


@dataclass(frozen=True)
class ULFactors:
    """``zB - A = U D L`` with free parameter ``d0``.

    ``y`` holds y_0..y_n (y_{-1} = d0 is implicit); ``d`` holds d_0..d_n.
    """

    z: complex
    d0: complex
    y: np.ndarray
    d: np.ndarray
    uL: np.ndarray
    uR: np.ndarray

    def reconstruct(self, n: int | None = None) -> np.ndarray:
        """Leading n x n block of ``U D L`` (uses the factors one index further)."""
        n = self.uL.size if n is None else n
        U = np.eye(n + 1, dtype=complex) - np.diag(self.uR[:n], 1)
        L = np.eye(n + 1, dtype=complex) - np.diag(self.uL[:n], -1)
        return (U @ np.diag(self.d[: n + 1]) @ L)[:n, :n]


def ul_factorize(pencil: TridiagonalPencil, z: complex, d0: complex, n: int, tol: float = POLE_TOL) -> ULFactors:
    """UL factorization; ``y_n = q_n - d0 p_n`` solves the pencil recurrence
    from ``y_{-1} = d0``, ``y_0 = 1``."""
    if len(pencil.alphaL) < n:
        raise ValueError(f"UL factors of order {n} need {n} alpha entries")
    z = complex(z)
    aL = np.array([pencil.alphaL[k](z) for k in range(n)], dtype=complex)
    aR = np.array([pencil.alphaR[k](z) for k in range(n)], dtype=complex)
    for k in range(n):
        if aL[k] == 0 or aR[k] == 0:
            raise NodeCollision(k)
    y = np.empty(n + 1, dtype=complex)
    y[0] = 1.0
    prev = complex(d0)
    for k in range(n):
        prod = aL[k - 1] * aR[k - 1] if k > 0 else 1.0
        bk = pencil.beta[k](z)
        y[k + 1] = bk * y[k] - prod * prev
        ref = abs(bk * y[k]) + abs(prod * prev)
        if y[k + 1] == 0 or abs(y[k + 1]) <= tol * ref:
            raise ZeroY(k + 1)
        prev = y[k]
    d = np.empty(n + 1, dtype=complex)
    d[0] = d0
    d[1:] = aL * aR * y[:-1] / y[1:]
    uL = y[1:] / (aR * y[:-1])
    uR = y[1:] / (aL * y[:-1])
    return ULFactors(z, complex(d0), y, d, uL, uR)


# ---------------------------------------------------------------------------
# Functionals and transforms


def favard_functional(contour: Contour, m_on_contour, g_on_contour) -> complex:
    """``(1/2 pi i) \\oint g m dzeta`` by the trapezoid rule."""
    return complex(contour.integrate(np.asarray(g_on_contour) * np.asarray(m_on_contour)))


def geronimus_functional(contour: Contour, m_on_contour, g_on_contour, x0, d0, m_x0, g_x0) -> complex:
    """``(1/2 pi i) \\oint g m/(x0 - zeta) dzeta + (1/d0 - m(x0)) g(x0)``."""
    reg = contour.integrate(np.asarray(g_on_contour) * np.asarray(m_on_contour) / (x0 - contour.nodes))
    return complex(reg + (1.0 / d0 - m_x0) * g_x0)


def m_on_contour(pencil: TridiagonalPencil, contour: Contour, N: int | None = None):
    """Selected convergents on the contour nodes with a per-node change estimate.

    Uses ``eps = 0`` where ``|q_N/q_{N+1}| < 1`` and ``eps = 1`` elsewhere
    (the subsequence rule with ``xi = zeta``); the diagnostic is the distance
    to the selection made at ``N - 1``.
    """
    L = pencil.length
    if N is None:
        N = L if pencil.terminal else L - 1
    zeta = contour.nodes
    if pencil.terminal and N >= L:
        t = eval_table(pencil, zeta, L, renormalize=True)
        return t.p[L] / t.q[L], np.zeros(zeta.shape)
    t = eval_table(pencil, zeta, N + 1, renormalize=True)

    def pick(n):
        u = np.abs(t.q[n] / t.q[n + 1]) * np.exp2((t.exponents[n] - t.exponents[n + 1]).astype(float))
        k0, k1 = t.p[n] / t.q[n], t.p[n + 1] / t.q[n + 1]
        return np.where(u < 1, k0, k1)

    val = pick(N)
    return val, np.abs(val - pick(N - 1))


def resolvent_entry_via_contour(contour: Contour, pencil: TridiagonalPencil, z: complex, j: int, k: int, m=None) -> complex:
    """``(1/2 pi i) \\oint qR_j(zeta) qL_k(zeta) m(zeta)/(z - zeta) dzeta``.

    ``m`` is an array of m-function values on the contour nodes, a callable,
    or ``None`` for the selected convergents of :func:`m_on_contour`.
    """
    order = max(j, k)
    nodes = [complex(p.value) for p in node_sequence(pencil, 2 * order) if not p.is_infinite]
    contour.check(outside=[z] + nodes)
    if m is None:
        m_vals, _ = m_on_contour(pencil, contour)
    elif callable(m):
        m_vals = m(contour.nodes)
    else:
        m_vals = np.asarray(m)
    st = scaled_table(pencil, contour.nodes, order, phi=0.0)
    return complex(contour.integrate(st.qR[j] * st.qL[k] * m_vals / (z - contour.nodes)))


def christoffel_transform(lu: LUFactors, scaled: ScaledTable, x0: complex):
    """``Q_n(x0, x) = (q_n(x) - v_n(x0) q_{n+1}(x)) / (x0 - x)`` for both sides.

    Returns arrays indexed by n on axis 0, for n up to
    ``min(len(lu.vL), scaled.N) - 1``.
    """
    x = np.asarray(scaled.z, dtype=complex)
    if np.any(x == x0):
        raise CoincidentPoints("Christoffel transform evaluated at its own parameter x0")
    n = min(lu.vL.size, scaled.N)
    sh = (-1,) + (1,) * x.ndim
    QL = (scaled.qL[:n] - lu.vL[:n].reshape(sh) * scaled.qL[1 : n + 1]) / (x0 - x)
    QR = (scaled.qR[:n] - lu.vR[:n].reshape(sh) * scaled.qR[1 : n + 1]) / (x0 - x)
    return QL, QR


def geronimus_transform(ul: ULFactors, scaled: ScaledTable):
    """``Q_n = q_n - u_{n-1}(x0) q_{n-1}`` (``uR`` on the left, ``uL`` on the right); ``Q_0 = 1``."""
    n = min(ul.uL.size, scaled.N) + 1
    x = np.asarray(scaled.z)
    sh = (-1,) + (1,) * x.ndim
    QL = np.empty((n,) + x.shape, dtype=complex)
    QR = np.empty_like(QL)
    QL[0] = QR[0] = 1.0
    QL[1:] = scaled.qL[1:n] - ul.uR[: n - 1].reshape(sh) * scaled.qL[: n - 1]
    QR[1:] = scaled.qR[1:n] - ul.uL[: n - 1].reshape(sh) * scaled.qR[: n - 1]
    return QL, QR


def geronimus_at_infinity(pencil: TridiagonalPencil, scaled: ScaledTable):
    """The x0 -> infinity variant for Markov-type pencils.

    ``Q_n = q_n + B_{n,n-1} q_{n-1}`` with ``B_{n,n-1} = -alphaL_{n-1}.c1``: the
    columns of the unit upper bidiagonal ``U`` with ``B = U U^*``.  For a
    Markov pencil these are orthonormal with respect to the measure.
    """
    n = scaled.N + 1
    x = np.asarray(scaled.z)
    sh = (-1,) + (1,) * x.ndim
    boff = np.array([-pencil.alphaL[k].c1 for k in range(n - 1)], dtype=complex)
    QL = np.empty((n,) + x.shape, dtype=complex)
    QR = np.empty_like(QL)
    QL[0] = QR[0] = 1.0
    QL[1:] = scaled.qL[1:n] + boff.reshape(sh) * scaled.qL[: n - 1]
    QR[1:] = scaled.qR[1:n] + boff.reshape(sh) * scaled.qR[: n - 1]
    return QL, QR


def multi_christoffel(
    pencil: TridiagonalPencil,
    x_list: Sequence[complex],
    n: int,
    x,
    side: str = "L",
    tol: float = 1e-13,
):
    """N-step Christoffel transform through the determinant formula.

    ``Q_n(x_0..x_{N-1}; x) = A_{n,N}(x) / (pi_N(x) B_{n,N})`` where ``A`` is the
    (N+1)x(N+1) determinant of rows ``[q_n, ..., q_{n+N}]`` at ``x, x_0, ...``
    and ``B`` the N x N minor at ``x_0..x_{N-1}`` on columns ``n+1..n+N``.
    """
    pts = [complex(v) for v in x_list]
    N = len(pts)
    if not 1 <= N <= 3:
        raise ValueError("multi-step Christoffel is supported for 1 <= N <= 3")
    if len(set(pts)) != N:
        raise CoincidentPoints("transform points must be distinct (confluent case unsupported)")
    x = np.asarray(x, dtype=complex)
    if np.any(np.isin(x, pts)):
        raise CoincidentPoints("query point coincides with a transform point")
    order = n + N
    key = "qL" if side == "L" else "qR"
    rows_pts = getattr(scaled_table(pencil, np.array(pts), order, phi=0.0), key)[n : n + N + 1].T
    rows_x = getattr(scaled_table(pencil, x.reshape(-1), order, phi=0.0), key)[n : n + N + 1].T
    Bmat = rows_pts[:, 1:]
    Bdet = np.linalg.det(Bmat)
    if abs(Bdet) <= tol * np.prod(np.linalg.norm(Bmat, axis=1)):
        raise SingularBDet(f"B_{{n,N}} determinant vanishes (n={n}, N={N})")
    stack = np.empty((rows_x.shape[0], N + 1, N + 1), dtype=complex)
    stack[:, 0, :] = rows_x
    stack[:, 1:, :] = rows_pts
    Adet = np.linalg.det(stack)
    pi = np.prod(np.array(pts)[None, :] - x.reshape(-1)[:, None], axis=1)
    return (Adet / (pi * Bdet)).reshape(x.shape)
