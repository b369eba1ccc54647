"""Linear pencils zB - A with tridiagonal A, B.

The pencil is stored through the three sequences of degree <= 1 polynomials
``beta``, ``alphaL`` and ``alphaR`` so that

    zB - A = [[ beta_0, -alphaR_0,                  ],
              [-alphaL_0,  beta_1, -alphaR_1,       ],
              [          -alphaL_1,  beta_2,   ...  ]]

Entry mapping (fixed once, used everywhere)::

    B[j, j]   =  beta[j].c1      A[j, j]   = -beta[j].c0
    B[j+1, j] = -alphaL[j].c1    A[j+1, j] =  alphaL[j].c0
    B[j, j+1] = -alphaR[j].c1    A[j, j+1] =  alphaR[j].c0
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import OrderTooLarge, ZeroScaleFactor

DEFAULT_NMAX = 64


class _AtInfinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "AtInfinity"

    def __reduce__(self):
        return (_AtInfinity, ())


AT_INFINITY = _AtInfinity()


@dataclass(frozen=True)
class LinearPoly:
    """The polynomial ``c0 + c1*z``; never identically zero."""

    c0: complex
    c1: complex = 0.0

    def __post_init__(self):
        c0, c1 = complex(self.c0), complex(self.c1)
        if c0 == 0 and c1 == 0:
            raise ValueError("LinearPoly must not be identically zero")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)

    def __call__(self, z):
        return self.c0 + self.c1 * z

    eval = __call__

    @property
    def degree(self) -> int:
        return 0 if self.c1 == 0 else 1

    def root(self):
        if self.c1 == 0:
            return AT_INFINITY
        return -self.c0 / self.c1

    def scaled(self, s: complex) -> "LinearPoly":
        return LinearPoly(self.c0 * s, self.c1 * s)

    @classmethod
    def from_root(cls, lead: complex, root: complex) -> "LinearPoly":
        """``lead * (z - root)``."""
        return cls(-lead * root, lead)

    def to_list(self) -> list[float]:
        return [self.c0.real, self.c0.imag, self.c1.real, self.c1.imag]

    @classmethod
    def from_list(cls, v: Sequence[float]) -> "LinearPoly":
        if len(v) != 4:
            raise ValueError(f"expected [re(c0), im(c0), re(c1), im(c1)], got {v!r}")
        return cls(complex(v[0], v[1]), complex(v[2], v[3]))


@dataclass(frozen=True)
class NodePoint:
    value: object  # complex or AT_INFINITY

    @property
    def is_infinite(self) -> bool:
        return self.value is AT_INFINITY

    def __complex__(self):
        if self.is_infinite:
            raise ValueError("node at infinity has no finite value")
        return complex(self.value)


@dataclass(frozen=True)
class TridiagonalPencil:
    """Finite truncation of an infinite tridiagonal pencil.

    ``terminal`` marks a pencil whose continued fraction genuinely ends
    after ``len(beta)`` terms (a finite MP-fraction); convergents of higher
    order then equal the last one.
    """

    beta: tuple[LinearPoly, ...]
    alphaL: tuple[LinearPoly, ...]
    alphaR: tuple[LinearPoly, ...]
    terminal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(self.beta))
        object.__setattr__(self, "alphaL", tuple(self.alphaL))
        object.__setattr__(self, "alphaR", tuple(self.alphaR))
        if len(self.alphaL) != len(self.alphaR):
            raise ValueError("alphaL and alphaR must have equal length")
        n = len(self.beta)
        if not (len(self.alphaL) == n - 1 or len(self.alphaL) == n) and n > 0:
            raise ValueError(
                f"need len(alpha) in {{len(beta)-1, len(beta)}}, got "
                f"{len(self.alphaL)} vs {n}"
            )

    def __len__(self):
        return len(self.beta)

    @property
    def length(self) -> int:
        return len(self.beta)

    # Coefficient arrays for vectorized evaluation.
    @cached_property
    def _coeffs(self):
        def arr(polys):
            c0 = np.array([p.c0 for p in polys], dtype=complex)
            c1 = np.array([p.c1 for p in polys], dtype=complex)
            return c0, c1

        return arr(self.beta), arr(self.alphaL), arr(self.alphaR)

    @staticmethod
    def _eval(coeffs, z, count):
        c0, c1 = coeffs
        z = np.asarray(z, dtype=complex)
        c0 = c0[:count].reshape((-1,) + (1,) * z.ndim)
        c1 = c1[:count].reshape((-1,) + (1,) * z.ndim)
        return c0 + c1 * z

    def beta_at(self, z, count=None):
        """Array ``[beta_0(z), ..., beta_{count-1}(z)]`` (leading axis = index)."""
        return self._eval(self._coeffs[0], z, self.length if count is None else count)

    def alphaL_at(self, z, count=None):
        return self._eval(self._coeffs[1], z, len(self.alphaL) if count is None else count)

    def alphaR_at(self, z, count=None):
        return self._eval(self._coeffs[2], z, len(self.alphaR) if count is None else count)

    def matrices(self, n: int | None = None):
        """Dense leading n x n blocks ``(A, B)``."""
        n = self.length if n is None else n
        if n > self.length:
            raise OrderTooLarge(f"section order {n} exceeds pencil length {self.length}")
        A = np.zeros((n, n), dtype=complex)
        B = np.zeros((n, n), dtype=complex)
        for j in range(n):
            B[j, j] = self.beta[j].c1
            A[j, j] = -self.beta[j].c0
        for j in range(n - 1):
            B[j + 1, j] = -self.alphaL[j].c1
            A[j + 1, j] = self.alphaL[j].c0
            B[j, j + 1] = -self.alphaR[j].c1
            A[j, j + 1] = self.alphaR[j].c0
        return A, B

    def pencil_matrix(self, z: complex, n: int | None = None) -> np.ndarray:
        A, B = self.matrices(n)
        return z * B - A

    def truncated(self, n: int) -> "TridiagonalPencil":
        if n > self.length:
            raise OrderTooLarge(f"cannot truncate length {self.length} pencil to {n}")
        return TridiagonalPencil(self.beta[:n], self.alphaL[:n], self.alphaR[:n])

    # Constructors.
    @classmethod
    def from_matrices(cls, A, B) -> "TridiagonalPencil":
        A = np.asarray(A, dtype=complex)
        B = np.asarray(B, dtype=complex)
        n = A.shape[0]
        beta = [LinearPoly(-A[j, j], B[j, j]) for j in range(n)]
        aL = [LinearPoly(A[j + 1, j], -B[j + 1, j]) for j in range(n - 1)]
        aR = [LinearPoly(A[j, j + 1], -B[j, j + 1]) for j in range(n - 1)]
        return cls(beta, aL, aR)

    @classmethod
    def jfraction(cls, b: Sequence[complex], a: Sequence[complex]) -> "TridiagonalPencil":
        """J-fraction ``1/(z-b_0) - a_0^2/(z-b_1) - ...`` as the pencil ``z - A``."""
        beta = [LinearPoly(-bk, 1.0) for bk in b]
        alpha = [LinearPoly(ak) for ak in a]
        return cls(beta, alpha, alpha)

    # Serialization.
    def to_dict(self) -> dict:
        d = {
            "beta": [p.to_list() for p in self.beta],
            "alphaL": [p.to_list() for p in self.alphaL],
            "alphaR": [p.to_list() for p in self.alphaR],
        }
        if self.terminal:
            d["terminal"] = True
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TridiagonalPencil":
        return cls(
            [LinearPoly.from_list(v) for v in d["beta"]],
            [LinearPoly.from_list(v) for v in d["alphaL"]],
            [LinearPoly.from_list(v) for v in d["alphaR"]],
            terminal=bool(d.get("terminal", False)),
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "TridiagonalPencil":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class FiniteSection:
    order: int
    A_section: np.ndarray = field(repr=False)
    B_section: np.ndarray = field(repr=False)

    def at(self, z: complex) -> np.ndarray:
        return z * self.B_section - self.A_section


def section(pencil: TridiagonalPencil, n: int) -> FiniteSection:
    """Leading ``n x n`` blocks of ``A`` and ``B``."""
    if n < 0:
        raise ValueError("section order must be nonnegative")
    A, B = pencil.matrices(n)
    A.flags.writeable = False
    B.flags.writeable = False
    return FiniteSection(n, A, B)


def node_sequence(pencil: TridiagonalPencil, count: int) -> list[NodePoint]:
    """Interpolation nodes z_1, z_2, ...: roots of alphaL_k, alphaR_k alternately."""
    if count > 2 * len(pencil.alphaL):
        raise OrderTooLarge(f"{count} nodes requested, pencil carries {2 * len(pencil.alphaL)}")
    out = []
    for i in range(count):
        k, right = divmod(i, 2)
        poly = pencil.alphaR[k] if right else pencil.alphaL[k]
        out.append(NodePoint(poly.root()))
    return out


def scale_balance(pencil: TridiagonalPencil, Delta, D) -> TridiagonalPencil:
    """The pencil ``Delta D (zB - A) D^{-1} Delta`` for diagonal ``Delta``, ``D``.

    Diagonal entries pick up ``Delta_j**2``; off-diagonals are rebalanced by
    ``D``.  The product ``alphaL_j * alphaR_j`` depends only on ``Delta``, so
    the convergents of the result are those of the input divided by
    ``Delta_0**2``.
    """
    n = pencil.length
    Delta = np.asarray(Delta, dtype=complex)
    D = np.asarray(D, dtype=complex)
    if len(Delta) < n or len(D) < n:
        raise ValueError("scale sequences shorter than the pencil")
    if np.any(Delta[:n] == 0) or np.any(D[:n] == 0):
        raise ZeroScaleFactor("scale and balance factors must be nonzero")
    # a trailing (unused) alpha entry sees an implicit factor 1 past the end
    m = len(pencil.alphaL)
    Delta = np.append(Delta, np.ones(max(0, m + 1 - len(Delta))))
    D = np.append(D, np.ones(max(0, m + 1 - len(D))))
    beta = [p.scaled(Delta[j] ** 2) for j, p in enumerate(pencil.beta)]
    aL, aR = [], []
    for j in range(m):
        dd, bal = Delta[j] * Delta[j + 1], D[j + 1] / D[j]
        aL.append(pencil.alphaL[j].scaled(dd * bal))
        aR.append(pencil.alphaR[j].scaled(dd / bal))
    return TridiagonalPencil(beta, aL, aR, terminal=pencil.terminal)


def random_pencil(rng: np.random.Generator, n: int, radius: float = 1.0) -> TridiagonalPencil:
    """Pencil of length ``n`` with all coefficients uniform in a disk."""

    def disk(size):
        r = radius * np.sqrt(rng.uniform(size=size))
        t = rng.uniform(0, 2 * np.pi, size=size)
        return r * np.exp(1j * t)

    c = disk((3, n, 2))
    beta = [LinearPoly(*c[0, j]) for j in range(n)]
    aL = [LinearPoly(*c[1, j]) for j in range(n - 1)]
    aR = [LinearPoly(*c[2, j]) for j in range(n - 1)]
    return TridiagonalPencil(beta, aL, aR)
