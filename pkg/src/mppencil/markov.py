"""Hermitian pencils of Markov functions with conjugate interpolation nodes.

Given a probability measure mu on [a, b] and nodes z_1, conj(z_1), z_3,
conj(z_3), ... off the real line, each step of the even Thiele-type
expansion

    phi_j(z) = 1 / (z B_jj - A_jj - B_{j+1,j}^2 (z - z_{2j+1})(z - conj z_{2j+1}) phi_{j+1}(z))

is carried out on atomic measures, so that every phi_j is an explicit finite
sum and mu_{j+1} is tracked by its atoms and weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import LinearPoly, TridiagonalPencil
from .errors import AtomHit, NegativeWeight, NotPositiveDefinite, RealNode, Terminated

WEIGHT_DRIFT_TOL = 1e-8


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        a, b = map(float, self.interval)
        if atoms.ndim != 1 or atoms.shape != weights.shape or atoms.size == 0:
            raise ValueError("atoms and weights must be nonempty 1-d arrays of equal length")
        if np.any(np.diff(atoms) <= 0):
            raise ValueError("atoms must be strictly increasing")
        if atoms[0] < a or atoms[-1] > b:
            raise ValueError(f"atoms must lie in [{a}, {b}]")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if abs(math.fsum(weights) - 1.0) > 1e-14:
            raise ValueError(f"weights sum to {math.fsum(weights)!r}, not 1")
        atoms.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "interval", (a, b))

    def __len__(self):
        return self.atoms.size

    @classmethod
    def normalized(cls, atoms, weights, interval) -> "DiscreteMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(atoms, w / math.fsum(w), interval)

    @classmethod
    def uniform(cls, a: float, b: float, K: int) -> "DiscreteMeasure":
        """K equal atoms at the midpoints of a uniform partition of [a, b]."""
        atoms = a + (np.arange(K) + 0.5) * (b - a) / K
        return cls(atoms, np.full(K, 1.0 / K), (a, b))

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "atoms": self.atoms.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMeasure":
        return cls.normalized(d["atoms"], d["weights"], tuple(d["interval"]))

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        return cls.from_dict(json.loads(text))


def discretize(
    density: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    n: int = 64,
    rule: str = "gauss",
) -> DiscreteMeasure:
    """Atomic approximation of ``density(t) dt`` on [a, b] by an n-point rule.

    ``rule="gauss"`` uses Gauss-Legendre nodes, ``"equispaced"`` the midpoint
    rule.  Zero-weight nodes are dropped.
    """
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        w = 0.5 * (b - a) * w
    elif rule == "equispaced":
        t = a + (np.arange(n) + 0.5) * (b - a) / n
        w = np.full(n, (b - a) / n)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    w = w * np.asarray(density(t), dtype=float)
    keep = w > 0
    return DiscreteMeasure.normalized(t[keep], w[keep], (a, b))


def dist_to_interval(z, interval) -> np.ndarray:
    a, b = interval
    z = np.asarray(z, dtype=complex)
    x = np.clip(z.real, a, b)
    return np.abs(z - x)


@dataclass(frozen=True)
class NodePlan:
    """Upper nodes z_{2j+1}; the partner z_{2j+2} is the complex conjugate."""

    pairs: tuple[complex, ...]
    delta_min: float = 0.0

    def __post_init__(self):
        pairs = tuple(complex(v) for v in self.pairs)
        for v in pairs:
            if v.imag == 0:
                raise RealNode(f"node {v!r} is real; conjugate pairs need Im z != 0")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    def validate(self, interval) -> None:
        d = dist_to_interval(np.array(self.pairs), interval)
        if np.any(d <= self.delta_min):
            raise ValueError(f"a node lies within {self.delta_min} of {interval}")

    def relaxed_condition(self, interval, tail: int | None = None) -> tuple[float, bool]:
        """``max(|z-a|, |z-b|)/dist(z, [a, b])`` over the last ``tail`` nodes, and ``< 2**0.25``."""
        a, b = interval
        z = np.array(self.pairs[-tail:] if tail else self.pairs)
        r = np.maximum(np.abs(z - a), np.abs(z - b)) / dist_to_interval(z, interval)
        worst = float(r.max())
        return worst, worst < 2**0.25

    def to_list(self) -> list[list[float]]:
        return [[v.real, v.imag] for v in self.pairs]

    @classmethod
    def from_list(cls, v, delta_min: float = 0.0) -> "NodePlan":
        return cls(tuple(complex(re, im) for re, im in v), delta_min)

    @classmethod
    def default(cls, count: int) -> "NodePlan":
        """1+2i, -1+2i, 3i, 2+3i, -2+3i, 4i, ...: conjugate-free upper nodes drifting to infinity."""
        out = []
        for k in range(count):
            r, pos = divmod(k, 3)
            if pos == 2:
                out.append(complex(0.0, 3 + r))
            else:
                out.append(complex((1 + r) * (1 if pos == 0 else -1), 2 + r))
        return cls(tuple(out))


def cauchy_transform(mu: DiscreteMeasure, z):
    """``sum_i w_i / (z - t_i)``."""
    z = np.asarray(z, dtype=complex)
    diff = z[..., None] - mu.atoms
    if np.any(diff == 0):
        raise AtomHit("evaluation point coincides with an atom")
    out = (mu.weights / diff).sum(axis=-1)
    return complex(out) if out.ndim == 0 else out


def weighted_moments(mu: DiscreteMeasure, z: complex) -> tuple[float, float]:
    """``(sum w/|z-t|^2, sum w t/|z-t|^2)``."""
    z = complex(z)
    if z.imag == 0:
        raise RealNode("weighted moments need a non-real point")
    g = mu.weights / np.abs(z - mu.atoms) ** 2
    return float(math.fsum(g)), float(math.fsum(g * mu.atoms))


def _phi_real(mu: DiscreteMeasure, x: float) -> float:
    return float(np.sum(mu.weights / (x - mu.atoms)))


def _phi_real_deriv(mu: DiscreteMeasure, x: float) -> float:
    return float(-np.sum(mu.weights / (x - mu.atoms) ** 2))


def cauchy_zeros(mu: DiscreteMeasure) -> np.ndarray:
    """The K-1 real zeros of the Cauchy transform, one per gap between atoms.

    In the gap (t_i, t_{i+1}) the transform decreases from +inf to -inf; the
    root is bracketed using ``phi(x) (x - t_i)(t_{i+1} - x)``, which is finite
    and changes sign across the gap.
    """
    t, w = mu.atoms, mu.weights
    K = t.size
    out = np.empty(K - 1)
    for i in range(K - 1):
        lo, hi = t[i], t[i + 1]
        others = np.ones(K, dtype=bool)
        others[[i, i + 1]] = False
        to, wo = t[others], w[others]

        def g(x):
            rest = np.sum(wo / (x - to)) if to.size else 0.0
            return w[i] * (hi - x) - w[i + 1] * (x - lo) + (x - lo) * (hi - x) * rest

        out[i] = brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return out


@dataclass(frozen=True)
class ThieleStep:
    Bjj: float
    Ajj: float
    Boff: float
    mu_next: DiscreteMeasure


def thiele_step(mu_j: DiscreteMeasure, node: complex) -> ThieleStep:
    """One step of the expansion: diagonal entries, off-diagonal and the next measure."""
    node = complex(node)
    if node.imag == 0:
        raise RealNode(f"node {node!r} is real")
    t, w = mu_j.atoms, mu_j.weights
    c = 1.0 / (node - t)
    phi = complex(np.sum(w * c))
    phi2 = abs(phi) ** 2
    I0, I1 = weighted_moments(mu_j, node)
    Bjj, Ajj = I0 / phi2, I1 / phi2
    if len(mu_j) == 1:
        raise Terminated(Bjj, Ajj)
    # B_jj - 1 = sum w |c - phi|^2 / |phi|^2, free of cancellation
    boff2 = float(math.fsum(w * np.abs(c - phi) ** 2)) / phi2
    Boff = math.sqrt(boff2)

    s = cauchy_zeros(mu_j)
    dphi = np.array([_phi_real_deriv(mu_j, x) for x in s])
    res = -1.0 / (boff2 * np.abs(s - node) ** 2 * dphi)
    if np.any(res <= 0) or not np.all(np.isfinite(res)):
        raise NegativeWeight(f"nonpositive residue in step at node {node!r}: min {res.min():.3g}")
    drift = abs(math.fsum(res) - 1.0)
    if drift > WEIGHT_DRIFT_TOL:
        raise NegativeWeight(f"weights of the next measure drift from 1 by {drift:.3g}")
    mu_next = DiscreteMeasure.normalized(s, res, mu_j.interval)
    return ThieleStep(Bjj, Ajj, Boff, mu_next)


def bjj_bound(node: complex, interval) -> float:
    a, b = interval
    d = float(dist_to_interval(node, interval))
    return max(abs(node - a) ** 4, abs(node - b) ** 4) / d**4


@dataclass(frozen=True)
class MarkovPencil:
    pencil: TridiagonalPencil
    measures: tuple[DiscreteMeasure, ...] = field(repr=False)
    nodes: tuple[complex, ...]
    terminated_at: int | None = None

    @property
    def interval(self):
        return self.measures[0].interval

    @property
    def mu(self) -> DiscreteMeasure:
        return self.measures[0]

    @property
    def B_diag(self) -> np.ndarray:
        return np.array([p.c1.real for p in self.pencil.beta])

    @property
    def B_off(self) -> np.ndarray:
        """B_{j+1,j} read back through the entry mapping."""
        return np.array([(-p.c1).real for p in self.pencil.alphaL])

    def phi(self, z):
        return cauchy_transform(self.mu, z)


def build_markov_pencil(mu: DiscreteMeasure, plan: NodePlan, N: int) -> MarkovPencil:
    """Run ``N`` expansion steps (fewer if the measure collapses to one atom).

    ``beta_j = z B_jj - A_jj``, ``alphaL_j = -B_{j+1,j} (z - z_{2j+1})`` and
    ``alphaR_j = -B_{j+1,j} (z - conj z_{2j+1})``, so that ``B`` and ``A`` read
    back as real symmetric and Hermitian with ``B_{j+1,j} > 0``.  On collapse
    the last diagonal entry closes the pencil, which is then marked terminal.
    """
    if len(plan) < N:
        raise ValueError(f"node plan has {len(plan)} pairs, {N} needed")
    beta, aL, aR = [], [], []
    measures = [mu]
    terminated_at = None
    cur = mu
    for j in range(N):
        node = plan.pairs[j]
        try:
            st = thiele_step(cur, node)
        except Terminated as term:
            beta.append(LinearPoly(-term.Ajj, term.Bjj))
            terminated_at = j
            break
        beta.append(LinearPoly(-st.Ajj, st.Bjj))
        aL.append(LinearPoly.from_root(-st.Boff, node))
        aR.append(LinearPoly.from_root(-st.Boff, node.conjugate()))
        cur = st.mu_next
        measures.append(cur)
    if terminated_at is not None:
        aL, aR = aL[: len(beta) - 1], aR[: len(beta) - 1]
        measures = measures[: len(beta)]
    pencil = TridiagonalPencil(beta, aL, aR, terminal=terminated_at is not None)
    return MarkovPencil(pencil, tuple(measures), tuple(plan.pairs[: len(aL)]), terminated_at)


def unwind_phi(mp: MarkovPencil, j: int, z):
    """phi_j(z) obtained from phi_0 by inverting the expansion j times.

    Independent of the tracked atoms of mu_1..mu_j; used to cross-check them.
    """
    z = np.asarray(z, dtype=complex)
    phi = cauchy_transform(mp.mu, z)
    for k in range(j):
        node = mp.nodes[k]
        boff = mp.B_off[k]
        beta = mp.pencil.beta[k](z)
        phi = (beta * phi - 1.0) / (boff**2 * (z - node) * (z - node.conjugate()) * phi)
    return phi


def numerical_range_section(mp: MarkovPencil, n: int) -> tuple[float, float]:
    """Extreme eigenvalues of ``L^{-1} A_n L^{-H}`` where ``B_n = L L^H``."""
    A, B = mp.pencil.matrices(n)
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"B section of order {n} is not positive definite") from exc
    X = np.linalg.solve(L, A)
    C = np.linalg.solve(L, X.conj().T).conj().T
    C = 0.5 * (C + C.conj().T)
    ev = np.linalg.eigvalsh(C)
    return float(ev[0]), float(ev[-1])


def minoration_check(mp: MarkovPencil, y, k: int) -> float:
    """``<B y, y> - |y_k|^2`` on the section matching ``len(y)``."""
    y = np.asarray(y, dtype=complex)
    if np.any(y[:k] != 0):
        raise ValueError(f"y must vanish below index {k}")
    _, B = mp.pencil.matrices(y.size)
    return float((y.conj() @ B @ y).real - abs(y[k]) ** 2)


def telescoping_form(mp: MarkovPencil, y, k: int) -> float:
    """``|y_k|^2 + sum_{j=k}^{n-1} |B_{j+1,j} y_j + y_{j+1}|^2 + B_{n+1,n}^2 |y_n|^2``."""
    y = np.asarray(y, dtype=complex)
    n = y.size - 1
    off = mp.B_off
    if off.size <= n:
        raise ValueError("pencil too short for the trailing off-diagonal entry")
    s = abs(y[k]) ** 2
    s += sum(abs(off[j] * y[j] + y[j + 1]) ** 2 for j in range(k, n))
    s += off[n] ** 2 * abs(y[n]) ** 2
    return float(s)
