"""Batch driver: build pencils from a JSON config and run the experiments.

Verbs
-----
build      construct a Markov pencil and check its structure
converge   convergent errors against the Cauchy transform on a grid
subseq     subsequence rule around a point ``xi``
factor     LU/UL reconstruction checks at configured points
biortho    Favard, Christoffel, Geronimus and multi-step checks
selftest   all of the above on built-in configurations

Each verb writes ``<verb>.csv`` and ``<verb>_summary.json`` to ``--out``;
``build`` also writes ``pencil.json``.  The exit code is 0 iff every
asserted check passed.  Output contains no timestamps, so a fixed config
(including ``seed``) reproduces the files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .core import TridiagonalPencil, node_sequence, random_pencil
from .errors import ConfigError, PencilError
from .factorization import (
    Contour,
    christoffel_transform,
    default_contour,
    favard_functional,
    geronimus_at_infinity,
    geronimus_functional,
    geronimus_transform,
    lu_factorize,
    m_on_contour,
    multi_christoffel,
    ul_factorize,
)
from .markov import (
    DiscreteMeasure,
    MarkovPencil,
    NodePlan,
    bjj_bound,
    build_markov_pencil,
    numerical_range_section,
)
from .recurrence import convergent, dense_solve_m, eval_table, scaled_table
from .resolvent import select_convergent

DEFAULT_TOLERANCES = {
    "convergence": 1e-6,
    "rate": 0.9,
    "identity": 1e-12,
    "special": 1e-10,
    "quadrature": 1e-8,
    "diagonal": 1e-6,
    "multistep": 1e-7,
    "interpolation": 1e-8,
    "crosscheck": 1e-12,
}


# ---------------------------------------------------------------------------
# Configuration


def _complex(v, what="value") -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"{what}: expected a number or [re, im], got {v!r}")


def _complex_list(v, what) -> list[complex]:
    if not isinstance(v, list):
        raise ConfigError(f"{what}: expected a list")
    return [_complex(x, what) for x in v]


def _grid(v) -> list[complex]:
    if isinstance(v, dict):
        if "rect" not in v:
            raise ConfigError("grid: expected a list of points or {'rect': ...}")
        r = v["rect"]
        re = np.linspace(*r["re"][:2], int(r["re"][2]))
        im = np.linspace(*r["im"][:2], int(r["im"][2]))
        pts = [complex(x, y) for y in im for x in re]
    else:
        pts = _complex_list(v, "grid")
    if len(set(pts)) != len(pts):
        raise ConfigError("grid points must be distinct")
    return pts


def _measure(v, base: Path) -> DiscreteMeasure:
    if isinstance(v, str):
        path = Path(v) if Path(v).is_absolute() else base / v
        try:
            return DiscreteMeasure.from_json(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read measure file {path}: {exc}") from exc
    if not isinstance(v, dict):
        raise ConfigError("measure: expected a path or an object")
    if "uniform" in v:
        u = v["uniform"]
        a, b = u.get("interval", [-1.0, 1.0])
        return DiscreteMeasure.uniform(float(a), float(b), int(u["atoms"]))
    return DiscreteMeasure.from_dict(v)


@dataclass
class ExperimentConfig:
    """Parsed experiment configuration (see :meth:`from_dict` for keys)."""

    measure: DiscreteMeasure | None = None
    plan: NodePlan | None = None
    steps: int | None = None
    random: dict | None = None
    grid: list[complex] = field(default_factory=list)
    orders: list[int] = field(default_factory=lambda: [4, 8, 12, 16, 20, 24])
    xi: complex | None = None
    disk_radius: float = 0.1
    disk_points: int = 9
    points: list[complex] = field(default_factory=list)
    d0: list[complex] = field(default_factory=lambda: [0j, 1 + 0j, 1j])
    x0: complex = 1.5 + 0.7j
    x1: complex = -1.3 + 0.9j
    contour: dict | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    workers: int = 4
    _built: Any = field(default=None, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base: Path | str = ".") -> "ExperimentConfig":
        """Keys: ``measure`` (inline, ``{"uniform": {...}}`` or file path),
        ``nodes`` (list of [re, im]), ``steps``, ``random`` ({"n", "radius"}),
        ``grid``, ``orders``, ``xi``, ``disk`` ({"radius", "points"}),
        ``points``, ``d0``, ``x0``, ``x1``, ``contour``, ``tolerances``,
        ``seed``, ``workers``."""
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        base = Path(base)
        known = {"measure", "nodes", "steps", "random", "grid", "orders", "xi", "disk", "points",
                 "d0", "x0", "x1", "contour", "tolerances", "seed", "workers"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        try:
            if "measure" in d:
                cfg.measure = _measure(d["measure"], base)
            if "nodes" in d:
                cfg.plan = NodePlan.from_list(d["nodes"])
            if "steps" in d:
                cfg.steps = int(d["steps"])
            if "random" in d:
                cfg.random = {"n": int(d["random"]["n"]), "radius": float(d["random"].get("radius", 1.0))}
            if "grid" in d:
                cfg.grid = _grid(d["grid"])
            if "orders" in d:
                cfg.orders = [int(n) for n in d["orders"]]
            if "xi" in d:
                cfg.xi = _complex(d["xi"], "xi")
            if "disk" in d:
                cfg.disk_radius = float(d["disk"].get("radius", cfg.disk_radius))
                cfg.disk_points = int(d["disk"].get("points", cfg.disk_points))
            if "points" in d:
                cfg.points = _complex_list(d["points"], "points")
            if "d0" in d:
                cfg.d0 = _complex_list(d["d0"], "d0")
            for key in ("x0", "x1"):
                if key in d:
                    setattr(cfg, key, _complex(d[key], key))
            if "contour" in d:
                Contour.from_dict(d["contour"])
                cfg.contour = dict(d["contour"])
            cfg.tolerances.update({k: float(v) for k, v in d.get("tolerances", {}).items()})
            cfg.seed = int(d.get("seed", 0))
            cfg.workers = max(1, int(d.get("workers", 4)))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
        return cls.from_dict(data, base=path.parent)

    def validate(self) -> None:
        if not self.orders or any(n < 1 for n in self.orders):
            raise ConfigError("orders must be positive")
        if any(b <= a for a, b in zip(self.orders, self.orders[1:])):
            raise ConfigError("orders must be strictly increasing")
        if self.measure is None and self.random is None:
            raise ConfigError("config needs a 'measure' or a 'random' pencil")
        if self.measure is not None and self.plan is not None:
            self.plan.validate(self.measure.interval)

    def cap_orders(self, max_order: int) -> None:
        self.orders = [n for n in self.orders if n <= max_order] or [max_order]

    # Pencil construction, cached.
    def build(self) -> tuple[TridiagonalPencil, MarkovPencil | None]:
        if self._built is None:
            if self.measure is not None:
                steps = self.steps if self.steps is not None else max(self.orders)
                plan = self.plan or NodePlan.default(steps)
                if len(plan) < steps:
                    raise ConfigError(f"node plan has {len(plan)} pairs, steps={steps}")
                mp = build_markov_pencil(self.measure, plan, steps)
                self._built = (mp.pencil, mp)
            else:
                rng = np.random.default_rng(self.seed)
                self._built = (random_pencil(rng, self.random["n"], self.random["radius"]), None)
        return self._built


# ---------------------------------------------------------------------------
# Output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, complex):
        return [_jsonable(v.real), _jsonable(v.imag)]
    return v


def write_csv(path: Path, records: list[dict]) -> None:
    if not records:
        path.write_text("")
        return
    cols = []
    for r in records:
        cols.extend(k for k in r if k not in cols)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            w.writerow([_fmt(r.get(c)) for c in cols])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _finite(x) -> bool:
    return bool(np.all(np.isfinite(x)))


def _summary(verb: str, records: list[dict], **extra) -> dict:
    asserted = [r for r in records if r.get("asserted", True)]
    failed = [r for r in asserted if not r["passed"]]
    return {"verb": verb, "records": len(records), "asserted": len(asserted), "failed": len(failed),
            "passed": not failed, **extra}


def _pmap(cfg: ExperimentConfig, fn, items):
    with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# Experiments


def run_build(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Row-by-row structure checks of the Markov pencil."""
    pencil, mp = cfg.build()
    if mp is None:
        raise ConfigError("build needs a measure")
    tol = cfg.tolerances
    A, B = pencil.matrices()
    Bd, Boff = mp.B_diag, mp.B_off
    records = []
    for j in range(pencil.length):
        row = {"j": j, "B_jj": float(Bd[j]), "A_jj_re": A[j, j].real, "A_jj_im": A[j, j].imag}
        if j < len(Boff):
            bound = bjj_bound(mp.nodes[j], mp.interval)
            ident = abs(Boff[j] ** 2 - (Bd[j] - 1.0))
            ok = bool(Bd[j] > 1.0 and Bd[j] <= bound and ident <= tol["identity"] * max(1.0, Bd[j]))
            row.update(B_off=float(Boff[j]), identity_residual=ident, bound=bound, kind="row")
        else:
            row.update(B_off=None, identity_residual=None, bound=None, kind="closing")
            ok = bool(Bd[j] > 0)
        row["passed"] = ok
        records.append(row)
    # interpolation at the consumed nodes
    nodes = [complex(p.value) for p in node_sequence(pencil, 2 * len(pencil.alphaL))]
    nmax = min(len(pencil.alphaL), 10)
    worst = 0.0
    for n in range(1, nmax + 1):
        zk = np.array(nodes[: 2 * n])
        t = eval_table(pencil, zk, n)
        res = np.abs(mp.phi(zk) * t.q[n] - t.p[n]) / (1 + np.abs(t.q[n]))
        worst = max(worst, float(res.max()))
    interp_ok = worst < tol["interpolation"]
    hermitian = bool(np.array_equal(A, A.conj().T) and np.array_equal(B, B.T) and not np.any(B.imag))
    records.append({"j": None, "kind": "interpolation", "identity_residual": worst, "passed": interp_ok})
    records.append({"j": None, "kind": "hermitian", "passed": hermitian})
    summary = _summary(
        "build",
        records,
        length=pencil.length,
        terminated_at=mp.terminated_at,
        interval=list(mp.interval),
        interpolation_residual=worst,
    )
    return records, summary


def _fit_rate(orders, errs, floor) -> float:
    """Geometric rate ``exp(slope)`` of log-error against order above ``floor``."""
    ns = np.array([n for n, e in zip(orders, errs) if np.isfinite(e) and e > floor], dtype=float)
    es = np.array([e for e in errs if np.isfinite(e) and e > floor])
    if ns.size < 2:
        return 0.0
    slope = np.polyfit(ns, np.log(es), 1)[0]
    return float(np.exp(slope))


def run_convergence(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Errors ``|m_[0:n-1](z) - phi(z)|`` over the grid and the orders."""
    pencil, mp = cfg.build()
    if mp is None:
        raise ConfigError("converge needs a measure (reference values come from its Cauchy transform)")
    if not cfg.grid:
        raise ConfigError("converge needs a grid")
    if not pencil.terminal and max(cfg.orders) > pencil.length:
        raise ConfigError(f"order {max(cfg.orders)} exceeds pencil length {pencil.length}")
    tol = cfg.tolerances
    a, b = mp.interval
    lo, hi = numerical_range_section(mp, pencil.length)

    def one(z):
        in_range = abs(z.imag) <= 1e-14 and lo <= z.real <= hi
        on_interval = abs(z.imag) <= 1e-14 and a <= z.real <= b
        asserted = not (in_range or on_interval)
        try:
            ref = complex(mp.phi(z))
        except PencilError:
            ref = complex(np.nan, np.nan)
        rows, errs = [], []
        for n in cfg.orders:
            try:
                val = complex(convergent(pencil, z, n))
            except PencilError:
                val = complex(np.nan, np.nan)
            err = abs(val - ref)
            errs.append(err)
            kappa = float(np.linalg.cond(pencil.pencil_matrix(z, min(n, pencil.length))))
            rows.append({"z_re": z.real, "z_im": z.imag, "n": n, "m_re": val.real, "m_im": val.imag,
                         "ref_re": ref.real, "ref_im": ref.imag, "abs_error": err, "kappa": kappa})
        rate = _fit_rate(cfg.orders, errs, 1e-14 * max(1.0, abs(ref))) if asserted else float("nan")
        ok = (not asserted) or (errs[-1] < tol["convergence"] and rate < tol["rate"])
        for r in rows:
            r.update(rate=rate, outside_range=not in_range, asserted=asserted, passed=bool(ok),
                     finite=_finite([r["m_re"], r["m_im"], r["abs_error"]]))
        return rows

    records = [r for rows in _pmap(cfg, one, cfg.grid) for r in rows]
    return records, _summary("converge", records, numerical_range=[lo, hi])


def run_subsequence(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Subsequence rule at ``xi``: eps_n, |u_n(xi)| and the sup error over a small disk."""
    pencil, mp = cfg.build()
    if mp is None:
        raise ConfigError("subseq needs a measure")
    if cfg.xi is None:
        raise ConfigError("subseq needs 'xi'")
    if cfg.grid and cfg.xi not in cfg.grid:
        raise ConfigError("xi must be one of the grid points")
    tol = cfg.tolerances
    k = max(cfg.disk_points - 1, 0)
    disk = [cfg.xi] + [cfg.xi + cfg.disk_radius * np.exp(2j * np.pi * i / k) for i in range(k)]
    ref = np.array([complex(mp.phi(z)) for z in disk])

    def one(n):
        vals, eps, u = [], None, None
        for z in disk:
            v, e, uu = select_convergent(pencil, z, cfg.xi, n)
            vals.append(v)
            eps, u = (e, uu) if eps is None else (eps, u)
        sup = float(np.max(np.abs(np.array(vals) - ref)))
        defined = bool(np.isfinite(u))
        if defined:
            t = eval_table(pencil, cfg.xi, n + 1)
            direct = complex(t.q[n] / t.q[n + 1])
            check = abs(abs(u) - abs(direct)) / max(abs(direct), 1e-300)
        else:
            check = 0.0
        return {"n": n, "epsilon": eps, "abs_u": abs(u) if defined else float("nan"), "u_defined": defined,
                "u_crosscheck": check, "sup_error": sup}

    records = _pmap(cfg, one, cfg.orders)
    for i, r in enumerate(records):
        ok = r["epsilon"] in (0, 1) and r["u_crosscheck"] <= tol["crosscheck"]
        if i == len(records) - 1:
            ok = ok and r["sup_error"] < tol["convergence"]
        r["passed"] = bool(ok)
    sup = [r["sup_error"] for r in records]
    tail = sup[len(sup) // 2 :]
    monotone = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(tail, tail[1:]))
    return records, _summary("subseq", records, xi=cfg.xi, disk_radius=cfg.disk_radius, tail_monotone=monotone)


def _rel(X, S) -> float:
    return float(np.abs(X - S).max() / max(1.0, np.abs(S).max()))


def run_factorization_suite(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """LU and UL reconstructions, d0 = 0 reciprocity and the m d0 = 1 case.

    Factorization failures (ZeroPivot, ZeroY, node collisions) become
    failing records rather than exceptions.
    """
    pencil, mp = cfg.build()
    if not cfg.points:
        raise ConfigError("factor needs 'points'")
    tol = cfg.tolerances
    nmax = max(cfg.orders)
    nL = min(nmax, pencil.length)
    nU = min(nmax, len(pencil.alphaL))

    def m_at(z):
        if mp is not None:
            return complex(mp.phi(z))
        return complex(dense_solve_m(pencil, z, pencil.length))

    def one(z):
        base = {"z_re": z.real, "z_im": z.imag}
        out = []
        S = pencil.pencil_matrix(z, nL)
        lu = None
        try:
            lu = lu_factorize(pencil, z, nL)
            err = _rel(lu.reconstruct(), S)
            out.append({**base, "check": "lu_reconstruct", "n": nL, "error": err, "status": "ok",
                        "passed": err < tol["identity"]})
        except PencilError as exc:
            out.append({**base, "check": "lu_reconstruct", "n": nL, "error": None,
                        "status": f"{type(exc).__name__}: {exc}", "passed": False})
        for d0 in cfg.d0:
            row = {**base, "d0_re": d0.real, "d0_im": d0.imag}
            try:
                ul = ul_factorize(pencil, z, d0, nU)
            except PencilError as exc:
                out.append({**row, "check": "ul_reconstruct", "n": nU, "error": None,
                            "status": f"{type(exc).__name__}: {exc}", "passed": False})
                continue
            err = _rel(ul.reconstruct(), pencil.pencil_matrix(z, nU))
            out.append({**row, "check": "ul_reconstruct", "n": nU, "error": err, "status": "ok",
                        "passed": err < tol["identity"]})
            if d0 == 0 and lu is not None:
                k = min(lu.vL.size, ul.uR.size)
                rec = max(np.abs(ul.uR[:k] * lu.vL[:k] - 1).max(), np.abs(ul.uL[:k] * lu.vR[:k] - 1).max())
                out.append({**row, "check": "ul_lu_reciprocity", "n": k, "error": float(rec), "status": "ok",
                            "passed": rec < tol["identity"]})
        # the special value d0 = 1/m(z): y_n = d0 r_n
        m = m_at(z)
        row = {**base, "check": "ul_special"}
        try:
            d0 = 1.0 / m
            ul = ul_factorize(pencil, z, d0, nU)
            t = eval_table(pencil, z, nU)
            r = t.q * m - t.p
            scale = np.abs(t.q) + np.abs(d0 * t.p)
            err = float(np.max(np.abs(ul.y - d0 * r) / scale))
            out.append({**row, "d0_re": d0.real, "d0_im": d0.imag, "n": nU, "error": err, "status": "ok",
                        "passed": err < tol["special"]})
        except (PencilError, ZeroDivisionError) as exc:
            out.append({**row, "n": nU, "error": None, "status": f"{type(exc).__name__}: {exc}",
                        "passed": False})
        return out

    records = [r for rows in _pmap(cfg, one, cfg.points) for r in rows]
    failures = sorted({r["status"].split(":")[0] for r in records if not r["passed"] and r["status"] != "ok"})
    return records, _summary("factor", records, failure_kinds=failures)


def run_biorthogonality(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Contour-quadrature checks of the Favard, Christoffel and Geronimus relations."""
    pencil, mp = cfg.build()
    tol = cfg.tolerances
    x0, x1 = cfg.x0, cfg.x1
    nodes = [complex(p.value) for p in node_sequence(pencil, 2 * len(pencil.alphaL)) if not p.is_infinite]
    if cfg.contour is not None:
        C = Contour.from_dict(cfg.contour)
    elif mp is not None:
        C = default_contour(mp.interval, nodes + [x0, x1])
    else:
        raise ConfigError("biortho on a non-Markov pencil needs an explicit 'contour'")
    C.check(outside=nodes + [x0, x1])
    if mp is not None:
        C.check(inside=[mp.mu.atoms.min(), mp.mu.atoms.max()])
        m_vals, m_diag = mp.phi(C.nodes), 0.0
        m0 = complex(mp.phi(x0))
    else:
        m_vals, change = m_on_contour(pencil, C)
        m_diag = float(change.max())
        m0 = complex(dense_solve_m(pencil, x0, pencil.length))
    records = []

    def rec(kind, j, k, value, target, tolerance, asserted=True, relative=False):
        err = abs(value - target) if not relative else abs(value * relative - 1)
        records.append({"kind": kind, "j": j, "k": k, "value_re": complex(value).real,
                        "value_im": complex(value).imag, "target": target, "error": float(err),
                        "tolerance": tolerance, "asserted": asserted,
                        "passed": bool(np.isfinite(err) and err < tolerance)})

    nA = len(pencil.alphaL)
    if mp is not None:
        w = mp.mu.weights
        rec("favard_norm", 0, 0, favard_functional(C, m_vals, np.ones(C.M)), float(w.sum()), tol["quadrature"])
        rec("favard_moment", 1, 0, favard_functional(C, m_vals, C.nodes), float(np.dot(w, mp.mu.atoms)),
            tol["quadrature"])
    nF = min(8, nA)
    st = scaled_table(pencil, C.nodes, nF, phi=0.0)
    aL = pencil.alphaL_at(C.nodes, nF)
    aR = pencil.alphaR_at(C.nodes, nF)
    for n in range(1, nF + 1):
        piL, piR = np.prod(aL[:n], axis=0), np.prod(aR[:n], axis=0)
        for l in range(n):
            zl = C.nodes**l
            rec("favard_R", n, l, favard_functional(C, m_vals, st.qR[n] * zl / piL), 0.0, tol["quadrature"])
            rec("favard_L", n, l, favard_functional(C, m_vals, st.qL[n] * zl / piR), 0.0, tol["quadrature"])

    # Christoffel
    nC = min(7, nA)
    if nC >= 1:
        lu = lu_factorize(pencil, x0, nC)
        stC = scaled_table(pencil, C.nodes, nC, phi=0.0)
        QL, QR = christoffel_transform(lu, stC, x0)
        for j in range(nC):
            for k in range(nC):
                v = C.integrate(QL[j] * QR[k] * (x0 - C.nodes) * m_vals)
                if j == k:
                    rec("christoffel_diag", j, k, v, 1.0, tol["diagonal"], relative=lu.d[j])
                else:
                    rec("christoffel_off", j, k, v, 0.0, tol["quadrature"])

    # Geronimus, one block per nonzero d0
    nG = min(6, nA)
    stG = scaled_table(pencil, C.nodes, nG, phi=0.0)
    stx = scaled_table(pencil, np.array([x0]), nG, phi=0.0)
    for d0 in cfg.d0:
        if d0 == 0:
            continue
        try:
            ul = ul_factorize(pencil, x0, d0, nG)
        except PencilError as exc:
            records.append({"kind": "geronimus", "j": None, "k": None, "status": f"{type(exc).__name__}: {exc}",
                            "asserted": True, "passed": False})
            continue
        QL, QR = geronimus_transform(ul, stG)
        QLx, QRx = geronimus_transform(ul, stx)
        for j in range(nG):
            for k in range(nG):
                v = geronimus_functional(C, m_vals, QR[j] * QL[k], x0, d0, m0, QRx[j, 0] * QLx[k, 0])
                if j == k:
                    rec(f"geronimus_diag[d0={d0}]", j, k, v, 1.0, tol["diagonal"], relative=ul.d[j])
                else:
                    rec(f"geronimus_off[d0={d0}]", j, k, v, 0.0, tol["quadrature"])
        whole = geronimus_functional(C, m_vals, np.ones(C.M), x0, d0, m0, 1.0)
        parts = favard_functional(C, m_vals, 1.0 / (x0 - C.nodes)) + (1.0 / d0 - m0)
        rec(f"geronimus_additivity[d0={d0}]", 0, 0, whole, complex(parts), tol["identity"] * max(1, abs(parts)))

    if mp is not None:
        sta = scaled_table(pencil, mp.mu.atoms.astype(complex), nG, phi=0.0)
        QL, QR = geronimus_at_infinity(pencil, sta)
        G = np.einsum("ja,ka,a->jk", QR, QL, mp.mu.weights)
        for j in range(G.shape[0]):
            for k in range(G.shape[1]):
                rec("geronimus_infinity", j, k, G[j, k], float(j == k), tol["quadrature"])

    # two-step Christoffel; the relation is provable for |j - k| >= 2 only
    nM = min(5, nA - 2)
    if nM >= 1:
        pi2 = (x0 - C.nodes) * (x1 - C.nodes)
        QLs = [multi_christoffel(pencil, [x0, x1], j, C.nodes) for j in range(nM)]
        QRs = [multi_christoffel(pencil, [x0, x1], j, C.nodes, side="R") for j in range(nM)]
        for j in range(nM):
            for k in range(nM):
                v = C.integrate(QLs[j] * QRs[k] * pi2 * m_vals)
                if j == k:
                    rec("multistep_diag", j, k, v, complex(v), np.inf, asserted=False)
                else:
                    rec("multistep_off", j, k, v, 0.0, tol["multistep"], asserted=abs(j - k) >= 2)
    return records, _summary("biortho", records, contour=C.to_dict(), m_change=m_diag)


# ---------------------------------------------------------------------------
# Entry point

RUNNERS = {
    "build": run_build,
    "converge": run_convergence,
    "subseq": run_subsequence,
    "factor": run_factorization_suite,
    "biortho": run_biorthogonality,
}


def selftest_configs() -> dict[str, dict]:
    """Built-in configurations exercised by ``selftest``."""
    two = {"measure": {"interval": [-1, 1], "atoms": [-1, 1], "weights": [0.5, 0.5]},
           "nodes": [[0, 1], [0, 2]], "steps": 2, "orders": [2, 3, 4, 5],
           "grid": [[3, 0], [2, 1]], "xi": [3, 0], "points": [[3, 0], [2, 1]], "d0": [[0, 0], [1, 0], [0, 1]]}
    twenty = {"measure": {"uniform": {"interval": [-1, 1], "atoms": 20}}, "steps": 24,
              "orders": [4, 8, 12, 16, 20, 24], "grid": [[2, 0], [2, 1], [-3, 0], [0, 5], [0, 0]],
              "xi": [2, 1], "points": [[2, 0], [2, 1], [-3, 0]], "d0": [[0, 0], [1, 0], [0, 1]]}
    return {"two_atom": two, "twenty_atom": twenty}


def run_verb(verb: str, cfg: ExperimentConfig, out: Path) -> bool:
    records, summary = RUNNERS[verb](cfg)
    out.mkdir(parents=True, exist_ok=True)
    if verb == "build":
        (out / "pencil.json").write_text(cfg.build()[0].to_json(indent=2, sort_keys=True) + "\n")
    write_csv(out / f"{verb}.csv", records)
    write_json(out / f"{verb}_summary.json", summary)
    return bool(summary["passed"])


def _selftest(args, out: Path) -> bool:
    ok = True
    for name, d in selftest_configs().items():
        for verb in RUNNERS:
            cfg = ExperimentConfig.from_dict(d)
            _apply_overrides(cfg, args)
            passed = run_verb(verb, cfg, out / name)
            print(f"{name:12s} {verb:9s} {'PASS' if passed else 'FAIL'}")
            ok &= passed
    return ok


def _apply_overrides(cfg: ExperimentConfig, args) -> None:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.max_order is not None:
        cfg.cap_orders(args.max_order)
        if cfg.steps is not None:
            cfg.steps = max(min(cfg.steps, args.max_order), max(cfg.orders))
    if args.tol is not None:
        cfg.tolerances["convergence"] = args.tol


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mppencil", description=__doc__.split("\n")[0])
    p.add_argument("verb", choices=[*RUNNERS, "selftest"])
    p.add_argument("--config", type=Path, help="experiment config (JSON)")
    p.add_argument("--out", type=Path, default=Path("mppencil-out"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for randomized pencils")
    p.add_argument("--max-order", type=int, default=None, help="drop orders above N")
    p.add_argument("--tol", type=float, default=None, help="convergence tolerance")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "selftest":
            return 0 if _selftest(args, args.out) else 1
        if args.config is None:
            raise ConfigError(f"'{args.verb}' needs --config")
        cfg = ExperimentConfig.load(args.config)
        _apply_overrides(cfg, args)
        passed = run_verb(args.verb, cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.verb}: {'PASS' if passed else 'FAIL'} (results in {args.out})")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
