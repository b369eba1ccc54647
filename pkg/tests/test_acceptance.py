"""Acceptance criteria 1-14, each reported as one ``criterion N: PASS/FAIL`` line.

Run on its own with ``pytest tests/test_acceptance.py -v -s`` or
``python3 tests/test_acceptance.py``.
"""

import sys
import time

import numpy as np
import pytest

from mppencil.cli import ExperimentConfig, main, run_convergence, selftest_configs
from mppencil.core import node_sequence, random_pencil
from mppencil.factorization import (
    christoffel_transform,
    default_contour,
    favard_functional,
    geronimus_functional,
    geronimus_transform,
    lu_factorize,
    multi_christoffel,
    ul_factorize,
)
from mppencil.markov import (
    DiscreteMeasure,
    NodePlan,
    build_markov_pencil,
    cauchy_transform,
    numerical_range_section,
    thiele_step,
)
from mppencil.recurrence import (
    cf_backward_eval,
    convergent,
    dense_solve_m,
    eval_table,
    ostrogradsky_relative,
    scaled_table,
    zeros_of_pn,
    zeros_of_qn,
)
from mppencil.resolvent import decay_fit, entry_formula, example_pencil, resolvent_probe

from conftest import rand_disk

SEED = 20240607
X0, X1 = 1.5 + 0.7j, -1.3 + 0.9j


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {n}: {detail}"


@pytest.fixture(scope="module")
def sweep():
    """100 random pencils, n <= 30, 10 random z each."""
    rng = np.random.default_rng(SEED)
    return [(random_pencil(rng, int(rng.integers(1, 31))), rand_disk(rng, 10)) for _ in range(100)]


@pytest.fixture(scope="module")
def grid():
    """20 points on two Bernstein ellipses around [-1, 1]."""
    theta = np.linspace(0, 2 * np.pi, 11)[:-1] + 0.1
    e = np.exp(1j * theta)
    return np.concatenate([0.5 * (rho * e + 1 / (rho * e)) for rho in (1.25, 1.6)])


def markov_contour(mp, extra=()):
    nodes = [complex(p.value) for p in node_sequence(mp.pencil, 2 * len(mp.pencil.alphaL))]
    return default_contour(mp.interval, nodes + list(extra), M=512)


def test_criterion_01_ostrogradsky(sweep, capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for p, z in sweep:
        n = p.length
        t = eval_table(p, z, n, renormalize=True)
        for k in range(n):
            worst = max(worst, ostrogradsky_relative(t, p, k))
    elapsed = time.perf_counter() - t0
    report(capsys, 1, worst < 1e-10 and elapsed < 5, f"max relative residual {worst:.2e}, {elapsed:.2f} s")


def test_criterion_02_triple_agreement(sweep, capsys):
    worst = 0.0
    for p, zs in sweep:
        n = p.length
        for z in zs:
            a = convergent(p, z, n)
            b = cf_backward_eval(p, z, n)
            c = dense_solve_m(p, z, n)
            for u, v in ((a, b), (a, c), (b, c)):
                worst = max(worst, abs(u - v) / max(abs(u), abs(v)))
    report(capsys, 2, worst < 1e-9, f"max pairwise relative error {worst:.2e}")


def test_criterion_03_example_closed_form(capsys):
    rng = np.random.default_rng(SEED + 3)
    w_scaled = w_det = 0.0
    for _ in range(10):
        z = complex(rand_disk(rng, 1, 1.0)[0])
        nodes = z + (2 + rng.uniform(0, 3, 21)) * np.exp(2j * np.pi * rng.uniform(size=21))
        p = example_pencil(nodes, 21)
        s = scaled_table(p, z, 20, phi=0.0)
        target = 2.0 ** np.arange(21)
        w_scaled = max(w_scaled, np.max(np.abs(s.qL - target) / target), np.max(np.abs(s.qR - target) / target))
        q = eval_table(p, z, 20).q
        d = np.cumprod((z - nodes[:20]) / (1 + np.abs(nodes[:20])))
        w_det = max(w_det, np.max(np.abs(q[1:] - d) / np.abs(d)))
    report(capsys, 3, w_scaled < 1e-12 and w_det < 1e-10,
           f"scaled 2^n error {w_scaled:.2e}, determinant error {w_det:.2e}")


def test_criterion_04_markov_construction(capsys):
    mp = build_markov_pencil(DiscreteMeasure.uniform(-1.0, 1.0, 20), NodePlan.default(12), 12)
    Bd, Bo = mp.B_diag[:12], mp.B_off[:12]
    A, B = mp.pencil.matrices(mp.pencil.length)
    gt1 = bool(np.all(mp.B_diag > 1))
    sq = float(np.max(np.abs(Bo**2 - (Bd - 1))))
    herm = bool(np.array_equal(A, A.conj().T))
    inter = all(
        np.all(mu.atoms[:-1] < nu.atoms) and np.all(nu.atoms < mu.atoms[1:])
        for mu, nu in zip(mp.measures, mp.measures[1:])
    )
    pos = all(np.all(mu.weights > 0) for mu in mp.measures)
    ok = gt1 and sq < 1e-12 and herm and inter and pos
    report(capsys, 4, ok, f"B_jj>1 {gt1}, |B_off^2-(B_jj-1)| {sq:.1e}, Hermitian {herm}, "
                          f"interlacing {inter}, positive weights {pos}")


def test_criterion_05_two_atom(capsys):
    mu = DiscreteMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]), (-1.0, 1.0))
    s = thiele_step(mu, 1j)
    err = max(abs(s.Bjj - 2), abs(s.Ajj), abs(s.Boff - 1))
    nxt = s.mu_next
    err_mu = abs(nxt.atoms[0]) + abs(nxt.weights[0] - 1) if len(nxt) == 1 else np.inf
    z = np.array([2.0, 3j, 1 + 1j])
    err_phi = float(np.max(np.abs(cauchy_transform(nxt, z) - 1 / z)))
    ok = err < 1e-13 and err_mu < 1e-13 and err_phi < 1e-13
    report(capsys, 5, ok, f"(B00, A00, B10) error {err:.1e}, mu_1 error {err_mu:.1e}, phi_1=1/z error {err_phi:.1e}")


def test_criterion_06_interpolation(twenty_atom, capsys):
    p = twenty_atom.pencil
    nodes = np.array([complex(v.value) for v in node_sequence(p, 20)])
    worst = 0.0
    for n in range(1, 11):
        zk = nodes[: 2 * n]
        t = eval_table(p, zk, n)
        worst = max(worst, float(np.max(np.abs(twenty_atom.phi(zk) * t.q[n] - t.p[n]) / (1 + np.abs(t.q[n])))))
    report(capsys, 6, worst < 1e-8, f"max scaled residual {worst:.2e}")


def test_criterion_07_numerical_range(twenty_atom, capsys):
    a, b = twenty_atom.interval
    ok, worst_im, worst_out = True, 0.0, 0.0
    for n in range(1, 11):
        lo, hi = numerical_range_section(twenty_atom, n)
        ok &= a <= lo <= hi <= b
        for zs in (zeros_of_qn(twenty_atom.pencil, n), zeros_of_pn(twenty_atom.pencil, n)):
            if zs.size == 0:
                continue
            worst_im = max(worst_im, float(np.max(np.abs(zs.imag))))
            worst_out = max(worst_out, float(np.max(np.maximum(lo - zs.real, zs.real - hi))))
    ok = ok and worst_im < 1e-10 and worst_out <= 1e-12
    report(capsys, 7, ok, f"max |Im zero| {worst_im:.1e}, max excursion {worst_out:.1e}")


def test_criterion_08_resolvent_decay(long_markov, grid, capsys):
    violations, probes, kmax = 0, 0, 0.0
    for z in grid:
        pr = resolvent_probe(long_markov.pencil, z, 24)
        if pr.kappa >= 1e6:
            continue
        probes += 1
        kmax = max(kmax, pr.kappa)
        violations += decay_fit(pr).violations
    ok = violations == 0 and probes == grid.size
    report(capsys, 8, ok, f"{violations} violations over {probes} probes, max kappa {kmax:.1f}")


def test_criterion_09_entry_formula(long_markov, grid, capsys):
    n, worst = 24, 0.0
    for z in grid:
        pr = resolvent_probe(long_markov.pencil, z, n)
        s = scaled_table(long_markov.pencil, z, n // 2, phi=pr.m)
        for j in range(n // 2 + 1):
            for k in range(n // 2 + 1):
                worst = max(worst, abs(entry_formula(s, j, k) - pr.entries[j, k]) / abs(pr.entries[j, k]))
    report(capsys, 9, worst < 1e-7, f"max relative error {worst:.2e}")


def test_criterion_10_favard(twenty_atom, capsys):
    p = twenty_atom.pencil
    C = markov_contour(twenty_atom)
    m = twenty_atom.phi(C.nodes)
    st = scaled_table(p, C.nodes, 8, phi=0.0)
    aL, aR = p.alphaL_at(C.nodes, 8), p.alphaR_at(C.nodes, 8)
    worst = 0.0
    for n in range(1, 9):
        piL, piR = np.prod(aL[:n], axis=0), np.prod(aR[:n], axis=0)
        for l in range(n):
            worst = max(worst, abs(favard_functional(C, m, st.qR[n] * C.nodes**l / piL)),
                        abs(favard_functional(C, m, st.qL[n] * C.nodes**l / piR)))
    report(capsys, 10, worst < 1e-8 and C.M == 512, f"max |functional| {worst:.2e}, M={C.M}")


def test_criterion_11_lu_ul(twenty_atom, capsys):
    rng = np.random.default_rng(SEED + 11)
    cases = [(twenty_atom.pencil, z) for z in (2.0, 2 + 1j, -3.0, 2.5j, X0)]
    cases += [(random_pencil(rng, 12), complex(z)) for z in 2 + rand_disk(rng, 5)]
    rec = recip = special = 0.0
    for p, z in cases:
        n = min(12, len(p.alphaL))
        S = p.pencil_matrix(z, n)
        scale = max(1.0, float(np.abs(S).max()))
        lu = lu_factorize(p, z, n)
        rec = max(rec, float(np.abs(lu.reconstruct() - S).max()) / scale)
        for d0 in (0.0, 1.0, 1j):
            ul = ul_factorize(p, z, d0, n)
            rec = max(rec, float(np.abs(ul.reconstruct() - S).max()) / scale)
        ul0 = ul_factorize(p, z, 0.0, n)
        recip = max(recip, float(np.max(np.abs(ul0.uR * lu.vL[:n] - 1))))
        m = dense_solve_m(p, z, p.length)
        d0 = 1 / m
        ul = ul_factorize(p, z, d0, n)
        t = eval_table(p, z, n)
        r = m * t.q - t.p
        special = max(special, float(np.max(np.abs(ul.y - d0 * r) / (np.abs(t.q) + abs(d0) * np.abs(t.p)))))
    ok = rec < 1e-12 and recip < 1e-12 and special < 1e-10
    report(capsys, 11, ok, f"reconstruction {rec:.1e}, reciprocity {recip:.1e}, m*d0=1 case {special:.1e}")


def test_criterion_12_christoffel_geronimus_multistep(twenty_atom, capsys):
    p = twenty_atom.pencil
    C = markov_contour(twenty_atom, [X0, X1])
    m, m0 = twenty_atom.phi(C.nodes), complex(twenty_atom.phi(X0))
    nJ = 7

    lu = lu_factorize(p, X0, nJ)
    QL, QR = christoffel_transform(lu, scaled_table(p, C.nodes, nJ, phi=0.0), X0)
    G = np.einsum("jl,kl,l->jk", QL, QR, (X0 - C.nodes) * m * C.weights) / (2j * np.pi)
    c_off = float(np.max(np.abs(G - np.diag(np.diag(G)))))
    c_diag = float(np.max(np.abs(np.diag(G) * lu.d[:nJ] - 1)))

    g_off = g_diag = 0.0
    for d0 in (1.0, 1j, 0.5 - 0.5j):
        ul = ul_factorize(p, X0, d0, nJ - 1)
        QL, QR = geronimus_transform(ul, scaled_table(p, C.nodes, nJ - 1, phi=0.0))
        QLx, QRx = geronimus_transform(ul, scaled_table(p, np.array([X0]), nJ - 1, phi=0.0))
        for j in range(nJ):
            for k in range(nJ):
                v = geronimus_functional(C, m, QR[j] * QL[k], X0, d0, m0, QRx[j, 0] * QLx[k, 0])
                if j == k:
                    g_diag = max(g_diag, abs(v * ul.d[j] - 1))
                else:
                    g_off = max(g_off, abs(v))

    pi2 = (X0 - C.nodes) * (X1 - C.nodes) * m
    QL = [multi_christoffel(p, [X0, X1], j, C.nodes) for j in range(nJ)]
    QR = [multi_christoffel(p, [X0, X1], j, C.nodes, side="R") for j in range(nJ)]
    ms = {1: 0.0, 2: 0.0}
    for j in range(nJ):
        for k in range(nJ):
            if j != k:
                d = min(abs(j - k), 2)
                ms[d] = max(ms[d], abs(C.integrate(QL[j] * QR[k] * pi2)))

    parts = {
        "christoffel": c_off < 1e-8 and c_diag < 1e-6,
        "geronimus": g_off < 1e-8 and g_diag < 1e-6,
        "multistep": max(ms.values()) < 1e-7,
    }
    detail = (f"Christoffel off {c_off:.1e} diag {c_diag:.1e}; Geronimus off {g_off:.1e} diag {g_diag:.1e}; "
              f"two-step off |j-k|=1 {ms[1]:.1e}, |j-k|>=2 {ms[2]:.1e}; "
              f"failing: {[k for k, v in parts.items() if not v] or 'none'}")
    report(capsys, 12, all(parts.values()), detail)


def test_criterion_13_convergence(capsys):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict({
        "measure": {"uniform": {"interval": [-1, 1], "atoms": 20}},
        "steps": 24,
        "orders": list(range(4, 25)),
        "grid": [[2, 0], [2, 1], [-3, 0], [0, 5]],
        "workers": 1,
    })
    records, _ = run_convergence(cfg)
    by_z = {}
    for r in records:
        by_z.setdefault(complex(r["z_re"], r["z_im"]), []).append(r)
    rates = {z: rows[0]["rate"] for z, rows in by_z.items()}
    final = {z: max(r["abs_error"] for r in rows if r["n"] == 24) for z, rows in by_z.items()}
    elapsed = time.perf_counter() - t0
    ok = all(v < 0.9 for v in rates.values()) and all(v < 1e-6 for v in final.values()) and elapsed < 60
    detail = ", ".join(f"z={z}: rate {rates[z]:.3f} err24 {final[z]:.1e}" for z in by_z)
    report(capsys, 13, ok, f"{detail}; {elapsed:.2f} s")


def test_criterion_14_determinism(tmp_path, capsys):
    for sub in ("a", "b"):
        assert main(["selftest", "--out", str(tmp_path / sub), "--seed", "7"]) in (0, 1)
    fa = sorted(q.relative_to(tmp_path / "a") for q in (tmp_path / "a").rglob("*") if q.is_file())
    fb = sorted(q.relative_to(tmp_path / "b") for q in (tmp_path / "b").rglob("*") if q.is_file())
    same = fa == fb and all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in fa)
    report(capsys, 14, same and len(fa) > 0, f"{len(fa)} output files, byte-identical {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
