"""Acceptance battery: twelve criteria, each printing one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in
the terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import time
from fractions import Fraction

import numpy as np
import pytest

from ratmeyer.bump import BoxUnion, make_profile
from ratmeyer.completion import (build_general, build_strict, lift_matrix, lift_to_nd,
                                 pipeline_1d)
from ratmeyer.filterbank import (NotRefinableError, extract_lowpass, make_filterbank,
                                 plancherel_defect, polyphase, polyphase_round_trip,
                                 unitarity_residual)
from ratmeyer.mra import orthonormality_residual, strictly_expansive_scaling
from ratmeyer.ratlat import (Lattice, RatMatrix, cayley_rationalize, dual, group_indices,
                             index, is_orthogonal, transversal)
from ratmeyer.sfs import dual_gramian_residual, orthonormality_check_sfs, required_jmax
from ratmeyer.verify import gaussian_probe, parseval_probe, wavelet_gram

PQ = [(2, 1), (3, 2), (5, 3), (4, 3)]
RESULTS: list[str] = []


def record(num: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title} ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


def strict_spec(p, q):
    A = RatMatrix([[Fraction(p, q)]])
    gi = group_indices(A)
    return strictly_expansive_scaling(A, gi.gamma, BoxUnion.interval(-q / 2, q / 2), 0.1)


@pytest.fixture(scope="module")
def systems():
    return {pq: pipeline_1d(*pq, grid=256) for pq in PQ}


def test_c01_sfs_dual_gramian():
    t0 = time.perf_counter()
    worst = 0.0
    for delta in (0.05, 0.125, 0.25):
        prof = make_profile(delta)
        rep = dual_gramian_residual(prof, required_jmax(2.0, delta), (-2.0, 2.0, 4096), k_max=6)
        worst = max(worst, rep.residual)
    dt = time.perf_counter() - t0
    record(1, "SFS dual Gramian", worst < 1e-12 and dt < 10,
           f"residual {worst:.2e} < 1e-12, {dt:.2f} s < 10 s")


def test_c02_sfs_orthonormality():
    t0 = time.perf_counter()
    prof = make_profile(0.125)
    r1 = orthonormality_check_sfs(prof, 8, n=1, trials=200, k_max=8, seed=1)
    r2 = orthonormality_check_sfs(prof, 8, n=2, trials=100, k_max=8, seed=2)
    dt = time.perf_counter() - t0
    worst = max(r1.max_dev, r2.max_dev)
    ok = worst < 1e-8 and dt < 60 and r1.pairs == 200 and r2.pairs == 100
    record(2, "SFS orthonormality", ok, f"max dev {worst:.2e} < 1e-8, {dt:.2f} s < 60 s")


def test_c03_strict_gramian():
    worst = 0.0
    for p, q in PQ:
        spec = strict_spec(p, q)
        # fiber sum over Gamma^* = qZ, computed directly from point values
        xi = np.linspace(-2.0 * q, 2.0 * q, 4096)
        ks = q * np.arange(-6, 7)
        vals = spec.scaling.eval((xi[:, None] + ks[None, :]).reshape(-1, 1))[0]
        fiber = (np.abs(vals) ** 2).reshape(xi.size, ks.size).sum(axis=1)
        worst = max(worst, float(np.abs(fiber - 1.0 / q).max()))
    record(3, "strictly expansive Gramian = vol(Gamma)", worst < 1e-10,
           f"residual {worst:.2e} < 1e-10")


def test_c04_lowpass_extraction():
    worst = 0.0
    for p, q in PQ:
        bank = make_filterbank(strict_spec(p, q), (4096,))
        worst = max(worst, bank.meta["refinement_residual"])
    # explicit relation for p/q with translates by j/q, j = 1..q
    p, q = 3, 2
    spec = strict_spec(p, q)
    kq = [(Fraction(j, q),) for j in range(1, q + 1)]
    M = extract_lowpass(spec, (4096,), kq=kq)
    xi = M.points()
    phi = spec.scaling.eval(xi)[0]
    phi_a = spec.scaling.eval(xi * p / q)[0]
    mask = np.abs(phi) > 1e-6
    dev = 0.0
    for j in range(1, q + 1):
        explicit = np.sqrt(p / q) * np.exp(-2j * np.pi * j * p * xi[:, 0] / q ** 2) * phi_a
        dev = max(dev, float(np.abs(M.values[mask, j - 1, 0] - explicit[mask] / phi[mask]).max()))
    record(4, "low-pass extraction", worst < 1e-8 and dev < 1e-10 and mask.sum() > 0,
           f"residual {worst:.2e} < 1e-8, explicit m_j dev {dev:.2e} < 1e-10")


def test_c05_polyphase(systems):
    rt = pl = 0.0
    for ws in systems.values():
        b = ws.bank
        rt = max(rt, polyphase_round_trip(b.M, b.D, b.Omega))
        pl = max(pl, plancherel_defect(b.M, polyphase(b.M, b.D, b.Omega)))
    record(5, "polyphase round trip and Plancherel", rt < 1e-12 and pl < 1e-10,
           f"round trip {rt:.2e} < 1e-12, Plancherel {pl:.2e} < 1e-10")


def test_c06_unitarity(systems):
    banks = [ws.bank for ws in systems.values()]
    ws2 = build_strict(RatMatrix([[2, 0], [0, 2]]), BoxUnion.box([-0.5, -0.5], [0.5, 0.5]), 0.1)
    banks.append(ws2.bank)
    worst = max(unitarity_residual(b) for b in banks)
    dims = all(b.H.rows == (b.p - b.q) * b.N for b in banks)
    record(6, "completion unitarity and L = (p-q)N", worst < 1e-9 and dims,
           f"unitarity {worst:.2e} < 1e-9, L identity {'holds' if dims else 'fails'}")


def test_c07_wavelet_orthonormality(systems):
    t0 = time.perf_counter()
    ws = systems[(3, 2)]
    rep = wavelet_gram(ws, (-1, 1), 8)
    dc = float(np.abs(ws.eval(np.zeros((1, 1)))).max())
    dt = time.perf_counter() - t0
    ok = rep.max_dev < 1e-6 and dc < 1e-9 and dt < 300
    record(7, "3/2 wavelet orthonormality", ok,
           f"{rep.pairs_tested} pairs, dev {rep.max_dev:.2e} < 1e-6, "
           f"|psi(0)| {dc:.1e} < 1e-9, {dt:.1f} s")


def test_c08_parseval(systems):
    ghat, total = gaussian_probe([1.0], 0.3)
    rep = parseval_probe(systems[(3, 2)], ghat, total, (-6, 6), 64)
    ok = rep.ratio > 0.999 and rep.captured <= rep.total * (1 + 1e-8)
    record(8, "Parseval capture", ok, f"ratio {rep.ratio:.6f} > 0.999")


def test_c09_lift():
    ws = lift_to_nd(3, 2, 2, shape=(16, 16))
    gi = group_indices(lift_matrix(3, 2, 2))
    gram = orthonormality_residual(ws.bank.spec, 48)
    vol = float(ws.bank.spec.lattice.volume)
    dev = ws.meta["lift_lowpass_deviation"]
    ok = gram < 1e-10 and vol == 0.5 and dev < 1e-10 and (gi.p, gi.q) == (3, 2)
    record(9, "lifting to R^2", ok,
           f"Gramian - 1/q {gram:.2e} < 1e-10, low-pass dev {dev:.2e} < 1e-10, "
           f"(p,q) = ({gi.p},{gi.q})")


def _random_lattice(rng, n):
    while True:
        G = RatMatrix([[Fraction(int(rng.integers(-5, 6)), int(rng.integers(1, 5)))
                        for _ in range(n)] for _ in range(n)])
        if G.det() != 0:
            return Lattice(G)


def _random_integer(rng, n):
    while True:
        C = RatMatrix([[int(rng.integers(-3, 4)) for _ in range(n)] for _ in range(n)])
        if C.det() != 0:
            return C


def test_c10_lattice_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    inv_ok = idx_ok = True
    chars = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        gam = _random_lattice(rng, n)
        C = _random_integer(rng, n)
        lam = Lattice(gam.basis @ C)
        inv_ok &= dual(dual(gam)) == gam
        p = index(lam, gam)
        idx_ok &= p == index(dual(gam), dual(lam)) == abs(C.det())
        D = transversal(lam, gam).to_numpy()
        W = transversal(dual(gam), dual(lam)).to_numpy()
        X = np.exp(2j * np.pi * D @ W.T)
        chars = max(chars, float(np.abs(X.conj().T @ X / p - np.eye(p)).max()))
    rot_ok, rot_dist = True, 0.0
    for i in range(100):
        n = 2 + i % 3
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        R = cayley_rationalize(Q, 1e-3, seed=i)
        rot_ok &= is_orthogonal(R)
        rot_dist = max(rot_dist, float(np.linalg.norm(R.to_numpy() - Q)))
    dt = time.perf_counter() - t0
    ok = inv_ok and idx_ok and chars < 1e-12 and rot_ok and rot_dist <= 1e-3 and dt < 30
    record(10, "lattice layer exactness", ok,
           f"characters {chars:.1e} < 1e-12, Cayley dist {rot_dist:.1e} <= 1e-3, {dt:.1f} s < 30 s")


@pytest.mark.parametrize("rows", [[["0", "1/2"], ["3", "0"]], [["1", "1"], ["-1", "1"]]])
def test_c11_general_dilation(rows):
    A = RatMatrix.from_json(rows)
    ws = build_general(A, 0.02)
    b = ws.bank
    u = unitarity_residual(b)
    ok = u < 1e-8 and b.N >= 1 and ws.L == (b.p - b.q) * b.N
    record(11, f"general dilation {rows}", ok,
           f"unitarity {u:.2e} < 1e-8, N = {b.N}, L = {ws.L} = ({b.p}-{b.q})*{b.N}")


def test_c12_negative_control():
    # plateau of width 3 is wider than a Gamma^* = 2Z tile
    A = RatMatrix([[Fraction(3, 2)]])
    gi = group_indices(A)
    spec = strictly_expansive_scaling(A, gi.gamma, BoxUnion.interval(-1.5, 1.5), 0.1, check=False)
    residual = None
    try:
        extract_lowpass(spec, (256,))
    except NotRefinableError as exc:
        residual = exc.residual
        msg = str(exc)
    ok = residual is not None and residual > 1e-3 and "not refinable" in msg
    record(12, "negative control", ok,
           f"not refinable, residual {residual:.2e} > 1e-3" if residual else "no failure raised")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
