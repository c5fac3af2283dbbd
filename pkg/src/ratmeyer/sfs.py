"""Symmetric frequency supported (SFS) shift-invariant basis.

``f_j`` (``j >= 0``) are band-limited generators whose integer translates form
an orthonormal basis of ``L^2(R)``; ``w_j`` are their tensor products.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from ._quad import panel_rule, tensor_rule
from .bump import BumpProfile


class SfsError(ValueError):
    pass


def _conj_if(z, odd: bool):
    return np.conj(z) if odd else z


def eval_fj(j: int, profile: BumpProfile, xi):
    """Fourier transform of the SFS generator ``f_j`` at ``xi``."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    xi = np.asarray(xi, dtype=float)
    if j == 0:
        core = profile(np.where(xi > 0.25, xi - 0.25, np.where(xi < -0.25, xi + 0.25, 0.0)))
        return core
    odd = j % 2 == 1
    sign = -1.0 if odd else 1.0
    right = _conj_if(profile(xi - 0.5 * j - 0.25), odd)
    left = _conj_if(profile(xi + 0.5 * j + 0.25), odd)
    return right + sign * left


def support_fj(j: int, delta: float) -> list[tuple[float, float]]:
    """Closed intervals containing ``supp f_j`` (tight form, width ``1/2 + 2 delta``)."""
    if j == 0:
        return [(-0.5 - delta, 0.5 + delta)]
    return [(-(j + 1) / 2 - delta, -j / 2 + delta), (j / 2 - delta, (j + 1) / 2 + delta)]


def breakpoints_fj(j: int, delta: float) -> list[float]:
    """Points where the piecewise formula for ``f_j`` changes branch."""
    pts = []
    for c in ([0.25, -0.25] if j == 0 else [0.5 * j + 0.25, -0.5 * j - 0.25]):
        pts += [c - 0.25 - delta, c - 0.25 + delta, c + 0.25 - delta, c + 0.25 + delta]
    if j == 0:
        pts += [-0.25, 0.25, 0.0]
    return sorted(pts)


def eval_tensor(jvec: Sequence[int], xi, profile: BumpProfile):
    """``w_j(xi) = prod_i f_{j_i}(xi_i)``; ``xi`` has shape (n,) or (m, n)."""
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = np.atleast_2d(xi)
    if pts.shape[1] != len(jvec):
        raise ValueError("dimension mismatch between multi-index and point")
    out = np.ones(pts.shape[0], dtype=complex if not profile.is_real else float)
    for i, j in enumerate(jvec):
        out = out * eval_fj(int(j), profile, pts[:, i])
    return out[0] if single else out


def required_jmax(window: float, delta: float) -> int:
    """Largest ``j`` whose generator meets ``[-window, window]``."""
    return int(np.floor(2 * (window + delta)))


@dataclass
class DualGramianReport:
    delta: float
    j_max: int
    k_max: int
    n_points: int
    residual: float
    worst_k: int

    def to_json(self) -> dict:
        return asdict(self)


def dual_gramian_residual(profile: BumpProfile, j_max: int, grid=(-2.0, 2.0, 4096),
                          k_max: int | None = None) -> DualGramianReport:
    """Max over the grid and ``|k| <= k_max`` of the dual-Gramian defect.

    ``grid`` is ``(lo, hi, count)`` or an explicit array of points.
    """
    if isinstance(grid, tuple):
        xi = np.linspace(grid[0], grid[1], int(grid[2]))
    else:
        xi = np.asarray(grid, dtype=float)
    window = float(np.max(np.abs(xi)))
    need = required_jmax(window, profile.delta)
    if j_max < need:
        raise SfsError(f"j_max={j_max} too small for the grid window; need j_max >= {need}")
    if k_max is None:
        k_max = 2 * j_max + 2
    ks = np.arange(-k_max, k_max + 1)
    acc = np.zeros((ks.size, xi.size), dtype=complex)
    shifted = xi[None, :] + ks[:, None]
    for j in range(j_max + 1):
        a = eval_fj(j, profile, xi)
        if not np.any(a):
            continue
        acc += a[None, :] * np.conj(eval_fj(j, profile, shifted))
    acc[ks == 0] -= 1.0
    err = np.abs(acc).max(axis=1)
    worst = int(np.argmax(err))
    return DualGramianReport(profile.delta, j_max, int(k_max), int(xi.size),
                             float(err[worst]), int(ks[worst]))


# ---------------------------------------------------------------------------
# inner products by quadrature


def _interval_intersection(a: list[tuple[float, float]], b: list[tuple[float, float]]):
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo < hi:
                out.append((lo, hi))
    return out


def _rule_1d(j1: int, j2: int, delta: float, max_width: float, nodes: int):
    pieces = _interval_intersection(support_fj(j1, delta), support_fj(j2, delta))
    if not pieces:
        return None
    bps = set(breakpoints_fj(j1, delta)) | set(breakpoints_fj(j2, delta))
    xs, ws = [], []
    for lo, hi in pieces:
        br = [lo, hi] + [b for b in bps if lo < b < hi]
        x, w = panel_rule(br, max_width, nodes)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def inner_product_1d(j1: int, k1: int, j2: int, k2: int, profile: BumpProfile,
                     max_width: float = 0.02, nodes: int = 32) -> complex:
    """``<T_{k1} f_{j1}, T_{k2} f_{j2}>`` by Fourier-side quadrature."""
    rule = _rule_1d(j1, j2, profile.delta, max_width, nodes)
    if rule is None:
        return 0.0
    x, w = rule
    vals = eval_fj(j1, profile, x) * np.conj(eval_fj(j2, profile, x))
    return complex(np.sum(w * vals * np.exp(-2j * np.pi * (k1 - k2) * x)))


def inner_product_tensor(j1, k1, j2, k2, profile: BumpProfile,
                         max_width: float = 0.25, nodes: int = 32) -> complex:
    """``<T_k1 w_j1, T_k2 w_j2>`` by a product Gauss rule on the joint support box.

    Panels are narrowed so that each oscillation of the phase gets at least
    eight nodes.
    """
    dk = float(np.max(np.abs(np.asarray(k1, float) - np.asarray(k2, float)), initial=0.0))
    if dk > 0:
        max_width = min(max_width, nodes / (8.0 * dk))
    rules = []
    for a, b in zip(j1, j2):
        r = _rule_1d(int(a), int(b), profile.delta, max_width, nodes)
        if r is None:
            return 0.0
        rules.append(r)
    pts, w = tensor_rule(rules)
    vals = eval_tensor(j1, pts, profile) * np.conj(eval_tensor(j2, pts, profile))
    phase = np.exp(-2j * np.pi * (pts @ (np.asarray(k1, float) - np.asarray(k2, float))))
    return complex(np.sum(w * vals * phase))


@dataclass
class SfsOrthoReport:
    n: int
    pairs: int
    max_dev: float
    worst_pair: list

    def to_json(self) -> dict:
        return asdict(self)


def orthonormality_check_sfs(profile: BumpProfile, j_max: int, n: int = 1, trials: int = 200,
                             k_max: int = 8, seed: int = 0, pairs=None) -> SfsOrthoReport:
    """Max deviation of ``<T_k w_j, T_k' w_j'>`` from ``delta`` over random pairs.

    Half the pairs share ``j`` so that the diagonal and the overlapping
    neighbours are always exercised.
    """
    rng = np.random.default_rng(seed)
    if pairs is None:
        pairs = []
        for t in range(trials):
            j1 = tuple(int(x) for x in rng.integers(0, j_max + 1, n))
            if t % 3 == 0:
                j2 = j1
            elif t % 3 == 1:
                j2 = tuple(int(min(j_max, max(0, x + rng.integers(-1, 2)))) for x in j1)
            else:
                j2 = tuple(int(x) for x in rng.integers(0, j_max + 1, n))
            k1 = tuple(int(x) for x in rng.integers(-k_max, k_max + 1, n))
            k2 = k1 if t % 4 == 0 else tuple(int(x) for x in rng.integers(-k_max, k_max + 1, n))
            pairs.append((j1, k1, j2, k2))
    worst, worst_pair = 0.0, None
    for j1, k1, j2, k2 in pairs:
        val = inner_product_tensor(j1, k1, j2, k2, profile)
        target = 1.0 if (tuple(j1) == tuple(j2) and tuple(k1) == tuple(k2)) else 0.0
        dev = abs(val - target)
        if worst_pair is None or dev > worst:
            worst, worst_pair = dev, [list(j1), list(k1), list(j2), list(k2)]
    return SfsOrthoReport(n, len(pairs), float(worst), worst_pair)
