"""Independent numerical checks of wavelet systems and scaling vectors.

Inner products are computed on the Fourier side with composite
Gauss-Legendre rules whose panels resolve every oscillating phase with at
least eight nodes per period.  Orthonormal-basis claims are only ever
verified in truncation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._quad import panel_rule, tensor_rule
from .completion import WaveletSystem
from .mra import ScalingVector, fiber_offsets
from .ratlat import Lattice

NODES_PER_PERIOD = 8


class NyquistError(ValueError):
    pass


def _mapped_box(lo, hi, M: np.ndarray):
    corners = np.array(list(itertools.product(*zip(lo, hi)))) @ M.T
    return corners.min(axis=0), corners.max(axis=0)


# default Gauss panels: fine in 1-D, coarser in higher dimensions where the
# product rule would otherwise reach millions of nodes
PANELS = {1: (0.02, 32)}
PANELS_ND = (0.1, 16)


def _box_rule(lo, hi, max_freq: np.ndarray, max_width: float | None, nodes: int | None):
    dw, dn = PANELS.get(len(lo), PANELS_ND)
    max_width = dw if max_width is None else max_width
    nodes = dn if nodes is None else nodes
    rules = []
    for a, b, f in zip(lo, hi, max_freq):
        w = max_width
        if f > 0:
            w = min(w, nodes / (NODES_PER_PERIOD * f))
        rules.append(panel_rule([a, b], w, nodes))
    return tensor_rule(rules)


def _k_grid(k_range: int, n: int) -> np.ndarray:
    r = np.arange(-k_range, k_range + 1)
    return np.stack(np.meshgrid(*([r] * n), indexing="ij"), axis=-1).reshape(-1, n)


@dataclass
class OrthoReport:
    max_offdiag: float
    max_diag_dev: float
    pairs_tested: int
    j_range: list
    k_range: int
    l_range: int
    exact_zero_blocks: int = 0

    @property
    def max_dev(self) -> float:
        return max(self.max_offdiag, self.max_diag_dev)

    def to_json(self) -> dict:
        return asdict(self)


def wavelet_gram_matrix(system: WaveletSystem, j_list: Sequence[int], k_range: int, *,
                        max_width: float | None = None, nodes: int | None = None):
    """Full Gram matrix of ``{D_{A^j} T_k psi^l}`` plus the index list.

    Blocks for scales whose Fourier supports are disjoint are set to zero
    without quadrature.
    """
    n = system.dim
    B = system.A.T.to_numpy()
    b = abs(float(system.A.det()))
    ks = _k_grid(k_range, n)
    lo, hi = system.bbox()
    boxes, Binvs = {}, {}
    for j in j_list:
        Bj = np.linalg.matrix_power(B, j) if j >= 0 else np.linalg.matrix_power(np.linalg.inv(B), -j)
        Binvs[j] = np.linalg.inv(Bj)
        boxes[j] = _mapped_box(lo, hi, Bj)
    L = system.L
    index = [(j, tuple(k), l) for j in j_list for k in ks for l in range(L)]
    pos = {j: i * len(ks) * L for i, j in enumerate(j_list)}
    size = len(index)
    G = np.zeros((size, size), dtype=complex)
    zero_blocks = 0
    for a, j in enumerate(j_list):
        for j2 in j_list[a:]:
            ilo = np.maximum(boxes[j][0], boxes[j2][0])
            ihi = np.minimum(boxes[j][1], boxes[j2][1])
            if np.any(ilo >= ihi):
                zero_blocks += 1
                continue
            # phase frequencies along each axis
            f1 = np.abs(Binvs[j].T @ ks.T).max(axis=1)
            f2 = np.abs(Binvs[j2].T @ ks.T).max(axis=1)
            pts, w = _box_rule(ilo, ihi, f1 + f2, max_width, nodes)
            blocks = []
            for jj in (j, j2):
                eta = pts @ Binvs[jj].T
                F = system.eval(eta)  # (L, m)
                E = np.exp(-2j * np.pi * (ks @ eta.T))  # (K, m)
                blocks.append((F[None, :, :] * E[:, None, :]).reshape(-1, pts.shape[0])
                              * b ** (-jj / 2))
            blk = (blocks[0] * w[None, :]) @ np.conj(blocks[1]).T
            s1, s2 = pos[j], pos[j2]
            G[s1:s1 + blk.shape[0], s2:s2 + blk.shape[1]] = blk
            if j2 != j:
                G[s2:s2 + blk.shape[1], s1:s1 + blk.shape[0]] = np.conj(blk).T
    return G, index, zero_blocks


def wavelet_gram(system: WaveletSystem, j_range=(-1, 1), k_range: int = 8, *,
                 max_width: float | None = None, nodes: int | None = None) -> OrthoReport:
    """Deviation of ``<D_{A^j} T_k psi^l, D_{A^j'} T_k' psi^l'>`` from ``delta``."""
    j_list = list(range(j_range[0], j_range[1] + 1))
    G, index, zb = wavelet_gram_matrix(system, j_list, k_range, max_width=max_width, nodes=nodes)
    D = np.abs(G - np.eye(len(index)))
    diag = float(np.diag(D).max()) if len(index) else 0.0
    np.fill_diagonal(D, 0.0)
    size = len(index)
    return OrthoReport(float(D.max()) if size else 0.0, diag, size * (size + 1) // 2,
                       [j_range[0], j_range[1]], k_range, system.L, zb)


# ---------------------------------------------------------------------------
# Parseval capture


@dataclass
class ParsevalReport:
    captured: float
    total: float
    j_range: list
    k_range: int

    @property
    def ratio(self) -> float:
        return self.captured / self.total if self.total else 0.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["ratio"] = self.ratio
        return d


def gaussian_probe(center, sigma: float):
    """Frequency-localized probe ``g_hat = exp(-|xi - c|^2 / (2 sigma^2))`` and ``||g||^2``."""
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def ghat(xi):
        xi = np.atleast_2d(xi)
        return np.exp(-np.sum((xi - c) ** 2, axis=1) / (2 * sigma ** 2))

    return ghat, (sigma * math.sqrt(math.pi)) ** len(c)


def member_probe(system: WaveletSystem, j: int, k: Sequence[int], l: int = 0):
    """Fourier transform of ``D_{A^j} T_k psi^l`` (unit norm)."""
    B = system.A.T.to_numpy()
    b = abs(float(system.A.det()))
    Binv_j = np.linalg.matrix_power(np.linalg.inv(B), j) if j >= 0 else np.linalg.matrix_power(B, -j)
    k = np.asarray(k, dtype=float)

    def ghat(xi):
        eta = np.atleast_2d(xi) @ Binv_j.T
        return b ** (-j / 2) * np.exp(-2j * np.pi * (eta @ k)) * system.eval(eta)[l]

    return ghat, 1.0


def parseval_probe(system: WaveletSystem, ghat: Callable, total: float, j_range=(-6, 6),
                   k_range: int = 64, *, max_width: float | None = None, nodes: int | None = None) -> ParsevalReport:
    """Energy of ``g`` captured by the truncated affine system.

    With ``eta = B^{-j} xi`` each coefficient is
    ``b^{j/2} int g_hat(B^j eta) conj(psi_hat(eta)) e^{2 pi i <k, eta>} d eta``,
    so ``psi_hat`` is sampled once for every scale.
    """
    j_list = list(range(j_range[0], j_range[1] + 1))
    if not j_list:
        return ParsevalReport(0.0, float(total), [j_range[0], j_range[1]], k_range)
    n = system.dim
    B = system.A.T.to_numpy()
    b = abs(float(system.A.det()))
    lo, hi = system.bbox()
    ks = _k_grid(k_range, n)
    pts, w = _box_rule(lo, hi, np.full(n, float(k_range)), max_width, nodes)
    F = system.eval(pts)  # (L, m)
    E = np.exp(2j * np.pi * (ks @ pts.T))  # (K, m)
    captured = 0.0
    for j in j_list:
        Bj = np.linalg.matrix_power(B, j) if j >= 0 else np.linalg.matrix_power(np.linalg.inv(B), -j)
        g = ghat(pts @ Bj.T)
        integrand = (g[None, :] * np.conj(F)) * w[None, :]  # (L, m)
        c = b ** (j / 2) * (integrand @ E.T)  # (L, K)
        captured += float(np.sum(np.abs(c) ** 2))
    return ParsevalReport(captured, float(total), [j_range[0], j_range[1]], k_range)


# ---------------------------------------------------------------------------
# decay


@dataclass
class DecayReport:
    slope: float
    radii: list
    envelope: list
    fitted_points: int
    constant: float = float("nan")

    def to_json(self) -> dict:
        return asdict(self)


def _fit_envelope(radii, env, floor: float) -> DecayReport:
    radii = np.asarray(radii, dtype=float)
    env = np.asarray(env, dtype=float)
    keep = env > floor
    if keep.sum() < 2:
        return DecayReport(-math.inf, radii.tolist(), env.tolist(), int(keep.sum()))
    slope, icpt = np.polyfit(np.log1p(radii[keep]), np.log(env[keep]), 1)
    return DecayReport(float(slope), radii.tolist(), env.tolist(), int(keep.sum()), float(np.exp(icpt)))


def decay_diagnostic(fhat, lo: float, hi: float, radii=(4, 8, 16, 32, 64), *,
                     spacing: float | None = None, nodes: int = 32, samples: int = 33,
                     floor: float = 1e-13) -> DecayReport:
    """Fitted decay exponent of ``f(x) = int f_hat(xi) e^{2 pi i x xi} d xi``.

    ``fhat`` is a callable or an array of samples at spacing ``spacing``
    starting at ``lo``.  The envelope at ``r`` is the max of ``|f|`` over
    ``r <= |x| <= 1.25 r``; the slope is fitted against ``log(1 + r)`` using
    envelope values above ``floor`` times the peak.
    """
    radii = np.asarray(radii, dtype=float)
    xmax = 1.25 * radii.max()
    if callable(fhat):
        width = min(0.05, nodes / (NODES_PER_PERIOD * xmax))
        xs, ws = panel_rule([lo, hi], width, nodes)
        vals = fhat(xs)
    else:
        if spacing is None:
            raise ValueError("sampled input needs a spacing")
        if 2 * xmax * spacing >= 1:
            raise NyquistError(f"samples at spacing {spacing} cannot resolve |x| up to {xmax}")
        vals = np.asarray(fhat)
        xs = lo + spacing * np.arange(vals.size)
        ws = np.full(vals.size, spacing)
    wv = ws * vals

    def f(x):
        return np.exp(2j * np.pi * np.outer(x, xs)) @ wv

    peak = float(np.abs(f(np.array([0.0]))).max()) or 1.0
    env = []
    for r in radii:
        x = np.linspace(r, 1.25 * r, samples)
        env.append(float(np.abs(f(np.concatenate([x, -x]))).max()))
    return _fit_envelope(radii, env, floor * peak)


def filter_decay(positions: np.ndarray, norms: np.ndarray, *, rmin: float = 8.0,
                 shells: int = 8, floor: float = 1e-13) -> DecayReport:
    """Fitted decay exponent of filter coefficient norms ``|a(gamma)|``.

    The envelope is the largest norm in logarithmic shells of ``|gamma|``
    between ``rmin`` and the largest coefficient position.
    """
    r = np.linalg.norm(positions, axis=1)
    rmax = r.max()
    edges = np.geomspace(rmin, rmax, shells + 1)
    radii, env = [], []
    for a, c in zip(edges[:-1], edges[1:]):
        sel = (r >= a) & (r < c)
        if sel.any():
            radii.append(float(a))
            env.append(float(norms[sel].max()))
    return _fit_envelope(radii, env, floor * float(norms.max()))


# ---------------------------------------------------------------------------
# extra invariance


@dataclass
class InvarianceReport:
    values_min: float
    values_max: float
    max_dist_to_integer: float
    points: int

    def to_json(self) -> dict:
        return asdict(self)


def extra_invariance_check(phi: ScalingVector, subspace: Sequence[Sequence[float]] = (),
                           pts=None, *, counts: int = 64, seed: int = 0) -> tuple[np.ndarray, InvarianceReport]:
    """Partial fiber sums ``sum_l sum_{k in Z^n, k perp subspace} |phi_hat^l(xi+k)|^2``.

    ``phi`` must be orthonormal over a lattice containing ``Z^n``; its
    translates by a transversal of ``Gamma / Z^n`` then form an orthonormal
    ``Z^n`` system, which contributes the factor ``|Gamma / Z^n|``.
    """
    n = phi.dim
    if not phi.lattice.contains_lattice(Lattice.integer(n)):
        raise ValueError("the lattice must contain Z^n")
    weight = float(1 / phi.lattice.volume)
    if pts is None:
        rng = np.random.default_rng(seed)
        pts = rng.random((counts, n))
    pts = np.atleast_2d(pts)
    slo, shi = phi.bbox()
    ks = fiber_offsets(np.eye(n), pts.min(axis=0), pts.max(axis=0), slo, shi)
    V = np.asarray(subspace, dtype=float).reshape(-1, n)
    if V.size:
        ks = ks[np.all(np.abs(ks @ V.T) < 1e-12, axis=1)]
    vals = np.zeros(pts.shape[0])
    for k in ks:
        vals += np.sum(np.abs(phi.eval(pts + k)) ** 2, axis=0)
    vals *= weight
    dist = float(np.abs(vals - np.round(vals)).max())
    return vals, InvarianceReport(float(vals.min()), float(vals.max()), dist, int(pts.shape[0]))
