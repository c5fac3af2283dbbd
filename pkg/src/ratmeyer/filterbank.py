"""Low-pass extraction, polyphase decomposition and unitarity criteria.

Periodic matrix functions live on :class:`GridFn` grids: nodes are
``G_base diag(1/shape) m`` for integer ``m``, identified modulo a period
lattice.  Choosing the base lattice ``Lambda*`` for a ``Gamma*``-periodic
filter makes every coset shift ``xi + omega_i`` land on a node, so the
criteria never interpolate.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .mra import MraSpec, ScalingVector, fiber_offsets, eval_generators
from .ratlat import Lattice, RatMatrix, Transversal, dual, group_indices, hnf, transversal

REFINABLE_TOL = 1e-8
MAGIC = b"RMGF"


class FilterBankError(ValueError):
    pass


class NotRefinableError(FilterBankError):
    def __init__(self, residual: float):
        super().__init__(f"not refinable: reconstruction residual {residual:.3e}")
        self.residual = residual


# ---------------------------------------------------------------------------
# grids


class GridFn:
    """Matrix-valued function sampled on a lattice grid modulo a period lattice."""

    def __init__(self, base: Lattice, period: Lattice, shape: Sequence[int], values: np.ndarray):
        self.base = base
        self.period = period
        self.shape = tuple(int(s) for s in shape)
        n = base.dim
        if len(self.shape) != n:
            raise FilterBankError("shape/dimension mismatch")
        C = base.basis.inv() @ period.basis
        if not C.is_integer():
            raise FilterBankError("period lattice is not contained in the base lattice")
        DC = [[self.shape[i] * x for x in row] for i, row in enumerate(C.to_int_rows())]
        H, _ = hnf(DC)
        self._H = np.array(H, dtype=np.int64)
        self._radix = np.array([H[i][i] for i in range(n)], dtype=np.int64)
        values = np.asarray(values)
        if values.ndim == 1:
            values = values[:, None, None]
        if values.shape[0] != self.num_nodes:
            raise FilterBankError(f"expected {self.num_nodes} nodes, got {values.shape[0]}")
        self.values = values
        self._Gb = base.basis.to_numpy()

    # node bookkeeping
    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self._radix))

    @property
    def rows(self) -> int:
        return self.values.shape[1]

    @property
    def cols(self) -> int:
        return self.values.shape[2]

    def reduce(self, m: np.ndarray) -> np.ndarray:
        m = np.array(m, dtype=np.int64, ndmin=2)
        for i in range(self.dim):
            f = np.floor_divide(m[:, i], self._H[i, i])
            m = m - f[:, None] * self._H[:, i][None, :]
        return m

    def index(self, m: np.ndarray) -> np.ndarray:
        r = self.reduce(m)
        idx = np.zeros(r.shape[0], dtype=np.int64)
        for i in range(self.dim):
            idx = idx * self._radix[i] + r[:, i]
        return idx

    def nodes(self) -> np.ndarray:
        ranges = [np.arange(r) for r in self._radix]
        return np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, self.dim)

    def points(self, m: np.ndarray | None = None) -> np.ndarray:
        m = self.nodes() if m is None else np.atleast_2d(m)
        return (m / np.array(self.shape)) @ self._Gb.T

    def offset_in_nodes(self, v: Sequence) -> np.ndarray:
        """Node offset of an exact vector ``v`` (must lie on the node lattice)."""
        c = self.base.basis.inv().apply(v)
        m = [x * s for x, s in zip(c, self.shape)]
        if any(Fraction(x).denominator != 1 for x in m):
            raise FilterBankError("shift is not a grid vector")
        return np.array([int(x) for x in m], dtype=np.int64)

    def shifted_index(self, v: Sequence) -> np.ndarray:
        return self.index(self.nodes() + self.offset_in_nodes(v)[None, :])

    def with_values(self, values: np.ndarray) -> "GridFn":
        return GridFn(self.base, self.period, self.shape, values)

    # serialization
    def header(self) -> dict:
        return {"dims": self.dim, "shape": list(self.shape), "rows": self.rows, "cols": self.cols,
                "base": self.base.to_json(), "period": self.period.to_json()}

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode()
        payload = self.values.astype("<c8").tobytes()
        return MAGIC + struct.pack("<I", len(head)) + head + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFn":
        if data[:4] != MAGIC:
            raise FilterBankError("not a GridFn file")
        (hl,) = struct.unpack("<I", data[4:8])
        head = json.loads(data[8:8 + hl].decode())
        vals = np.frombuffer(data[8 + hl:], dtype="<c8").astype(complex)
        base, period = Lattice.from_json(head["base"]), Lattice.from_json(head["period"])
        n = _count(base, period, head["shape"])
        return cls(base, period, head["shape"], vals.reshape(n, head["rows"], head["cols"]))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "GridFn":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_json(self) -> dict:
        d = self.header()
        d["re"] = self.values.real.ravel().tolist()
        d["im"] = self.values.imag.ravel().tolist()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GridFn":
        base, period = Lattice.from_json(d["base"]), Lattice.from_json(d["period"])
        vals = np.array(d["re"]) + 1j * np.array(d["im"])
        n = _count(base, period, d["shape"])
        return cls(base, period, d["shape"], vals.reshape(n, d["rows"], d["cols"]))


def _count(base: Lattice, period: Lattice, shape) -> int:
    r = period.volume / base.volume
    return int(r) * int(np.prod(shape))


def empty_grid(base: Lattice, period: Lattice, shape) -> GridFn:
    return GridFn(base, period, shape, np.zeros((_count(base, period, shape), 1, 1)))


# ---------------------------------------------------------------------------
# filter banks


@dataclass
class FilterBank:
    A: RatMatrix
    spec: MraSpec
    gamma: Lattice
    lam: Lattice
    D: Transversal  # Gamma / Lambda
    Omega: Transversal  # Lambda* / Gamma*
    Kq: Transversal  # Gamma / Z^n
    p: int
    q: int
    N: int
    M: GridFn
    H: GridFn | None = None
    completion: object = None
    meta: dict = field(default_factory=dict)

    @property
    def L(self) -> int:
        return (self.p - self.q) * self.N

    @property
    def b(self) -> float:
        return float(abs(self.A.det()))

    def summary(self) -> dict:
        return {"A": self.A.to_json(), "p": self.p, "q": self.q, "N": self.N, "L": self.L,
                "gamma": self.gamma.to_json(), "shape": list(self.M.shape)}


def lowpass_at(spec: MraSpec, xi, kq: Transversal | Sequence, *, with_residual: bool = False):
    """Low-pass filter ``M(xi)`` at arbitrary points.

    ``M(xi) = b^{1/2} / vol(Gamma) sum_k Phi~(B(xi+k)) Phi(xi+k)^*``, the
    least-squares solution of ``b^{1/2} Phi~(B xi) = M(xi) Phi(xi)`` over the
    fiber.  Returns an array (m, qN, N) and optionally the per-point residual.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    phi = spec.scaling
    B = spec.A.T.to_numpy()
    b = abs(float(spec.A.det()))
    vol = float(phi.lattice.volume)
    cosets = kq.cosets if isinstance(kq, Transversal) else kq
    tilde = [g.translate(k) for k in cosets for g in phi.generators]
    slo, shi = phi.bbox()
    # the support of Phi~(B .) is B^{-1} supp Phi; cover both
    corners = np.array(np.meshgrid(*zip(slo, shi), indexing="ij")).reshape(len(slo), -1).T
    pre = corners @ np.linalg.inv(B).T
    lo = np.minimum(slo, pre.min(axis=0))
    hi = np.maximum(shi, pre.max(axis=0))
    ks = fiber_offsets(dual(phi.lattice).basis.to_numpy(), xi.min(axis=0), xi.max(axis=0), lo, hi)
    m = xi.shape[0]
    nq, N = len(tilde), phi.N
    Mx = np.zeros((m, nq, N), dtype=complex)
    cache = []
    for k in ks:
        y = xi + k
        P = phi.eval(y)  # (N, m)
        T = np.sqrt(b) * eval_generators(tilde, y @ B.T)  # (qN, m)
        if with_residual:
            cache.append((P, T))
        Mx += np.einsum("im,jm->mij", T, np.conj(P))
    Mx /= vol
    if not with_residual:
        return Mx
    res = np.zeros(m)
    for P, T in cache:
        diff = T - np.einsum("mij,jm->im", Mx, P)
        res = np.maximum(res, np.sqrt((np.abs(diff) ** 2).sum(axis=0)))
    return Mx, res


def bank_lattices(A: RatMatrix, gamma: Lattice | None = None):
    n = A.shape[0]
    gi = group_indices(A)
    gamma = gi.gamma if gamma is None else gamma
    Zn = Lattice.integer(n)
    lam = Zn.image(A)
    D = transversal(lam, gamma)
    Omega = transversal(dual(gamma), dual(lam))
    Kq = transversal(Zn, gamma)
    return gi, gamma, lam, D, Omega, Kq


def default_shape(n: int) -> tuple:
    return {1: (256,), 2: (64, 64), 3: (16, 16, 16)}.get(n, (8,) * n)


def extract_lowpass(spec: MraSpec, shape: Sequence[int] | None = None, *, kq=None,
                    tol: float = REFINABLE_TOL, chunk: int = 2048) -> GridFn:
    """Sampled low-pass filter of a refinable scaling vector.

    Raises :class:`NotRefinableError` when the refinement equation cannot be
    met to ``tol``.
    """
    return make_filterbank(spec, shape, kq=kq, tol=tol, chunk=chunk).M


def make_filterbank(spec: MraSpec, shape: Sequence[int] | None = None, *, kq=None,
                    tol: float = REFINABLE_TOL, chunk: int = 2048) -> FilterBank:
    A = spec.A
    n = A.shape[0]
    gi, gamma, lam, D, Omega, Kq = bank_lattices(A)
    if spec.lattice != gamma:
        raise FilterBankError("scaling vector lattice must equal A Z^n + Z^n")
    if kq is None:
        kq = Kq
    shape = default_shape(n) if shape is None else tuple(shape)
    grid = empty_grid(dual(lam), dual(gamma), shape)
    pts = grid.points()
    vals = []
    worst = 0.0
    for sl in range(0, pts.shape[0], chunk):
        Mx, res = lowpass_at(spec, pts[sl:sl + chunk], kq, with_residual=True)
        vals.append(Mx)
        worst = max(worst, float(res.max()))
    if worst > tol:
        raise NotRefinableError(worst)
    M = grid.with_values(np.concatenate(vals))
    return FilterBank(A, spec, gamma, lam, D, Omega,
                      kq if isinstance(kq, Transversal) else Kq,
                      gi.p, gi.q, spec.N, M, meta={"refinement_residual": worst})


# ---------------------------------------------------------------------------
# polyphase


def polyphase(M: GridFn, D: Transversal, Omega: Transversal) -> list[GridFn]:
    """Components ``M^{(d_j)}`` on the ``Lambda*`` torus, by character inversion."""
    lam_star = M.base
    target = empty_grid(lam_star, lam_star, M.shape)
    nodes = target.nodes()
    p = len(D)
    dvec = D.to_numpy()
    comps = []
    shifted = []
    for w in Omega.cosets:
        off = M.offset_in_nodes(w)
        idx = M.index(nodes + off)
        pts = M.points(M.reduce(nodes + off))
        shifted.append((idx, pts))
    for j in range(p):
        acc = np.zeros((nodes.shape[0], M.rows, M.cols), dtype=complex)
        for idx, pts in shifted:
            ph = np.exp(-2j * np.pi * (pts @ dvec[j]))
            acc += ph[:, None, None] * M.values[idx]
        comps.append(target.with_values(acc / p))
    return comps


def polyphase_reconstruct(comps: list[GridFn], M_grid: GridFn, D: Transversal) -> np.ndarray:
    """``sum_j e^{2 pi i <d_j, xi>} M^{(d_j)}(xi)`` on the nodes of ``M_grid``."""
    nodes = M_grid.nodes()
    xi = M_grid.points(nodes)
    out = np.zeros((nodes.shape[0], comps[0].rows, comps[0].cols), dtype=complex)
    for d, c in zip(D.to_numpy(), comps):
        out += np.exp(2j * np.pi * (xi @ d))[:, None, None] * c.values[c.index(nodes)]
    return out


def polyphase_round_trip(M: GridFn, D: Transversal, Omega: Transversal) -> float:
    comps = polyphase(M, D, Omega)
    return float(np.abs(polyphase_reconstruct(comps, M, D) - M.values).max())


def plancherel_defect(M: GridFn, comps: list[GridFn]) -> float:
    """``|(1/p) int ||M||^2 - sum_j int ||M^(d_j)||^2|`` by grid quadrature."""
    vol_lam = float(comps[0].base.volume)
    vol_gam = float(M.period.volume)
    p = len(comps)
    lhs = vol_gam * np.mean(np.sum(np.abs(M.values) ** 2, axis=(1, 2))) / p
    rhs = sum(vol_lam * np.mean(np.sum(np.abs(c.values) ** 2, axis=(1, 2))) for c in comps)
    return float(abs(lhs - rhs))


def stack_polyphase(comps: list[GridFn]) -> np.ndarray:
    """``[M^(d_1) ... M^(d_p)]`` per node, shape (nodes, rows, p*cols)."""
    return np.concatenate([c.values for c in comps], axis=2)


def smith_barnwell_residual(M: GridFn, Omega: Transversal) -> float:
    """Max entry of ``sum_i M(xi+w_i) M(xi+w_i)^* - p I`` over the grid."""
    p = len(Omega)
    acc = np.zeros((M.num_nodes, M.rows, M.rows), dtype=complex)
    for w in Omega.cosets:
        V = M.values[M.shifted_index(w)]
        acc += V @ np.conj(np.transpose(V, (0, 2, 1)))
    return float(np.abs(acc - p * np.eye(M.rows)).max())


def unitarity_residual(bank: FilterBank) -> float:
    """Max entry of ``T T^* - I`` for the stacked polyphase matrix ``T``."""
    if bank.H is None:
        raise FilterBankError("bank has no high-pass filter")
    if bank.H.rows != (bank.p - bank.q) * bank.N:
        raise FilterBankError(f"L = {bank.H.rows} differs from (p-q)N = {(bank.p - bank.q) * bank.N}")
    T = stacked_matrix(bank)
    G = T @ np.conj(np.transpose(T, (0, 2, 1)))
    return float(np.abs(G - np.eye(T.shape[1])).max())


def stacked_matrix(bank: FilterBank) -> np.ndarray:
    top = stack_polyphase(polyphase(bank.M, bank.D, bank.Omega))
    if bank.H is None:
        return top
    bot = stack_polyphase(polyphase(bank.H, bank.D, bank.Omega))
    return np.concatenate([top, bot], axis=1)


def fiber_gramian(phi: ScalingVector, shape: Sequence[int]) -> GridFn:
    """``sum_k Phi(xi+k) Phi(xi+k)^*`` on a ``Gamma*`` torus grid."""
    gd = dual(phi.lattice)
    grid = empty_grid(gd, gd, shape)
    return grid.with_values(phi.gramian(grid.points()))


# ---------------------------------------------------------------------------
# Fourier coefficients of periodic components


def _sym_freqs(s: int) -> np.ndarray:
    return np.fft.fftfreq(s, 1.0 / s).astype(int)


def torus_coefficients(G: GridFn) -> tuple[np.ndarray, np.ndarray]:
    """Fourier coefficients of a grid function with ``base == period``.

    Returns integer frequencies ``m`` (K, n) and coefficients (K, rows, cols)
    with ``F(G u / shape) = sum_m c_m exp(2 pi i m . u / shape * shape)``, i.e.
    ``F(xi) = sum_m c_m exp(2 pi i <m, G^{-1} xi>)``.
    """
    if G.num_nodes != int(np.prod(G.shape)):
        raise FilterBankError("coefficients need base == period")
    arr = G.values.reshape(*G.shape, G.rows, G.cols)
    c = np.fft.fftn(arr, axes=tuple(range(G.dim))) / G.num_nodes
    freqs = np.stack(np.meshgrid(*[_sym_freqs(s) for s in G.shape], indexing="ij"), axis=-1)
    return freqs.reshape(-1, G.dim), c.reshape(-1, G.rows, G.cols)


class TorusInterpolant:
    """Trigonometric interpolant of a ``base == period`` grid function."""

    def __init__(self, G: GridFn):
        freqs, coef = torus_coefficients(G)
        # split Nyquist terms symmetrically so real data stay real
        for ax, s in enumerate(G.shape):
            if s % 2:
                continue
            nyq = freqs[:, ax] == -(s // 2)
            coef[nyq] *= 0.5
            f = freqs[nyq].copy()
            f[:, ax] = s // 2
            freqs = np.concatenate([freqs, f])
            coef = np.concatenate([coef, coef[nyq]])
        self.freqs, self.coef = freqs, coef
        self.Ginv = np.linalg.inv(G.base.basis.to_numpy())

    def __call__(self, xi) -> np.ndarray:
        u = np.atleast_2d(xi) @ self.Ginv.T
        E = np.exp(2j * np.pi * (u @ self.freqs.T))  # (m, K)
        return np.einsum("mk,kij->mij", E, self.coef)


def filter_coefficients(comps: list[GridFn], D: Transversal, A: RatMatrix):
    """Coefficients ``a(gamma)``, ``gamma = d_j + A m``, of a filter from its
    polyphase components; returns positions (K, n) and Frobenius norms (K,)."""
    Af = A.to_numpy()
    pos, norms = [], []
    for d, c in zip(D.to_numpy(), comps):
        m, coef = torus_coefficients(c)
        pos.append(d[None, :] + m @ Af.T)
        norms.append(np.sqrt((np.abs(coef) ** 2).sum(axis=(1, 2))))
    return np.concatenate(pos), np.concatenate(norms)
