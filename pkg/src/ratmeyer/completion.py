"""Unitary completion of polyphase rows, high-pass filters and wavelets.

The given rows ``R(u)`` (``qN x pN`` on the ``Lambda*`` torus) are completed
to a unitary by one of two methods.  When a single row is missing the
conjugated signed maximal minors give a completion that is a polynomial in
the entries of ``R`` and therefore exactly as smooth as ``R`` ("cofactor").
Otherwise a seed completion is propagated along grid lines by projection and
polar re-orthonormalization, and the holonomy around each periodic line is
spread evenly with a fractional matrix power ("propagate").
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .bump import BoxUnion
from .filterbank import (FilterBank, GridFn, TorusInterpolant, empty_grid, lowpass_at,
                         make_filterbank, polyphase, stack_polyphase, unitarity_residual)
from .mra import (Generator, MraSpec, ProductAtom, ScalingVector, build_mra_ellipsoid,
                  choose_ellipsoid, refine_to_lattice, rescale_mra, strictly_expansive_scaling)
from .ratlat import Lattice, RatMatrix, group_indices, lattice_sum, transversal

RANK_TOL = 1e-6


class CompletionError(ValueError):
    pass


def _ct(X: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(X, -1, -2))


def lowdin(Y: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Symmetric orthonormalization ``(Y Y^*)^{-1/2} Y`` of stacked row blocks."""
    G = Y @ _ct(Y)
    w, V = np.linalg.eigh(G)
    if tol and w.min() < tol ** 2:
        raise CompletionError(f"rank loss: smallest singular value {math.sqrt(max(w.min(), 0)):.2e}")
    inv_sqrt = (V * (1.0 / np.sqrt(w))[..., None, :]) @ _ct(V)
    return inv_sqrt @ Y


def _complement_basis(R: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the complement of the rows of ``R``."""
    k = R.shape[-2]
    Q, _ = np.linalg.qr(_ct(R), mode="complete")
    return _ct(Q[..., k:])


def _align(X: np.ndarray, C: np.ndarray) -> tuple[np.ndarray, float]:
    """Orthonormal rows in the row space of ``C`` closest to ``X`` (Procrustes).

    Equals the Lowdin orthonormalization of the projection of ``X`` whenever
    that projection has full rank; also returns the smallest singular value
    of the projection as a degeneracy measure.
    """
    U, sv, Vh = np.linalg.svd(X @ _ct(C))
    return (U @ Vh) @ C, float(sv.min())


def _schur_unitary(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Schur factors of a batch of unitaries: ``W = Z diag(e^{i theta}) Z^*``."""
    Zs, thetas = [], []
    for w in W.reshape(-1, *W.shape[-2:]):
        T, Z = scipy.linalg.schur(w, output="complex")
        Zs.append(Z)
        thetas.append(np.angle(np.diag(T)))
    return np.array(Zs).reshape(W.shape), np.array(thetas).reshape(W.shape[:-1])


def _seed(C0: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    L, m = C0.shape
    Z = rng.standard_normal((L, m)) + 1j * rng.standard_normal((L, m))
    return _align(Z, C0)[0]


def _propagate(R: np.ndarray, seed: int, strict: bool) -> tuple[np.ndarray, float, float]:
    """Nested line propagation on a torus array ``R`` of shape (*shape, k, m)."""
    shape = R.shape[:-2]
    n = len(shape)
    C = _complement_basis(R)
    X = np.zeros(C.shape, dtype=complex)
    X[(0,) * n] = _seed(C[(0,) * n], seed)
    holonomy, worst_sv = 0.0, np.inf

    def step(cur, idx):
        nonlocal worst_sv
        new, sv = _align(cur, C[idx])
        worst_sv = min(worst_sv, sv)
        if strict and sv < RANK_TOL:
            raise CompletionError(f"rank loss: smallest singular value {sv:.2e}")
        return new

    for a in range(n):
        s = shape[a]
        # lines along axis a start where the coordinates a, a+1, ... vanish
        lead = tuple(slice(None) for _ in range(a))
        start = lead + (0,) * (n - a)
        X0 = X[start]
        cur = X0
        for k in range(1, s):
            idx = lead + (k,) + (0,) * (n - a - 1)
            cur = step(cur, idx)
            X[idx] = cur
        if s == 1:
            continue
        # spread the loop holonomy W evenly: X_k <- W^{-k/s} X_k
        W = step(cur, start) @ _ct(X0)
        Z, th = _schur_unitary(W)
        holonomy = max(holonomy, float(np.abs(th).max()))
        for k in range(1, s):
            idx = lead + (k,) + (0,) * (n - a - 1)
            corr = (Z * np.exp(-1j * th * k / s)[..., None, :]) @ _ct(Z)
            X[idx] = corr @ X[idx]
    return X, holonomy, worst_sv


def _cofactor(R: np.ndarray) -> np.ndarray:
    """Missing last row of a unitary with prescribed first rows and determinant 1.

    Equals the conjugated signed maximal minors of ``R``; computed as
    ``conj(det U0) h0`` for any unitary completion ``[R; h0]``.
    """
    Q, _ = np.linalg.qr(_ct(R), mode="complete")
    h0 = _ct(Q[..., -1:])
    U0 = np.concatenate([R, h0], axis=-2)
    return np.conj(np.linalg.det(U0))[..., None, None] * h0


@dataclass
class CompletionResult:
    """Appended rows on the ``Lambda*`` torus; ``rows`` has shape ``L x pN``."""

    given: GridFn
    rows: GridFn
    p: int
    method: str
    continuity_score: float
    unitarity: float
    orthogonality: float
    holonomy: float = 0.0
    degeneracy: float = 1.0

    @property
    def L(self) -> int:
        return self.rows.rows

    @property
    def H_polyphase(self) -> list[GridFn]:
        N = self.rows.cols // self.p
        return [self.rows.with_values(self.rows.values[:, :, j * N:(j + 1) * N])
                for j in range(self.p)]

    def report(self) -> dict:
        return {"method": self.method, "L": self.L, "continuity_score": self.continuity_score,
                "unitarity": self.unitarity, "orthogonality": self.orthogonality,
                "holonomy": self.holonomy, "degeneracy": self.degeneracy}


def continuity_score(G: GridFn) -> float:
    arr = G.values.reshape(*G.shape, G.rows, G.cols)
    best = 0.0
    for ax in range(G.dim):
        d = arr - np.roll(arr, -1, axis=ax)
        best = max(best, float(np.sqrt((np.abs(d) ** 2).sum(axis=(-1, -2))).max()))
    return best


def complete_unitary(rows: GridFn, *, p: int = 1, method: str = "auto", seed: int = 0,
                     retries: int = 3, strict: bool = True) -> CompletionResult:
    """Append ``pN - qN`` rows making every node's matrix unitary.

    With ``strict`` a degenerate propagation step (the neighbour's rows nearly
    orthogonal to the new complement) triggers a retry from a new seed and
    finally an error.  Otherwise the step falls back to a Procrustes choice
    and the smallest singular value met is reported as ``degeneracy``.
    """
    if rows.num_nodes != int(np.prod(rows.shape)):
        raise CompletionError("rows must live on a torus grid (base == period)")
    k, m = rows.rows, rows.cols
    L = m - k
    if L <= 0:
        raise CompletionError("nothing to complete")
    if rows.dim > 2 * L:
        warnings.warn(f"dimension {rows.dim} exceeds 2(pN - qN) = {2 * L}; continuous "
                      "completion is not guaranteed", RuntimeWarning, stacklevel=2)
    R = lowdin(rows.values.astype(complex))
    if method == "auto":
        method = "cofactor" if L == 1 else "propagate"
    holonomy, degeneracy = 0.0, 1.0
    if method == "cofactor":
        if L != 1:
            raise CompletionError("cofactor completion needs exactly one missing row")
        X = _cofactor(R)
    elif method == "propagate":
        arr = R.reshape(*rows.shape, k, m)
        last = None
        for attempt in range(retries + 1):
            try:
                Xa, holonomy, degeneracy = _propagate(arr, seed + attempt, strict)
                break
            except CompletionError as exc:
                last = exc
        else:
            raise CompletionError(f"propagation failed after {retries + 1} seeds: {last}")
        X = Xa.reshape(-1, L, m)
    else:
        raise ValueError(f"unknown completion method {method!r}")
    given = rows.with_values(R)
    new = rows.with_values(X)
    U = np.concatenate([R, X], axis=1)
    unit = float(np.abs(U @ _ct(U) - np.eye(m)).max())
    orth = float(np.abs(X @ _ct(R)).max())
    return CompletionResult(given, new, p, method, continuity_score(new), unit, orth,
                            holonomy, degeneracy)


# ---------------------------------------------------------------------------
# high-pass filters


class HighpassEvaluator:
    """Off-grid evaluation of the completed polyphase rows and of ``H``.

    The exact low-pass polyphase rows are recomputed at ``xi``.  For the
    cofactor method the missing row follows exactly; otherwise the sampled
    completion is trigonometrically interpolated, projected onto the exact
    complement and re-orthonormalized, so unitarity holds at every point.
    """

    def __init__(self, bank: FilterBank, comp: CompletionResult):
        self.bank = bank
        self.comp = comp
        self._interp = None if comp.method == "cofactor" else TorusInterpolant(comp.rows)
        self._d = bank.D.to_numpy()
        self._w = bank.Omega.to_numpy()

    def lowpass_polyphase(self, xi) -> np.ndarray:
        xi = np.atleast_2d(xi)
        bank = self.bank
        p = bank.p
        blocks = [np.zeros((xi.shape[0], bank.M.rows, bank.N), dtype=complex) for _ in range(p)]
        for w in self._w:
            y = xi + w
            Mv = lowpass_at(bank.spec, y, bank.Kq)
            for j, d in enumerate(self._d):
                blocks[j] += np.exp(-2j * np.pi * (y @ d))[:, None, None] * Mv
        return np.concatenate(blocks, axis=2) / p

    def polyphase_at(self, xi) -> np.ndarray:
        R = lowdin(self.lowpass_polyphase(xi))
        if self._interp is None:
            return _cofactor(R)
        X = self._interp(np.atleast_2d(xi))
        return lowdin(X - (X @ _ct(R)) @ R)

    def __call__(self, xi) -> np.ndarray:
        """``H(xi)``, shape (m, L, N)."""
        xi = np.atleast_2d(xi)
        Hp = self.polyphase_at(xi)
        N = self.bank.N
        out = np.zeros((xi.shape[0], Hp.shape[1], N), dtype=complex)
        for j, d in enumerate(self._d):
            out += np.exp(2j * np.pi * (xi @ d))[:, None, None] * Hp[:, :, j * N:(j + 1) * N]
        return out


def assemble_highpass(bank: FilterBank, comp: CompletionResult) -> GridFn:
    """``H(xi) = sum_j e^{2 pi i <d_j, xi>} H^(d_j)(xi)`` on the low-pass grid."""
    if bank.p == bank.q:
        raise CompletionError("p = q leaves no room for wavelets")
    M = bank.M
    nodes = M.nodes()
    xi = M.points(nodes)
    idx = comp.rows.index(nodes)
    out = np.zeros((M.num_nodes, comp.L, bank.N), dtype=complex)
    for d, Hj in zip(bank.D.to_numpy(), comp.H_polyphase):
        out += np.exp(2j * np.pi * (xi @ d))[:, None, None] * Hj.values[idx]
    return M.with_values(out)


def complete_bank(bank: FilterBank, *, method: str = "auto", seed: int = 0,
                  strict: bool = True) -> FilterBank:
    """Run polyphase, completion and high-pass assembly; fills ``bank.H``."""
    rows = stack_polyphase(polyphase(bank.M, bank.D, bank.Omega))
    G = empty_grid(bank.M.base, bank.M.base, bank.M.shape).with_values(rows)
    comp = complete_unitary(G, p=bank.p, method=method, seed=seed, strict=strict)
    bank.H = assemble_highpass(bank, comp)
    bank.completion = comp
    bank.meta["unitarity"] = unitarity_residual(bank)
    bank.meta["completion"] = comp.report()
    return bank


# ---------------------------------------------------------------------------
# wavelets


@dataclass
class WaveletSystem:
    """``L`` band-limited wavelets given by a vectorized Fourier evaluator."""

    A: RatMatrix
    L: int
    evaluator: Callable  # (m, n) -> (L, m)
    boxes: list
    bank: FilterBank | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def eval(self, eta) -> np.ndarray:
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if eta.shape[1] != self.dim and self.dim == 1:
            eta = eta.reshape(-1, 1)
        return self.evaluator(eta)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.min([b[0] for b in self.boxes], axis=0), np.max([b[1] for b in self.boxes], axis=0))

    def to_json(self) -> dict:
        d = {"A": self.A.to_json(), "L": self.L,
             "support_boxes": [[lo.tolist(), hi.tolist()] for lo, hi in self.boxes]}
        if self.bank is not None:
            d["bank"] = self.bank.summary()
            d["scaling"] = self.bank.spec.to_json()
        d["meta"] = {k: v for k, v in self.meta.items() if isinstance(v, (int, float, str, list, dict))}
        return d


def _mapped_boxes(boxes, B: np.ndarray) -> list:
    out = []
    for lo, hi in boxes:
        corners = np.array(np.meshgrid(*zip(lo, hi), indexing="ij")).reshape(len(lo), -1).T @ B.T
        out.append((corners.min(axis=0), corners.max(axis=0)))
    return out


def synthesize_wavelets(bank: FilterBank, chunk: int = 4096) -> WaveletSystem:
    """``psi_hat(eta) = b^{-1/2} H(B^{-1} eta) Phi_hat(B^{-1} eta)``."""
    if bank.completion is None:
        raise CompletionError("bank has not been completed")
    hp = HighpassEvaluator(bank, bank.completion)
    B = bank.A.T.to_numpy()
    Binv = np.linalg.inv(B)
    b = bank.b
    phi = bank.spec.scaling
    L = bank.completion.L

    def evaluator(eta):
        xi = eta @ Binv.T
        out = np.zeros((L, xi.shape[0]), dtype=complex)
        P = phi.eval(xi)  # (N, m)
        live = np.where(np.any(P != 0, axis=0))[0]
        for s in range(0, live.size, chunk):
            sel = live[s:s + chunk]
            Hv = hp(xi[sel])  # (m, L, N)
            out[:, sel] = np.einsum("mln,nm->lm", Hv, P[:, sel]) / math.sqrt(b)
        return out

    boxes = []
    for g in phi.generators:
        boxes += _mapped_boxes(g.support_boxes(), B)
    return WaveletSystem(bank.A, L, evaluator, boxes, bank,
                         {"method": bank.completion.method, "N": bank.N, "p": bank.p, "q": bank.q})


# ---------------------------------------------------------------------------
# pipelines


def build_strict(A: RatMatrix, K: BoxUnion, eps: float = 0.1, shape=None, *,
                 method: str = "auto", seed: int = 0, check: bool = True) -> WaveletSystem:
    """Strictly expansive pipeline for ``Gamma = A Z^n + Z^n`` and a ``Gamma*``-tile ``K``."""
    gi = group_indices(A)
    spec = strictly_expansive_scaling(A, gi.gamma, K, eps, check=check)
    bank = make_filterbank(spec, shape)
    complete_bank(bank, method=method, seed=seed)
    return synthesize_wavelets(bank)


def pipeline_1d(p: int, q: int, eps: float = 0.1, grid: int = 256, *, method: str = "auto",
                seed: int = 0) -> WaveletSystem:
    """Rational dilation ``p/q`` on the line with ``K = [-q/2, q/2]``."""
    if math.gcd(p, q) != 1 or not p > q >= 1:
        raise ValueError("need coprime p > q >= 1")
    A = RatMatrix([[Fraction(p, q)]])
    return build_strict(A, BoxUnion.interval(-q / 2, q / 2), eps, (grid,), method=method, seed=seed)


def lift_matrix(p: int, q: int, n: int) -> RatMatrix:
    rows = [[Fraction(0)] * n for _ in range(n)]
    rows[0][1] = Fraction(1, q)
    for i in range(1, n - 1):
        rows[i][i + 1] = Fraction(1)
    rows[n - 1][0] = Fraction(p)
    return RatMatrix(rows)


def lift_spec(base: MraSpec, q: int, n: int) -> MraSpec:
    """``phi_hat(xi) = q^{(n-1)/2} phi1(xi_1) prod_{i>1} phi1(q xi_i)``."""
    g1, = base.scaling.generators
    qm = RatMatrix([[Fraction(q)]])
    gq = Generator(g1.atom, g1.W @ qm, g1.scale2)
    atom = ProductAtom([g1] + [gq] * (n - 1))
    p = base.A[0, 0] * q
    A = lift_matrix(int(p), q, n)
    gamma = lattice_sum(A, Lattice.integer(n), Lattice.integer(n))
    gen = Generator(atom, RatMatrix.identity(n), Fraction(q) ** (n - 1))
    return MraSpec(A, ScalingVector(gamma, [gen]), "lift", {"q": q, "n": n})


def lift_to_nd(p: int, q: int, n: int = 2, eps: float = 0.1, grid: int = 256,
               shape=None) -> WaveletSystem:
    """Lift the ``p/q`` system to ``R^n`` with the companion-type dilation.

    The lifted filters are ``M(q xi_n)`` and ``H(q xi_n)``; both are checked
    against direct extraction and unitarity on the lifted lattices.
    """
    if n < 2:
        raise ValueError("lifting needs n >= 2")
    base = pipeline_1d(p, q, eps, grid)
    bank1 = base.bank
    spec = lift_spec(bank1.spec, q, n)
    bank = make_filterbank(spec, shape)
    pts = bank.M.points()
    M1 = lowpass_at(bank1.spec, q * pts[:, -1:], bank1.Kq)
    lift_dev = float(np.abs(bank.M.values - M1).max())
    hp1 = HighpassEvaluator(bank1, bank1.completion)
    bank.H = bank.M.with_values(hp1(q * pts[:, -1:]))
    bank.meta["unitarity"] = unitarity_residual(bank)
    bank.meta["lift_lowpass_deviation"] = lift_dev
    psi1 = base.evaluator
    g1, = bank1.spec.scaling.generators
    scale = q ** ((n - 1) / 2)

    def evaluator(xi):
        out = scale * psi1(xi[:, :1])
        for i in range(1, n):
            out = out * g1.eval(q * xi[:, i:i + 1])[None, :]
        return out

    lo1, hi1 = base.bbox()
    plo, phi_ = g1.bbox()
    lo = np.concatenate([lo1, np.full(n - 1, plo[0] / q)])
    hi = np.concatenate([hi1, np.full(n - 1, phi_[0] / q)])
    return WaveletSystem(spec.A, base.L, evaluator, [(lo, hi)], bank,
                         {"lift_lowpass_deviation": lift_dev, "unitarity": bank.meta["unitarity"],
                          "base_unitarity": bank1.meta["unitarity"], "p": p, "q": q})


def build_general(A: RatMatrix, delta: float = 0.02, shape=None, *, scale: str = "minimal",
                  method: str = "auto", seed: int = 0, strict: bool = False) -> WaveletSystem:
    """General path: ellipsoid MRA, rescaled and refined onto ``A Z^n + Z^n``."""
    n = A.shape[0]
    gi = group_indices(A)
    target = gi.gamma
    choice = choose_ellipsoid(A, delta, scale=scale)
    U = choice.E.U
    base = build_mra_ellipsoid(A, delta, choice=choice)
    # smallest s with (1/s) U^T Z^n containing the target lattice
    C = U @ target.basis
    s = C.common_denominator()
    spec = base
    if s != 1:
        spec = rescale_mra(base, RatMatrix.identity(n) * s)
    # rescaling by s I keeps A; lattice is now (1/s) U^T Z^n
    spec = refine_to_lattice(spec, target)
    shape = shape if shape is not None else (8,) * n
    bank = make_filterbank(spec, shape)
    complete_bank(bank, method=method, seed=seed, strict=strict)
    ws = synthesize_wavelets(bank)
    ws.meta.update({"N_base": base.N, "s": s, "J": base.meta["J"], "delta": delta})
    return ws
