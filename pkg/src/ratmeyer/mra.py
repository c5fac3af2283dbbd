"""Multiresolution analyses for expansive dilations.

Two constructions are provided.  The ellipsoid path builds a scaling vector
from SFS generators whose supports meet an ellipsoid expanded by ``B = A^T``;
the strictly expansive path builds a single scaling function from a smoothed
tile of the dual lattice.  Both produce band-limited generators of the form

    phi_hat(xi) = scale * atom(W xi) * exp(-2 pi i <t, xi>)

so dilations ``D_P`` and translations ``T_d`` act exactly on ``(W, scale, t)``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .bump import BoxUnion, BumpProfile, MollifiedIndicator, make_profile, mollify_indicator, smooth_gate
from .ratlat import (Lattice, LatticeError, RatMatrix, as_fraction, cayley_rationalize, dual,
                     is_expansive, transversal)
from .sfs import eval_fj, support_fj


class MraError(ValueError):
    pass


class StrictExpansiveError(MraError):
    pass


# ---------------------------------------------------------------------------
# lattice point enumeration


def lattice_points_in_box(basis: np.ndarray, lo, hi, tol: float = 1e-9) -> np.ndarray:
    """All points ``basis @ m`` (``m`` integer) inside the closed box ``[lo, hi]``."""
    basis = np.asarray(basis, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = basis.shape[0]
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    coords = np.linalg.solve(basis, corners.T).T
    mlo = np.floor(coords.min(axis=0) - tol).astype(int)
    mhi = np.ceil(coords.max(axis=0) + tol).astype(int)
    ranges = [np.arange(a, b + 1) for a, b in zip(mlo, mhi)]
    grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n)
    pts = grid @ basis.T
    keep = np.all((pts >= lo - tol) & (pts <= hi + tol), axis=1)
    return pts[keep]


def fiber_offsets(dual_basis: np.ndarray, point_lo, point_hi, supp_lo, supp_hi) -> np.ndarray:
    """Dual-lattice offsets ``k`` such that ``xi + k`` can meet the support box
    for some ``xi`` in the point box."""
    lo = np.asarray(supp_lo) - np.asarray(point_hi)
    hi = np.asarray(supp_hi) - np.asarray(point_lo)
    return lattice_points_in_box(dual_basis, lo, hi)


# ---------------------------------------------------------------------------
# atoms


class Atom:
    """Band-limited profile in its own coordinates ``eta``."""

    dim: int

    def eval(self, eta: np.ndarray) -> np.ndarray:  # (m, n) -> (m,)
        raise NotImplementedError

    def boxes(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Closed boxes whose union contains the support."""
        raise NotImplementedError

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        bx = self.boxes()
        return (np.min([b[0] for b in bx], axis=0), np.max([b[1] for b in bx], axis=0))

    def to_json(self) -> dict:
        raise NotImplementedError


class SfsAtom(Atom):
    """Tensor SFS generator ``w_j``."""

    def __init__(self, jvec: Sequence[int], profile: BumpProfile):
        self.jvec = tuple(int(j) for j in jvec)
        self.profile = profile
        self.dim = len(self.jvec)

    def eval(self, eta):
        eta = np.atleast_2d(eta)
        out = np.ones(eta.shape[0])
        lo, hi = self.bbox()
        inside = np.all((eta >= lo) & (eta <= hi), axis=1)
        if not inside.any():
            return out * 0.0
        sub = eta[inside]
        val = np.ones(sub.shape[0])
        for i, j in enumerate(self.jvec):
            val = val * eval_fj(j, self.profile, sub[:, i])
        out = np.zeros(eta.shape[0], dtype=val.dtype)
        out[inside] = val
        return out

    def boxes(self):
        per_axis = [support_fj(j, self.profile.delta) for j in self.jvec]
        out = []
        for combo in itertools.product(*per_axis):
            out.append((np.array([c[0] for c in combo]), np.array([c[1] for c in combo])))
        return out

    def to_json(self):
        return {"type": "sfs", "j": list(self.jvec), "delta": self.profile.delta}


class TileAtom(Atom):
    """``f / sqrt(sum_k f(. + k)^2)`` for a smoothed dual-lattice tile ``f``.

    The normalizing sum runs over the dual lattice with exact support
    arithmetic, so the denominator is a finite sum.
    """

    def __init__(self, f: MollifiedIndicator, dual_lattice: Lattice):
        self.f = f
        self.dual_lattice = dual_lattice
        self.dim = f.K.dim
        lo, hi = f.support_box()
        self._lo, self._hi = lo, hi
        self._offsets = lattice_points_in_box(dual_lattice.basis.to_numpy(), lo - hi, hi - lo)

    def eval(self, eta):
        eta = np.atleast_2d(eta)
        out = np.zeros(eta.shape[0])
        inside = np.all((eta > self._lo) & (eta < self._hi), axis=1)
        if not inside.any():
            return out
        sub = eta[inside]
        num = self.f(sub)
        den = np.zeros(sub.shape[0])
        for k in self._offsets:
            den += self.f(sub + k) ** 2
        out[inside] = num / np.sqrt(den)
        return out

    def boxes(self):
        return [(np.asarray(lo) - self.f.eps, np.asarray(hi) + self.f.eps) for lo, hi in self.f.K.boxes]

    def to_json(self):
        return {"type": "tile", "K": self.f.K.to_json(), "eps": self.f.eps,
                "dual_lattice": self.dual_lattice.to_json()}


class ProductAtom(Atom):
    """``prod_i g_i(eta_i)`` for one-dimensional generators ``g_i``."""

    def __init__(self, factors: Sequence["Generator"]):
        self.factors = list(factors)
        if any(g.dim != 1 for g in self.factors):
            raise ValueError("product factors must be one-dimensional")
        self.dim = len(self.factors)

    def eval(self, eta):
        eta = np.atleast_2d(eta)
        out = np.ones(eta.shape[0], dtype=complex)
        for i, g in enumerate(self.factors):
            out = out * g.eval(eta[:, i:i + 1])
        return out

    def boxes(self):
        per_axis = [[(lo[0], hi[0]) for lo, hi in g.support_boxes()] for g in self.factors]
        return [(np.array([c[0] for c in combo]), np.array([c[1] for c in combo]))
                for combo in itertools.product(*per_axis)]

    def to_json(self):
        return {"type": "product", "factors": [g.to_json() for g in self.factors]}


class FunctionAtom(Atom):
    """Wraps an arbitrary vectorized evaluator with a declared support box."""

    def __init__(self, fn: Callable, lo, hi, name: str = "function"):
        self.fn = fn
        self._box = (np.asarray(lo, float), np.asarray(hi, float))
        self.dim = self._box[0].size
        self.name = name

    def eval(self, eta):
        return self.fn(np.atleast_2d(eta))

    def boxes(self):
        return [self._box]

    def to_json(self):
        return {"type": "function", "name": self.name,
                "box": [self._box[0].tolist(), self._box[1].tolist()]}


def atom_from_json(d: dict) -> Atom:
    kind = d.get("type")
    if kind == "sfs":
        return SfsAtom(d["j"], make_profile(d["delta"]))
    if kind == "tile":
        f = mollify_indicator(BoxUnion.from_json(d["K"]), d["eps"])
        return TileAtom(f, Lattice.from_json(d["dual_lattice"]))
    if kind == "product":
        return ProductAtom([Generator.from_json(g) for g in d["factors"]])
    raise MraError(f"cannot deserialize atom of type {kind!r}")


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class Generator:
    """``phi_hat(xi) = sqrt(scale2) * atom(W xi) * exp(-2 pi i <t, xi>)``."""

    atom: Atom
    W: RatMatrix
    scale2: Fraction = Fraction(1)
    shift: tuple = ()

    def __post_init__(self):
        n = self.W.shape[0]
        if not self.shift:
            object.__setattr__(self, "shift", tuple(Fraction(0) for _ in range(n)))
        object.__setattr__(self, "_Wf", self.W.to_numpy())
        object.__setattr__(self, "_scale", math.sqrt(self.scale2))
        object.__setattr__(self, "_t", np.array([float(x) for x in self.shift]))

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def base_key(self):
        return (id(self.atom), self.W, self.scale2)

    def base_eval(self, xi: np.ndarray) -> np.ndarray:
        return self._scale * self.atom.eval(xi @ self._Wf.T)

    def phase(self, xi: np.ndarray) -> np.ndarray | float:
        if not np.any(self._t):
            return 1.0
        return np.exp(-2j * np.pi * (xi @ self._t))

    def eval(self, xi) -> np.ndarray:
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return self.base_eval(xi) * self.phase(xi)

    def dilate(self, P: RatMatrix) -> "Generator":
        """Fourier side of ``D_P f(x) = |det P|^{1/2} f(P x)``."""
        Pinv = P.inv()
        return Generator(self.atom, self.W @ Pinv.T, self.scale2 / abs(P.det()),
                         Pinv.apply(self.shift))

    def translate(self, d: Sequence) -> "Generator":
        d = [as_fraction(x) for x in d]
        return Generator(self.atom, self.W, self.scale2, tuple(a + b for a, b in zip(self.shift, d)))

    def support_boxes(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Axis-aligned boxes (in ``xi``) covering the support."""
        Winv = np.linalg.inv(self._Wf)
        out = []
        for lo, hi in self.atom.boxes():
            corners = np.array(list(itertools.product(*zip(lo, hi))))
            img = corners @ Winv.T
            out.append((img.min(axis=0), img.max(axis=0)))
        return out

    def support_parallelotopes(self) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Exact support cover: ``{W^{-1} y : lo <= y <= hi}`` per atom box."""
        Winv = np.linalg.inv(self._Wf)
        return [(Winv, lo, hi) for lo, hi in self.atom.boxes()]

    def bbox(self):
        bx = self.support_boxes()
        return np.min([b[0] for b in bx], axis=0), np.max([b[1] for b in bx], axis=0)

    def to_json(self) -> dict:
        return {"atom": self.atom.to_json(), "W": self.W.to_json(),
                "scale2": f"{self.scale2.numerator}/{self.scale2.denominator}",
                "shift": [f"{x.numerator}/{x.denominator}" for x in self.shift]}

    @classmethod
    def from_json(cls, d: dict, atoms: dict | None = None) -> "Generator":
        key = json.dumps(d["atom"], sort_keys=True)
        if atoms is not None and key in atoms:
            atom = atoms[key]
        else:
            atom = atom_from_json(d["atom"])
            if atoms is not None:
                atoms[key] = atom
        return cls(atom, RatMatrix.from_json(d["W"]), Fraction(d["scale2"]),
                   tuple(Fraction(x) for x in d["shift"]))


def eval_generators(gens: Sequence[Generator], xi) -> np.ndarray:
    """Evaluate many generators at once, sharing work between translates.

    Returns an array of shape ``(len(gens), m)``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    out = np.zeros((len(gens), xi.shape[0]), dtype=complex)
    cache: dict = {}
    for i, g in enumerate(gens):
        key = g.base_key
        if key not in cache:
            cache[key] = g.base_eval(xi)
        out[i] = cache[key] * g.phase(xi)
    return out


# ---------------------------------------------------------------------------
# scaling vectors and MRA specs


@dataclass
class ScalingVector:
    lattice: Lattice
    generators: list

    @property
    def N(self) -> int:
        return len(self.generators)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def eval(self, xi) -> np.ndarray:
        return eval_generators(self.generators, xi)

    def bbox(self):
        boxes = [g.bbox() for g in self.generators]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def offsets_for(self, pts: np.ndarray) -> np.ndarray:
        """Dual-lattice offsets needed for fiber sums at the given points."""
        pts = np.atleast_2d(pts)
        slo, shi = self.bbox()
        return fiber_offsets(dual(self.lattice).basis.to_numpy(), pts.min(axis=0),
                             pts.max(axis=0), slo, shi)

    def gramian(self, pts) -> np.ndarray:
        """``sum_{k in Gamma*} Phi_hat(xi+k) Phi_hat(xi+k)^*`` per point, shape (m, N, N)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        G = np.zeros((pts.shape[0], self.N, self.N), dtype=complex)
        for k in self.offsets_for(pts):
            v = self.eval(pts + k)  # (N, m)
            G += np.einsum("im,jm->mij", v, np.conj(v))
        return G


@dataclass
class Ellipsoid:
    """``E = U^T P U (B(0,1))`` with ``U`` rational orthogonal and ``P`` positive diagonal."""

    U: RatMatrix
    P: RatMatrix

    def __post_init__(self):
        n = self.U.shape[0]
        if self.U.T @ self.U != RatMatrix.identity(n):
            raise MraError("U is not exactly orthogonal")
        for i in range(n):
            for j in range(n):
                if i != j and self.P[i, j] != 0:
                    raise MraError("P must be diagonal")
            if self.P[i, i] <= 0:
                raise MraError("P must be positive")

    @property
    def dim(self) -> int:
        return self.U.shape[0]

    @property
    def axes(self) -> np.ndarray:
        return np.array([float(self.P[i, i]) for i in range(self.dim)])

    def shape_matrix(self) -> np.ndarray:
        S = self.U.T @ self.P @ self.U
        return S.to_numpy()

    def quad_form(self) -> np.ndarray:
        """``Q`` with ``E = {x : x^T Q x <= 1}``."""
        U = self.U.to_numpy()
        return U.T @ np.diag(self.axes ** -2.0) @ U

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.einsum("mi,ij,mj->m", x, self.quad_form(), x) <= 1 + tol

    def scaled(self, c) -> "Ellipsoid":
        return Ellipsoid(self.U, self.P * as_fraction(c))

    def to_json(self) -> dict:
        return {"U": self.U.to_json(), "P": self.P.to_json()}

    @classmethod
    def from_json(cls, d) -> "Ellipsoid":
        return cls(RatMatrix.from_json(d["U"]), RatMatrix.from_json(d["P"]))


@dataclass
class MraSpec:
    A: RatMatrix
    scaling: ScalingVector
    provenance: str
    meta: dict = field(default_factory=dict)

    @property
    def lattice(self) -> Lattice:
        return self.scaling.lattice

    @property
    def N(self) -> int:
        return self.scaling.N

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def to_json(self) -> dict:
        meta = {k: v for k, v in self.meta.items() if _jsonable(v)}
        return {"A": self.A.to_json(), "lattice": self.lattice.to_json(),
                "provenance": self.provenance, "meta": meta,
                "generators": [g.to_json() for g in self.scaling.generators]}

    @classmethod
    def from_json(cls, d) -> "MraSpec":
        if isinstance(d, str):
            d = json.loads(d)
        atoms: dict = {}
        gens = [Generator.from_json(g, atoms) for g in d["generators"]]
        return cls(RatMatrix.from_json(d["A"]), ScalingVector(Lattice.from_json(d["lattice"]), gens),
                   d["provenance"], d.get("meta", {}))


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def orthonormality_residual(spec_or_phi, counts: int | Sequence[int] = 64, cells: int = 3) -> float:
    """Max entrywise defect of ``sum_k Phi Phi^* = vol(Gamma) I`` on a torus grid.

    The grid covers ``cells`` fundamental cells of the dual lattice per axis.
    """
    phi = spec_or_phi.scaling if isinstance(spec_or_phi, MraSpec) else spec_or_phi
    n = phi.dim
    if isinstance(counts, int):
        counts = [counts] * n
    G = dual(phi.lattice).basis.to_numpy()
    axes = [np.arange(c * cells) / c - cells / 2 for c in counts]
    u = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    pts = u @ G.T
    vol = float(phi.lattice.volume)
    worst = 0.0
    for chunk in np.array_split(pts, max(1, pts.shape[0] // 4096)):
        Gm = phi.gramian(chunk)
        worst = max(worst, float(np.abs(Gm - vol * np.eye(phi.N)).max()))
    return worst


# ---------------------------------------------------------------------------
# expanding ellipsoids


def _as_float(B) -> np.ndarray:
    return B.to_numpy() if isinstance(B, RatMatrix) else np.asarray(B, dtype=float)


def certified_lambda(Q: np.ndarray, B: np.ndarray) -> float:
    """Largest ``lambda`` with ``lambda E <= B(E)`` for ``E = {x^T Q x <= 1}``."""
    w, V = np.linalg.eigh(Q)
    Qh = V @ np.diag(np.sqrt(w)) @ V.T
    Qmh = V @ np.diag(1 / np.sqrt(w)) @ V.T
    return 1.0 / np.linalg.norm(Qh @ np.linalg.inv(B) @ Qmh, 2)


def expansion_certificate(E: Ellipsoid, B, lam: float) -> float:
    """Smallest eigenvalue of ``I - lam^2 Q^{-1/2} B^{-T} Q B^{-1} Q^{-1/2}``.

    Nonnegative iff ``lam E`` is contained in ``B(E)``; the normalization makes
    the value independent of the size of ``E``.
    """
    B = _as_float(B)
    Q = E.quad_form()
    w, V = np.linalg.eigh(Q)
    Qmh = V @ np.diag(1 / np.sqrt(w)) @ V.T
    Bi = np.linalg.inv(B)
    M = Qmh @ (Bi.T @ Q @ Bi) @ Qmh
    return float(np.linalg.eigvalsh(np.eye(len(Q)) - lam ** 2 * 0.5 * (M + M.T)).min())


def szlenk_form(B, r_frac: float = 0.9, terms: int = 20) -> np.ndarray:
    """Truncated series ``sum_j r^{2j} (B^{-j})^T B^{-j}`` with ``r`` below
    the smallest eigenvalue modulus of ``B``."""
    B = _as_float(B)
    r = r_frac * np.abs(np.linalg.eigvals(B)).min()
    Bi = np.linalg.inv(B)
    Q = np.zeros_like(B)
    Pj = np.eye(len(B))
    for j in range(terms + 1):
        Q += r ** (2 * j) * Pj.T @ Pj
        Pj = Bi @ Pj
    return 0.5 * (Q + Q.T)


def _rational_axes(values, max_den: int = 10 ** 6) -> list[Fraction]:
    return [Fraction(float(v)).limit_denominator(max_den) for v in values]


def rational_ellipsoid(Q: np.ndarray, cayley_tol: float = 1e-6, max_den: int = 10 ** 6) -> Ellipsoid:
    """Rational-axis ellipsoid approximating ``{x^T Q x <= 1}``."""
    n = len(Q)
    w, V = np.linalg.eigh(Q)
    off = np.abs(Q - np.diag(np.diag(Q))).max()
    if off <= 1e-12 * np.abs(Q).max():
        U = RatMatrix.identity(n)
        w = np.diag(Q)
    else:
        U = cayley_rationalize(V.T, cayley_tol)
        Uf = U.to_numpy()
        w = np.diag(Uf @ Q @ Uf.T)
    return Ellipsoid(U, RatMatrix.diag(_rational_axes(w ** -0.5, max_den)))


def expanding_ellipsoid(B, margin: float = 1e-9, *, r_frac: float = 0.9, terms: int = 20,
                        scale: str = "sqn", slack: float = 1e-3) -> tuple[Ellipsoid, float]:
    """Rational-axis ellipsoid ``E`` and ``lambda > 1`` with ``lambda E`` inside ``B(E)``.

    ``scale="sqn"`` enlarges ``E`` until every axis exceeds
    ``sqrt(n) / (lambda - 1)``; ``scale="none"`` returns the unscaled shape.
    """
    Bf = _as_float(B)
    if not is_expansive(Bf):
        raise MraError("B is not expansive")
    n = len(Bf)
    tol, max_den = 1e-6, 10 ** 6
    for _ in range(6):
        Q = szlenk_form(Bf, r_frac, terms)
        E = rational_ellipsoid(Q / np.abs(Q).max(), tol, max_den)
        lam_c = certified_lambda(E.quad_form(), Bf)
        lam = 1 + (lam_c - 1) * (1 - slack)
        if lam > 1 and expansion_certificate(E, Bf, lam) >= margin:
            break
        tol, max_den = tol * 1e-2, max_den * 100
    else:
        raise MraError("could not certify an expanding ellipsoid")
    if scale == "sqn":
        need = math.sqrt(n) / (lam - 1)
        c = Fraction(need / E.axes.min() * (1 + 1e-6)).limit_denominator(1000)
        c = max(c, Fraction(math.ceil(need / E.axes.min() * 1e6), 10 ** 6))
        while (E.axes.min() * float(c)) <= need:
            c *= Fraction(1001, 1000)
        E = E.scaled(c)
    elif scale != "none":
        raise ValueError(f"unknown scale mode {scale!r}")
    return E, lam


# ---------------------------------------------------------------------------
# index set and sandwich test


def index_set(E: Ellipsoid, delta: float, tol: float = 1e-12) -> list[tuple[int, ...]]:
    """All ``j`` with ``E`` meeting ``U^T(I_j)``, ``I_j`` the closed SFS cell union.

    ``U E = P B(0,1)`` is symmetric in each coordinate, so it meets ``I_j`` iff it
    meets the box nearest the origin, and the minimum of the quadratic form over
    that box is separable.
    """
    p = E.axes
    n = len(p)
    lim = [int(math.floor(2 * (pi + delta))) + 1 for pi in p]
    out = []

    def rec(i, acc, prefix):
        if acc > 1 + tol:
            return
        if i == n:
            out.append(tuple(prefix))
            return
        for j in range(lim[i] + 1):
            m = 0.0 if j == 0 else max(0.0, j / 2 - delta)
            v = acc + (m / p[i]) ** 2
            if v > 1 + tol:
                break
            rec(i + 1, v, prefix + [j])

    rec(0, 0.0, [])
    return sorted(out)


def _cell_corners(jvec, delta) -> np.ndarray:
    """Corners of all boxes of the closed cell union ``I_j``."""
    pts = []
    per_axis = [support_fj(j, delta) for j in jvec]
    for combo in itertools.product(*per_axis):
        pts.extend(itertools.product(*combo))
    return np.array(pts, dtype=float)


def sandwich_slack(E: Ellipsoid, B, J, delta: float) -> float:
    """``1 - max`` of the ``B(E)`` quadratic form over all support corners.

    Positive iff every ``U^T(I_j)``, ``j in J``, lies inside ``B(E)``: the form
    is convex, so its maximum over a box is attained at a corner.
    """
    if not J:
        return 1.0
    B = _as_float(B)
    Bi = np.linalg.inv(B)
    QB = Bi.T @ E.quad_form() @ Bi
    U = E.U.to_numpy()
    corners = np.concatenate([_cell_corners(j, delta) for j in J]) @ U  # rows are U^T c
    return float(1 - np.einsum("mi,ij,mj->m", corners, QB, corners).max())


def _minimal_scale(E0: Ellipsoid, B, delta: float, margin: float, c_max: float,
                   steps: int = 240) -> tuple[Fraction, list] | None:
    best = None
    for c in np.geomspace(c_max, c_max * 1e-3, steps):
        cf = Fraction(float(c)).limit_denominator(1000)
        if cf <= 0:
            continue
        E = E0.scaled(cf)
        J = index_set(E, delta)
        if sandwich_slack(E, B, J, delta) >= margin:
            if best is None or len(J) < len(best[1]) or (len(J) == len(best[1]) and cf < best[0]):
                best = (cf, J)
    return best


@dataclass
class EllipsoidChoice:
    E: Ellipsoid
    lam: float
    J: list
    r_frac: float


def choose_ellipsoid(A: RatMatrix, delta: float, *, scale: str = "minimal", margin: float = 1e-9,
                     r_fracs: Sequence[float] = (0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99)) -> EllipsoidChoice:
    """Expanding ellipsoid, scaled either by the ``sqrt(n)`` rule or to the
    smallest index set that still passes the exact sandwich test."""
    B = A.T.to_numpy()
    if scale == "sqn":
        E, lam = expanding_ellipsoid(B, margin, scale="sqn")
        J = index_set(E, delta)
        return EllipsoidChoice(E, lam, J, 0.9)
    if scale != "minimal":
        raise ValueError(f"unknown scale mode {scale!r}")
    best = None
    for rf in r_fracs:
        try:
            E0, lam = expanding_ellipsoid(B, margin, r_frac=rf, scale="none")
        except MraError:
            continue
        c_max = math.sqrt(len(B)) / (lam - 1) / E0.axes.min() * 1.01
        found = _minimal_scale(E0, B, delta, margin, c_max)
        if found is None:
            continue
        c, J = found
        if best is None or len(J) < len(best.J):
            best = EllipsoidChoice(E0.scaled(c), lam, J, rf)
    if best is None:
        raise MraError("no ellipsoid scale passed the sandwich test")
    return best


def build_mra_ellipsoid(A: RatMatrix, delta: float = 0.05, *, scale: str = "minimal",
                        margin: float = 1e-9, choice: EllipsoidChoice | None = None) -> MraSpec:
    """``(A, U^{-1} Z^n)``-MRA with scaling vector ``{D_U w_j : j in J}``."""
    if not is_expansive(A):
        raise MraError("dilation is not expansive")
    if choice is None:
        choice = choose_ellipsoid(A, delta, scale=scale, margin=margin)
    E, J = choice.E, choice.J
    B = A.T.to_numpy()
    slack = sandwich_slack(E, B, J, delta)
    if slack < margin:
        raise MraError(f"sandwich test failed (slack {slack:.3e})")
    profile = make_profile(delta)
    U = E.U
    lattice = Lattice(U.T)  # U^{-1} Z^n
    gens = [Generator(SfsAtom(j, profile), U) for j in J]
    meta = {"delta": delta, "J": [list(j) for j in J], "lambda": choice.lam,
            "ellipsoid": E.to_json(), "sandwich_slack": slack,
            "certificate": expansion_certificate(E, B, choice.lam), "scale": scale}
    return MraSpec(A, ScalingVector(lattice, gens), "ellipsoid", meta)


def rescale_mra(spec: MraSpec, P: RatMatrix) -> MraSpec:
    """Conjugate by ``D_P``: dilation ``P^{-1} A P``, lattice ``P^{-1} Gamma``."""
    Pinv = P.inv()
    lattice = Lattice(Pinv @ spec.lattice.basis)
    gens = [g.dilate(P) for g in spec.scaling.generators]
    meta = dict(spec.meta, rescaled_by=P.to_json())
    return MraSpec(Pinv @ spec.A @ P, ScalingVector(lattice, gens), "rescaled", meta)


def refine_to_lattice(spec: MraSpec, target: Lattice) -> MraSpec:
    """Same core space seen as ``target``-shift invariant: ``N' = r N``."""
    if not spec.lattice.contains_lattice(target):
        raise MraError("not a sublattice")
    D = transversal(target, spec.lattice)
    if len(D) == 1 and target == spec.lattice:
        return MraSpec(spec.A, ScalingVector(target, list(spec.scaling.generators)),
                       spec.provenance, dict(spec.meta))
    gens = [g.translate(d) for d in D.cosets for g in spec.scaling.generators]
    meta = dict(spec.meta, refined_index=len(D))
    return MraSpec(spec.A, ScalingVector(target, gens), spec.provenance, meta)


# ---------------------------------------------------------------------------
# strictly expansive path


def tile_defect(K: BoxUnion, gamma_dual: Lattice, samples: int = 2000, seed: int = 0,
                inset: float = 1e-9) -> float:
    """Max of ``|sum_k 1_K(xi + k) - 1|`` over interior sample points."""
    rng = np.random.default_rng(seed)
    G = gamma_dual.basis.to_numpy()
    n = G.shape[0]
    pts = rng.random((samples, n)) @ G.T
    lo, hi = K.bounding_box()
    ks = fiber_offsets(G, pts.min(axis=0), pts.max(axis=0), lo, hi)
    count = np.zeros(samples)
    on_edge = np.zeros(samples, dtype=bool)
    for k in ks:
        y = pts + k
        count += K.contains(y)
        on_edge |= K.contains(y) & ~K.contains(y, inset)
    valid = ~on_edge
    return float(np.abs(count[valid] - 1).max()) if valid.any() else 0.0


def _box_inclusion_slack(K: BoxUnion, B: np.ndarray, eps: float) -> float:
    """Positive iff the ``eps``-neighbourhood of the box ``K`` lies in ``B(K^{-eps})``.

    Neighbourhoods are taken in the sup norm, matching the tensor mollifier.
    """
    (lo, hi), = K.boxes
    lo, hi = np.asarray(lo), np.asarray(hi)
    corners = np.array(list(itertools.product(*zip(lo - eps, hi + eps))))
    pre = corners @ np.linalg.inv(B).T
    return float(np.min(np.minimum(pre - (lo + eps), (hi - eps) - pre)))


def inclusion_slack(K: BoxUnion, B, eps: float, samples: int = 4000, seed: int = 0) -> float:
    B = _as_float(B)
    if len(K.boxes) == 1:
        return _box_inclusion_slack(K, B, eps)
    rng = np.random.default_rng(seed)
    worst = np.inf
    n = K.dim
    cube = np.array(list(itertools.product(*[(-eps, eps)] * n)))
    for lo, hi in K.boxes:
        lo, hi = np.asarray(lo) - eps, np.asarray(hi) + eps
        pts = lo + rng.random((samples, n)) * (hi - lo)
        pts = np.concatenate([pts, np.array(list(itertools.product(*zip(lo, hi))))])
        pre = pts @ np.linalg.inv(B).T
        ok = np.ones(len(pre), dtype=bool)
        for c in cube:
            ok &= K.contains(pre + c)
        worst = min(worst, 1.0 if ok.all() else -1.0)
    return worst


def strictly_expansive_scaling(A: RatMatrix, gamma: Lattice, K: BoxUnion, eps: float,
                               check: bool = True) -> MraSpec:
    """Multiplicity-one MRA from a smoothed ``Gamma*``-tile ``K`` with ``K`` inside ``B K``."""
    gd = dual(gamma)
    B = A.T.to_numpy()
    if check:
        d = tile_defect(K, gd)
        if d > 1e-12:
            raise StrictExpansiveError(f"K does not tile under the dual lattice (defect {d:g})")
        s = inclusion_slack(K, B, eps)
        if s <= 0:
            raise StrictExpansiveError(
                f"inclusion K^+eps in B(K^-eps) fails for eps={eps} (slack {s:.3g})")
    f = mollify_indicator(K, eps)
    atom = TileAtom(f, gd)
    n = A.shape[0]
    gen = Generator(atom, RatMatrix.identity(n), gamma.volume)
    meta = {"K": K.to_json(), "eps": eps}
    return MraSpec(A, ScalingVector(gamma, [gen]), "strict", meta)


def integer_lowpass_se9(A: RatMatrix, f: Callable, supp_lo, supp_hi) -> Callable:
    """Smooth ``Z^n``-periodic low-pass filter built with the smooth square-root gate.

    ``f`` is a smoothed partition of unity over ``Z^n`` supported in the box
    ``[supp_lo, supp_hi]``.
    """
    if not A.is_integer():
        raise MraError("integer dilation required")
    B = A.T.to_numpy()
    n = B.shape[0]
    Binv = np.linalg.inv(B)
    slo, shi = np.asarray(supp_lo, float), np.asarray(supp_hi, float)
    eye = np.eye(n)
    # xi reduced to [0,1)^n; numerator needs B(xi + k) in the support
    corners = np.array(list(itertools.product(*zip(slo, shi)))) @ Binv.T
    k_num = lattice_points_in_box(eye, corners.min(axis=0) - 1, corners.max(axis=0))
    # denominator needs B xi + k in the support, B xi in B [0,1)^n
    bcorners = np.array(list(itertools.product(*[(0.0, 1.0)] * n))) @ B.T
    k_den = lattice_points_in_box(eye, slo - bcorners.max(axis=0), shi - bcorners.min(axis=0))

    def m(xi):
        xi = np.asarray(xi, dtype=float)
        pts = xi.reshape(-1, 1) if n == 1 else np.atleast_2d(xi)
        red = pts - np.floor(pts)
        num = np.zeros(red.shape[0])
        for k in k_num:
            num += smooth_gate(f((red + k) @ B.T))
        den = np.zeros(red.shape[0])
        Bx = red @ B.T
        for k in k_den:
            den += smooth_gate(f(Bx + k))
        if np.any(den <= 0):
            raise MraError("vanishing denominator in low-pass construction")
        out = np.sqrt(num / den)
        return out.reshape(xi.shape) if n == 1 else out

    return m
