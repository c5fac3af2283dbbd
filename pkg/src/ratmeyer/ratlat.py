"""Exact rational matrices and lattice arithmetic.

Everything here works over :class:`fractions.Fraction` and Python integers,
so coset counts, sublattice tests and duals are exact.  Floats only enter
through :meth:`RatMatrix.to_numpy` and :func:`cayley_rationalize`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

import numpy as np

Rational = Fraction

TOL_EIG = 1e-9


class LatticeError(ValueError):
    pass


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        # floats are taken at face value; use limit_denominator upstream
        return Fraction(float(x))
    return Fraction(x)


class RatMatrix:
    """Immutable dense matrix with :class:`~fractions.Fraction` entries."""

    __slots__ = ("_rows", "shape")

    def __init__(self, rows: Iterable[Iterable]):
        data = tuple(tuple(as_fraction(x) for x in row) for row in rows)
        if not data or not data[0]:
            raise ValueError("empty matrix")
        ncols = len(data[0])
        if any(len(r) != ncols for r in data):
            raise ValueError("ragged rows")
        self._rows = data
        self.shape = (len(data), ncols)

    # construction helpers
    @classmethod
    def identity(cls, n: int) -> "RatMatrix":
        return cls([[1 if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def zeros(cls, r: int, c: int) -> "RatMatrix":
        return cls([[0] * c for _ in range(r)])

    @classmethod
    def diag(cls, entries: Sequence) -> "RatMatrix":
        n = len(entries)
        return cls([[entries[i] if i == j else 0 for j in range(n)] for i in range(n)])

    @classmethod
    def column(cls, entries: Sequence) -> "RatMatrix":
        return cls([[x] for x in entries])

    @classmethod
    def from_columns(cls, cols: Sequence[Sequence]) -> "RatMatrix":
        return cls(list(zip(*cols)))

    @classmethod
    def scalar(cls, x) -> "RatMatrix":
        return cls([[x]])

    # access
    @property
    def rows(self) -> tuple:
        return self._rows

    def __getitem__(self, ij):
        i, j = ij
        return self._rows[i][j]

    def col(self, j: int) -> tuple:
        return tuple(r[j] for r in self._rows)

    def columns(self) -> list[tuple]:
        return [self.col(j) for j in range(self.shape[1])]

    def __iter__(self):
        return iter(self._rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, RatMatrix) and self._rows == other._rows

    def __hash__(self) -> int:
        return hash(self._rows)

    def __repr__(self) -> str:
        body = "; ".join(" ".join(str(x) for x in r) for r in self._rows)
        return f"RatMatrix([{body}])"

    # arithmetic
    @property
    def T(self) -> "RatMatrix":
        return RatMatrix(zip(*self._rows))

    def __add__(self, other: "RatMatrix") -> "RatMatrix":
        self._check_same(other)
        return RatMatrix([[a + b for a, b in zip(r, s)] for r, s in zip(self._rows, other._rows)])

    def __sub__(self, other: "RatMatrix") -> "RatMatrix":
        self._check_same(other)
        return RatMatrix([[a - b for a, b in zip(r, s)] for r, s in zip(self._rows, other._rows)])

    def __neg__(self) -> "RatMatrix":
        return RatMatrix([[-a for a in r] for r in self._rows])

    def __mul__(self, c) -> "RatMatrix":
        c = as_fraction(c)
        return RatMatrix([[a * c for a in r] for r in self._rows])

    __rmul__ = __mul__

    def __matmul__(self, other: "RatMatrix") -> "RatMatrix":
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        cols = list(zip(*other._rows))
        return RatMatrix([[sum((a * b for a, b in zip(r, c)), Fraction(0)) for c in cols]
                          for r in self._rows])

    def apply(self, v: Sequence) -> tuple:
        """Matrix-vector product with an exact vector."""
        v = [as_fraction(x) for x in v]
        return tuple(sum((a * b for a, b in zip(r, v)), Fraction(0)) for r in self._rows)

    def _check_same(self, other):
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")

    def hstack(self, other: "RatMatrix") -> "RatMatrix":
        if self.shape[0] != other.shape[0]:
            raise ValueError("row count mismatch")
        return RatMatrix([r + s for r, s in zip(self._rows, other._rows)])

    def det(self) -> Fraction:
        n, m = self.shape
        if n != m:
            raise ValueError("det of non-square matrix")
        a = [list(r) for r in self._rows]
        det = Fraction(1)
        for c in range(n):
            piv = next((r for r in range(c, n) if a[r][c] != 0), None)
            if piv is None:
                return Fraction(0)
            if piv != c:
                a[c], a[piv] = a[piv], a[c]
                det = -det
            det *= a[c][c]
            inv = 1 / a[c][c]
            for r in range(c + 1, n):
                if a[r][c]:
                    f = a[r][c] * inv
                    a[r] = [x - f * y for x, y in zip(a[r], a[c])]
        return det

    def inv(self) -> "RatMatrix":
        n, m = self.shape
        if n != m:
            raise ValueError("inverse of non-square matrix")
        a = [list(r) + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(self._rows)]
        for c in range(n):
            piv = next((r for r in range(c, n) if a[r][c] != 0), None)
            if piv is None:
                raise ZeroDivisionError("singular matrix")
            a[c], a[piv] = a[piv], a[c]
            inv = 1 / a[c][c]
            a[c] = [x * inv for x in a[c]]
            for r in range(n):
                if r != c and a[r][c]:
                    f = a[r][c]
                    a[r] = [x - f * y for x, y in zip(a[r], a[c])]
        return RatMatrix([r[n:] for r in a])

    # predicates and conversions
    def is_integer(self) -> bool:
        return all(x.denominator == 1 for r in self._rows for x in r)

    def common_denominator(self) -> int:
        d = 1
        for r in self._rows:
            for x in r:
                d = d * x.denominator // math.gcd(d, x.denominator)
        return d

    def to_int_rows(self) -> list[list[int]]:
        if not self.is_integer():
            raise ValueError("matrix has non-integer entries")
        return [[x.numerator for x in r] for r in self._rows]

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self._rows], dtype=float)

    def to_json(self) -> list[list[str]]:
        return [[f"{x.numerator}/{x.denominator}" for x in r] for r in self._rows]

    @classmethod
    def from_json(cls, data) -> "RatMatrix":
        if isinstance(data, str):
            data = json.loads(data)
        if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
            raise ValueError("RatMatrix JSON must be a non-empty list of rows")
        return cls([[_parse_rational(x) for x in r] for r in data])


def _parse_rational(x) -> Fraction:
    if isinstance(x, bool):
        raise ValueError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise ValueError(f"expected 'num/den' string, got {x!r}")


def ratvec(v: Sequence) -> tuple:
    return tuple(as_fraction(x) for x in v)


# ---------------------------------------------------------------------------
# integer normal forms


def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    """Return (g, x, y) with a*x + b*y = g = gcd(a, b) >= 0.

    When ``a`` divides ``b`` the trivial combination ``(|a|, sign a, 0)`` is
    returned, so elimination steps never swap a pivot away.
    """
    if a and b % a == 0:
        return abs(a), (1 if a > 0 else -1), 0
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        qt, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - qt * x1
        y0, y1 = y1, y0 - qt * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


def hnf(M) -> tuple[list[list[int]], list[list[int]]]:
    """Column Hermite normal form of an integer matrix of full row rank.

    Returns ``(H, U)`` with ``U`` unimodular (m x m) and ``M @ U = [H | 0]``.
    ``H`` is n x n lower triangular with positive diagonal and the entries
    left of each pivot reduced into ``[0, pivot)``; its columns generate the
    same integer lattice as the columns of ``M``.
    """
    if isinstance(M, RatMatrix):
        M = M.to_int_rows()
    a = [list(map(int, r)) for r in M]
    n = len(a)
    m = len(a[0]) if n else 0
    U = [[int(i == j) for j in range(m)] for i in range(m)]

    def colop(i, j, p, q, r, s):
        # (col_i, col_j) <- (p*col_i + q*col_j, r*col_i + s*col_j)
        for mat in (a, U):
            for row in mat:
                x, y = row[i], row[j]
                row[i] = p * x + q * y
                row[j] = r * x + s * y

    for i in range(n):
        if i >= m:
            raise LatticeError("degenerate lattice")
        for j in range(i + 1, m):
            if a[i][j] == 0:
                continue
            x, y = a[i][i], a[i][j]
            g, s, t = _xgcd(x, y)
            # new col_i = s*ci + t*cj ; new col_j = -(y/g)*ci + (x/g)*cj
            colop(i, j, s, t, -(y // g), x // g)
        if a[i][i] == 0:
            raise LatticeError("degenerate lattice")
        if a[i][i] < 0:
            for mat in (a, U):
                for row in mat:
                    row[i] = -row[i]
        piv = a[i][i]
        for j in range(i):
            f = a[i][j] // piv
            if f:
                for mat in (a, U):
                    for row in mat:
                        row[j] -= f * row[i]
    H = [row[:n] for row in a]
    return H, U


def snf(C) -> tuple[list[int], list[list[int]], list[list[int]]]:
    """Smith normal form of a nonsingular square integer matrix.

    Returns ``(d, P, Q)`` with ``P``, ``Q`` unimodular and
    ``P @ C @ Q = diag(d)``, ``d[i] | d[i+1]``, all positive.
    """
    if isinstance(C, RatMatrix):
        C = C.to_int_rows()
    a = [list(map(int, r)) for r in C]
    n = len(a)
    P = [[int(i == j) for j in range(n)] for i in range(n)]
    Q = [[int(i == j) for j in range(n)] for i in range(n)]

    def rowop(i, j, p, q, r, s):
        for mat in (a, P):
            ri, rj = mat[i], mat[j]
            mat[i] = [p * x + q * y for x, y in zip(ri, rj)]
            mat[j] = [r * x + s * y for x, y in zip(ri, rj)]

    def colop(i, j, p, q, r, s):
        for mat in (a, Q):
            for row in mat:
                x, y = row[i], row[j]
                row[i] = p * x + q * y
                row[j] = r * x + s * y

    for t in range(n):
        while True:
            nz = [(abs(a[i][j]), i, j) for i in range(t, n) for j in range(t, n) if a[i][j]]
            if not nz:
                raise LatticeError("degenerate lattice")
            _, i0, j0 = min(nz)
            if i0 != t:
                rowop(t, i0, 0, 1, 1, 0)
            if j0 != t:
                colop(t, j0, 0, 1, 1, 0)
            done = True
            for i in range(t + 1, n):
                if a[i][t]:
                    x, y = a[t][t], a[i][t]
                    g, s, u = _xgcd(x, y)
                    rowop(t, i, s, u, -(y // g), x // g)
            for j in range(t + 1, n):
                if a[t][j]:
                    x, y = a[t][t], a[t][j]
                    g, s, u = _xgcd(x, y)
                    colop(t, j, s, u, -(y // g), x // g)
                    done = False
            if any(a[i][t] for i in range(t + 1, n)):
                continue
            if not done and any(a[t][j] for j in range(t + 1, n)):
                continue
            # divisibility condition on the remaining block
            piv = a[t][t]
            bad = next(((i, j) for i in range(t + 1, n) for j in range(t + 1, n)
                        if a[i][j] % piv), None)
            if bad is None:
                break
            rowop(t, bad[0], 1, 1, 0, 1)
        if a[t][t] < 0:
            for mat in (a, P):
                mat[t] = [-x for x in mat[t]]
    d = [a[i][i] for i in range(n)]
    return d, P, Q


# ---------------------------------------------------------------------------
# lattices


@dataclass(frozen=True)
class Lattice:
    """Full-rank lattice ``G Z^n`` with an exact rational basis ``G``."""

    basis: RatMatrix

    def __post_init__(self):
        r, c = self.basis.shape
        if r != c:
            raise LatticeError("lattice basis must be square")
        if self.basis.det() == 0:
            raise LatticeError("degenerate lattice")

    @classmethod
    def integer(cls, n: int) -> "Lattice":
        return cls(RatMatrix.identity(n))

    @classmethod
    def from_columns(cls, cols) -> "Lattice":
        return cls(RatMatrix.from_columns(cols))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def volume(self) -> Fraction:
        return abs(self.basis.det())

    def coords(self, x: Sequence) -> tuple:
        return self.basis.inv().apply(x)

    def contains(self, x: Sequence) -> bool:
        return all(c.denominator == 1 for c in self.coords(x))

    def contains_lattice(self, other: "Lattice") -> bool:
        return (self.basis.inv() @ other.basis).is_integer()

    def canonical(self) -> "Lattice":
        """Same lattice with its basis in (scaled) column Hermite normal form."""
        d = self.basis.common_denominator()
        H, _ = hnf((self.basis * d).to_int_rows())
        return Lattice(RatMatrix(H) * Fraction(1, d))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Lattice) or other.dim != self.dim:
            return False
        return self.contains_lattice(other) and other.contains_lattice(self)

    def __hash__(self) -> int:
        return hash(self.canonical().basis)

    def scaled(self, c) -> "Lattice":
        return Lattice(self.basis * as_fraction(c))

    def image(self, A: RatMatrix) -> "Lattice":
        return Lattice(A @ self.basis)

    def to_json(self):
        return self.basis.to_json()

    @classmethod
    def from_json(cls, data) -> "Lattice":
        return cls(RatMatrix.from_json(data))


@dataclass(frozen=True)
class Transversal:
    """Coset representatives of ``sup / sub``."""

    cosets: tuple
    sub: Lattice
    sup: Lattice

    def __len__(self) -> int:
        return len(self.cosets)

    def to_numpy(self) -> np.ndarray:
        return np.array([[float(x) for x in d] for d in self.cosets], dtype=float)


def lattice_sum(A: RatMatrix, L1: Lattice, L2: Lattice) -> Lattice:
    """The lattice ``A L1 + L2``."""
    if L1.dim != L2.dim or A.shape != (L1.dim, L1.dim):
        raise LatticeError("dimension mismatch")
    gens = (A @ L1.basis).hstack(L2.basis)
    d = gens.common_denominator()
    H, _ = hnf((gens * d).to_int_rows())
    return Lattice(RatMatrix(H) * Fraction(1, d))


def dual(L: Lattice) -> Lattice:
    """Dual lattice ``{k : <k, g> in Z for all g in L}`` with basis ``G^{-T}``."""
    return Lattice(L.basis.inv().T)


def _reduce_to_cell(v: tuple, sub: Lattice, sub_inv: RatMatrix) -> tuple:
    c = sub_inv.apply(v)
    fl = [math.floor(x) for x in c]
    return tuple(a - b for a, b in zip(v, sub.basis.apply(fl)))


def transversal(sub: Lattice, sup: Lattice) -> Transversal:
    """Representatives of ``sup / sub`` in the half-open cell of ``sub``.

    ``sub = sup C`` for an integer matrix ``C``; with ``P C Q = diag(d)`` the
    cosets are ``sup P^{-1} a`` for ``0 <= a_i < d_i``.
    """
    if sub.dim != sup.dim:
        raise LatticeError("dimension mismatch")
    C = sup.basis.inv() @ sub.basis
    if not C.is_integer():
        raise LatticeError("not a sublattice")
    d, P, _ = snf(C.to_int_rows())
    Pinv = RatMatrix(P).inv()
    gens = sup.basis @ Pinv
    sub_inv = sub.basis.inv()
    cosets = []
    for a in product(*(range(x) for x in d)):
        v = gens.apply(a)
        cosets.append(_reduce_to_cell(v, sub, sub_inv))
    cosets.sort()
    return Transversal(tuple(cosets), sub, sup)


def index(sub: Lattice, sup: Lattice) -> int:
    r = sub.volume / sup.volume
    if r.denominator != 1:
        raise LatticeError("not a sublattice")
    return int(r)


def is_expansive(A, tol: float = TOL_EIG) -> bool:
    a = A.to_numpy() if isinstance(A, RatMatrix) else np.asarray(A, dtype=float)
    return bool(np.all(np.abs(np.linalg.eigvals(a)) > 1 + tol))


@dataclass(frozen=True)
class GroupIndices:
    p: int
    q: int
    n_min: int
    gamma: Lattice


def group_indices(A: RatMatrix) -> GroupIndices:
    """Indices ``p = |Gamma / A Z^n|`` and ``q = |Gamma / Z^n|`` for
    ``Gamma = A Z^n + Z^n``, and the least multiplicity ``N`` with
    ``n <= 2 (p - q) N``."""
    n = A.shape[0]
    if not is_expansive(A):
        raise LatticeError("dilation is not expansive")
    Zn = Lattice.integer(n)
    gamma = lattice_sum(A, Zn, Zn)
    lam = Zn.image(A)
    p = len(transversal(lam, gamma))
    q = len(transversal(Zn, gamma))
    if p <= q:
        raise LatticeError("p <= q for an expansive dilation")
    n_min = -(-n // (2 * (p - q)))
    return GroupIndices(p, q, max(n_min, 1), gamma)


# ---------------------------------------------------------------------------
# Cayley rationalization


def _rationalize_skew(S: np.ndarray, max_den: int) -> RatMatrix:
    n = S.shape[0]
    rows = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            x = Fraction(float(S[i, j])).limit_denominator(max_den)
            rows[i][j] = x
            rows[j][i] = -x
    return RatMatrix(rows)


def cayley(S: RatMatrix) -> RatMatrix:
    """``(I + S)(I - S)^{-1}``; rational orthogonal for skew ``S``."""
    eye = RatMatrix.identity(S.shape[0])
    return (eye + S) @ (eye - S).inv()


def _random_rational_rotation(n: int, rng: np.random.Generator) -> RatMatrix:
    S = rng.normal(size=(n, n))
    S = S - S.T
    return cayley(_rationalize_skew(S, 16))


def cayley_rationalize(U, tol: float = 1e-6, *, margin: float = 1e-3, retries: int = 8,
                       seed: int = 0) -> RatMatrix:
    """Exactly orthogonal rational matrix within Frobenius distance ``tol`` of ``U``.

    Orthogonal matrices with eigenvalue -1 (including every reflection) are
    handled by factoring off an exact rational orthogonal matrix first.
    """
    U = np.asarray(U, dtype=float)
    n = U.shape[0]
    if U.shape != (n, n) or not np.allclose(U.T @ U, np.eye(n), atol=1e-10):
        raise ValueError("U is not orthogonal")
    eye = np.eye(n)
    left = RatMatrix.identity(n)
    work = U
    if np.linalg.det(U) < 0:
        # reflect the first coordinate; det(work) = +1 afterwards
        left = RatMatrix.diag([-1] + [1] * (n - 1))
        work = left.to_numpy() @ U
    rng = np.random.default_rng(seed)
    pre = RatMatrix.identity(n)
    for _ in range(retries + 1):
        target = pre.to_numpy().T @ work
        if abs(np.linalg.det(target + eye)) > margin:
            S = np.linalg.solve(target + eye, target - eye)
            S = 0.5 * (S - S.T)
            max_den = 16
            while max_den < 10 ** 15:
                Q = cayley(_rationalize_skew(S, max_den))
                if np.linalg.norm(Q.to_numpy() - target) <= tol:
                    return left @ pre @ Q
                max_den *= 16
        pre = _random_rational_rotation(n, rng)
    raise LatticeError("Cayley singular")


def is_orthogonal(Q: RatMatrix) -> bool:
    return Q.T @ Q == RatMatrix.identity(Q.shape[0])
