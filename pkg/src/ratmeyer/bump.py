"""Smooth bump calculus: ramps, the SFS profile, mollified box indicators.

All evaluators accept scalars or numpy arrays and are vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

FD_STEP = 1e-5


def smooth_gate(t):
    """``h(t) = exp(-1/t)`` for ``t > 0`` and 0 otherwise."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out if out.ndim else float(out)


def smooth_step(t):
    """C-infinity step ``s(t) = h(t) / (h(t) + h(1 - t))``.

    Evaluated as a logistic function of ``1/(1-t) - 1/t`` so that neither
    exponential underflows near the ends of ``(0, 1)``.
    """
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1, 1.0, 0.0)
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    with np.errstate(over="ignore"):  # subnormal t: expit saturates correctly
        out[mid] = expit(1.0 / (1.0 - tm) - 1.0 / tm)
    return out if out.ndim else float(out)


def _smooth_step_d1(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    mid = (t > 0) & (t < 1)
    tm = t[mid]
    s = expit(1.0 / (1.0 - tm) - 1.0 / tm)
    out[mid] = s * (1 - s) * (1.0 / (1.0 - tm) ** 2 + 1.0 / tm ** 2)
    return out


@dataclass(frozen=True)
class Ramp:
    """Meyer-type ramp ``nu(t) = sin(pi/2 * s(t))``.

    ``nu = 0`` on ``t <= 0``, ``nu = 1`` on ``t >= 1`` and
    ``nu(t)**2 + nu(1 - t)**2 = 1``.
    """

    def __call__(self, t):
        return np.sin(0.5 * np.pi * smooth_step(t))

    def derivative(self, t, order: int = 1):
        """Derivative of the ramp; analytic for order 1, central differences above."""
        if order == 0:
            return self(t)
        if order == 1:
            t = np.asarray(t, dtype=float)
            s = smooth_step(t)
            return np.cos(0.5 * np.pi * s) * 0.5 * np.pi * _smooth_step_d1(t)
        h = FD_STEP
        return (self.derivative(np.asarray(t) + h, order - 1)
                - self.derivative(np.asarray(t) - h, order - 1)) / (2 * h)


def make_ramp() -> Ramp:
    return Ramp()


@dataclass(frozen=True)
class BumpProfile:
    """Real even profile: plateau 1 on ``[-1/4+delta, 1/4-delta]`` and ramp edges.

    ``phase`` optionally multiplies the profile by ``exp(i*phase(xi))``; it is
    only used to exercise the conjugation branches of the SFS generators.
    """

    delta: float
    ramp: Ramp = field(default_factory=Ramp)
    phase: Callable | None = None

    def __post_init__(self):
        if not (0 < self.delta <= 0.25):
            raise ValueError(f"delta must lie in (0, 1/4], got {self.delta}")

    @property
    def support(self) -> float:
        return 0.25 + self.delta

    @property
    def is_real(self) -> bool:
        return self.phase is None

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        d = self.delta
        # symmetric in xi; the two ramp arguments agree with the piecewise form
        a = np.abs(xi)
        val = self.ramp((0.25 + d - a) / (2 * d))
        if self.phase is not None:
            return val * np.exp(1j * self.phase(xi))
        return val

    def to_json(self) -> dict:
        if self.phase is not None:
            raise ValueError("profiles with a phase are not serializable")
        return {"delta": self.delta}


def make_profile(delta: float) -> BumpProfile:
    return BumpProfile(float(delta))


def smooth_sqrt_combine(fs: Sequence[Callable]) -> Callable:
    """``xi -> sqrt(sum_i h(f_i(xi)))``; smooth whenever every ``f_i`` is."""
    fs = list(fs)

    def combined(xi):
        total = sum(smooth_gate(f(xi)) for f in fs)
        return np.sqrt(total)

    return combined


# ---------------------------------------------------------------------------
# mollified indicators of box unions


def mollifier_cdf(t, eps: float):
    """Cumulative distribution of the 1-D mollifier supported on ``[-eps, eps]``.

    The density is the derivative of ``s((t + eps) / (2 eps))``; it is
    C-infinity, positive on ``(-eps, eps)`` and has unit mass, so the CDF is
    exact and no quadrature table is needed.
    """
    return smooth_step((np.asarray(t, dtype=float) + eps) / (2 * eps))


def mollifier_density(t, eps: float):
    return _smooth_step_d1((np.asarray(t, dtype=float) + eps) / (2 * eps)) / (2 * eps)


@dataclass(frozen=True)
class BoxUnion:
    """Finite union of closed axis-aligned boxes with pairwise disjoint interiors."""

    boxes: tuple  # tuple of (lo, hi) tuples of floats

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "BoxUnion":
        return cls(((tuple(map(float, lo)), tuple(map(float, hi))),))

    @classmethod
    def interval(cls, a: float, b: float) -> "BoxUnion":
        return cls.box([a], [b])

    @property
    def dim(self) -> int:
        return len(self.boxes[0][0])

    def contains(self, x, inset: float = 0.0) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hit = np.zeros(x.shape[0], dtype=bool)
        for lo, hi in self.boxes:
            lo, hi = np.asarray(lo), np.asarray(hi)
            hit |= np.all((x >= lo + inset) & (x <= hi - inset), axis=1)
        return hit

    def indicator(self, x) -> np.ndarray:
        return self.contains(x).astype(float)

    def bounding_box(self, pad: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        lo = np.min([b[0] for b in self.boxes], axis=0) - pad
        hi = np.max([b[1] for b in self.boxes], axis=0) + pad
        return lo, hi

    def volume(self) -> float:
        return float(sum(np.prod(np.asarray(h) - np.asarray(l)) for l, h in self.boxes))

    def to_json(self):
        return [[list(lo), list(hi)] for lo, hi in self.boxes]

    @classmethod
    def from_json(cls, data) -> "BoxUnion":
        return cls(tuple((tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in data))


@dataclass(frozen=True)
class MollifiedIndicator:
    """``f = 1_K * g`` for a box union ``K`` and a tensor mollifier ``g``."""

    K: BoxUnion
    eps: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar_1d = x.ndim <= 1 and self.K.dim == 1
        pts = x.reshape(-1, 1) if self.K.dim == 1 else np.atleast_2d(x)
        out = np.zeros(pts.shape[0])
        for lo, hi in self.K.boxes:
            term = np.ones(pts.shape[0])
            for i in range(pts.shape[1]):
                term *= (mollifier_cdf(pts[:, i] - lo[i], self.eps)
                         - mollifier_cdf(pts[:, i] - hi[i], self.eps))
            out += term
        if scalar_1d:
            return out.reshape(x.shape) if x.ndim else float(out[0])
        return out

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.K.bounding_box(self.eps)


def mollify_indicator(K: BoxUnion, eps: float) -> MollifiedIndicator:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return MollifiedIndicator(K, float(eps))
