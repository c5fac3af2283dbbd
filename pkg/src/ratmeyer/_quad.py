"""Composite Gauss-Legendre rules split at breakpoints."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def panel_rule(breaks, max_width: float = 0.05, nodes: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[min(breaks), max(breaks)]``.

    Every interval between consecutive distinct breakpoints is cut into
    panels no wider than ``max_width``, each carrying an ``nodes``-point
    Gauss-Legendre rule.
    """
    b = np.unique(np.asarray(breaks, dtype=float))
    if b.size < 2:
        return np.zeros(0), np.zeros(0)
    gx, gw = _gl(nodes)
    xs, ws = [], []
    for a, c in zip(b[:-1], b[1:]):
        m = max(1, int(np.ceil((c - a) / max_width - 1e-12)))
        edges = np.linspace(a, c, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs.append((mid[:, None] + half[:, None] * gx[None, :]).ravel())
        ws.append((half[:, None] * gw[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def tensor_rule(rules: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Product rule from per-axis 1-D rules; returns points (m, n) and weights (m,)."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, w
