"""Composite Gauss-Legendre quadrature with breakpoint-aligned panels.

The integrands met here are piecewise polynomials of low degree, so once
every breakpoint is a panel boundary the rule is exact up to rounding.
This is the independent numerical route the exact integrators are checked
against.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

NODES_PER_UNIT = 16


@lru_cache(maxsize=None)
def _reference_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def panel_rule(breakpoints: Sequence[float], order: int = NODES_PER_UNIT) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[min(bp), max(bp)]``.

    Each interval between consecutive breakpoints is cut into panels of
    length at most one, and each panel gets an ``order``-point rule.
    """
    cuts = np.unique(np.asarray(breakpoints, dtype=float))
    ref_x, ref_w = _reference_rule(order)
    nodes, weights = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        pieces = max(1, math.ceil(b - a))
        edges = np.linspace(a, b, pieces + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = (hi - lo) / 2
            nodes.append(lo + half * (ref_x + 1))
            weights.append(half * ref_w)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def integrate_1d(f: Callable[[np.ndarray], np.ndarray], breakpoints: Sequence[float],
                 order: int = NODES_PER_UNIT) -> float:
    x, w = panel_rule(breakpoints, order)
    return float(np.dot(w, f(x)))


def integrate_2d(f: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 x_breakpoints: Sequence[float], y_breakpoints: Sequence[float],
                 order: int = NODES_PER_UNIT, chunk: int = 4096) -> float:
    """Tensor-product rule; ``f`` is called on broadcast grids, in row chunks."""
    x, wx = panel_rule(x_breakpoints, order)
    y, wy = panel_rule(y_breakpoints, order)
    total = 0.0
    for start in range(0, len(x), chunk):
        xs = x[start:start + chunk, None]
        vals = f(xs, y[None, :])
        total += float(wx[start:start + chunk] @ (vals @ wy))
    return total
