"""Mercer-property checks: PSD matrices and Gram samples, symmetry, continuity.

These are falsification tools.  Passing a Gram check at sampled points
does not prove positive semidefiniteness; the exact certificates (a
factor ``V`` with ``M = V V^T``) do.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .kernels import Kernel, SymMatrix, UnboundedSupportError

DEFAULT_TOL = 1e-8
DEFAULT_SEED = 0


@dataclass(frozen=True)
class PsdCheck:
    passed: bool
    min_eigenvalue: float
    method: str


def min_eigenvalue(A: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(A)[0])


def check_psd_matrix(M: SymMatrix, tol: float = DEFAULT_TOL) -> PsdCheck:
    """Pass iff the smallest eigenvalue is at least ``-tol``.

    A matrix carrying a factor was verified exactly against ``V V^T`` when it
    was built, so it passes regardless of the numerical eigenvalue.
    """
    lam = min_eigenvalue(M.to_float())
    if M.factor is not None:
        return PsdCheck(True, lam, "factor")
    return PsdCheck(lam >= -tol, lam, "eigenvalues")


@dataclass
class GramSample:
    points: np.ndarray
    gram: np.ndarray
    min_eigenvalue: float
    passed: bool

    def csv_rows(self) -> list[list[float]]:
        return self.gram.tolist()


def gram_matrix(K: Kernel, points: Sequence[float]) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    G = K.values(x[:, None], x[None, :])
    # evaluation is symmetric by construction; enforce bitwise symmetry anyway
    return np.triu(G) + np.triu(G, 1).T


def gram_check(K: Kernel, points: Sequence[float], tol: float = DEFAULT_TOL) -> GramSample:
    x = np.asarray(points, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one point")
    if len(np.unique(x)) != len(x):
        raise ValueError("points must be distinct")
    G = gram_matrix(K, x)
    lam = min_eigenvalue(G)
    return GramSample(x, G, lam, lam >= -tol)


def random_points(K: Kernel, count: int, seed: int = DEFAULT_SEED, lo=None, hi=None) -> np.ndarray:
    """``count`` distinct uniform points over the kernel's support window."""
    s_lo, s_hi = K.support()
    if s_hi is None and hi is None:
        raise UnboundedSupportError("give an explicit sampling window for a lazy kernel")
    lo = float(s_lo if lo is None else lo)
    hi = float(s_hi if hi is None else hi)
    rng = np.random.default_rng(seed)
    while True:
        x = rng.uniform(lo, hi, size=count)
        if len(np.unique(x)) == count:
            return x


@dataclass(frozen=True)
class ProbeReport:
    symmetry_defect: Fraction
    max_quotient: Fraction
    lipschitz_bound: Optional[float]
    continuous: bool

    @property
    def passed(self) -> bool:
        return self.symmetry_defect == 0 and self.continuous


def symmetry_continuity_probe(K: Kernel, samples: int = 1000, delta=Fraction(1, 10 ** 6),
                              seed: int = DEFAULT_SEED) -> ProbeReport:
    """Exact symmetry defect and largest difference quotient in ``x``.

    Random points are supplemented with points straddling every breakpoint,
    where a jump would show up as a quotient of order ``1/delta``.  The
    kernel counts as continuous when all quotients respect its Lipschitz
    bound; kernels without a bound are flagged as discontinuous.
    """
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    lo, hi = K.support()
    if hi is None:
        raise UnboundedSupportError("probe needs a kernel with bounded support")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(float(lo), float(hi), size=(samples, 2))
    pairs = [(Fraction(float(x)), Fraction(float(y))) for x, y in pts]
    cuts = K.breakpoints()
    mids = [(a + b) / 2 for a, b in zip(cuts, cuts[1:])]
    ys = mids[::max(1, len(mids) // 16)]
    for b in cuts:
        pairs.extend((b - delta / 2, y) for y in ys)
    defect = Fraction(0)
    quotient = Fraction(0)
    for x, y in pairs:
        kxy = K.value(x, y)
        defect = max(defect, abs(Fraction(kxy) - Fraction(K.value(y, x))))
        quotient = max(quotient, abs(Fraction(K.value(x + delta, y)) - Fraction(kxy)) / delta)
    bound = K.lipschitz_bound()
    continuous = bound is not None and quotient <= Fraction(bound) * (1 + Fraction(1, 10 ** 9))
    return ProbeReport(defect, quotient, bound, continuous)
