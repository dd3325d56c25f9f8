"""L1 and (inf,1) norms of matrices and of the kernels built from them.

For a matrix, ``||M||_{inf,1} = max ||M v||_1`` over ``||v||_inf <= 1``.  The
map ``v -> ||M v||_1`` is convex, so the maximum sits on a vertex of the
cube and exhaustive enumeration of sign vectors is exact.  Above the
enumeration cap only certified bounds are returned.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .kernels import INDICATOR, Bump, MatrixKernel, PiecewiseConstantKernel, SymMatrix, TrapezoidKernel
from .piecewise import as_fraction, format_fraction

N_ENUM_CAP = 24
LOCAL_SEARCH_RESTARTS = 32
_LOW_BITS = 12
_INT64_LIMIT = 2 ** 62

Number = Union[Fraction, float]


class DimensionTooLargeError(ValueError):
    """Exhaustive enumeration refused; use :func:`matrix_opnorm_inf1_bounds`."""


@dataclass
class NormReport:
    """L1 norm together with whatever is known about the (inf,1) norm."""

    l1: Optional[Number]
    exact: Optional[Fraction] = None
    upper: Optional[Number] = None
    lower: Optional[Fraction] = None
    witness: Optional[tuple[int, ...]] = None
    notes: dict = field(default_factory=dict)

    @property
    def flavor(self) -> str:
        if self.exact is not None:
            return "exact"
        if self.upper is not None and self.lower is not None:
            return "bounds"
        return "upper_bound" if self.upper is not None else "lower_bound"

    @property
    def op_inf1(self) -> Optional[Number]:
        """Headline value: exact if known, else the certified upper bound."""
        for value in (self.exact, self.upper, self.lower):
            if value is not None:
                return value
        return None

    def is_consistent(self) -> bool:
        known = [v for v in (self.lower, self.exact, self.upper) if v is not None]
        return all(a <= b for a, b in zip(known, known[1:]))

    def to_dict(self) -> dict:
        return {
            "schema": "1",
            "l1": _number_json(self.l1),
            "op_inf1": _number_json(self.op_inf1),
            "flavor": self.flavor,
            "bounds": {"lower": _number_json(self.lower), "exact": _number_json(self.exact),
                       "upper": _number_json(self.upper)},
            "witness": list(self.witness) if self.witness is not None else None,
        }


def _number_json(x):
    if x is None:
        return None
    if isinstance(x, Fraction):
        return {"exact": format_fraction(x), "float": float(x)}
    return {"float": float(x)}


def _working_array(M: SymMatrix) -> np.ndarray:
    """Integer numerators, as int64 when sums of absolute values cannot overflow."""
    num = M.numerators
    total = sum(abs(int(v)) for v in num.flat)
    if total < _INT64_LIMIT:
        return num.astype(np.int64)
    return num.astype(object)


def matrix_l1(M: SymMatrix) -> Fraction:
    return M.l1()


def _sign_table(k: int, dtype) -> np.ndarray:
    bits = (np.arange(2 ** k)[:, None] >> np.arange(k)) & 1
    return (1 - 2 * bits).astype(dtype)


def _enumerate_range(A: np.ndarray, P: np.ndarray, high_cols: np.ndarray, start: int, stop: int):
    """Best ``(value, low_row, gray_code)`` over Gray codes ``start..stop-1``."""
    signs = 1 - 2 * ((start ^ (start >> 1)) >> np.arange(len(high_cols)) & 1)
    signs = signs.astype(A.dtype)
    c = A[:, high_cols] @ signs if len(high_cols) else np.zeros(A.shape[0], dtype=A.dtype)
    best = (-1, 0, 0)
    for g in range(start, stop):
        if g != start:
            bit = (g & -g).bit_length() - 1
            c = c - 2 * signs[bit] * A[:, high_cols[bit]]
            signs[bit] = -signs[bit]
        totals = np.abs(P + c).sum(axis=1)
        j = int(np.argmax(totals))
        if totals[j] > best[0]:
            best = (int(totals[j]), j, g ^ (g >> 1))
    return best


def matrix_opnorm_inf1_exact(M: SymMatrix, cap: int = N_ENUM_CAP, workers: int = 1) -> tuple[Fraction, tuple[int, ...]]:
    """Exact ``||M||_{inf,1}`` and an attaining sign vector.

    Enumerates sign vectors with the first coordinate fixed to +1 (``v`` and
    ``-v`` give the same value).  The low coordinates are tabulated once and
    the high ones are walked in Gray-code order, so each step is one column
    update plus a vectorised reduction.
    """
    n = M.n
    if n > cap:
        raise DimensionTooLargeError(
            f"n = {n} exceeds the enumeration cap {cap}; use matrix_opnorm_inf1_bounds")
    if n == 0:
        return Fraction(0), ()
    A = _working_array(M)
    free = n - 1
    k = min(free, _LOW_BITS)
    low = _sign_table(k, A.dtype)
    P = A[:, 0][None, :] + (low @ A[:, 1:k + 1].T if k else 0)
    high_cols = np.arange(k + 1, n)
    total = 2 ** len(high_cols)
    chunks = max(1, min(workers, total))
    bounds = [total * i // chunks for i in range(chunks + 1)]
    if chunks == 1:
        results = [_enumerate_range(A, P, high_cols, 0, total)]
    else:
        with ThreadPoolExecutor(max_workers=chunks) as pool:
            results = list(pool.map(lambda i: _enumerate_range(A, P, high_cols, bounds[i], bounds[i + 1]),
                                    range(chunks)))
    # ties broken towards the earliest chunk so the witness is schedule independent
    value, j, gray = max(results, key=lambda r: r[0])
    witness = [1] + [int(s) for s in low[j]] + [1 - 2 * ((gray >> b) & 1) for b in range(len(high_cols))]
    return Fraction(value, M.denominator), tuple(witness)


def opnorm_value(M: SymMatrix, v) -> Fraction:
    """``||M v||_1`` exactly, for a rational vector ``v``."""
    v = [as_fraction(x) for x in v]
    return sum((abs(sum((M.entry(i, j) * v[j] for j in range(M.n)), Fraction(0))) for i in range(M.n)),
               Fraction(0))


def local_search_lower_bound(M: SymMatrix, restarts: int = LOCAL_SEARCH_RESTARTS, seed: int = 0,
                             budget: Optional[int] = None) -> tuple[Fraction, tuple[int, ...]]:
    """Steepest single-flip ascent from all-ones plus ``restarts - 1`` random starts."""
    n = M.n
    if n == 0:
        return Fraction(0), ()
    A = _working_array(M)
    budget = budget if budget is not None else 10 * n
    best_value, best_v = -1, None
    for restart in range(max(1, restarts)):
        if restart == 0:
            v = np.ones(n, dtype=A.dtype)
        else:
            rng = np.random.default_rng([seed, restart])
            v = rng.choice(np.array([-1, 1]), size=n).astype(A.dtype)
        r = A @ v
        current = int(np.abs(r).sum())
        for _ in range(budget):
            cand = np.abs(r[:, None] - 2 * A * v[None, :]).sum(axis=0)
            j = int(np.argmax(cand))
            if cand[j] <= current:
                break
            r = r - 2 * v[j] * A[:, j]
            v[j] = -v[j]
            current = int(cand[j])
        if current > best_value:
            best_value, best_v = current, tuple(int(s) for s in v)
    return Fraction(best_value, M.denominator), best_v


def spectral_radius(M: SymMatrix) -> float:
    if M.n == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(M.to_float()))))


def matrix_opnorm_inf1_bounds(M: SymMatrix, restarts: int = LOCAL_SEARCH_RESTARTS, seed: int = 0) -> NormReport:
    """Certified bracket for ``||M||_{inf,1}`` at any size.

    Upper: ``min(||M||_1, n * sigma_max)`` because
    ``||Mv||_1 <= sqrt(n) ||Mv||_2 <= sqrt(n) sigma_max sqrt(n)``.
    The float spectral term is inflated by a relative 1e-9 to absorb
    eigensolver rounding.  Lower: local search, with its witness.
    """
    l1 = matrix_l1(M)
    spectral = M.n * spectral_radius(M) * (1 + 1e-9)
    upper: Number = l1 if l1 <= spectral else Fraction(spectral)
    lower, witness = local_search_lower_bound(M, restarts=restarts, seed=seed)
    return NormReport(l1=l1, upper=upper, lower=lower, witness=witness)


def matrix_norm_report(M: SymMatrix, cap: int = N_ENUM_CAP, workers: int = 1, seed: int = 0) -> NormReport:
    """Exact report when ``n <= cap``, bounds otherwise."""
    if M.n <= cap:
        value, witness = matrix_opnorm_inf1_exact(M, cap=cap, workers=workers)
        return NormReport(l1=matrix_l1(M), exact=value, witness=witness)
    return matrix_opnorm_inf1_bounds(M, seed=seed)


# kernel norms

def bump_integral(bump: Bump) -> Fraction:
    return bump.as_piecewise().integral()


def bump_l1_distance(epsilon) -> Fraction:
    """Exact ``||g - g_eps||_1``."""
    return (INDICATOR.as_piecewise() - Bump(as_fraction(epsilon)).as_piecewise()).abs_integral()


def _kernel_l1(K: MatrixKernel) -> Fraction:
    # term supports are disjoint and bumps are non-negative
    return matrix_l1(K.matrix) * bump_integral(K.bump) ** 2


def kernel_l1_pwc(K: PiecewiseConstantKernel) -> Fraction:
    return _kernel_l1(K)


def kernel_l1_trap(K: TrapezoidKernel) -> Fraction:
    return _kernel_l1(K)


def product_bump_distance(epsilon) -> Fraction:
    """Exact ``integral |g(x)g(y) - g_eps(x)g_eps(y)| dx dy`` over the plane.

    On each rectangle of the common breakpoint grid the integrand is a
    bilinear polynomial of constant sign, so the integral of its absolute
    value is the absolute value of a product of one-dimensional integrals.
    """
    eps = as_fraction(epsilon)
    g, ge = INDICATOR.as_piecewise(), Bump(eps).as_piecewise()
    cuts = sorted(set(g.breakpoints()) | set(ge.breakpoints()))
    cells = []
    for a, b in zip(cuts, cuts[1:]):
        level = INDICATOR((a + b) / 2)
        cells.append((level, (ge(a), ge(b)), g.integral(a, b), ge.integral(a, b)))
    total = Fraction(0)
    for lx, ex, gx, fx in cells:
        for ly, ey, gy, fy in cells:
            corners = [lx * ly - p * q for p in ex for q in ey]
            if min(corners) < 0 < max(corners):
                raise AssertionError("integrand changes sign inside a grid rectangle")
            total += abs(gx * gy - fx * fy)
    return total


def kernel_l1_distance_pwc_trap(M: SymMatrix, epsilon) -> Fraction:
    """Exact ``||Mbar - Mbar_eps||_1``; terms live on disjoint shifted squares."""
    return matrix_l1(M) * product_bump_distance(epsilon)


def kernel_opnorm_pwc(K: PiecewiseConstantKernel, cap: int = N_ENUM_CAP, workers: int = 1) -> Fraction:
    return matrix_opnorm_inf1_exact(K.matrix, cap=cap, workers=workers)[0]


def kernel_opnorm_trap_bracket(K: TrapezoidKernel, cap: int = N_ENUM_CAP, workers: int = 1) -> NormReport:
    """Bracket ``||M||_{inf,1} -/+ 4 ||M||_1 eps`` for the trapezoid kernel, lower leg clamped at 0."""
    center, witness = matrix_opnorm_inf1_exact(K.matrix, cap=cap, workers=workers)
    radius = 4 * matrix_l1(K.matrix) * K.epsilon
    return NormReport(l1=kernel_l1_trap(K), upper=center + radius, lower=max(Fraction(0), center - radius),
                      notes={"matrix_opnorm": center, "matrix_witness": witness, "radius": radius})

