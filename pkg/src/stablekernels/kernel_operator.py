"""The kernel operator ``u -> integral K(., y) u(y) dy`` on bounded inputs.

For separable kernels ``sum_ik M[i, k] phi_i(x) phi_k(y)`` with piecewise-
constant ``u`` everything is exact: ``c_k = integral phi_k u`` is rational,
the output is ``sum_i (M c)_i phi_i``, a piecewise-linear function, and its
L1 norm is integrated piece by piece after isolating sign changes.  Other
kernels fall back to breakpoint-aligned Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .kernels import BlockDiagKernel, Kernel, SeparableBlock, UnboundedSupportError
from .norms import N_ENUM_CAP, NormReport, local_search_lower_bound, matrix_opnorm_inf1_exact
from .piecewise import PiecewiseLinear, Piece, as_fraction, disjoint_sum
from .quadrature import panel_rule

GRID_STEP = Fraction(1, 8)
GRID_ENUM_CAP = 20
Number = Union[Fraction, float]


class DomainMismatchError(ValueError):
    """The input is non-zero outside the window the reduction covers."""


@dataclass(frozen=True)
class BoundedInput:
    """Piecewise-constant ``u`` with ``|u| <= 1``.

    ``u = values[i]`` on ``[edges[i], edges[i+1])`` and zero outside
    ``[edges[0], edges[-1])``.
    """

    edges: tuple[Fraction, ...]
    values: tuple[Fraction, ...]

    def __post_init__(self):
        edges = tuple(as_fraction(e) for e in self.edges)
        values = tuple(as_fraction(v) for v in self.values)
        if len(edges) != len(values) + 1:
            raise ValueError("need exactly one more edge than values")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("edges must be strictly increasing")
        if edges and edges[0] < 0:
            raise ValueError("inputs live on the positive half-line")
        if any(abs(v) > 1 for v in values):
            raise ValueError("|u| must not exceed 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value, lo, hi) -> "BoundedInput":
        return cls((lo, hi), (value,))

    @classmethod
    def on_grid(cls, values: Sequence, step, start=0) -> "BoundedInput":
        step, start = as_fraction(step), as_fraction(start)
        return cls(tuple(start + i * step for i in range(len(values) + 1)), tuple(values))

    @property
    def domain_end(self) -> Fraction:
        return self.edges[-1]

    def __call__(self, x) -> Fraction:
        x = as_fraction(x)
        for a, b, v in zip(self.edges, self.edges[1:], self.values):
            if a <= x < b:
                return v
        return Fraction(0)

    def values_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        edges = np.array([float(e) for e in self.edges])
        vals = np.array([float(v) for v in self.values] + [0.0])
        idx = np.searchsorted(edges, x, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.values))
        return np.where(inside, vals[np.clip(idx, 0, len(self.values))], 0.0)

    def as_piecewise(self) -> PiecewiseLinear:
        return PiecewiseLinear(Piece(a, b, v, Fraction(0)) for a, b, v in zip(self.edges, self.edges[1:], self.values))

    def integral(self, lo, hi) -> Fraction:
        lo, hi = as_fraction(lo), as_fraction(hi)
        total = Fraction(0)
        for a, b, v in zip(self.edges, self.edges[1:], self.values):
            a, b = max(a, lo), min(b, hi)
            if b > a:
                total += v * (b - a)
        return total

    def weighted_integral(self, f: PiecewiseLinear) -> Fraction:
        """``integral f(y) u(y) dy`` exactly."""
        return sum((v * f.integral(a, b) for a, b, v in zip(self.edges, self.edges[1:], self.values) if v),
                   Fraction(0))

    def combine(self, a, other: "BoundedInput", b) -> "BoundedInput":
        """``a * self + b * other``; raises if the result leaves the unit ball."""
        a, b = as_fraction(a), as_fraction(b)
        cuts = sorted(set(self.edges) | set(other.edges))
        vals = [a * self((lo + hi) / 2) + b * other((lo + hi) / 2) for lo, hi in zip(cuts, cuts[1:])]
        return BoundedInput(tuple(cuts), tuple(vals))


@dataclass
class OperatorOutput:
    grid: np.ndarray
    values: np.ndarray
    l1_estimate: Number
    method: str
    function: Optional[PiecewiseLinear] = None
    warning: Optional[str] = None

    def csv_rows(self) -> list[tuple[float, float]]:
        return list(zip(self.grid.tolist(), self.values.tolist()))


def _input_components(K: Kernel, u: BoundedInput) -> Optional[list[SeparableBlock]]:
    if isinstance(K, BlockDiagKernel) and not K.bounded:
        # only blocks whose window meets the input's support contribute
        nonzero = [(a, b) for a, b, v in zip(u.edges, u.edges[1:], u.values) if v]
        if not nonzero:
            return []
        lo, hi = nonzero[0][0], nonzero[-1][1]
        first, last = K.locate(lo), K.locate(hi)
        h_first = first or 1
        h_last = last or _last_block_before(K, hi)
        if h_last > h_first and K.offset(h_last) >= hi:
            h_last -= 1  # the input stops where this block starts
        out = []
        for h in range(h_first, h_last + 1):
            t = K.offset(h)
            for comp in K.block(h).components():
                out.append(SeparableBlock(comp.matrix, comp.bump, tuple(s + t for s in comp.shifts)))
        return out
    return K.components()


def _last_block_before(K: BlockDiagKernel, x: Fraction) -> int:
    h = 1
    while K.offset(h + 1) <= x:
        h += 1
    return h


def _default_grid(K: Kernel, u: BoundedInput) -> np.ndarray:
    lo, hi = K.support()
    if hi is None:
        lo, hi = u.edges[0], u.domain_end
    start = max(Fraction(0), lo - 1)
    steps = math.ceil((hi + 1 - start) / GRID_STEP)
    return np.array([float(start + i * GRID_STEP) for i in range(steps + 1)])


def _exact_output(components: list[SeparableBlock], u: BoundedInput) -> PiecewiseLinear:
    parts = []
    for comp in components:
        basis = [comp.basis(i) for i in range(comp.matrix.n)]
        c = [u.weighted_integral(phi) for phi in basis]
        for i, phi in enumerate(basis):
            z = sum((comp.matrix.entry(i, k) * c[k] for k in range(comp.matrix.n) if c[k]), Fraction(0))
            if z:
                parts.append(phi.scaled(z))
    return disjoint_sum(parts)


def _quadrature_output(K: Kernel, u: BoundedInput, x: np.ndarray) -> np.ndarray:
    lo, hi = K.support()
    cuts = [float(b) for b in K.breakpoints()] + [float(e) for e in u.edges]
    cuts = [c for c in cuts if float(lo) <= c <= float(hi)] + [float(lo), float(hi)]
    y, w = panel_rule(cuts)
    weights = w * u.values_at(y)
    return K.values(np.asarray(x, dtype=float)[:, None], y[None, :]) @ weights


def apply_operator(K: Kernel, u: BoundedInput, grid: Optional[Sequence[float]] = None) -> OperatorOutput:
    """Output of the kernel operator on ``u``, sampled on ``grid``, with its L1 norm."""
    grid = _default_grid(K, u) if grid is None else np.asarray(grid, dtype=float)
    components = _input_components(K, u)
    if components is not None:
        f = _exact_output(components, u)
        values = np.array([float(f(Fraction(x))) for x in grid])
        return OperatorOutput(grid, values, f.abs_integral(), "exact_piecewise", function=f)
    lo, hi = K.support()
    xb = [float(b) for b in K.breakpoints()] + [float(lo), float(hi)]
    xq, wq = panel_rule(xb)
    l1 = float(np.dot(wq, np.abs(_quadrature_output(K, u, xq))))
    values = _quadrature_output(K, u, grid)
    return OperatorOutput(grid, values, l1, "quadrature",
                          warning="kernel has no separable structure; quadrature fallback used")


def reduce_input(u: BoundedInput, n: int) -> tuple[Fraction, ...]:
    """Cell averages ``integral_{2k+1}^{2k+2} u`` for ``k = 0..n-1``."""
    for a, b, v in zip(u.edges, u.edges[1:], u.values):
        if v and b > 2 * n:
            raise DomainMismatchError(f"input is non-zero beyond 2n = {2 * n}")
    return tuple(u.integral(2 * k + 1, 2 * k + 2) for k in range(n))


# adversarial search

@dataclass
class SearchResult:
    value: Number
    witness: BoundedInput
    history: list = field(default_factory=list)
    method: str = "exact_piecewise"


def _cells(K: Kernel, resolution: Fraction) -> tuple[Fraction, int]:
    lo, hi = K.support()
    if hi is None:
        raise UnboundedSupportError("adversarial search needs a kernel with a block cap")
    start = max(Fraction(0), math.floor(lo / resolution) * resolution)
    count = max(1, math.ceil((hi - start) / resolution))
    return start, count


def _separable_matrix(components: list[SeparableBlock], start: Fraction, step: Fraction, count: int):
    """Integer matrix ``A`` and denominator with ``||K u||_1 = ||A u||_1 / den`` for grid inputs."""
    weights = []
    for comp in components:
        n = comp.matrix.n
        W = [[Fraction(0)] * count for _ in range(n)]
        for i in range(n):
            phi = comp.basis(i)
            a, b = phi.support
            j0 = max(0, math.floor((a - start) / step))
            j1 = min(count, math.ceil((b - start) / step))
            for j in range(j0, j1):
                W[i][j] = phi.integral(start + j * step, start + (j + 1) * step)
        weights.append(W)
    den_w = math.lcm(1, *(v.denominator for W in weights for row in W for v in row))
    rows, dens = [], []
    for comp, W in zip(components, weights):
        Wi = np.array([[int(v * den_w) for v in row] for row in W], dtype=object)
        rows.append(comp.matrix.numerators.astype(object) @ Wi)
        dens.append(comp.matrix.denominator)
    den_m = math.lcm(1, *dens)
    A = np.vstack([r * (den_m // d) for r, d in zip(rows, dens)]) if rows else np.zeros((0, count), dtype=object)
    total = sum(abs(int(v)) for v in A.flat)
    if total < 2 ** 62:
        A = A.astype(np.int64)
    return A, den_m * den_w, weights


def _quadrature_matrix(K: Kernel, start: Fraction, step: Fraction, count: int) -> np.ndarray:
    lo, hi = K.support()
    cells = [float(start + j * step) for j in range(count + 1)]
    cuts = sorted(set(cells) | {float(b) for b in K.breakpoints()})
    xq, wq = panel_rule([float(b) for b in K.breakpoints()] + [float(lo), float(hi)])
    y, wy = panel_rule(cuts)
    cell_of = np.clip(np.searchsorted(np.array(cells), y, side="right") - 1, 0, count - 1)
    vals = K.values(xq[:, None], y[None, :]) * wy[None, :]
    A = np.zeros((len(xq), count))
    np.add.at(A.T, cell_of, vals.T)
    return A * wq[:, None]


def _ascent(A: np.ndarray, u: np.ndarray, budget: int) -> tuple[object, np.ndarray, list]:
    """Steepest single-flip ascent of ``||A u||_1`` over sign vectors."""
    r = A @ u
    current = np.abs(r).sum()
    history = [current]
    for _ in range(budget):
        cand = np.abs(r[:, None] - 2 * A * u[None, :]).sum(axis=0)
        j = int(np.argmax(cand))
        if not cand[j] > current:
            break
        r = r - 2 * u[j] * A[:, j]
        u[j] = -u[j]
        current = cand[j]
        history.append(current)
    return current, u, history


def _witness_start(components: list[SeparableBlock], weights, count: int, cap: int, seed: int) -> np.ndarray:
    """Grid signs copied from the best matrix sign vector of each block."""
    u = np.ones(count, dtype=np.int64)
    best = np.zeros(count, dtype=object)
    for comp, W in zip(components, weights):
        if comp.matrix.n <= cap:
            _, v = matrix_opnorm_inf1_exact(comp.matrix, cap=cap)
        else:
            _, v = local_search_lower_bound(comp.matrix, seed=seed)
        for i, row in enumerate(W):
            for j, w in enumerate(row):
                if w > best[j]:
                    best[j], u[j] = w, v[i]
    return u


def _enumerate(A: np.ndarray) -> tuple[object, np.ndarray]:
    """Exact max of ``||A u||_1`` over sign vectors, first sign fixed to +1."""
    k = A.shape[1]
    best, best_u = None, None
    total = 1 << (k - 1)
    bits = np.arange(k - 1)
    for lo in range(0, total, 1 << 14):
        idx = np.arange(lo, min(total, lo + (1 << 14)))
        S = np.ones((len(idx), k), dtype=np.int64)
        S[:, 1:] = 1 - 2 * ((idx[:, None] >> bits[None, :]) & 1)
        vals = np.abs(S.astype(A.dtype) @ A.T).sum(axis=1)
        j = int(np.argmax(vals))
        if best is None or vals[j] > best:
            best, best_u = vals[j], S[j].copy()
    return best, best_u


def _column_groups(A: np.ndarray) -> list[np.ndarray]:
    """Columns linked through shared nonzero rows; ``||A u||_1`` splits over groups."""
    count = A.shape[1]
    parent = list(range(count))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    nz = A != 0
    for row in nz:
        cols = np.flatnonzero(row)
        for c in cols[1:]:
            a, b = find(int(cols[0])), find(int(c))
            if a != b:
                parent[b] = a
    groups: dict[int, list[int]] = {}
    for c in range(count):
        if nz[:, c].any():
            groups.setdefault(find(c), []).append(c)
    return [np.array(g) for g in groups.values()]


def _search_group(A: np.ndarray, starts: list[np.ndarray], budget: int, workers: int):
    if A.shape[1] <= GRID_ENUM_CAP:
        value, u = _enumerate(A)
        return value, u, [value]

    def run(s):
        return _ascent(A, s.copy(), budget)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run, starts))
    else:
        runs = [run(s) for s in starts]
    best_value, best_u, history = None, None, []
    for value, u, trace in runs:
        for v in trace:
            if best_value is None or v > best_value:
                best_value, best_u = v, u
            history.append(best_value)
    return best_value, best_u, history


def adversarial_search(K: Kernel, resolution=GRID_STEP, budget: Optional[int] = None, restarts: int = 16,
                       seed: int = 0, workers: int = 1, cap: int = N_ENUM_CAP) -> SearchResult:
    """Lower bound on ``||K||_{inf,1}`` from the best sign input found on a grid.

    The grid cells split into groups that share no output; each group is
    solved exactly by enumeration when it has at most ``GRID_ENUM_CAP``
    cells.  Larger groups use steepest ascent from the block-wise matrix
    witness (separable kernels), all ones, then ``restarts`` random sign
    patterns seeded by ``(seed, restart)``.  The returned value is
    ``||K u||_1`` for the returned ``u``, so it never exceeds the true norm.
    """
    step = as_fraction(resolution)
    if step <= 0:
        raise ValueError("resolution must be positive")
    start, count = _cells(K, step)
    budget = budget if budget is not None else 10 * count
    components = K.components()
    if components is not None:
        A, den, weights = _separable_matrix(components, start, step, count)
        starts = [_witness_start(components, weights, count, cap, seed), np.ones(count, dtype=np.int64)]
        method = "exact_piecewise"
    else:
        A, den = _quadrature_matrix(K, start, step, count), 1
        starts = [np.ones(count, dtype=np.int64)]
        method = "quadrature"
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        starts.append(rng.choice(np.array([-1, 1]), size=count))
    starts = [s.astype(A.dtype) for s in starts]

    u = np.ones(count, dtype=np.int64)
    parts = []
    for cols in _column_groups(A):
        rows = np.flatnonzero((A[:, cols] != 0).any(axis=1))
        sub = A[np.ix_(rows, cols)]
        parts.append((cols, _search_group(sub, [s[cols] for s in starts], budget, workers)))
    # running total: groups not yet refined contribute their first trace value
    contrib = [trace[0] for _, (_, _, trace) in parts]
    history = [sum(contrib)] if parts else [A.dtype.type(0)]
    for g, (cols, (value, best_u, trace)) in enumerate(parts):
        u[cols] = np.asarray(best_u, dtype=np.int64)
        for v in trace[1:]:
            contrib[g] = v
            history.append(sum(contrib))
        contrib[g] = value
    best_value = sum(contrib) if parts else 0
    if A.dtype == float:
        value = float(best_value)
    else:
        value = Fraction(int(best_value), den)
    witness = BoundedInput.on_grid([int(s) for s in u], step, start)
    return SearchResult(value, witness, history, method)


# verdict

@dataclass(frozen=True)
class L1Evidence:
    """What is known about ``||K||_1``.

    ``kind`` is ``"finite"`` (certified value), ``"divergent"`` (certified
    lower-bound series without bound) or ``"lower_bound"`` (heuristic).
    """

    kind: str
    value: Optional[Number] = None
    detail: str = ""


@dataclass(frozen=True)
class Verdict:
    label: str
    reason: str
    op_upper: Optional[Number] = None
    l1: Optional[Number] = None

    def to_dict(self) -> dict:
        return {"schema": "1", "verdict": self.label, "reason": self.reason,
                "op_upper": None if self.op_upper is None else float(self.op_upper),
                "l1": None if self.l1 is None else float(self.l1)}


def stability_verdict(l1, op: NormReport) -> Verdict:
    """``stable_and_l1``, ``stable_not_l1`` or ``undetermined``.

    Stability needs a finite certified bound on the (inf,1) norm; a certified
    finite L1 norm provides one as well, since the (inf,1) norm never exceeds it.
    """
    if not isinstance(l1, L1Evidence):
        l1 = L1Evidence("finite", l1)
    upper = op.exact if op.exact is not None else op.upper
    certified_upper = upper is not None and math.isfinite(float(upper))
    if l1.kind == "finite" and l1.value is not None:
        bound = upper if certified_upper else l1.value
        return Verdict("stable_and_l1", "finite L1 norm bounds the (inf,1) norm", bound, l1.value)
    if not certified_upper:
        return Verdict("undetermined", "no certified upper bound on the (inf,1) norm", None, l1.value)
    if l1.kind == "divergent":
        return Verdict("stable_not_l1", "finite (inf,1) bound with a divergent L1 minorant: " + l1.detail,
                       upper, l1.value)
    return Verdict("undetermined", "L1 norm neither certified finite nor certified divergent", upper, l1.value)
