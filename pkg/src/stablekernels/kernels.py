"""Kernel objects on the positive quadrant and their pointwise evaluation.

A symmetric matrix ``M`` of size ``n`` is spread over the plane by putting
entry ``M[h, k]`` (0-based) on the unit cell ``[2h+1, 2h+2] x [2k+1, 2k+2]``.
With the indicator bump this gives a piecewise-constant kernel; with a
trapezoid bump of half-width ``epsilon`` it gives a continuous, piecewise
bilinear kernel.  Block-diagonal kernels place such kernels along the
diagonal at increasing offsets, optionally lazily and without an upper
bound on the number of blocks.

All exact evaluation uses :class:`fractions.Fraction`; the ``values``
methods are vectorised float versions for quadrature and Gram matrices.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .piecewise import PiecewiseLinear, as_fraction


class MissingFactorError(ValueError):
    """Raised when a factor function is requested for a matrix without ``V``."""


class UnboundedSupportError(ValueError):
    """Raised when an operation needs a finite kernel but got a lazy one."""


def _as_int_array(values) -> np.ndarray:
    arr = np.array(values, dtype=object)
    if arr.size == 0:
        return arr.astype(np.int64)
    biggest = max(abs(int(v)) for v in arr.flat)
    if biggest < 2 ** 31:
        return arr.astype(np.int64)
    return arr


class SymMatrix:
    """Symmetric matrix with exact rational entries.

    Stored as an integer numerator array over one common positive
    denominator.  An optional rational factor ``V`` (``n x m``) certifies
    positive semidefiniteness through ``M = V V^T``; it is checked exactly
    on construction.
    """

    def __init__(self, numerators, denominator: int = 1, factor=None):
        num = _as_int_array(numerators)
        if num.ndim != 2 or num.shape[0] != num.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {num.shape}")
        if denominator <= 0:
            raise ValueError("denominator must be positive")
        if not (num == num.T).all():
            raise ValueError("matrix is not symmetric")
        self._num = num
        self._den = int(denominator)
        self.factor: Optional[tuple[tuple[Fraction, ...], ...]] = None
        if factor is not None:
            self._set_factor(factor)

    # construction helpers

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], factor=None) -> "SymMatrix":
        fr = [[as_fraction(v) for v in row] for row in rows]
        den = math.lcm(1, *(v.denominator for row in fr for v in row))
        num = [[int(v * den) for v in row] for row in fr]
        return cls(num if num else np.zeros((0, 0), dtype=np.int64), den, factor=factor)

    @classmethod
    def from_factor(cls, factor: Sequence[Sequence]) -> "SymMatrix":
        V = [[as_fraction(v) for v in row] for row in factor]
        rows = [[sum((a * b for a, b in zip(V[i], V[j])), Fraction(0)) for j in range(len(V))]
                for i in range(len(V))]
        return cls.from_rows(rows, factor=V)

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls(np.eye(n, dtype=np.int64), 1, factor=np.eye(n, dtype=np.int64).tolist())

    @classmethod
    def random_psd(cls, n: int, rng: np.random.Generator, rank: Optional[int] = None,
                   max_entry: int = 3, denominator: int = 1) -> "SymMatrix":
        """``V V^T`` for a random integer ``V`` (scaled by ``1/denominator``), factor attached."""
        rank = n if rank is None else rank
        V = rng.integers(-max_entry, max_entry + 1, size=(n, rank))
        return cls.from_factor([[Fraction(int(v), denominator) for v in row] for row in V])

    @classmethod
    def zeros(cls, n: int) -> "SymMatrix":
        return cls(np.zeros((n, n), dtype=np.int64), 1)

    def _set_factor(self, factor) -> None:
        V = tuple(tuple(as_fraction(v) for v in row) for row in factor)
        if len(V) != self.n:
            raise ValueError("factor must have one row per matrix row")
        for i in range(self.n):
            for j in range(i, self.n):
                if sum((a * b for a, b in zip(V[i], V[j])), Fraction(0)) != self.entry(i, j):
                    raise ValueError(f"factor does not reproduce entry ({i}, {j})")
        self.factor = V

    # access

    @property
    def n(self) -> int:
        return self._num.shape[0]

    @property
    def numerators(self) -> np.ndarray:
        return self._num

    @property
    def denominator(self) -> int:
        return self._den

    def entry(self, i: int, j: int) -> Fraction:
        return Fraction(int(self.numerators[i, j]), self._den)

    def rows(self) -> list[list[Fraction]]:
        return [[self.entry(i, j) for j in range(self.n)] for i in range(self.n)]

    def to_float(self) -> np.ndarray:
        return self.numerators.astype(float) / self._den

    def l1(self) -> Fraction:
        return Fraction(sum(abs(int(v)) for v in self.numerators.flat), self._den)

    def max_abs(self) -> Fraction:
        if self.n == 0:
            return Fraction(0)
        return Fraction(int(np.max(np.abs(self.numerators))), self._den)

    def scaled(self, c) -> "SymMatrix":
        c = as_fraction(c)
        return SymMatrix(self.numerators * c.numerator, self._den * c.denominator)

    def __neg__(self) -> "SymMatrix":
        return SymMatrix(-self.numerators, self._den)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SymMatrix) or other.n != self.n:
            return NotImplemented
        return self.rows() == other.rows()

    def __repr__(self) -> str:
        if self.n > 6:
            return f"SymMatrix(n={self.n})"
        return f"SymMatrix({[[str(v) for v in row] for row in self.rows()]})"


@dataclass(frozen=True)
class Bump:
    """The unit indicator ``g`` (``epsilon is None``) or its trapezoid ``g_eps``.

    The trapezoid rises linearly on ``[-eps, eps]`` from 0 to 1, stays at 1
    up to ``1 - eps`` and falls back to 0 at ``1 + eps``.
    """

    epsilon: Optional[Fraction] = None

    def __post_init__(self):
        if self.epsilon is not None:
            eps = as_fraction(self.epsilon)
            if not 0 < eps < Fraction(1, 2):
                raise ValueError(f"epsilon must lie in (0, 1/2), got {eps}")
            object.__setattr__(self, "epsilon", eps)

    @property
    def kind(self) -> str:
        return "indicator" if self.epsilon is None else "trapezoid"

    @property
    def support(self) -> tuple[Fraction, Fraction]:
        if self.epsilon is None:
            return Fraction(0), Fraction(1)
        return -self.epsilon, 1 + self.epsilon

    def __call__(self, x) -> Fraction:
        x = as_fraction(x)
        if self.epsilon is None:
            return Fraction(1) if 0 <= x <= 1 else Fraction(0)
        ramp = 1 / (2 * self.epsilon)
        up = Fraction(1, 2) + ramp * x
        down = Fraction(1, 2) + ramp * (1 - x)
        return max(Fraction(0), min(Fraction(1), up, down))

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.epsilon is None:
            return ((x >= 0) & (x <= 1)).astype(float)
        ramp = 1 / (2 * float(self.epsilon))
        return np.clip(np.minimum(0.5 + ramp * x, 0.5 + ramp * (1 - x)), 0.0, 1.0)

    def as_piecewise(self) -> PiecewiseLinear:
        if self.epsilon is None:
            return PiecewiseLinear.constant(0, 1, 1)
        e = self.epsilon
        return PiecewiseLinear.from_points([-e, e, 1 - e, 1 + e], [0, 1, 1, 0])

    def slope_bound(self) -> Optional[Fraction]:
        return None if self.epsilon is None else 1 / (2 * self.epsilon)


INDICATOR = Bump()


def eval_bump(bump: Bump, x) -> Fraction:
    return bump(x)


@dataclass(frozen=True)
class SeparableBlock:
    """``sum_ik M[i, k] phi_i(x) phi_k(y)`` with ``phi_i(x) = bump(x - shifts[i])``.

    The ``phi_i`` have pairwise disjoint supports.
    """

    matrix: SymMatrix
    bump: Bump
    shifts: tuple[Fraction, ...]

    def basis(self, i: int) -> PiecewiseLinear:
        return self.bump.as_piecewise().shifted(self.shifts[i])


class Kernel:
    """Common interface; subclasses implement the evaluation hooks."""

    def value(self, x, y) -> Fraction:
        raise NotImplementedError

    def values(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y):
        return self.value(x, y)

    def support(self) -> tuple[Fraction, Optional[Fraction]]:
        """An interval ``[lo, hi]`` whose square contains the support."""
        raise NotImplementedError

    def breakpoints(self) -> list[Fraction]:
        """Per-axis points where the kernel may fail to be smooth."""
        raise NotImplementedError

    def components(self) -> Optional[list[SeparableBlock]]:
        """Separable structure, or ``None`` for kernels that have none."""
        return None

    def lipschitz_bound(self) -> Optional[float]:
        return None

    def negated(self) -> "Kernel":
        raise NotImplementedError


class MatrixKernel(Kernel):
    """``sum_hk M[h, k] b(x - 2h - 1) b(y - 2k - 1)`` for a bump ``b``."""

    def __init__(self, matrix: SymMatrix, bump: Bump):
        self.matrix = matrix
        self.bump = bump

    @property
    def n(self) -> int:
        return self.matrix.n

    @property
    def width(self) -> Fraction:
        """Length of the window ``[0, 2n + 1)`` that contains every cell."""
        return Fraction(2 * self.n + 1)

    def _cell(self, x: Fraction) -> Optional[int]:
        i = math.floor((x - Fraction(1, 2)) / 2)
        return i if 0 <= i < self.n else None

    def value(self, x, y) -> Fraction:
        x, y = as_fraction(x), as_fraction(y)
        i, k = self._cell(x), self._cell(y)
        if i is None or k is None:
            return Fraction(0)
        gx = self.bump(x - (2 * i + 1))
        if gx == 0:
            return Fraction(0)
        return self.matrix.entry(i, k) * gx * self.bump(y - (2 * k + 1))

    def values(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self.n == 0:
            return np.zeros(x.shape)
        i = np.floor((x - 0.5) / 2).astype(np.int64)
        k = np.floor((y - 0.5) / 2).astype(np.int64)
        inside = (i >= 0) & (i < self.n) & (k >= 0) & (k < self.n)
        i, k = np.clip(i, 0, self.n - 1), np.clip(k, 0, self.n - 1)
        m = self.matrix.to_float()[i, k]
        # bump product first, so swapping x and y gives bitwise-identical results
        g = self.bump.values(x - (2 * i + 1)) * self.bump.values(y - (2 * k + 1))
        return np.where(inside, m * g, 0.0)

    def support(self) -> tuple[Fraction, Fraction]:
        lo, hi = self.bump.support
        return 1 + lo, 2 * self.n - 1 + hi

    def breakpoints(self) -> list[Fraction]:
        pts = self.bump.as_piecewise().breakpoints()
        return sorted({p + 2 * i + 1 for i in range(self.n) for p in pts})

    def components(self) -> list[SeparableBlock]:
        return [SeparableBlock(self.matrix, self.bump, tuple(Fraction(2 * i + 1) for i in range(self.n)))]

    def factor_function(self, r: int, x) -> Fraction:
        """``sum_h V[h, r] b(x - 2h - 1)``; summing products over ``r`` rebuilds the kernel."""
        V = self.matrix.factor
        if V is None:
            raise MissingFactorError("matrix carries no factor V with M = V V^T")
        x = as_fraction(x)
        i = self._cell(x)
        if i is None:
            return Fraction(0)
        return V[i][r] * self.bump(x - (2 * i + 1))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.matrix!r}, {self.bump!r})"


class PiecewiseConstantKernel(MatrixKernel):
    """Entry ``M[h, k]`` on the closed cell ``[2h+1, 2h+2] x [2k+1, 2k+2]``, zero elsewhere.

    Distinct cells never touch, so the closed-cell convention is unambiguous.
    """

    def __init__(self, matrix: SymMatrix):
        super().__init__(matrix, INDICATOR)

    def negated(self) -> "PiecewiseConstantKernel":
        return PiecewiseConstantKernel(-self.matrix)


class TrapezoidKernel(MatrixKernel):
    def __init__(self, matrix: SymMatrix, epsilon):
        super().__init__(matrix, Bump(as_fraction(epsilon)))

    @property
    def epsilon(self) -> Fraction:
        return self.bump.epsilon

    def lipschitz_bound(self) -> float:
        slope = self.bump.slope_bound()
        return float(self.matrix.max_abs() * slope * (1 + slope))

    def negated(self) -> "TrapezoidKernel":
        return TrapezoidKernel(-self.matrix, self.epsilon)


def eval_pwc_kernel(kernel: PiecewiseConstantKernel, x, y) -> Fraction:
    return kernel.value(x, y)


def eval_trap_kernel(kernel: TrapezoidKernel, x, y) -> Fraction:
    return kernel.value(x, y)


def eval_factor_function(kernel: MatrixKernel, r: int, x) -> Fraction:
    return kernel.factor_function(r, x)


class BlockDiagKernel(Kernel):
    """Kernels placed along the diagonal: ``K(x, y) = sum_h K_h(x - T_h, y - T_h)``.

    Block ``h`` (1-based) owns the window ``[T_h, T_h + w_h)`` where ``w_h`` is
    its width.  Blocks are built on first use by ``factory(h)``; ``width(h)``
    must be cheap and must agree with the built block.  With ``h_max=None``
    the sequence is unbounded.
    """

    def __init__(self, factory: Callable[[int], MatrixKernel], width: Callable[[int], Fraction],
                 h_max: Optional[int] = None, gap=0, first_offset=0):
        if h_max is not None and h_max < 1:
            raise ValueError("h_max must be positive")
        self._factory = factory
        self._width = width
        self.h_max = h_max
        self.gap = as_fraction(gap)
        self._offsets: list[Fraction] = [as_fraction(first_offset)]
        self._blocks: dict[int, MatrixKernel] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_blocks(cls, blocks: Sequence[MatrixKernel], offsets: Optional[Sequence] = None) -> "BlockDiagKernel":
        blocks = list(blocks)
        if not blocks:
            raise ValueError("need at least one block")
        if offsets is None:
            return cls(lambda h: blocks[h - 1], lambda h: blocks[h - 1].width, h_max=len(blocks))
        offsets = [as_fraction(t) for t in offsets]
        if len(offsets) != len(blocks):
            raise ValueError("one offset per block")
        for h in range(1, len(blocks)):
            if offsets[h] < offsets[h - 1] + blocks[h - 1].width:
                raise ValueError(f"block {h + 1} overlaps block {h}")
        kernel = cls(lambda h: blocks[h - 1], lambda h: blocks[h - 1].width, h_max=len(blocks),
                     first_offset=offsets[0])
        kernel._offsets = offsets
        return kernel

    @property
    def bounded(self) -> bool:
        return self.h_max is not None

    def _extend_to(self, h: int) -> None:
        # caller holds the lock
        while len(self._offsets) < h:
            k = len(self._offsets)
            self._offsets.append(self._offsets[-1] + self._width(k) + self.gap)

    def offset(self, h: int) -> Fraction:
        self._check_index(h)
        with self._lock:
            self._extend_to(h)
            return self._offsets[h - 1]

    def block(self, h: int) -> MatrixKernel:
        self._check_index(h)
        with self._lock:
            blk = self._blocks.get(h)
            if blk is None:
                blk = self._factory(h)
                self._blocks[h] = blk
            return blk

    def materialized(self) -> list[int]:
        with self._lock:
            return sorted(self._blocks)

    def _check_index(self, h: int) -> None:
        if h < 1 or (self.h_max is not None and h > self.h_max):
            raise IndexError(f"block {h} out of range")

    def locate(self, x) -> Optional[int]:
        """Index of the block whose window contains ``x``, if any."""
        x = as_fraction(x)
        if x < self._offsets[0]:
            return None
        with self._lock:
            while (self.h_max is None or len(self._offsets) < self.h_max) and self._offsets[-1] <= x:
                self._extend_to(len(self._offsets) + 1)
            h = bisect.bisect_right(self._offsets, x)
            if self.h_max is not None:
                h = min(h, self.h_max)
                self._extend_to(h)
            start = self._offsets[h - 1]
        return h if x < start + self._width(h) else None

    def value(self, x, y) -> Fraction:
        x, y = as_fraction(x), as_fraction(y)
        h = self.locate(x)
        if h is None or self.locate(y) != h:
            return Fraction(0)
        t = self.offset(h)
        return self.block(h).value(x - t, y - t)

    def values(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.zeros(x.shape)
        if x.size == 0:
            return out
        top = max(float(x.max()), float(y.max()))
        last = self.locate(Fraction(top)) or 0
        with self._lock:
            self._extend_to(max(last, 1) + 1 if self.h_max is None else self.h_max)
            starts = np.array([float(t) for t in self._offsets])
        hx = np.searchsorted(starts, x, side="right")
        hy = np.searchsorted(starts, y, side="right")
        for h in np.unique(hx[(hx == hy) & (hx > 0)]):
            h = int(h)
            if self.h_max is not None and h > self.h_max:
                continue
            t = starts[h - 1]
            mask = (hx == h) & (hy == h) & (x < t + float(self._width(h))) & (y < t + float(self._width(h)))
            if mask.any():
                out[mask] = self.block(h).values(x[mask] - t, y[mask] - t)
        return out

    def _require_bounded(self) -> None:
        if self.h_max is None:
            raise UnboundedSupportError("lazy block-diagonal kernel has no block cap")

    def support(self) -> tuple[Fraction, Optional[Fraction]]:
        if self.h_max is None:
            return self._offsets[0], None
        return self._offsets[0], self.offset(self.h_max) + self._width(self.h_max)

    def breakpoints(self) -> list[Fraction]:
        self._require_bounded()
        pts = set()
        for h in range(1, self.h_max + 1):
            t = self.offset(h)
            pts.update(p + t for p in self.block(h).breakpoints())
        return sorted(pts)

    def components(self) -> list[SeparableBlock]:
        self._require_bounded()
        out = []
        for h in range(1, self.h_max + 1):
            t = self.offset(h)
            for comp in self.block(h).components():
                out.append(SeparableBlock(comp.matrix, comp.bump, tuple(s + t for s in comp.shifts)))
        return out

    def lipschitz_bound(self) -> Optional[float]:
        self._require_bounded()
        bounds = [self.block(h).lipschitz_bound() for h in range(1, self.h_max + 1)]
        return None if any(b is None for b in bounds) else max(bounds)

    def negated(self) -> "BlockDiagKernel":
        factory = self._factory
        out = BlockDiagKernel(lambda h: factory(h).negated(), self._width, self.h_max, self.gap,
                              self._offsets[0])
        out._offsets = list(self._offsets)
        return out


def eval_blockdiag(kernel: BlockDiagKernel, x, y) -> Fraction:
    return kernel.value(x, y)


class CallableKernel(Kernel):
    """A kernel given only by a float function; no separable structure.

    ``func(x, y)`` must accept broadcast numpy arrays.  Used for the
    quadrature fallback paths.
    """

    def __init__(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray], lo, hi,
                 breakpoints: Sequence = ()):
        self.func = func
        self._lo, self._hi = as_fraction(lo), as_fraction(hi)
        self._breakpoints = sorted({as_fraction(b) for b in breakpoints} | {self._lo, self._hi})

    def value(self, x, y) -> float:
        return float(self.func(np.asarray(float(x)), np.asarray(float(y))))

    def values(self, x, y) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)

    def support(self) -> tuple[Fraction, Fraction]:
        return self._lo, self._hi

    def breakpoints(self) -> list[Fraction]:
        return list(self._breakpoints)

    def negated(self) -> "CallableKernel":
        func = self.func
        return CallableKernel(lambda x, y: -func(x, y), self._lo, self._hi, self._breakpoints)
