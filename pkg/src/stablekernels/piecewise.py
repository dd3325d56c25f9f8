"""Exact piecewise-linear functions on the real line.

Every kernel in this package is a finite sum of products of trapezoid or
indicator bumps, so all the integrals we need reduce to integrals of
piecewise-linear functions with rational breakpoints.  Values are kept as
:class:`fractions.Fraction` throughout.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction]


def as_fraction(x) -> Fraction:
    """Convert ints, floats (exactly), Fractions and ``"p/q"`` strings."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(x)


def format_fraction(x: Fraction) -> str:
    x = as_fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class Piece:
    """``slope * x + intercept`` on the interval ``[lo, hi]``."""

    lo: Fraction
    hi: Fraction
    intercept: Fraction
    slope: Fraction

    def __call__(self, x: Fraction) -> Fraction:
        return self.intercept + self.slope * x

    def integral(self) -> Fraction:
        # exact trapezoid rule for a linear function
        return (self(self.lo) + self(self.hi)) * (self.hi - self.lo) / 2

    def abs_integral(self) -> Fraction:
        a, b = self(self.lo), self(self.hi)
        if a >= 0 and b >= 0 or a <= 0 and b <= 0:
            return abs(self.integral())
        # one sign change; the root is rational
        root = -self.intercept / self.slope
        return (abs(a) * (root - self.lo) + abs(b) * (self.hi - root)) / 2


class PiecewiseLinear:
    """A compactly supported piecewise-linear function, zero off its pieces.

    Pieces are sorted and non-overlapping (they may share endpoints).
    Point values at shared endpoints follow the left-most piece; callers
    only rely on point values where the function is continuous.
    """

    def __init__(self, pieces: Iterable[Piece] = ()):
        pieces = sorted((p for p in pieces if p.hi > p.lo), key=lambda p: p.lo)
        for left, right in zip(pieces, pieces[1:]):
            if right.lo < left.hi:
                raise ValueError("overlapping pieces")
        self.pieces: tuple[Piece, ...] = tuple(pieces)
        self._los = [p.lo for p in self.pieces]

    @classmethod
    def from_points(cls, xs: Sequence, ys: Sequence) -> "PiecewiseLinear":
        """Linear interpolant through ``(xs[i], ys[i])``, zero outside."""
        xs = [as_fraction(x) for x in xs]
        ys = [as_fraction(y) for y in ys]
        pieces = []
        for (x0, y0), (x1, y1) in zip(zip(xs, ys), zip(xs[1:], ys[1:])):
            if x1 == x0:
                continue
            slope = (y1 - y0) / (x1 - x0)
            pieces.append(Piece(x0, x1, y0 - slope * x0, slope))
        return cls(pieces)

    @classmethod
    def constant(cls, lo, hi, value) -> "PiecewiseLinear":
        return cls([Piece(as_fraction(lo), as_fraction(hi), as_fraction(value), Fraction(0))])

    @property
    def support(self) -> tuple[Fraction, Fraction]:
        if not self.pieces:
            return Fraction(0), Fraction(0)
        return self.pieces[0].lo, self.pieces[-1].hi

    def breakpoints(self) -> list[Fraction]:
        out = set()
        for p in self.pieces:
            out.update((p.lo, p.hi))
        return sorted(out)

    def __call__(self, x) -> Fraction:
        x = as_fraction(x)
        i = bisect.bisect_right(self._los, x) - 1
        # at a shared endpoint the left-hand piece wins
        if i > 0 and self.pieces[i - 1].hi == x:
            i -= 1
        if i >= 0 and x <= self.pieces[i].hi:
            return self.pieces[i](x)
        return Fraction(0)

    def shifted(self, t) -> "PiecewiseLinear":
        """``x -> f(x - t)``."""
        t = as_fraction(t)
        return PiecewiseLinear(
            Piece(p.lo + t, p.hi + t, p.intercept - p.slope * t, p.slope) for p in self.pieces
        )

    def scaled(self, c) -> "PiecewiseLinear":
        c = as_fraction(c)
        if c == 0:
            return PiecewiseLinear()
        return PiecewiseLinear(
            Piece(p.lo, p.hi, c * p.intercept, c * p.slope) for p in self.pieces
        )

    def restricted(self, lo, hi) -> "PiecewiseLinear":
        lo, hi = as_fraction(lo), as_fraction(hi)
        return PiecewiseLinear(
            Piece(max(p.lo, lo), min(p.hi, hi), p.intercept, p.slope)
            for p in self.pieces
            if p.hi > lo and p.lo < hi
        )

    def _refined(self, points: Sequence[Fraction]) -> list[Piece]:
        """Pieces split at every point in ``points``, gaps filled with zero."""
        cuts = sorted(set(points) | set(self.breakpoints()))
        out = []
        for a, b in zip(cuts, cuts[1:]):
            mid = (a + b) / 2
            piece = next((p for p in self.pieces if p.lo <= mid <= p.hi), None)
            if piece is None:
                out.append(Piece(a, b, Fraction(0), Fraction(0)))
            else:
                out.append(Piece(a, b, piece.intercept, piece.slope))
        return out

    def __add__(self, other: "PiecewiseLinear") -> "PiecewiseLinear":
        cuts = sorted(set(self.breakpoints()) | set(other.breakpoints()))
        left, right = self._refined(cuts), other._refined(cuts)
        return PiecewiseLinear(
            Piece(a.lo, a.hi, a.intercept + b.intercept, a.slope + b.slope)
            for a, b in zip(left, right)
        )

    def __neg__(self) -> "PiecewiseLinear":
        return self.scaled(-1)

    def __sub__(self, other: "PiecewiseLinear") -> "PiecewiseLinear":
        return self + (-other)

    def integral(self, lo=None, hi=None) -> Fraction:
        f = self if lo is None and hi is None else self.restricted(
            self.support[0] if lo is None else lo, self.support[1] if hi is None else hi
        )
        return sum((p.integral() for p in f.pieces), Fraction(0))

    def abs_integral(self) -> Fraction:
        return sum((p.abs_integral() for p in self.pieces), Fraction(0))


def disjoint_sum(functions: Iterable[PiecewiseLinear]) -> PiecewiseLinear:
    """Sum of functions whose supports do not overlap (checked)."""
    pieces = []
    for f in functions:
        pieces.extend(f.pieces)
    return PiecewiseLinear(pieces)
