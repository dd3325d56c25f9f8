"""A continuous PSD kernel with finite (inf,1) norm and infinite L1 norm.

Block ``h`` is the trapezoid kernel of a matrix ``M_h`` with
``||M_h||_1 = 1/h`` and ``||M_h||_{inf,1} <= 1/h^2``, using bump half-width
``1/(3h)``.  Blocks sit on the diagonal with disjoint windows, so the L1
norms add up to the harmonic series while the (inf,1) norms stay below
``7/(3h^2)`` each.

``M_h`` comes from a Sylvester Hadamard matrix ``H`` of order ``n = 4^m``
with ``sqrt(n) >= 2h``: ``M_0 = H + sqrt(n) I`` satisfies
``M_0^2 = 2 sqrt(n) M_0`` (since ``H^2 = n I``), so its spectrum is
``{0, 2 sqrt(n)}``, and ``M_h = M_0 / (h ||M_0||_1)``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction
from typing import Optional

import numpy as np

from .kernel_operator import L1Evidence, Verdict, stability_verdict
from .kernels import BlockDiagKernel, SymMatrix, TrapezoidKernel
from .norms import NormReport, matrix_opnorm_inf1_exact
from .piecewise import as_fraction, format_fraction

MAX_HADAMARD_EXPONENT = 12
MAX_MATERIALIZED_ORDER = 4096
EXACT_OPNORM_MAX_ORDER = 16
_CHECKED_PRODUCT_ORDER = 1024
_CACHED_ORDER = 256


class CertificateError(RuntimeError):
    """A constructed block failed one of its stored certificates."""


def hadamard_entry(i: int, j: int) -> int:
    """Entry ``(i, j)`` (0-based) of the Sylvester matrix of any order."""
    return -1 if bin(i & j).count("1") % 2 else 1


@dataclass(frozen=True)
class HadamardMatrix:
    m: int
    entries: np.ndarray

    @property
    def order(self) -> int:
        return 2 ** self.m


@lru_cache(maxsize=None)
def sylvester_hadamard(m: int) -> HadamardMatrix:
    """``H_{2^m}`` by repeated ``[[H, H], [H, -H]]`` doubling."""
    if not 0 <= m <= MAX_HADAMARD_EXPONENT:
        raise ValueError(f"exponent must be in [0, {MAX_HADAMARD_EXPONENT}], got {m}")
    H = np.ones((1, 1), dtype=np.int64)
    for _ in range(m):
        H = np.block([[H, H], [H, -H]])
    n = H.shape[0]
    if not (H == H.T).all():
        raise CertificateError("Sylvester matrix is not symmetric")
    if n <= _CHECKED_PRODUCT_ORDER:
        # float products of +-1 entries are exact at these sizes
        Hf = H.astype(float)
        if not np.array_equal(Hf @ Hf, n * np.eye(n)):
            raise CertificateError("H @ H != n I")
    H.setflags(write=False)
    return HadamardMatrix(m, H)


def order_exponent(h: int) -> int:
    """Smallest ``m >= 1`` with ``2^m >= 2h``; the block has order ``4^m``."""
    return max(1, (2 * h - 1).bit_length())


class ShiftedHadamardMatrix(SymMatrix):
    """``(H_n + sqrt(n) I) / (h ||H_n + sqrt(n) I||_1)`` with lazily built entries.

    Entries are computed from the bit formula, so very large blocks can be
    evaluated pointwise without materializing the array.
    """

    def __init__(self, h: int):
        self.h = h
        self.m = order_exponent(h)
        self._n = 4 ** self.m
        self.sqrt_n = 2 ** self.m
        self.base_l1 = shifted_hadamard_l1(self._n)
        self._den = h * self.base_l1
        self.factor = None
        self._num = None
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self._n

    @property
    def numerators(self) -> np.ndarray:
        with self._lock:
            if self._num is not None:
                return self._num
            if self._n > MAX_MATERIALIZED_ORDER:
                raise MemoryError(f"refusing to materialize a {self._n}x{self._n} block")
            num = sylvester_hadamard(2 * self.m).entries + self.sqrt_n * np.eye(self._n, dtype=np.int64)
            if self._n <= _CACHED_ORDER:
                self._num = num
            return num

    def entry(self, i: int, j: int) -> Fraction:
        return Fraction(hadamard_entry(i, j) + (self.sqrt_n if i == j else 0), self._den)

    def l1(self) -> Fraction:
        return Fraction(self.base_l1, self._den)

    def max_abs(self) -> Fraction:
        return Fraction(self.sqrt_n + 1, self._den)

    def __repr__(self) -> str:
        return f"ShiftedHadamardMatrix(h={self.h}, n={self._n})"


def shifted_hadamard_l1(n: int) -> int:
    """``||H_n + sqrt(n) I||_1`` for ``n = 4^m``, ``m >= 1``.

    Off-diagonal entries contribute ``n^2 - n``.  The trace of a Sylvester
    matrix of order at least 2 is zero, so half the diagonal is ``+1`` and
    half ``-1``, and the shifted diagonal sums to ``n sqrt(n)``.
    """
    s = math.isqrt(n)
    if s * s != n or n < 4:
        raise ValueError("order must be a power of 4, at least 4")
    return n * n - n + n * s


@dataclass(frozen=True)
class MhCertificate:
    h: int
    n: int
    l1: Fraction
    opnorm_bound: Fraction
    opnorm_method: str
    opnorm_exact: Optional[Fraction] = None
    opnorm_witness: Optional[tuple[int, ...]] = None
    psd: str = "structural"

    def verify(self) -> None:
        h = self.h
        if self.l1 != Fraction(1, h):
            raise CertificateError(f"block {h}: ||M||_1 = {self.l1}, expected 1/{h}")
        if self.opnorm_bound > Fraction(1, h * h):
            raise CertificateError(f"block {h}: (inf,1) bound {self.opnorm_bound} exceeds 1/{h * h}")
        if self.opnorm_exact is not None and self.opnorm_exact > self.opnorm_bound:
            raise CertificateError(f"block {h}: exact norm above its bound")
        expected = analytic_opnorm_bound(h)
        if self.opnorm_method == "analytic" and self.opnorm_bound != expected:
            raise CertificateError(f"block {h}: stored analytic bound does not match {expected}")

    def to_dict(self) -> dict:
        return {
            "h": self.h, "n": self.n, "l1": format_fraction(self.l1),
            "opnorm_bound": format_fraction(self.opnorm_bound), "opnorm_method": self.opnorm_method,
            "opnorm_exact": None if self.opnorm_exact is None else format_fraction(self.opnorm_exact),
            "opnorm_witness": None if self.opnorm_witness is None else list(self.opnorm_witness),
            "psd": self.psd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MhCertificate":
        return cls(
            h=int(d["h"]), n=int(d["n"]), l1=as_fraction(d["l1"]),
            opnorm_bound=as_fraction(d["opnorm_bound"]), opnorm_method=d["opnorm_method"],
            opnorm_exact=None if d.get("opnorm_exact") is None else as_fraction(d["opnorm_exact"]),
            opnorm_witness=None if d.get("opnorm_witness") is None else tuple(d["opnorm_witness"]),
            psd=d.get("psd", "structural"),
        )


def analytic_opnorm_bound(h: int) -> Fraction:
    """``2 n^{3/2} / (h ||M_0||_1)``.

    From ``||M_0 v||_1 <= ||H v||_1 + sqrt(n) ||v||_1`` and
    ``||H v||_1 <= sqrt(n) ||H v||_2 = n ||v||_2 <= n^{3/2}``.
    """
    n = 4 ** order_exponent(h)
    s = math.isqrt(n)
    return Fraction(2 * n * s, h * shifted_hadamard_l1(n))


def build_M_h(h: int, exact_max_order: int = EXACT_OPNORM_MAX_ORDER) -> tuple[ShiftedHadamardMatrix, MhCertificate]:
    """The matrix for block ``h`` together with its verified certificate."""
    if h < 1:
        raise ValueError("h must be a positive integer")
    M = ShiftedHadamardMatrix(h)
    exact = witness = None
    bound = analytic_opnorm_bound(h)
    method = "analytic"
    if M.n <= exact_max_order:
        exact, witness = matrix_opnorm_inf1_exact(M)
        bound, method = exact, "enumeration"
    psd = "structural"
    if M.n <= _CHECKED_PRODUCT_ORDER:
        A = M.numerators.astype(float)
        if not np.array_equal(A @ A, 2 * M.sqrt_n * A):
            raise CertificateError(f"block {h}: M0^2 != 2 sqrt(n) M0")
        psd = "projection identity checked"
    cert = MhCertificate(h, M.n, M.l1(), bound, method, exact, witness, psd)
    cert.verify()
    return M, cert


@dataclass(frozen=True)
class BlockRecord:
    h: int
    n: int
    epsilon: Fraction
    scale: Fraction
    offset: Fraction
    certificate: MhCertificate

    @property
    def l1(self) -> Fraction:
        # the trapezoid kernel has the same L1 norm as its matrix
        return self.certificate.l1

    @property
    def kernel_opnorm_bound(self) -> Fraction:
        """``||M_h||_{inf,1} + 4 ||M_h||_1 eps_h``, at most ``7 / (3 h^2)``."""
        return self.certificate.opnorm_bound + 4 * self.certificate.l1 * self.epsilon

    def to_dict(self) -> dict:
        return {"h": self.h, "n": self.n, "epsilon": format_fraction(self.epsilon),
                "scale": format_fraction(self.scale), "offset": format_fraction(self.offset),
                "certificate": self.certificate.to_dict()}


def block_epsilon(h: int) -> Fraction:
    return Fraction(1, 3 * h)


def block_offset(h: int) -> Fraction:
    """``T_1 = 0`` and ``T_{h+1} = T_h + 2 n_h + 1``."""
    return Fraction(sum(2 * 4 ** order_exponent(g) + 1 for g in range(1, h)))


class CounterexampleSpec:
    """Per-block records with certificates, created and verified on first use."""

    def __init__(self, h_max: Optional[int] = None):
        if h_max is not None and h_max < 1:
            raise ValueError("h_max must be positive")
        self.h_max = h_max
        self._records: dict[int, BlockRecord] = {}
        self._matrices: dict[int, ShiftedHadamardMatrix] = {}
        self._lock = threading.Lock()

    def _check(self, h: int) -> None:
        if h < 1 or (self.h_max is not None and h > self.h_max):
            raise IndexError(f"block {h} out of range")

    def record(self, h: int) -> BlockRecord:
        self._check(h)
        with self._lock:
            rec = self._records.get(h)
            if rec is None:
                M, cert = build_M_h(h)
                rec = BlockRecord(h, M.n, block_epsilon(h), Fraction(1, M.denominator), block_offset(h), cert)
                self._records[h], self._matrices[h] = rec, M
            return rec

    def matrix(self, h: int) -> ShiftedHadamardMatrix:
        self.record(h)
        return self._matrices[h]

    def block_kernel(self, h: int) -> TrapezoidKernel:
        rec = self.record(h)
        return TrapezoidKernel(self._matrices[h], rec.epsilon)

    def records(self) -> list[BlockRecord]:
        if self.h_max is None:
            raise ValueError("lazy spec has no finite record list")
        return [self.record(h) for h in range(1, self.h_max + 1)]

    def to_dict(self) -> dict:
        return {"schema": "1", "h_max": self.h_max,
                "blocks": [r.to_dict() for r in self.records()] if self.h_max is not None else []}

    @classmethod
    def from_dict(cls, d: dict) -> "CounterexampleSpec":
        """Rebuild and re-verify; stored certificates must match the rebuilt ones."""
        spec = cls(d.get("h_max"))
        for stored in d.get("blocks", []):
            rec = spec.record(int(stored["h"]))
            cert = MhCertificate.from_dict(stored["certificate"])
            cert.verify()
            if cert != rec.certificate or stored != rec.to_dict():
                raise CertificateError(f"stored record for block {rec.h} does not match the construction")
        return spec


def build_counterexample(h_max: Optional[int] = None) -> tuple[BlockDiagKernel, CounterexampleSpec]:
    """Block-diagonal kernel and its block records; ``h_max=None`` gives the unbounded lazy kernel.

    With a finite ``h_max`` every certificate is checked up front.
    """
    spec = CounterexampleSpec(h_max)
    if h_max is not None:
        spec.records()
    kernel = BlockDiagKernel(spec.block_kernel, lambda h: Fraction(2 * 4 ** order_exponent(h) + 1), h_max=h_max)
    return kernel, spec


@dataclass(frozen=True)
class SeriesRow:
    H: int
    l1_partial_sum: Fraction
    opnorm_partial_bound: Fraction
    opnorm_total_bound: Fraction


@dataclass(frozen=True)
class SeriesEvidence:
    H: int
    rows: tuple[SeriesRow, ...]
    l1_partial_sum: Fraction
    l1_log_minorant: float
    opnorm_partial_bound: Fraction
    opnorm_tail_bound: Fraction
    opnorm_total_bound: Fraction
    basel_limit: float
    verdict: Verdict

    def to_dict(self) -> dict:
        return {
            "schema": "1", "H": self.H,
            "l1_partial_sum": format_fraction(self.l1_partial_sum),
            "l1_log_minorant": self.l1_log_minorant,
            "opnorm_partial_bound": format_fraction(self.opnorm_partial_bound),
            "opnorm_tail_bound": format_fraction(self.opnorm_tail_bound),
            "opnorm_total_bound": format_fraction(self.opnorm_total_bound),
            "opnorm_total_bound_float": float(self.opnorm_total_bound),
            "basel_limit": self.basel_limit,
            "verdict": self.verdict.label,
        }


def series_evidence(spec: CounterexampleSpec, H: int) -> SeriesEvidence:
    """Certified partial sums for the first ``H`` blocks plus a tail bound.

    L1: block ``h`` contributes exactly ``1/h``, and the partial sums are at
    least ``ln(H + 1)``, which is unbounded.  (inf,1): block ``h`` contributes
    at most ``7/(3h^2)`` and the tail beyond ``H`` at most ``7/(3H)``.
    Every block up to ``H`` has its certificate checked; blocks beyond ``H``
    are covered by the analytic bound, valid for all ``h`` because
    ``sqrt(n_h) >= 2h``.
    """
    if H < 1 or (spec.h_max is not None and H > spec.h_max):
        raise ValueError(f"horizon H = {H} out of range")
    rows = []
    l1 = Fraction(0)
    op = Fraction(0)
    for h in range(1, H + 1):
        rec = spec.record(h)
        if rec.l1 != Fraction(1, h) or rec.kernel_opnorm_bound > Fraction(7, 3 * h * h):
            raise CertificateError(f"block {h} breaks the per-block bounds")
        l1 += rec.l1
        op += Fraction(7, 3 * h * h)
        rows.append(SeriesRow(h, l1, op, op + Fraction(7, 3 * h)))
    tail = Fraction(7, 3 * H)
    total = op + tail
    evidence = L1Evidence("divergent", l1, f"partial sums of 1/h are >= ln(H+1) = {math.log(H + 1):.6f} at H = {H}")
    verdict = stability_verdict(evidence, NormReport(l1=None, upper=total))
    return SeriesEvidence(H, tuple(rows), l1, math.log(H + 1), op, tail, total, 7 * math.pi ** 2 / 18, verdict)
