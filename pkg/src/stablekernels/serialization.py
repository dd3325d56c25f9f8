"""Plain-text kernel files, JSON records and CSV series.

Kernel files are ``key = value`` lines; ``#`` starts a comment.  Matrix
rows are whitespace-separated exact rationals (``p/q``)::

    kind = trapezoid
    epsilon = 1/4
    n = 2
    row.0 = 2 1
    row.1 = 1 2

Block-diagonal kernels prefix each block's keys with ``block.<h>.`` and
give ``blocks`` and ``block.<h>.offset``.  The counterexample is stored by
its block count only (``kind = counterexample``, ``h_max = 3`` or ``lazy``)
and rebuilt deterministically on load.
"""

from __future__ import annotations

import csv
import io
import json
import re
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .kernels import (BlockDiagKernel, Kernel, MatrixKernel, PiecewiseConstantKernel, SymMatrix,
                      TrapezoidKernel)
from .piecewise import as_fraction, format_fraction

FORMAT_TAG = "stablekernels-kernel"


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0, source: str = "<input>"):
        self.line, self.column, self.source = line, column, source
        super().__init__(f"{source}:{line}:{column}: {message}")


def parse_key_values(text: str, source: str = "<input>") -> dict[str, tuple[str, int]]:
    """``{key: (value, line_number)}``; duplicate keys are an error."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", lineno, len(raw) - len(raw.lstrip()) + 1, source)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError("empty key", lineno, 1, source)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", lineno, 1, source)
        out[key] = (value.strip(), lineno)
    return out


def _parse_rational(token: str, line: int, column: int, source: str) -> Fraction:
    try:
        return as_fraction(token)
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"not a rational number: {token!r}", line, column, source) from None


def _parse_row(text: str, line: int, source: str, column_offset: int = 0) -> list[Fraction]:
    return [_parse_rational(m.group(), line, column_offset + m.start() + 1, source)
            for m in re.finditer(r"[^\s,]+", text)]


def parse_matrix(text: str, source: str = "<matrix>") -> SymMatrix:
    """Parse ``"2 1; 1 2"``, ``"[[2,1],[1,2]]"`` or one row per line."""
    stripped = text.strip()
    if stripped.startswith("["):
        inner = stripped[1:-1] if stripped.endswith("]") else stripped[1:]
        rows_src = [(m.group(1), m.start(1) + 2) for m in re.finditer(r"\[([^\[\]]*)\]", inner)]
        rows = [_parse_row(r, 1, source, col) for r, col in rows_src]
    elif "\n" in stripped:
        rows = [_parse_row(line, i, source) for i, line in enumerate(stripped.splitlines(), start=1)
                if line.strip()]
    else:
        rows, col = [], 0
        for part in text.split(";"):
            rows.append(_parse_row(part, 1, source, col))
            col += len(part) + 1
    rows = [r for r in rows if r]
    if any(len(r) != len(rows) for r in rows):
        raise ParseError(f"matrix is not square ({len(rows)} rows)", 1, 1, source)
    try:
        return SymMatrix.from_rows(rows)
    except ValueError as exc:
        raise ParseError(str(exc), 1, 1, source) from None


def _matrix_lines(prefix: str, M: SymMatrix) -> list[str]:
    lines = [f"{prefix}n = {M.n}"]
    for i, row in enumerate(M.rows()):
        lines.append(f"{prefix}row.{i} = " + " ".join(format_fraction(v) for v in row))
    if M.factor is not None:
        for i, row in enumerate(M.factor):
            lines.append(f"{prefix}factor.{i} = " + " ".join(format_fraction(v) for v in row))
    return lines


def _matrix_kernel_lines(prefix: str, K: MatrixKernel) -> list[str]:
    if isinstance(K, TrapezoidKernel):
        lines = [f"{prefix}kind = trapezoid", f"{prefix}epsilon = {format_fraction(K.epsilon)}"]
    elif isinstance(K, PiecewiseConstantKernel):
        lines = [f"{prefix}kind = piecewise_constant"]
    else:
        raise TypeError(f"cannot serialize {type(K).__name__}")
    return lines + _matrix_lines(prefix, K.matrix)


def dump_kernel(K: Kernel, counterexample_h_max: Optional[int] = None) -> str:
    """Text form of a kernel.

    Pass ``counterexample_h_max`` (or ``0`` for the lazy kernel) to store a
    counterexample kernel by its block count instead of its entries.
    """
    lines = [f"format = {FORMAT_TAG}", "version = 1"]
    if counterexample_h_max is not None:
        lines += ["kind = counterexample", f"h_max = {counterexample_h_max or 'lazy'}"]
    elif isinstance(K, BlockDiagKernel):
        if not K.bounded:
            raise ValueError("lazy block kernels can only be stored as a counterexample")
        lines += ["kind = blockdiag", f"blocks = {K.h_max}"]
        for h in range(1, K.h_max + 1):
            lines.append(f"block.{h}.offset = {format_fraction(K.offset(h))}")
            lines += _matrix_kernel_lines(f"block.{h}.", K.block(h))
    else:
        lines += _matrix_kernel_lines("", K)
    return "\n".join(lines) + "\n"


def _get(kv: dict, key: str, source: str) -> tuple[str, int]:
    if key not in kv:
        raise ParseError(f"missing key {key!r}", 0, 0, source)
    return kv[key]


def _load_matrix(kv: dict, prefix: str, source: str) -> SymMatrix:
    n_text, n_line = _get(kv, prefix + "n", source)
    try:
        n = int(n_text)
    except ValueError:
        raise ParseError(f"bad dimension {n_text!r}", n_line, 1, source) from None
    rows = []
    for i in range(n):
        text, line = _get(kv, f"{prefix}row.{i}", source)
        rows.append(_parse_row(text, line, source))
    factor = None
    if f"{prefix}factor.0" in kv:
        factor = []
        for i in range(n):
            text, line = _get(kv, f"{prefix}factor.{i}", source)
            factor.append(_parse_row(text, line, source))
    try:
        return SymMatrix.from_rows(rows, factor=factor)
    except ValueError as exc:
        raise ParseError(str(exc), n_line, 1, source) from None


def _load_matrix_kernel(kv: dict, prefix: str, source: str) -> MatrixKernel:
    kind, line = _get(kv, prefix + "kind", source)
    M = _load_matrix(kv, prefix, source)
    if kind == "trapezoid":
        eps_text, eps_line = _get(kv, prefix + "epsilon", source)
        try:
            return TrapezoidKernel(M, _parse_rational(eps_text, eps_line, 1, source))
        except ValueError as exc:
            raise ParseError(str(exc), eps_line, 1, source) from None
    if kind == "piecewise_constant":
        return PiecewiseConstantKernel(M)
    raise ParseError(f"unknown kernel kind {kind!r}", line, 1, source)


def load_kernel(text: str, source: str = "<kernel>") -> Kernel:
    kv = parse_key_values(text, source)
    kind, line = _get(kv, "kind", source)
    if kind == "counterexample":
        from .counterexample import build_counterexample
        h_text, h_line = _get(kv, "h_max", source)
        if h_text == "lazy":
            return build_counterexample(None)[0]
        try:
            return build_counterexample(int(h_text))[0]
        except ValueError:
            raise ParseError(f"bad h_max {h_text!r}", h_line, 1, source) from None
    if kind == "blockdiag":
        count = int(_get(kv, "blocks", source)[0])
        blocks = [_load_matrix_kernel(kv, f"block.{h}.", source) for h in range(1, count + 1)]
        offsets = [_parse_rational(*_get(kv, f"block.{h}.offset", source), 1, source) for h in range(1, count + 1)]
        return BlockDiagKernel.from_blocks(blocks, offsets)
    return _load_matrix_kernel(kv, "", source)


def save_kernel(K: Kernel, path, **kwargs) -> None:
    Path(path).write_text(dump_kernel(K, **kwargs), encoding="utf-8")


def read_kernel(path) -> Kernel:
    path = Path(path)
    return load_kernel(path.read_text(encoding="utf-8"), source=str(path))


def to_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_fraction(v) if isinstance(v, Fraction) else v for v in row])
    return buf.getvalue()


def matrix_csv(A: np.ndarray) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([[repr(float(v)) for v in row] for row in A])
    return buf.getvalue()
