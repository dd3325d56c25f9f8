"""Command-line front end.

Subcommands: ``norms``, ``operator``, ``counterexample``, ``verify``, ``gram``.
Options may also come from a ``key = value`` file given with ``--config``
(keys are the long option names with ``-`` replaced by ``_``); flags on the
command line win.  Exit codes: 0 pass, 1 failed check, 2 usage or parse
error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import counterexample as cx
from .kernel_operator import BoundedInput, adversarial_search, apply_operator
from .kernels import Kernel, PiecewiseConstantKernel, SymMatrix, TrapezoidKernel
from .norms import DimensionTooLargeError, N_ENUM_CAP, matrix_norm_report
from .piecewise import as_fraction, format_fraction
from .serialization import (ParseError, csv_text, dump_kernel, matrix_csv, parse_key_values, parse_matrix,
                            read_kernel, to_json)
from .verification import (DEFAULT_TOL, check_psd_matrix, gram_check, random_points,
                           symmetry_continuity_probe)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SERIES_HELP = """\
counterexample CSV columns:
  H                     number of blocks summed
  l1_partial_sum        sum of 1/h for h <= H (exact p/q)
  opnorm_upper_bound    sum of 7/(3 h^2) for h <= H (exact p/q)
  opnorm_total_bound    opnorm_upper_bound + 7/(3H), bounds the whole kernel
operator CSV columns: x, value (output sampled on the grid)
gram CSV: the Gram matrix, one row per line
"""


@dataclass
class RunConfig:
    command: str
    matrix: Optional[str] = None
    kernel: Optional[str] = None
    counterexample: Optional[int] = None
    epsilon: Optional[str] = None
    negate: bool = False
    h_max: int = 4
    resolution: str = "1/8"
    budget: Optional[int] = None
    seed: int = 0
    workers: int = 1
    cap: int = N_ENUM_CAP
    format: str = "table"
    output: Optional[str] = None


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[str(c) for c in header]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, Fraction):
        return format_fraction(x)
    return repr(float(x))


def _float(x) -> str:
    return "-" if x is None else f"{float(x):.12g}"


def load_matrix_source(source: str, seed: int = 0) -> SymMatrix:
    """``identity:N``, ``zeros:N``, ``random-psd:N``, a file path, or inline rows."""
    kind, _, arg = source.partition(":")
    if kind in ("identity", "zeros", "random-psd") and arg:
        try:
            n = int(arg)
        except ValueError:
            raise ParseError(f"bad dimension {arg!r}", 1, len(kind) + 2, "<matrix>") from None
        if kind == "identity":
            return SymMatrix.identity(n)
        if kind == "zeros":
            return SymMatrix.zeros(n)
        return SymMatrix.random_psd(n, np.random.default_rng(seed))
    path = Path(source)
    if len(source) < 4096 and path.is_file():
        return parse_matrix(path.read_text(encoding="utf-8"), source=str(path))
    return parse_matrix(source)


def load_kernel_source(cfg: RunConfig) -> tuple[Kernel, Optional[SymMatrix]]:
    if cfg.counterexample is not None:
        kernel, _ = cx.build_counterexample(cfg.counterexample)
        matrix = None
    elif cfg.kernel is not None:
        kernel = read_kernel(cfg.kernel)
        matrix = getattr(kernel, "matrix", None)
    elif cfg.matrix is not None:
        matrix = load_matrix_source(cfg.matrix, cfg.seed)
        kernel = PiecewiseConstantKernel(matrix) if cfg.epsilon is None else TrapezoidKernel(matrix, as_fraction(cfg.epsilon))
    else:
        raise ParseError("give one of --matrix, --kernel or --counterexample", 0, 0, "<args>")
    if cfg.negate:
        kernel = kernel.negated()
        matrix = None if matrix is None else -matrix
    return kernel, matrix


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_norms(cfg: RunConfig) -> int:
    if cfg.matrix is None:
        raise ParseError("norms needs --matrix", 0, 0, "<args>")
    M = load_matrix_source(cfg.matrix, cfg.seed)
    report = matrix_norm_report(M, cap=cfg.cap, workers=cfg.workers, seed=cfg.seed)
    if cfg.format == "json":
        _emit(to_json(report.to_dict()), cfg)
        return EXIT_OK
    rows = [("l1", _fmt(report.l1), _float(report.l1), "exact")]
    if report.exact is not None:
        rows.append(("op_inf1", _fmt(report.exact), _float(report.exact), "exact"))
    else:
        rows.append(("op_inf1_lower", _fmt(report.lower), _float(report.lower), "lower_bound"))
        rows.append(("op_inf1_upper", _fmt(report.upper), _float(report.upper), "upper_bound"))
    witness = " ".join(f"{s:+d}" for s in report.witness) if report.witness else "-"
    if cfg.format == "csv":
        _emit(csv_text(["quantity", "value", "float", "flavor"], rows), cfg)
    else:
        text = _table(["quantity", "value", "float", "flavor"], rows) + f"witness: {witness}\n"
        if report.exact is None:
            text += f"n = {M.n} exceeds the enumeration cap {cfg.cap}; bracket reported\n"
        _emit(text, cfg)
    return EXIT_OK


def cmd_operator(cfg: RunConfig, input_edges: Optional[str], input_values: Optional[str], search: bool) -> int:
    kernel, _ = load_kernel_source(cfg)
    if search:
        result = adversarial_search(kernel, as_fraction(cfg.resolution), budget=cfg.budget, seed=cfg.seed,
                                    workers=cfg.workers, cap=cfg.cap)
        rows = [("lower_bound", _fmt(result.value), _float(result.value), result.method)]
        if cfg.format == "json":
            _emit(to_json({"schema": "1", "lower_bound": _fmt(result.value), "float": float(result.value),
                           "method": result.method,
                           "witness": {"edges": [_fmt(e) for e in result.witness.edges],
                                       "values": [_fmt(v) for v in result.witness.values]}}), cfg)
        elif cfg.format == "csv":
            _emit(csv_text(["x_start", "x_end", "value"],
                           zip(result.witness.edges, result.witness.edges[1:], result.witness.values)), cfg)
        else:
            _emit(_table(["quantity", "value", "float", "method"], rows), cfg)
        return EXIT_OK
    if input_edges is None:
        lo, hi = kernel.support()
        if hi is None:
            raise ParseError("a lazy kernel needs explicit --input-edges", 0, 0, "<args>")
        u = BoundedInput.constant(1, 0, hi)
    else:
        edges = [as_fraction(e) for e in input_edges.replace(",", " ").split()]
        values = [as_fraction(v) for v in (input_values or "").replace(",", " ").split()]
        u = BoundedInput(tuple(edges), tuple(values))
    out = apply_operator(kernel, u)
    if cfg.format == "csv":
        _emit(csv_text(["x", "value"], out.csv_rows()), cfg)
    elif cfg.format == "json":
        _emit(to_json({"schema": "1", "l1": _fmt(out.l1_estimate), "l1_float": float(out.l1_estimate),
                       "method": out.method, "warning": out.warning}), cfg)
    else:
        _emit(_table(["quantity", "value", "float", "method"],
                     [("output_l1", _fmt(out.l1_estimate), _float(out.l1_estimate), out.method)]), cfg)
    return EXIT_OK


def cmd_counterexample(cfg: RunConfig, spec_out: Optional[str] = None, kernel_out: Optional[str] = None) -> int:
    try:
        kernel, spec = cx.build_counterexample(cfg.h_max)
        evidence = cx.series_evidence(spec, cfg.h_max)
    except cx.CertificateError as exc:
        sys.stderr.write(f"certificate failure: {exc}\n")
        return EXIT_FAIL
    if spec_out:
        Path(spec_out).write_text(to_json(spec.to_dict()), encoding="utf-8")
    if kernel_out:
        Path(kernel_out).write_text(dump_kernel(kernel, counterexample_h_max=cfg.h_max), encoding="utf-8")
    rows = [(r.H, r.l1_partial_sum, r.opnorm_partial_bound, r.opnorm_total_bound) for r in evidence.rows]
    header = ["H", "l1_partial_sum", "opnorm_upper_bound", "opnorm_total_bound"]
    if cfg.format == "csv":
        _emit(csv_text(header, rows), cfg)
    elif cfg.format == "json":
        payload = evidence.to_dict()
        payload["spec"] = spec.to_dict()
        _emit(to_json(payload), cfg)
    else:
        shown = [(H, _float(a), _float(b), _float(c)) for H, a, b, c in rows]
        text = _table(header, shown)
        text += (f"L1 partial sum {float(evidence.l1_partial_sum):.6f} >= ln(H+1) = {evidence.l1_log_minorant:.6f}\n"
                 f"(inf,1) bound  {float(evidence.opnorm_total_bound):.6f} (partial + tail 7/(3H))\n"
                 f"verdict: {evidence.verdict.label}\n")
        _emit(text, cfg)
    return EXIT_OK if evidence.verdict.label == "stable_not_l1" else EXIT_FAIL


def cmd_verify(cfg: RunConfig, points: int, samples: int, delta: str, tol: float) -> int:
    kernel, matrix = load_kernel_source(cfg)
    checks = []
    if matrix is not None:
        psd = check_psd_matrix(matrix, tol)
        checks.append(("matrix_psd", psd.passed, f"min eig {psd.min_eigenvalue:.6g} ({psd.method})"))
    pts = random_points(kernel, points, seed=cfg.seed)
    gram = gram_check(kernel, pts, tol)
    checks.append(("gram_psd", gram.passed, f"min eig {gram.min_eigenvalue:.6g} at {points} points"))
    probe = symmetry_continuity_probe(kernel, samples=samples, delta=as_fraction(delta), seed=cfg.seed)
    checks.append(("symmetry", probe.symmetry_defect == 0, f"max defect {_float(probe.symmetry_defect)}"))
    bound = "none" if probe.lipschitz_bound is None else f"{probe.lipschitz_bound:.6g}"
    checks.append(("continuity", probe.continuous,
                   f"max quotient {_float(probe.max_quotient)}, Lipschitz bound {bound}"))
    ok = all(c[1] for c in checks)
    if cfg.format == "json":
        _emit(to_json({"schema": "1", "passed": ok,
                       "checks": [{"check": n, "passed": p, "detail": d} for n, p, d in checks]}), cfg)
    elif cfg.format == "csv":
        _emit(csv_text(["check", "passed", "detail"], checks), cfg)
    else:
        _emit(_table(["check", "result", "detail"], [(n, "pass" if p else "FAIL", d) for n, p, d in checks]), cfg)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_gram(cfg: RunConfig, points: int, point_list: Optional[str], tol: float) -> int:
    kernel, _ = load_kernel_source(cfg)
    if point_list:
        pts = [float(as_fraction(p)) for p in point_list.replace(",", " ").split()]
    else:
        pts = random_points(kernel, points, seed=cfg.seed)
    sample = gram_check(kernel, pts, tol)
    if cfg.format == "json":
        _emit(to_json({"schema": "1", "points": [float(p) for p in sample.points], "gram": sample.gram.tolist(),
                       "min_eigenvalue": sample.min_eigenvalue, "passed": sample.passed}), cfg)
    elif cfg.format == "csv":
        _emit(matrix_csv(sample.gram), cfg)
    else:
        _emit(_table(["points", "min_eigenvalue", "result"],
                     [(len(sample.points), f"{sample.min_eigenvalue:.6g}", "pass" if sample.passed else "FAIL")]), cfg)
    return EXIT_OK if sample.passed else EXIT_FAIL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stablekernels", description="Mercer kernels, (inf,1) norms and the stable "
                     "non-integrable counterexample.", epilog=SERIES_HELP,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with option defaults")
    common.add_argument("--format", choices=["table", "json", "csv"], default="table")
    common.add_argument("--output", help="write to this file instead of stdout")
    common.add_argument("--seed", type=int, default=0, help="seed for random matrices, points and restarts (0)")
    common.add_argument("--workers", type=int, default=1, help="worker threads for enumeration and search (1)")
    common.add_argument("--cap", type=int, default=N_ENUM_CAP, help=f"enumeration cap (default {N_ENUM_CAP})")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--matrix", help="inline rows '2 1; 1 2', identity:N, random-psd:N or a file")
    source.add_argument("--epsilon", help="trapezoid half-width p/q; omit for the piecewise-constant kernel")
    source.add_argument("--kernel", help="kernel file in key = value format")
    source.add_argument("--counterexample", type=int, metavar="H_MAX", help="counterexample with H_MAX blocks")
    source.add_argument("--negate", action="store_true", default=False, help="use -K")

    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("norms", parents=[common], help="L1 and (inf,1) norms of a matrix")
    p.add_argument("--matrix", help="inline rows, identity:N, random-psd:N or a file")

    p = sub.add_parser("operator", parents=[common, source], help="apply the kernel operator or search inputs")
    p.add_argument("--input-edges", help="breakpoints of u, e.g. '0 1 2'")
    p.add_argument("--input-values", help="values of u per segment, e.g. '1 -1'")
    p.add_argument("--search", action="store_true", default=False, help="adversarial search for a worst input")
    p.add_argument("--resolution", default="1/8", help="search grid step (1/8)")
    p.add_argument("--budget", type=int, help="flips per restart (default 10 x cells)")

    p = sub.add_parser("counterexample", parents=[common], help="build and certify the counterexample",
                       epilog=SERIES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--h-max", type=int, default=4, help="number of blocks (4)")
    p.add_argument("--spec-out", help="write the certified block records as JSON")
    p.add_argument("--kernel-out", help="write the kernel in key = value format")

    for name, helptext in (("verify", "PSD, symmetry and continuity checks"), ("gram", "sampled Gram matrix")):
        p = sub.add_parser(name, parents=[common, source], help=helptext)
        p.add_argument("--points", type=int, default=20, help="number of random points (20)")
        p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="eigenvalue tolerance (1e-8)")
        if name == "verify":
            p.add_argument("--samples", type=int, default=200, help="probe sample pairs (200)")
            p.add_argument("--delta", default="1/1000000", help="probe step (1/1000000)")
        else:
            p.add_argument("--point-list", help="explicit points instead of random ones")
    return parser


def _config_defaults(argv: Sequence[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    text = Path(known.config).read_text(encoding="utf-8")
    return {key.replace("-", "_"): value for key, (value, _) in parse_key_values(text, known.config).items()
            if key != "config"}


def _subparser(parser: argparse.ArgumentParser, name: str):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _config_defaults(argv)
    except (OSError, ParseError) as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    if defaults and argv:
        sp = _subparser(parser, argv[0])
        if sp is not None:
            known = {a.dest for a in sp._actions}
            unknown = set(defaults) - known
            if unknown:
                sys.stderr.write("unknown config keys: " + ", ".join(sorted(unknown)) + "\n")
                return EXIT_USAGE
            sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    for flag in ("negate", "search"):
        if isinstance(getattr(args, flag, None), str):
            setattr(args, flag, getattr(args, flag).lower() in ("1", "true", "yes"))
    cfg = RunConfig(**{k: getattr(args, k) for k in RunConfig.__dataclass_fields__ if hasattr(args, k)})
    try:
        if args.command == "norms":
            return cmd_norms(cfg)
        if args.command == "operator":
            return cmd_operator(cfg, args.input_edges, args.input_values, args.search)
        if args.command == "counterexample":
            return cmd_counterexample(cfg, args.spec_out, args.kernel_out)
        if args.command == "verify":
            return cmd_verify(cfg, args.points, args.samples, args.delta, args.tol)
        return cmd_gram(cfg, args.points, args.point_list, args.tol)
    except (ParseError, DimensionTooLargeError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
