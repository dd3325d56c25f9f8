from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given

from conftest import epsilons, psd_matrices
from stablekernels import BlockDiagKernel, PiecewiseConstantKernel, SymMatrix, TrapezoidKernel, build_counterexample
from stablekernels.serialization import (ParseError, csv_text, dump_kernel, load_kernel, parse_key_values,
                                         parse_matrix, read_kernel, save_kernel, to_json)


@pytest.mark.parametrize("text", ["2 1; 1 2", "[[2,1],[1,2]]", "2 1\n1 2\n", "[[2, 1], [1, 2]]", "2,1;1,2"])
def test_parse_matrix_forms(text):
    assert parse_matrix(text).rows() == [[2, 1], [1, 2]]


def test_parse_matrix_rationals():
    assert parse_matrix("1/2 -1/3; -1/3 1").entry(0, 1) == F(-1, 3)


@pytest.mark.parametrize("text,line,column", [
    ("1 x; x 1", 1, 3),
    ("1 2\n2 a\n", 2, 3),
])
def test_parse_matrix_error_position(text, line, column):
    with pytest.raises(ParseError) as info:
        parse_matrix(text)
    assert (info.value.line, info.value.column) == (line, column)


def test_parse_matrix_rejects_shapes():
    with pytest.raises(ParseError):
        parse_matrix("1 2; 3")
    with pytest.raises(ParseError):
        parse_matrix("1 2; 3 1")


def test_key_values():
    kv = parse_key_values("# header\nkind = trapezoid  # inline\n\nepsilon=1/4\n")
    assert kv == {"kind": ("trapezoid", 2), "epsilon": ("1/4", 4)}
    with pytest.raises(ParseError) as info:
        parse_key_values("a = 1\na = 2\n")
    assert info.value.line == 2
    with pytest.raises(ParseError):
        parse_key_values("no equals sign\n")


@given(psd_matrices(), epsilons)
def test_trapezoid_roundtrip(M, eps):
    K = TrapezoidKernel(M, eps)
    text = dump_kernel(K)
    again = load_kernel(text)
    assert dump_kernel(again) == text
    assert again.matrix.factor is not None
    pts = np.random.default_rng(M.n).uniform(0, 2 * M.n + 1, size=(50, 2))
    np.testing.assert_array_equal(again.values(pts[:, 0], pts[:, 1]), K.values(pts[:, 0], pts[:, 1]))
    for x, y in pts[:10]:
        assert again.value(F(x), F(y)) == K.value(F(x), F(y))


def test_pwc_roundtrip():
    K = PiecewiseConstantKernel(SymMatrix.from_rows([[F(1, 2), 1], [1, 3]]))
    again = load_kernel(dump_kernel(K))
    assert isinstance(again, PiecewiseConstantKernel) and again.matrix == K.matrix


def test_blockdiag_roundtrip():
    blocks = [TrapezoidKernel(SymMatrix.from_rows([[1]]), F(1, 3)),
              PiecewiseConstantKernel(SymMatrix.from_rows([[2, 1], [1, 2]]))]
    K = BlockDiagKernel.from_blocks(blocks, [0, 5])
    again = load_kernel(dump_kernel(K))
    assert again.offset(2) == 5
    assert again.value(5 + F(7, 2), 5 + F(3, 2)) == 1


def test_counterexample_roundtrip(tmp_path):
    K, _ = build_counterexample(3)
    path = tmp_path / "k.txt"
    save_kernel(K, path, counterexample_h_max=3)
    again = read_kernel(path)
    pts = np.random.default_rng(2).uniform(0, 107, size=(200, 2))
    np.testing.assert_array_equal(again.values(pts[:, 0], pts[:, 1]), K.values(pts[:, 0], pts[:, 1]))


def test_lazy_counterexample_roundtrip():
    K, _ = build_counterexample(None)
    again = load_kernel(dump_kernel(K, counterexample_h_max=0))
    assert not again.bounded


def test_load_errors_carry_position():
    with pytest.raises(ParseError) as info:
        load_kernel("kind = trapezoid\nepsilon = 1/4\nn = 1\nrow.0 = z\n", source="k.txt")
    assert info.value.line == 4 and "k.txt:4" in str(info.value)
    with pytest.raises(ParseError):
        load_kernel("kind = trapezoid\nn = 1\nrow.0 = 1\n")
    with pytest.raises(ParseError):
        load_kernel("kind = trapezoid\nepsilon = 3/4\nn = 1\nrow.0 = 1\n")
    with pytest.raises(ParseError):
        load_kernel("kind = spline\nn = 1\nrow.0 = 1\n")


def test_output_helpers():
    assert to_json({"b": 1, "a": F(1, 2).numerator}) == '{\n  "a": 1,\n  "b": 1\n}\n'
    assert csv_text(["H", "s"], [(1, F(3, 2))]) == "H,s\n1,3/2\n"
