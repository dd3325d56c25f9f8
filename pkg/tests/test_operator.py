from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import epsilons, psd_matrices
from stablekernels import (BoundedInput, CallableKernel, DomainMismatchError, PiecewiseConstantKernel, SymMatrix,
                           TrapezoidKernel, UnboundedSupportError, adversarial_search, apply_operator,
                           build_counterexample, kernel_l1_distance_pwc_trap, kernel_opnorm_trap_bracket,
                           matrix_opnorm_inf1_exact, reduce_input, stability_verdict)
from stablekernels.kernel_operator import L1Evidence
from stablekernels.norms import NormReport


@st.composite
def grid_inputs(draw, end, step=F(1, 2)):
    count = int(end / step)
    values = draw(st.lists(st.sampled_from([F(-1), F(-1, 2), F(0), F(1, 3), F(1)]),
                           min_size=count, max_size=count))
    return BoundedInput.on_grid(values, step)


def l1_of(M, v):
    return sum(abs(sum(M.entry(i, k) * v[k] for k in range(M.n))) for i in range(M.n))


# BoundedInput

def test_bounded_input_rejects_large_values():
    with pytest.raises(ValueError):
        BoundedInput.constant(F(3, 2), 0, 1)
    with pytest.raises(ValueError):
        BoundedInput((0, 2, 1), (1, 1))


def test_bounded_input_zero_beyond_domain():
    u = BoundedInput((0, 1, 3), (1, F(-1, 2)))
    assert [u(x) for x in (0, F(1, 2), 1, 2, 3, 10)] == [1, 1, F(-1, 2), F(-1, 2), 0, 0]


# apply_operator

def test_apply_single_cell():
    K = PiecewiseConstantKernel(SymMatrix.from_rows([[1]]))
    out = apply_operator(K, BoundedInput.constant(1, 0, 2))
    assert out.l1_estimate == 1 and out.method == "exact_piecewise"
    f = out.function
    assert f(F(3, 2)) == 1 and f(F(1, 2)) == 0


def test_apply_zero_input():
    K = TrapezoidKernel(SymMatrix.from_rows([[2, 1], [1, 2]]), F(1, 4))
    out = apply_operator(K, BoundedInput.constant(0, 0, 4))
    assert out.l1_estimate == 0 and not out.values.any()


def test_apply_two_by_two():
    K = PiecewiseConstantKernel(SymMatrix.from_rows([[2, 1], [1, 2]]))
    out = apply_operator(K, BoundedInput.constant(1, 0, 4))
    assert out.l1_estimate == 6
    assert out.function(F(3, 2)) == 3 and out.function(F(7, 2)) == 3


def test_default_grid_and_csv():
    K = PiecewiseConstantKernel(SymMatrix.from_rows([[1]]))
    out = apply_operator(K, BoundedInput.constant(1, 0, 2))
    assert out.grid[0] == 0 and out.grid[-1] == 3 and np.allclose(np.diff(out.grid), 1 / 8)
    rows = out.csv_rows()
    assert rows[12] == (1.5, 1.0)


@given(psd_matrices(max_n=3), grid_inputs(end=6))
def test_output_vanishes_between_cells(M, u):
    out = apply_operator(PiecewiseConstantKernel(M), u)
    f = out.function
    for h in range(1, M.n + 1):
        for t in (F(1, 7), F(1, 2), F(6, 7)):
            assert f(2 * (h - 1) + t) == 0


@given(psd_matrices(max_n=4), st.data())
def test_reduction_identity(M, data):
    u = data.draw(grid_inputs(end=2 * M.n))
    out = apply_operator(PiecewiseConstantKernel(M), u)
    assert out.l1_estimate == l1_of(M, reduce_input(u, M.n))


@given(psd_matrices(max_n=3), epsilons, grid_inputs(end=6))
def test_perturbation_bound(M, eps, u):
    a = apply_operator(PiecewiseConstantKernel(M), u).l1_estimate
    b = apply_operator(TrapezoidKernel(M, eps), u).l1_estimate
    assert abs(a - b) <= kernel_l1_distance_pwc_trap(M, eps)


@given(psd_matrices(max_n=3), epsilons, grid_inputs(end=6), grid_inputs(end=6),
       st.sampled_from([F(1, 2), F(1, 3), F(-1, 4)]), st.sampled_from([F(1, 2), F(-1, 3)]))
def test_linearity(M, eps, u1, u2, a, b):
    K = TrapezoidKernel(M, eps)
    combo = u1.combine(a, u2, b)
    f, f1, f2 = (apply_operator(K, u).function for u in (combo, u1, u2))
    for x in [F(k, 5) for k in range(0, 40)]:
        assert f(x) == a * f1(x) + b * f2(x)


def test_exact_output_matches_quadrature(rng):
    M = SymMatrix.random_psd(3, rng, denominator=3)
    K = TrapezoidKernel(M, F(1, 5))
    u = BoundedInput.on_grid([F(int(v)) for v in rng.choice([-1, 1], size=14)], F(1, 2))
    exact = apply_operator(K, u)
    oracle = apply_operator(CallableKernel(K.values, *K.support(), breakpoints=K.breakpoints()), u)
    assert oracle.method == "quadrature" and oracle.warning
    np.testing.assert_allclose(oracle.values, exact.values, atol=1e-10)
    assert abs(oracle.l1_estimate - float(exact.l1_estimate)) < 1e-8


def test_lazy_counterexample_apply_uses_touched_blocks():
    K, _ = build_counterexample(None)
    u = BoundedInput.constant(1, 9, 42)
    out = apply_operator(K, u)
    assert out.method == "exact_piecewise"
    assert K.materialized() == [2]


# reduce_input

@pytest.mark.parametrize("edges,values,n,expected", [
    ((0, 4), (1,), 2, (1, 1)),
    ((1, 2, 3, 4), (1, 0, -1), 2, (1, -1)),
    ((0, 1), (1,), 1, (0,)),
    ((0, F(3, 2), 2), (F(1, 2), -1), 1, (-F(1, 4),)),
])
def test_reduce_input_examples(edges, values, n, expected):
    assert reduce_input(BoundedInput(edges, values), n) == expected


def test_reduce_input_domain_mismatch():
    with pytest.raises(DomainMismatchError):
        reduce_input(BoundedInput.constant(1, 0, 5), 2)


@given(grid_inputs(end=10), st.integers(5, 8))
def test_reduced_values_in_unit_ball(u, n):
    assert all(abs(v) <= 1 for v in reduce_input(u, n))


# adversarial search

def test_search_two_by_two():
    K = PiecewiseConstantKernel(SymMatrix.from_rows([[2, 1], [1, 2]]))
    result = adversarial_search(K, 1)
    assert result.value == 6
    assert result.witness(F(3, 2)) == result.witness(F(7, 2))
    assert apply_operator(K, result.witness).l1_estimate == 6


def test_search_zero_kernel():
    assert adversarial_search(PiecewiseConstantKernel(SymMatrix.zeros(2)), 1).value == 0


def test_search_trapezoid_in_bracket():
    K = TrapezoidKernel(SymMatrix.from_rows([[1]]), F(1, 10))
    result = adversarial_search(K)
    bracket = kernel_opnorm_trap_bracket(K)
    assert bracket.lower <= result.value <= bracket.upper


@given(psd_matrices(max_n=4))
def test_search_matches_matrix_norm(M):
    assert adversarial_search(PiecewiseConstantKernel(M), 1).value == matrix_opnorm_inf1_exact(M)[0]


@given(psd_matrices(max_n=3), epsilons)
def test_search_value_is_attained_and_bounded(M, eps):
    K = TrapezoidKernel(M, eps)
    result = adversarial_search(K, F(1, 4))
    assert apply_operator(K, result.witness).l1_estimate == result.value
    # trapezoid (inf,1) norm equals the matrix norm, an upper bound for any input
    assert result.value <= matrix_opnorm_inf1_exact(M)[0]
    assert result.history == sorted(result.history)


def test_search_quadrature_path():
    M = SymMatrix.from_rows([[2, 1], [1, 2]])
    K = PiecewiseConstantKernel(M)
    wrapped = CallableKernel(K.values, *K.support(), breakpoints=K.breakpoints())
    result = adversarial_search(wrapped, 1)
    assert result.method == "quadrature" and abs(result.value - 6) < 1e-9


def test_search_deterministic_across_workers(rng):
    K = TrapezoidKernel(SymMatrix.random_psd(3, rng), F(1, 3))
    a = adversarial_search(K, F(1, 8), seed=3, workers=1)
    b = adversarial_search(K, F(1, 8), seed=3, workers=4)
    assert a.value == b.value and a.witness == b.witness


def test_search_rejects_lazy_kernel():
    K, _ = build_counterexample(None)
    with pytest.raises(UnboundedSupportError):
        adversarial_search(K)


# verdict

def test_verdict_stable_and_l1():
    report = NormReport(l1=F(6), exact=F(6))
    assert stability_verdict(F(6), report).label == "stable_and_l1"


def test_verdict_stable_not_l1():
    report = NormReport(l1=None, upper=F(23, 6))
    v = stability_verdict(L1Evidence("divergent", F(5), "harmonic"), report)
    assert v.label == "stable_not_l1"


def test_verdict_heuristic_only():
    report = NormReport(l1=None, lower=F(1))
    assert stability_verdict(L1Evidence("lower_bound", F(5), "partial"), report).label == "undetermined"
