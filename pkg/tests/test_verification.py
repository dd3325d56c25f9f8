from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import epsilons, psd_matrices
from stablekernels import (PiecewiseConstantKernel, SymMatrix, TrapezoidKernel, UnboundedSupportError,
                           build_counterexample, check_psd_matrix, gram_check, symmetry_continuity_probe)
from stablekernels.verification import gram_matrix, random_points


@pytest.mark.parametrize("rows,passed,lam", [
    ([[2, 1], [1, 2]], True, 1.0),
    ([[1, 2], [2, 1]], False, -1.0),
    ([[1, 0, 0], [0, 1, 0], [0, 0, 1]], True, 1.0),
])
def test_check_psd_matrix(rows, passed, lam):
    result = check_psd_matrix(SymMatrix.from_rows(rows))
    assert result.passed is passed
    assert result.min_eigenvalue == pytest.approx(lam)


@given(psd_matrices(max_n=5))
def test_factor_and_eigen_paths_agree(M):
    with_factor = check_psd_matrix(M)
    without = check_psd_matrix(SymMatrix.from_rows(M.rows()))
    assert with_factor.method == "factor" and with_factor.passed
    assert without.method == "eigenvalues" and without.passed


def test_gram_counterexample_points():
    K, _ = build_counterexample(3)
    pts = np.random.default_rng(0).uniform(0, 9, size=20)
    assert gram_check(K, pts).passed


def test_gram_trapezoid():
    K = TrapezoidKernel(SymMatrix.from_rows([[2, 1], [1, 2]]), F(1, 4))
    assert gram_check(K, random_points(K, 10)).passed


def test_gram_negated_fails():
    K = TrapezoidKernel(SymMatrix.from_rows([[1]]), F(1, 4)).negated()
    sample = gram_check(K, [1.25, 1.5, 1.75])
    assert not sample.passed and sample.min_eigenvalue < -0.5


def test_gram_rejects_duplicates():
    K = TrapezoidKernel(SymMatrix.from_rows([[1]]), F(1, 4))
    with pytest.raises(ValueError):
        gram_check(K, [1.5, 1.5])
    with pytest.raises(ValueError):
        gram_check(K, [])


def test_gram_entries_and_symmetry(rng):
    K, _ = build_counterexample(2)
    pts = random_points(K, 25, seed=4)
    G = gram_matrix(K, pts)
    assert (G == G.T).all()
    for i, j in [(0, 1), (3, 7), (24, 0)]:
        assert G[i, j] == pytest.approx(float(K.value(F(pts[i]), F(pts[j]))), abs=1e-15)


def test_gram_cross_block_zero():
    K, _ = build_counterexample(2)
    rng = np.random.default_rng(1)
    a = rng.uniform(0, 9, size=8)
    b = rng.uniform(9, 42, size=8)
    G = gram_matrix(K, np.concatenate([a, b]))
    assert not G[:8, 8:].any() and not G[8:, :8].any()


@given(psd_matrices(max_n=4), epsilons, st.integers(0, 2 ** 32 - 1))
def test_gram_psd_for_built_kernels(M, eps, seed):
    for K in (TrapezoidKernel(M, eps), PiecewiseConstantKernel(M)):
        assert gram_check(K, random_points(K, 12, seed=seed)).passed


def test_gram_psd_many_point_sets(rng):
    K = TrapezoidKernel(SymMatrix.random_psd(4, rng), F(1, 5))
    assert all(gram_check(K, random_points(K, 15, seed=s)).passed for s in range(1000))


def test_probe_trapezoid():
    K = TrapezoidKernel(SymMatrix.from_rows([[1]]), F(1, 3))
    report = symmetry_continuity_probe(K, samples=300)
    assert report.symmetry_defect == 0
    assert report.lipschitz_bound == pytest.approx(3.75)
    assert report.max_quotient <= F(15, 4) and report.continuous and report.passed


def test_probe_flags_piecewise_constant():
    report = symmetry_continuity_probe(PiecewiseConstantKernel(SymMatrix.from_rows([[2, 1], [1, 2]])), samples=50)
    assert report.symmetry_defect == 0
    assert not report.continuous
    assert report.max_quotient >= 10 ** 5


def test_probe_counterexample():
    K, _ = build_counterexample(2)
    report = symmetry_continuity_probe(K, samples=200)
    assert report.passed


def test_probe_rejects_lazy_and_bad_delta():
    K, _ = build_counterexample(None)
    with pytest.raises(UnboundedSupportError):
        symmetry_continuity_probe(K)
    with pytest.raises(ValueError):
        symmetry_continuity_probe(TrapezoidKernel(SymMatrix.identity(1), F(1, 4)), delta=0)
