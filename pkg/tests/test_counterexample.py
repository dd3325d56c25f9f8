import json
import math
from fractions import Fraction as F

import numpy as np
import pytest

from stablekernels import (SymMatrix, adversarial_search, build_counterexample, build_M_h, kernel_l1_trap,
                           matrix_opnorm_inf1_exact, series_evidence, sylvester_hadamard)
from stablekernels.counterexample import (CertificateError, CounterexampleSpec, MhCertificate, analytic_opnorm_bound,
                                          block_offset, hadamard_entry, order_exponent, shifted_hadamard_l1)
from stablekernels.verification import check_psd_matrix


def test_hadamard_small():
    assert sylvester_hadamard(0).entries.tolist() == [[1]]
    assert sylvester_hadamard(1).entries.tolist() == [[1, 1], [1, -1]]
    H = sylvester_hadamard(2).entries
    assert np.diag(H).tolist() == [1, -1, -1, 1]
    assert (H @ H == 4 * np.eye(4, dtype=int)).all()


@pytest.mark.parametrize("m", range(0, 9))
def test_hadamard_orthogonal_symmetric(m):
    H = sylvester_hadamard(m).entries
    n = 2 ** m
    assert (H == H.T).all()
    assert (H @ H.T == n * np.eye(n, dtype=int)).all()
    i, j = np.indices(H.shape)
    assert (np.vectorize(hadamard_entry)(i, j) == H).all()


def test_hadamard_cap():
    with pytest.raises(ValueError):
        sylvester_hadamard(13)
    with pytest.raises(ValueError):
        sylvester_hadamard(-1)


@pytest.mark.parametrize("h,m", [(1, 1), (2, 2), (3, 3), (4, 3), (5, 4), (8, 4), (9, 5), (100, 8)])
def test_order_exponent(h, m):
    assert order_exponent(h) == m
    assert 2 ** m >= 2 * h


def test_m1_values():
    M, cert = build_M_h(1)
    assert M.n == 4 and shifted_hadamard_l1(4) == 20
    assert M.l1() == 1 and cert.l1 == 1
    assert cert.opnorm_exact == F(4, 5) and cert.opnorm_method == "enumeration"
    assert cert.opnorm_witness == (1, 1, 1, -1)
    assert M.entry(0, 0) == F(3, 20) and M.entry(1, 1) == F(1, 20) and M.entry(0, 1) == F(1, 20)


def test_m2_values():
    M, cert = build_M_h(2)
    assert M.n == 16 and shifted_hadamard_l1(16) == 304
    assert M.l1() == F(1, 2)
    assert cert.opnorm_exact == F(4, 19) <= F(1, 4)
    assert analytic_opnorm_bound(2) == F(2 * 64, 2 * 304)


@pytest.mark.parametrize("h", range(3, 11))
def test_analytic_certificates(h):
    M, cert = build_M_h(h)
    assert cert.opnorm_method == "analytic"
    assert cert.l1 == F(1, h)
    assert cert.opnorm_bound == analytic_opnorm_bound(h) <= F(1, h * h)


@pytest.mark.parametrize("n", [4, 16, 64])
def test_shifted_l1_closed_form(n):
    H = sylvester_hadamard(int(math.log2(n))).entries
    M0 = H + math.isqrt(n) * np.eye(n, dtype=int)
    assert np.abs(M0).sum() == shifted_hadamard_l1(n)


@pytest.mark.parametrize("h", [1, 2, 3, 5])
def test_m_h_psd(h):
    M, cert = build_M_h(h)
    assert np.linalg.eigvalsh(M.to_float())[0] >= -1e-10
    assert cert.psd == "projection identity checked"
    assert check_psd_matrix(M).passed


def test_lazy_entries_match_array():
    M, _ = build_M_h(3)
    A = M.numerators
    for i, j in [(0, 0), (5, 9), (63, 63), (17, 40)]:
        assert M.entry(i, j) == F(int(A[i, j]), M.denominator)


def test_certificate_rejects_tampering():
    _, cert = build_M_h(3)
    d = cert.to_dict()
    d["opnorm_bound"] = "1/8"
    with pytest.raises(CertificateError):
        MhCertificate.from_dict(d).verify()
    d = cert.to_dict()
    d["l1"] = "1/2"
    with pytest.raises(CertificateError):
        MhCertificate.from_dict(d).verify()


def test_spec_json_roundtrip():
    _, spec = build_counterexample(3)
    payload = json.loads(json.dumps(spec.to_dict()))
    again = CounterexampleSpec.from_dict(payload)
    assert again.to_dict() == spec.to_dict()
    payload["blocks"][1]["offset"] = "10"
    with pytest.raises(CertificateError):
        CounterexampleSpec.from_dict(payload)


def test_block_offsets():
    assert [block_offset(h) for h in (1, 2, 3)] == [0, 9, 42]
    K, spec = build_counterexample(2)
    assert K.offset(2) == 9 and spec.record(2).offset == 9


def test_single_block_support():
    K, spec = build_counterexample(1)
    lo, hi = spec.block_kernel(1).support()
    assert F(1, 2) - F(1, 3) < lo and hi < F(17, 2) + F(1, 3)
    assert K.value(lo, F(3, 2)) == 0 and K.value(hi, F(3, 2)) == 0


def test_supports_disjoint():
    K, spec = build_counterexample(4)
    for h in range(1, 4):
        _, hi = spec.block_kernel(h).support()
        lo_next, _ = spec.block_kernel(h + 1).support()
        assert K.offset(h) + hi < K.offset(h + 1) + lo_next
    assert K.value(F(3, 2), 9 + F(3, 2)) == 0


def test_block_epsilons_in_range():
    _, spec = build_counterexample(6)
    for r in spec.records():
        assert r.epsilon == F(1, 3 * r.h) and 0 < r.epsilon < F(1, 2)


@pytest.mark.parametrize("h", range(1, 7))
def test_block_l1_exact(h):
    _, spec = build_counterexample(h)
    assert kernel_l1_trap(spec.block_kernel(h)) == F(1, h)


def test_block_one_search():
    _, spec = build_counterexample(1)
    value = adversarial_search(spec.block_kernel(1)).value
    assert F(4, 5) - F(1, 1000) <= value <= F(4, 5) + 4 * F(1, 3)


def test_block_additivity():
    K, spec = build_counterexample(2)
    total = adversarial_search(K, 1).value
    parts = sum(adversarial_search(spec.block_kernel(h), 1).value for h in (1, 2))
    assert abs(total - parts) <= F(1, 1000)


def test_lazy_kernel_evaluates_far_out():
    K, spec = build_counterexample(None)
    t = K.offset(7)
    assert K.value(t + F(3, 2), t + F(3, 2)) == spec.matrix(7).entry(0, 0)
    assert K.materialized() == [7]


@pytest.mark.parametrize("H,expected", [(1, F(1)), (4, F(25, 12))])
def test_series_l1_partial_sums(H, expected):
    _, spec = build_counterexample(H)
    ev = series_evidence(spec, H)
    assert ev.l1_partial_sum == expected
    assert ev.rows[0].opnorm_partial_bound == F(7, 3)


def test_series_monotone_and_cauchy():
    _, spec = build_counterexample(None)
    ev = series_evidence(spec, 30)
    l1 = [r.l1_partial_sum for r in ev.rows]
    op = [r.opnorm_partial_bound for r in ev.rows]
    assert all(a < b for a, b in zip(l1, l1[1:]))
    assert all(0 < b - a < F(7, 3 * H) for H, (a, b) in enumerate(zip(op, op[1:]), start=1))
    assert ev.l1_log_minorant == pytest.approx(math.log(31))
    assert float(ev.l1_partial_sum) >= ev.l1_log_minorant
    assert ev.verdict.label == "stable_not_l1"


def test_series_horizon_checked():
    _, spec = build_counterexample(3)
    with pytest.raises(ValueError):
        series_evidence(spec, 4)


def test_block_bound_below_seven_thirds():
    _, spec = build_counterexample(10)
    for r in spec.records():
        assert r.kernel_opnorm_bound <= F(7, 3 * r.h ** 2)


def test_exact_opnorm_of_scaled_matrix_matches_m0():
    M, cert = build_M_h(1)
    M0 = SymMatrix.from_rows(M.numerators.tolist())
    assert matrix_opnorm_inf1_exact(M0)[0] == 16


@pytest.mark.parametrize("H", [1, 10, 100])
def test_partial_sum_below_and_total_above_basel_limit(H):
    # the tail bound 7/(3H) overshoots the true tail, so partial + tail sits above 7 pi^2 / 18
    _, spec = build_counterexample(H)
    ev = series_evidence(spec, H)
    assert float(ev.opnorm_partial_bound) < ev.basel_limit < float(ev.opnorm_total_bound)
    assert ev.basel_limit == pytest.approx(7 * math.pi ** 2 / 18)
