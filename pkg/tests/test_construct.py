import math

import numpy as np
import pytest

from carleman.construct import (
    check_intersectable,
    derivative_bound_sequence,
    family_Q,
    frobenius_cover,
    lambda_membership,
    nprime,
    reduce_L_to_M,
    rescale_to_dominate,
)
from carleman.errors import (
    AuditFailed,
    DerivativeCapExceeded,
    FactorNonpositive,
    InvalidInput,
    NotCoprime,
    NotLhd,
)
from carleman.functions import function_from_builtin
from carleman.seqcore import (
    PositiveSequence,
    is_quasianalytic,
    mk_weight_sequence,
    sequence_from_builtin,
)


@pytest.fixture(scope="module")
def gevrey2():
    return sequence_from_builtin("gevrey:2", K=256)


def test_lambda_membership_of_M_itself(gevrey2):
    res = lambda_membership(gevrey2.M, gevrey2)
    assert res.member
    assert res.rho == pytest.approx(1.0)


def test_lambda_membership_geometric_factor(gevrey2):
    k = np.arange(gevrey2.K + 1)
    c = PositiveSequence(logv=(gevrey2.logM + k * math.log(2.0)).tolist())
    res = lambda_membership(c, gevrey2)
    assert res.member
    assert res.rho == pytest.approx(2.0)


def test_lambda_membership_rejects_factorial_excess():
    M = sequence_from_builtin("factorial", K=256)
    G = sequence_from_builtin("gevrey:2", K=256)
    assert not lambda_membership(G.M, M).member


@pytest.mark.parametrize(
    "left,right", [("factorial", "gevrey:2"), ("gevrey:1.5", "gevrey:3"), ("factorial", "gevrey:2.5")]
)
def test_reduction_audits_pass(left, right):
    L = sequence_from_builtin(left, K=256)
    M = sequence_from_builtin(right, K=256)
    res = reduce_L_to_M(L, M)
    assert res.audit.passed, res.audit.failed()
    assert np.all(L.logM <= res.S.logM + 1e-9)
    assert res.S.certificates["log_convex"].passed
    assert res.S.certificates["m_log_convex"].passed
    assert is_quasianalytic(res.S).quasianalytic is False


def test_reduction_delta_and_ratio_are_monotone(gevrey2):
    L = sequence_from_builtin("factorial", K=256)
    res = reduce_L_to_M(L, gevrey2)
    logdelta = res.delta.values[1:]
    ratio = gevrey2.logmu[1:] - logdelta
    assert np.all(np.diff(ratio) >= -1e-9)
    assert logdelta[-1] > logdelta[len(logdelta) // 2]


def test_reduction_csv_rows(gevrey2):
    L = sequence_from_builtin("factorial", K=256)
    res = reduce_L_to_M(L, gevrey2)
    rows = res.csv_rows(L, gevrey2)
    assert len(rows) == 257
    assert rows[0] == (0, 0.0, 0.0, 0.0)


def test_reduction_requires_lhd(gevrey2):
    with pytest.raises(NotLhd):
        reduce_L_to_M(gevrey2, gevrey2)
    with pytest.raises(NotLhd):
        reduce_L_to_M(gevrey2, sequence_from_builtin("factorial", K=256))


def test_check_intersectable_q1():
    res = check_intersectable(family_Q(1, K=200))
    assert res.passed
    assert res.threshold <= 50


def test_check_intersectable_geometric_closed_form():
    k = np.arange(17, dtype=float)
    M = mk_weight_sequence(k * math.log(2.0), "2^k")
    res = check_intersectable(M)
    expected = k * math.log(2.0) + k * k * math.log(0.5)
    assert np.allclose(res.Mcheck.logM, expected)


def test_check_intersectable_factor_nonpositive():
    with pytest.raises(FactorNonpositive):
        check_intersectable(sequence_from_builtin("factorial", K=64))


def test_family_Q_values():
    Q0 = family_Q(0, K=64)
    assert Q0.logM[5] == pytest.approx(5 * math.log(5 * math.log(5 + math.e)))
    Q1 = family_Q(1, K=64)
    assert Q1.logM[10] == pytest.approx(10 * math.log(10 * math.log(10)))
    assert Q1.logM[2] == pytest.approx(2 / 3 * Q1.logM[3])


def test_family_Q_anchored_at_threshold():
    Q2 = family_Q(2, K=64)
    assert Q2.logM[16] == pytest.approx(16 * math.log(16 * math.log(16) * math.log(math.log(16))))
    assert Q2.logM[8] == pytest.approx(Q2.logM[16] / 2)
    assert Q2.logM[0] == 0.0
    assert Q2.certificates["log_convex"].passed
    assert not np.array_equal(Q2.logM, family_Q(1, K=64).logM)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_family_Q_is_quasianalytic(n):
    assert is_quasianalytic(family_Q(n, K=256)).quasianalytic is True


def test_family_Q_high_orders_agree_on_stored_range():
    assert np.array_equal(family_Q(3, K=256).logM, family_Q(2, K=256).logM)
    assert np.array_equal(family_Q(4, K=256).logM, family_Q(2, K=256).logM)


def test_family_Q_bounds_and_registry():
    with pytest.raises(InvalidInput):
        family_Q(5)
    assert np.array_equal(sequence_from_builtin("q:2", K=64).logM, family_Q(2, K=64).logM)


def test_rescale_to_dominate():
    M = family_Q(1, K=128)
    N = rescale_to_dominate(sequence_from_builtin("gevrey:2", K=128), M)
    assert np.all(N.logM >= M.logM - 1e-9)
    assert np.isclose(np.max((M.logM[1:] - N.logM[1:]) / np.arange(1, 129)), 0.0)


def test_nprime_audits_for_q1():
    M = family_Q(1, K=128)
    N = rescale_to_dominate(sequence_from_builtin("gevrey:2", K=128), M)
    res = nprime(N, M)
    assert res.audit.passed, res.audit.failed()
    assert res.C >= 1.0


def test_nprime_of_constant_n_is_geometric():
    M = sequence_from_builtin("gevrey:2", K=64)
    N = sequence_from_builtin("factorial", K=64)
    res = nprime(N, M, strict=False)
    k = np.arange(65)
    assert np.allclose(res.Nprime.logm, k * math.log(res.C))
    assert "dominates_M" in res.audit.failed()
    with pytest.raises(AuditFailed):
        nprime(N, M)


def test_derivative_bound_sequence_of_square():
    f = function_from_builtin("square")
    L = derivative_bound_sequence(f, f, 4)
    assert L.values[:3] == pytest.approx([0.0, math.log(2.0), math.log(2.0)])
    assert np.all(np.isneginf(L.values[3:]))
    with pytest.raises(DerivativeCapExceeded):
        derivative_bound_sequence(f, f, 41)


def test_frobenius_cover_two_three():
    table = frobenius_cover(2, 3)
    assert table.complete
    assert table.largest_gap == 1
    assert (7, 2, 1) in table.rows
    assert [r[0] for r in table.rows] == list(range(6, 19))


def test_frobenius_cover_gaps():
    assert frobenius_cover(3, 5).largest_gap == 7
    assert frobenius_cover(1, 5).largest_gap == -1
    with pytest.raises(NotCoprime):
        frobenius_cover(4, 6)
