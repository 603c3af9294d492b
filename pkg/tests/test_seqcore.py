import math

import numpy as np
import pytest
from scipy.special import gammaln

from carleman.errors import LengthMismatch, NonPositive, UnknownBuiltin, ViolationFound
from carleman.seqcore import (
    AssocFns,
    PositiveSequence,
    Relation,
    WeightMatrix,
    WeightSequence,
    fdb_condition,
    gamma_lower,
    h_eval,
    is_derivation_closed,
    is_quasianalytic,
    is_regular,
    m_circle,
    m_circle_all,
    mk_weight_sequence,
    moderate_growth_constant,
    regularity_certificate,
    relation,
    sequence_from_builtin,
    verify_h_inequalities,
)

K = 256


@pytest.fixture(scope="module")
def factorial():
    return sequence_from_builtin("factorial", K=K)


@pytest.fixture(scope="module")
def gevrey2():
    return sequence_from_builtin("gevrey:2", K=K)


def test_factorial_is_weight_sequence_with_mu_k(factorial):
    assert factorial.kind == "weight"
    assert factorial.certificates["log_convex"].passed
    assert np.allclose(np.exp(factorial.logmu[1:]), np.arange(1, K + 1))


def test_square_factorial_has_log_convex_m(gevrey2):
    assert gevrey2.certificates["log_convex"].passed
    assert gevrey2.certificates["m_log_convex"].passed
    assert np.allclose(gevrey2.logm, gammaln(np.arange(K + 1) + 1.0))


def test_non_log_convex_sequence_is_kept_as_general():
    seq = mk_weight_sequence(np.log([1, 4, 4, 4, 4, 4, 4, 4, 4]), "flat")
    assert seq.kind == "general"
    cert = seq.certificates["log_convex"]
    assert not cert.passed
    assert cert.witness == 1.0


def test_non_finite_entry_rejected():
    logM = [0.0, 1.0, float("nan"), 3.0, 4.0, 5.0, 6.0, 7.0]
    with pytest.raises(NonPositive):
        mk_weight_sequence(logM)


def test_short_sequence_rejected():
    with pytest.raises(ValueError):
        mk_weight_sequence([0.0, 1.0, 2.0])


def test_sequence_json_round_trip_keeps_log_values(gevrey2):
    restored = WeightSequence.from_json(gevrey2.to_json())
    assert restored.label == "gevrey:2"
    assert restored.M.logv == gevrey2.M.logv


def test_sequence_from_json_rejects_bad_payload():
    with pytest.raises(ValueError):
        WeightSequence.from_json('{"label": "x"}')


def test_unknown_builtin_raises():
    with pytest.raises(UnknownBuiltin):
        sequence_from_builtin("nope:3")


def test_relation_verdicts(factorial, gevrey2):
    assert relation(factorial, gevrey2).verdict == Relation.LHD
    same = relation(gevrey2, gevrey2)
    assert same.verdict == Relation.PRECEQ
    assert same.sup == 0.0
    assert relation(gevrey2, factorial).verdict == Relation.NEITHER


def test_relation_never_lhd_both_ways(factorial, gevrey2):
    pairs = [(factorial, gevrey2), (gevrey2, factorial), (factorial, factorial)]
    for a, b in pairs:
        both = relation(a, b).verdict == Relation.LHD and relation(b, a).verdict == Relation.LHD
        assert not both


def test_relation_length_mismatch(factorial):
    with pytest.raises(LengthMismatch):
        relation(factorial, sequence_from_builtin("factorial", K=64))


def test_moderate_growth_of_factorial_stays_below_two(factorial):
    mg = moderate_growth_constant(factorial, factorial)
    assert 1.0 <= mg.value < 2.0
    assert not mg.diverging


def test_moderate_growth_flags_exp_k2():
    seq = sequence_from_builtin("exp-k2", K=64)
    assert moderate_growth_constant(seq, seq).diverging


def test_moderate_growth_monotone_in_truncation(gevrey2):
    half = moderate_growth_constant(gevrey2, gevrey2, truncation=K // 2)
    full = moderate_growth_constant(gevrey2, gevrey2)
    assert half.value <= full.value


def test_derivation_closed_constants(factorial, gevrey2):
    res = is_derivation_closed(factorial)
    assert res.closed
    assert res.C == pytest.approx(3 ** (1 / 3))
    res2 = is_derivation_closed(gevrey2)
    assert res2.C == pytest.approx(math.exp(2 * math.log(3) / 3))
    assert math.isfinite(res2.C_mandelbrojt)


def test_constant_sequence_is_derivation_closed_with_C_one():
    seq = mk_weight_sequence(np.zeros(16), "ones")
    assert is_derivation_closed(seq).C == 1.0


def test_quasianalyticity_verdicts(factorial, gevrey2):
    assert is_quasianalytic(factorial).quasianalytic is True
    res = is_quasianalytic(gevrey2)
    assert res.quasianalytic is False
    assert res.partial_sum == pytest.approx(math.pi**2 / 6, abs=0.01)
    assert res.tail_bound == pytest.approx(1 / K, rel=0.1)


def test_quasianalytic_q1():
    assert is_quasianalytic(sequence_from_builtin("q:1", K=K)).quasianalytic is True


@pytest.mark.parametrize("s", [1.1, 1.3, 1.5])
def test_gevrey_just_above_one_is_not_quasianalytic(s):
    res = is_quasianalytic(sequence_from_builtin(f"gevrey:{s}", K=K))
    assert res.quasianalytic is False
    assert res.depth == 0
    assert res.slope == pytest.approx(s, rel=1e-9)
    assert res.tail_bound == pytest.approx(K ** (1 - s) / (s - 1), rel=1e-6)


def _from_ratios(logmu):
    return mk_weight_sequence(np.concatenate(([0.0], np.cumsum(logmu))))


def test_k_log_k_ratios_are_quasianalytic():
    k = np.arange(1, K + 1, dtype=float)
    res = is_quasianalytic(_from_ratios(np.log(k * np.log(k + math.e))))
    assert res.quasianalytic is True
    assert res.depth == 2
    assert res.slope > 1.1


def test_k_log_squared_ratios_are_not_quasianalytic():
    k = np.arange(1, K + 1, dtype=float)
    res = is_quasianalytic(_from_ratios(np.log(k * np.log(k + math.e) ** 2)))
    assert res.quasianalytic is False
    assert res.tail_bound is not None and res.tail_bound > 0


def test_quasianalyticity_unavailable_for_non_increasing_mu():
    logM = np.log([1, 4, 4, 4, 4, 4, 4, 4, 4])
    res = is_quasianalytic(mk_weight_sequence(logM))
    assert res.quasianalytic is None
    assert res.tail_bound is None


def test_h_eval_conventions(gevrey2):
    A = gevrey2.assoc()
    zero = h_eval(A, 0.0)
    assert zero.h == 0.0
    big = h_eval(A, 2 * A.threshold())
    assert big.h == 1.0
    assert big.kstar == 0


def test_h_eval_square_factorial_at_one_tenth(gevrey2):
    A = gevrey2.assoc()
    res = h_eval(A, 0.1)
    assert res.kstar == 9
    assert res.h == pytest.approx(3.6288e-4, rel=1e-4)
    assert gamma_lower(A, 0.1) == 9


def test_gamma_lower_zero_for_large_t(gevrey2):
    assert gamma_lower(gevrey2.assoc(), 1e6) == 0


def test_h_minimizer_matches_ratio_crossing_for_random_log_convex():
    rng = np.random.default_rng(7)
    tgrid = np.logspace(-4, 0, 200)
    for _ in range(20):
        ratios = -3.0 + np.cumsum(rng.uniform(0.01, 0.5, 128))
        logm = np.concatenate(([0.0], np.cumsum(ratios)))
        A = AssocFns(logv=logm.tolist())
        for t in tgrid:
            assert h_eval(A, t).kstar == gamma_lower(A, t)


def test_h_is_nondecreasing_and_bounded(gevrey2):
    A = gevrey2.assoc()
    values = [h_eval(A, t).h for t in np.logspace(-2, 1, 50)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert all(0.0 < v <= 1.0 for v in values)


@pytest.mark.parametrize(
    "left,right", [("gevrey:2", "gevrey:2"), ("gevrey:1.5", "gevrey:2"), ("gevrey:2", "gevrey:3")]
)
def test_h_inequalities_hold_for_gevrey_pairs(left, right):
    M = sequence_from_builtin(left, K=K)
    N = sequence_from_builtin(right, K=K)
    C = moderate_growth_constant(M, N).value
    report = verify_h_inequalities(M.assoc(), N.assoc(), C, np.logspace(-6, 1, 200))
    assert report.worst_growth_slack >= -1e-9
    assert report.worst_square_slack >= -1e-9


def test_h_inequalities_report_violation(gevrey2, factorial):
    with pytest.raises(ViolationFound):
        verify_h_inequalities(gevrey2.assoc(), factorial.assoc(), 1.0, np.logspace(-3, 0, 50))


def test_m_circle_of_ones_is_one():
    ones = PositiveSequence(logv=[0.0] * 12)
    assert m_circle(ones, 5) == pytest.approx(1.0)


def test_m_circle_factorial_k_two():
    m = PositiveSequence(logv=gammaln(np.arange(12) + 1.0).tolist())
    assert m_circle(m, 2) == pytest.approx(2.0)


def test_m_circle_dominates_m():
    m = PositiveSequence(logv=gammaln(np.arange(20) + 1.0).tolist())
    circ = m_circle_all(m)
    assert np.all(circ >= m.values - 1e-12)


def test_fdb_condition_for_factorial_m_view(factorial):
    res = fdb_condition(factorial.m_view(), factorial.m_view())
    assert res.verdict in (Relation.PRECEQ, Relation.LHD)


def test_regularity_of_equal_log_convex_sequences(gevrey2):
    cert = regularity_certificate(gevrey2, gevrey2, "R")
    assert cert.passed
    assert cert.C_gamma == 1.0
    assert cert.C <= 4.0


def test_regularity_fails_for_spiky_mu():
    k = np.arange(1, K + 1, dtype=float)
    logmu = np.log(k)
    spikes = np.array([16, 32, 64, 128, 256])
    logmu[spikes - 1] = spikes * np.log(spikes)
    logM = np.concatenate(([0.0], np.cumsum(logmu)))
    M = mk_weight_sequence(logM, "spiky")
    assert not regularity_certificate(M, M, "R").passed


def test_is_regular_gevrey(gevrey2):
    ok, C = is_regular(gevrey2)
    assert ok
    assert C is not None and C >= 1.0


def test_weight_matrix_must_be_ordered(factorial, gevrey2):
    WeightMatrix(members=[(1.0, factorial), (2.0, gevrey2)])
    with pytest.raises(ValueError):
        WeightMatrix(members=[(1.0, gevrey2), (2.0, factorial)])
