import math

import numpy as np
import pytest

from carleman.construct import family_Q, rescale_to_dominate
from carleman.divide import (
    HOLDOUT_SLACK,
    MEASURED_BOUNDS,
    DivisionReport,
    chain_length,
    chain_select,
    final_bound_argument,
    holdout_certificate,
    joris_divide,
    quasi_driver,
    witness_chain,
)
from carleman.errors import CertificateMissing, InconsistentPowers, InvalidInput, LengthMismatch
from carleman.functions import Polynomial, function_from_builtin
from carleman.models import Certificate, CertificateBundle
from carleman.seqcore import WeightMatrix, sequence_from_builtin

EPS = [0.4, 0.2, 0.1]


@pytest.fixture(scope="module")
def G():
    return sequence_from_builtin("gevrey:2", K=64)


@pytest.fixture(scope="module")
def linear_report(G):
    g = function_from_builtin("square")
    h = Polynomial(coef=[0.0, 0.0, 0.0, 1.0], name="cube")
    return joris_divide(g, h, 2, [G] * 10, EPS, n=64, f_true=function_from_builtin("linear"))


def test_chain_length():
    assert [chain_length(j) for j in (1, 2, 3)] == [8, 10, 11]
    with pytest.raises(InvalidInput):
        chain_length(0)


def test_final_bound_argument_scales_with_c2():
    value = final_bound_argument(0.5, 2.0, 4, 0.1)
    assert value == pytest.approx(2 * 0.5 * (2 * math.e) ** 5 * 0.1)
    assert final_bound_argument(0.05, 2.0, 4, 0.1) == pytest.approx(value / 10)


@pytest.mark.parametrize("mode", ["R", "B"])
def test_chain_select_singleton_repeats_member(mode):
    M = sequence_from_builtin("gevrey:2", K=256)
    chain = chain_select(WeightMatrix(members=[(1.0, M)]), 2, mode)
    assert len(chain.members) == 10
    assert chain.indices == [0] * 10
    assert all(link.passed for link in chain.links)
    assert chain.links[0].detail == "gamma"
    assert chain.labels == ["gevrey:2"] * 10


def test_chain_select_missing_link():
    M = sequence_from_builtin("exp-k2", K=64)
    with pytest.raises(CertificateMissing):
        chain_select(WeightMatrix(members=[(1.0, M)]), 1)


def test_division_rejects_inconsistent_powers(G):
    g = function_from_builtin("square")
    h = function_from_builtin("linear")
    with pytest.raises(InconsistentPowers):
        joris_divide(g, h, 2, [G] * 10, EPS, n=64)


def test_division_needs_full_chain(G):
    f = function_from_builtin("square")
    with pytest.raises(LengthMismatch):
        joris_divide(f, f, 1, [G] * 3, EPS, n=64)


def test_division_of_zero_family(G):
    zero = function_from_builtin("zero")
    report = joris_divide(zero, zero, 3, [G] * 11, EPS, n=64)
    assert report.s == 2 ** 5
    assert report.violations == []
    for lv in report.levels:
        assert lv.delta == 0.0
        assert lv.u_sup == 0.0
        assert lv.v_sup == 0.0
        assert lv.err_final == 0.0
    assert (report.c5, report.c6, report.c7) == (0.0, 0.0, 0.0)


def test_division_recovers_identity(linear_report):
    report = linear_report
    assert report.violations == []
    assert report.k == 10
    assert report.s == 16
    assert report.levels[-1].err_final < 1e-6
    for lv in report.levels:
        assert lv.r == pytest.approx(lv.delta ** (1 / 3))
        assert lv.u_sup <= report.u_bound + lv.u_slack


def test_division_deltas_shrink_with_eps(linear_report):
    deltas = [lv.delta for lv in linear_report.levels]
    assert deltas == sorted(deltas, reverse=True)


def test_division_flags_floor_near_zero(linear_report):
    lo, hi = linear_report.floor_region
    assert lo <= 0.0 <= hi
    x = np.asarray(linear_report.recovered.x)
    y = np.asarray(linear_report.recovered.y)
    assert np.allclose(y, x, atol=1e-6)


def test_division_report_outputs(linear_report):
    rows = linear_report.csv_rows()
    assert len(rows) == len(linear_report.levels)
    assert rows[0][0] == 0.4
    restored = DivisionReport.model_validate_json(linear_report.model_dump_json())
    assert restored.c7 == linear_report.c7
    assert restored.levels[0].approximant is None


def test_witness_chain_ends_at_witness():
    M = family_Q(1, K=128)
    N = rescale_to_dominate(sequence_from_builtin("gevrey:2", K=128), M)
    chain = witness_chain(N, M, 2)
    assert chain[-1] is N
    assert chain[0].label == f"N'[{N.label}]"


def test_quasi_driver_without_witnesses():
    zero = function_from_builtin("zero")
    report = quasi_driver(zero, zero, 1, family_Q(1, K=64), [])
    assert report.reports == []
    assert report.passed


def test_holdout_certificate_accepts_decay():
    c, cert = holdout_certificate("v_bound", [1e-2, 5e-3, 2e-3, 1e-3], [1.0, 0.5, 0.25, 0.125])
    assert c == pytest.approx(1e-2)
    assert cert.passed
    assert cert.witness == pytest.approx(0.8, rel=1e-6)


def test_holdout_certificate_rejects_growth_on_fine_levels():
    c, cert = holdout_certificate("final_bound", [1e-2, 5e-3, 1.0], [1.0, 0.9, 0.8])
    assert c == pytest.approx(1.25)
    assert not cert.passed
    assert cert.witness > HOLDOUT_SLACK


def test_holdout_certificate_zero_and_single_level():
    c, cert = holdout_certificate("v_bound", [0.0, 0.0, 0.0], [1.0, 0.5, 0.25])
    assert (c, cert.passed, cert.witness) == (0.0, True, 0.0)
    c, cert = holdout_certificate("v_bound", [3.0], [1.0])
    assert c == 3.0
    assert cert.passed
    _, cert = holdout_certificate("v_bound", [0.0, 0.0, 1e-3], [1.0, 1.0, 1.0])
    assert not cert.passed


def test_division_certifies_measured_bounds(linear_report):
    assert linear_report.reference
    for name in ("u_bound", "three_lines", "fuep_bound", "v_bound", "final_bound", "final_nonincreasing"):
        assert name in MEASURED_BOUNDS
        assert linear_report.certificates.certificates[name].passed


def test_reference_bounds_count_only_with_reference(linear_report):
    bundle = CertificateBundle(certificates=dict(linear_report.certificates.certificates))
    bundle.add(Certificate(name="final_bound", passed=False, witness=5.0))
    bundle.add(Certificate(name="v_bound", passed=False, witness=5.0))
    with_ref = linear_report.model_copy(update={"certificates": bundle})
    assert with_ref.violations == ["v_bound", "final_bound"]
    without_ref = linear_report.model_copy(update={"certificates": bundle, "reference": False})
    assert without_ref.violations == ["v_bound"]


def test_division_of_gevrey_bump(G):
    f = function_from_builtin("bump:gevrey2")
    report = joris_divide(f.power(2), f.power(3), 2, [G] * 10, [0.2, 0.1, 0.05], n=64, f_true=f)
    assert report.reference
    assert (report.k, report.s) == (10, 16)
    assert report.chain == ["gevrey:2"] * 10
    assert set(MEASURED_BOUNDS) <= set(report.certificates.certificates)
    assert report.levels
    deltas = [lv.delta for lv in report.levels]
    assert deltas == sorted(deltas, reverse=True)
    for lv in report.levels:
        assert lv.delta <= 1.0
        assert lv.r == pytest.approx(lv.delta ** (1 / 3))
    assert len(report.csv_rows()) == len(report.levels)


def test_quasi_driver_with_witness():
    M = family_Q(1, K=128)
    N = rescale_to_dominate(sequence_from_builtin("gevrey:2", K=128), M)
    zero = function_from_builtin("zero")
    report = quasi_driver(zero, zero, 1, M, [N], eps_list=EPS, n=64)
    assert report.witnesses == [N.label]
    assert len(report.reports) == 1
    inner = report.reports[0]
    assert inner.k == 8
    assert inner.chain[-1] == N.label
    assert inner.violations == []
    assert report.passed
