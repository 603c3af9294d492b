import math

import numpy as np
import pytest

from carleman.approx import (
    ApproxFamily,
    almost_analytic_ext,
    dynkin,
    holo_forward,
    holo_inverse,
    rescale_family,
    seminorm,
    three_lines_family,
    three_lines_shrink,
)
from carleman.cplane import elliptic_radius, level_grid
from carleman.errors import (
    DerivativeCapBinds,
    HypothesisFailed,
    InvalidInput,
    TailNotSummable,
    ViolationFound,
)
from carleman.functions import Polynomial, function_from_builtin
from carleman.seqcore import AssocFns, sequence_from_builtin


@pytest.fixture(scope="module")
def G():
    return sequence_from_builtin("gevrey:2", K=64)


@pytest.fixture(scope="module")
def grid():
    return level_grid(0.4, n=64)


@pytest.fixture(scope="module")
def square_family(G):
    return holo_forward(function_from_builtin("square"), (G, G, G), [0.4, 0.2], n=64, workers=1)


@pytest.fixture(scope="module")
def pole_family(G):
    return holo_forward(function_from_builtin("analytic"), (G, G, G), [0.4, 0.2, 0.1], n=64)


@pytest.fixture(scope="module")
def bump_family(G):
    return holo_forward(function_from_builtin("bump:gevrey2"), (G, G, G), [0.4, 0.2, 0.1], n=64)


def test_dynkin_reproduces_polynomials(grid):
    cube = Polynomial(coef=[0.0, 0.0, 0.0, 1.0], name="cube")
    F, W = dynkin(cube, grid, np.full((grid.ny, grid.nx), 5))
    assert np.allclose(F, grid.z**3)
    assert np.all(W == 0)


def test_almost_analytic_ext_cap_binds(grid):
    f = function_from_builtin("square")
    M = sequence_from_builtin("factorial", K=64)
    F = almost_analytic_ext(f, M, 0.5, grid=grid)
    assert np.allclose(F.values, grid.z**2)
    assert F.meta["cap_binds"] == 1.0
    assert F.meta["C_measured"] == 0.0
    with pytest.raises(DerivativeCapBinds):
        almost_analytic_ext(f, M, 0.5, grid=grid, strict=True)


def test_almost_analytic_ext_envelope(grid, G):
    f = function_from_builtin("bump:gevrey2")
    F = almost_analytic_ext(f, G, 1.0, grid=grid)
    assert F.meta["d_floor"] < 0.025
    assert 0.0 < F.meta["C_measured"] < math.inf
    assert F.meta["rho_fit"] > 0.0
    on_line = F.values[(grid.ny - 1) // 2]
    assert np.allclose(on_line, f(grid.x))


def test_almost_analytic_ext_cutoff(grid, G):
    f = function_from_builtin("bump:gevrey2")
    F = almost_analytic_ext(f, G, 1.0, grid=grid, chi_eps=0.4)
    outside = elliptic_radius(grid.z) >= 0.36
    assert np.all(F.values[outside] == 0)


def test_forward_exact_for_polynomial(square_family):
    fam = square_family
    assert [lv.error for lv in fam.levels] == [0.0, 0.0]
    assert fam.floor
    assert fam.c1 == 0.0
    assert fam.K >= 1.0


def test_forward_pole_errors_decrease(pole_family):
    errors = [lv.error for lv in pole_family.levels]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-6
    orders = [lv.order for lv in pole_family.levels]
    assert orders == sorted(orders)


def test_forward_bound_covers_every_level(pole_family):
    for eps, err, bound in pole_family.error_rows():
        assert err <= bound * (1 + 1e-9)


def test_forward_gevrey_bump_fit(bump_family):
    fam = bump_family
    assert len(fam.levels) == 3
    assert 0.0 < fam.K < math.inf
    assert all(0.0 < lv.error < math.inf for lv in fam.levels)
    for eps, err, bound in fam.error_rows():
        assert err <= bound * (1 + 1e-9)
    assert 2.0**-6 <= fam.c2 / fam.c2_predicted <= 2.0**6 * (1 + 1e-12)
    if fam.correlation is not None:
        assert -1.0 - 1e-12 <= fam.correlation <= 1.0 + 1e-12


def test_family_json_drops_approximants(square_family):
    restored = ApproxFamily.model_validate_json(square_family.model_dump_json())
    assert restored.K == square_family.K
    assert restored.levels[0].approximant is None
    assert square_family.levels[0].approximant is not None


def test_three_lines_holds_for_entire_function(G):
    g = level_grid(0.2, n=64)
    z = g.z
    gz = g.with_values(np.where(g.mask, z, 0))
    m = AssocFns(logv=G.logm.tolist())
    L = gz.sup(g.mask)
    res = three_lines_shrink(gz, L=L, a1=1.0, a2=10.0, m=m, n=m, C=1.0)
    assert res.holds
    assert res.measured <= L


def test_three_lines_hypotheses(G):
    g = level_grid(0.2, n=64)
    gz = g.with_values(np.where(g.mask, g.z, 0))
    m = AssocFns(logv=G.logm.tolist())
    with pytest.raises(HypothesisFailed):
        three_lines_shrink(gz, L=0.5, a1=1.0, a2=10.0, m=m, n=m, C=1.0)


def test_three_lines_detects_violation(G):
    g = level_grid(0.2, n=64)
    ones = g.with_values(np.where(g.mask, 1.0 + 0j, 0))
    m = AssocFns(logv=G.logm.tolist())
    k = np.arange(G.K + 1)
    n = AssocFns(logv=(G.logm + k * math.log(0.01)).tolist())
    with pytest.raises(ViolationFound):
        three_lines_shrink(ones, L=1.0, a1=1.0, a2=10.0, m=m, n=n, C=1.0)
    res = three_lines_shrink(ones, L=1.0, a1=1.0, a2=10.0, m=m, n=n, C=1.0, strict=False)
    assert not res.holds
    assert res.slack == 0.0


@pytest.mark.parametrize("a1,L,expected", [(1.0, 4.0, 2.0), (2.0, 1.0, 2.0)])
def test_three_lines_intermediate_is_geometric_mean(G, a1, L, expected):
    g = level_grid(0.2, n=64)
    ones = g.with_values(np.where(g.mask, 1.0 + 0j, 0))
    m = AssocFns(logv=G.logm.tolist())
    res = three_lines_shrink(ones, L=L, a1=a1, a2=10.0, m=m, n=m, C=1.0)
    # h_m(2) = 1 for m_k = k!
    assert res.intermediate == pytest.approx(expected)
    assert res.intermediate <= res.certified * (1 + 1e-12)
    assert res.measured <= res.intermediate * (1 + 1e-12)


def test_three_lines_family_vanishes_for_polynomial(square_family, G):
    results = three_lines_family(function_from_builtin("square"), square_family, G, G)
    assert [r.eps for r in results] == [0.2]
    assert results[0].measured == 0.0
    assert results[0].holds


@pytest.mark.parametrize("family", ["pole_family", "bump_family"])
def test_three_lines_family_pairs(request, G, family):
    fam = request.getfixturevalue(family)
    f = function_from_builtin("analytic" if family == "pole_family" else "bump:gevrey2")
    results = three_lines_family(f, fam, G, G)
    assert [r.eps for r in results] == [0.2, 0.1]
    for r in results:
        assert math.isfinite(r.certified) and r.certified >= 0.0
        assert 0.0 <= r.intermediate < math.inf
        assert math.isfinite(r.measured)


def test_three_lines_family_needs_approximants(pole_family, G):
    restored = ApproxFamily.model_validate_json(pole_family.model_dump_json())
    with pytest.raises(InvalidInput):
        three_lines_family(function_from_builtin("analytic"), restored, G, G)


def test_inverse_sigma_scales_with_family(square_family, G):
    cert = holo_inverse(square_family, (G, G, G), b=0.5)
    scaled = holo_inverse(rescale_family(square_family, 10.0), (G, G, G), b=0.5)
    assert scaled.sigma == pytest.approx(cert.sigma / 10.0, rel=1e-12)
    assert math.isfinite(cert.A)


def test_inverse_bounds_cover_measured_derivatives(square_family, G):
    cert = holo_inverse(square_family, (G, G, G), b=0.5, f=function_from_builtin("square"))
    assert cert.measured_ok
    assert cert.kmax == 40


def test_inverse_tail_not_summable(square_family, G):
    with pytest.raises(TailNotSummable):
        holo_inverse(square_family, (G, G, G), b=0.5, max_terms=3)


def test_seminorm_of_identity():
    M = sequence_from_builtin("factorial", K=64)
    assert seminorm(function_from_builtin("linear"), M, 1.0) == pytest.approx(1.0)
