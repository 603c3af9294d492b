import math

import numpy as np
import pytest

from carleman.cplane import (
    EllipseDomain,
    GridFn,
    cauchy_at,
    cutoff_phi,
    dbar,
    dist_to_interval,
    elliptic_radius,
    ellipse_contains,
    geometry_constants,
    level_grid,
    solve_dbar,
)
from carleman.errors import GridTooCoarse, SupportTouchesEdge


@pytest.fixture(scope="module")
def grid():
    return level_grid(0.4, n=128)


def test_ellipse_contains():
    D = EllipseDomain(eps=0.3)
    assert ellipse_contains(D, 0)
    assert not ellipse_contains(D, math.cosh(0.3))
    assert ellipse_contains(D, 1j * math.sinh(0.3) / 2)
    assert D.a**2 - D.b**2 == pytest.approx(1.0)


def test_elliptic_radius_on_boundary():
    D = EllipseDomain(eps=0.25)
    assert np.allclose(elliptic_radius(D.boundary(64)), 0.25)
    assert elliptic_radius(0.3) == 0.0


def test_dist_to_interval():
    assert dist_to_interval(0.5 + 0.3j) == pytest.approx(0.3)
    assert dist_to_interval(2.0) == pytest.approx(1.0)
    assert dist_to_interval(1 + 1j) == pytest.approx(1.0)


def test_geometry_constants():
    consts = geometry_constants(1.0, samples=256)
    assert consts.Cgeom == pytest.approx(math.sinh(1.0), rel=1e-9)
    assert 0.45 <= consts.Egeom <= math.sinh(0.5) + 1e-9


def test_level_grid_resolves_gap():
    g = level_grid(0.05, n=64)
    assert (math.sinh(0.05) - math.sinh(0.025)) / g.h >= 8 - 1e-9
    assert g.X >= math.cosh(0.05)
    assert g.Y >= math.sinh(0.05)
    assert g.mask[(g.ny - 1) // 2, (g.nx - 1) // 2]


def test_cutoff_values(grid):
    phi = cutoff_phi(grid, 0.4)
    vals = phi.values.real
    assert vals[(grid.ny - 1) // 2, (grid.nx - 1) // 2] == 1.0
    assert np.all((vals >= 0) & (vals <= 1))
    assert np.all(vals[grid.domain_mask(0.2)] == 1.0)
    assert np.all(vals[~grid.domain_mask(0.4)] == 0.0)


def test_cutoff_gradient_scales_like_inverse_square():
    scaled = []
    for eps in (0.4, 0.2, 0.1):
        phi = cutoff_phi(level_grid(eps, n=64), eps)
        scaled.append(phi.meta["grad_eps2"])
    assert max(scaled) <= 2 * min(scaled)


def test_cutoff_rejects_coarse_grid(grid):
    with pytest.raises(GridTooCoarse):
        cutoff_phi(grid, 0.05)


def test_dbar_wirtinger_identities(grid):
    z = grid.z
    inner = grid.domain_mask(0.3)
    assert np.max(np.abs(dbar(grid.with_values(z)).values[inner])) < 1e-9
    assert np.allclose(dbar(grid.with_values(np.conj(z))).values[inner], 1.0)
    assert np.allclose(dbar(grid.with_values(np.abs(z) ** 2)).values[inner], z[inner], atol=1e-9)


def test_solve_dbar_zero(grid):
    v = solve_dbar(grid)
    assert np.all(v.values == 0)


def test_solve_dbar_disk_indicator(grid):
    z = grid.z
    w = grid.with_values((np.abs(z) < 0.3).astype(complex))
    inner = np.abs(z) < 0.1
    v = solve_dbar(w, targets=inner)
    assert np.max(np.abs(v.values[inner] - np.conj(z[inner]))) < 0.02
    assert v.meta["sup"] <= v.meta["bound"]


def test_solve_dbar_residual_for_smooth_source(grid):
    z = grid.z
    r2 = np.abs(z) ** 2 / 0.09
    w = grid.with_values(np.where(r2 < 1, (1 - r2) ** 3, 0.0).astype(complex))
    v = solve_dbar(w)
    inner = np.abs(z) < 0.25
    residual = dbar(v).values[inner] - w.values[inner]
    assert np.max(np.abs(residual)) < 0.05


def _smooth_source(grid):
    r2 = np.abs(grid.z) ** 2 / 0.09
    return grid.with_values(np.where(r2 < 1, (1 - r2) ** 3, 0.0).astype(complex))


def test_solve_dbar_residual_shrinks_under_refinement():
    residuals = []
    for n in (64, 128):
        g = level_grid(0.4, n=n)
        w = _smooth_source(g)
        v = solve_dbar(w)
        inner = np.abs(g.z) < 0.25
        residuals.append(float(np.max(np.abs(dbar(v).values[inner] - w.values[inner]))))
    assert residuals[1] < residuals[0]


def test_cauchy_at_matches_grid_solver(grid):
    w = _smooth_source(grid)
    v = solve_dbar(w)
    inner = np.abs(grid.z) < 0.25
    assert np.allclose(cauchy_at(w, grid.z[inner]), v.values[inner], rtol=1e-12, atol=1e-15)


def test_cauchy_at_off_grid_disk_indicator(grid):
    w = grid.with_values((np.abs(grid.z) < 0.3).astype(complex))
    h = grid.h
    points = np.array([0.3 * h + 0.2j * h, 0.05 + 0.5 * h + 0.5j * h, -0.04 - 0.03j])
    v = cauchy_at(w, points)
    assert np.all(np.isfinite(v))
    assert np.max(np.abs(v - np.conj(points))) < 0.05


def test_solve_dbar_is_linear_and_partition_independent(grid):
    z = grid.z
    disk = np.abs(z) < 0.3
    w1 = grid.with_values(np.where(disk, z, 0))
    w2 = grid.with_values(np.where(disk, 1.0, 0.0).astype(complex))
    combo = grid.with_values(2.5 * w1.values + w2.values)
    lhs = solve_dbar(combo, chunk=512).values
    rhs = 2.5 * solve_dbar(w1, chunk=512).values + solve_dbar(w2, chunk=512).values
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
    one = solve_dbar(w1, chunk=512, workers=1).values
    many = solve_dbar(w1, chunk=512, workers=4).values
    assert np.array_equal(one, many)


def test_solve_dbar_rejects_edge_support(grid):
    vals = np.zeros((grid.ny, grid.nx), dtype=complex)
    vals[0, grid.nx // 2] = 1.0
    with pytest.raises(SupportTouchesEdge):
        solve_dbar(grid.with_values(vals))


def test_grid_fn_json_round_trip(grid):
    g = grid.with_values(grid.z, meta={"sup": 1.0})
    restored = GridFn.from_json(g.to_json())
    assert np.array_equal(restored.values, g.values)
    assert np.array_equal(restored.mask, g.mask)
    assert restored.meta == {"sup": 1.0}
