"""
Complex-plane geometry and the d-bar solver
===========================================

Ellipses Omega_eps with foci +-1, the distance to [-1, 1], smooth cutoffs,
the Wirtinger derivative on uniform grids and the solid Cauchy transform

    v(z) = -(1/pi) sum_cells w(zeta)/(zeta - z) h^2,

which satisfies dbar v = w. Each cell is modelled as the disk of equal area:
a target inside a disk receives w(zeta) conj(z - zeta) from it, so on grid
nodes the cell holding the target contributes nothing. Sums run over fixed
source chunks with a compensated accumulator, so results do not depend on how
targets are split across workers.

Usage Examples:
---------------
grid = level_grid(0.2, n=256)
phi = cutoff_phi(grid, 0.2)
v = solve_dbar(grid.with_values(dbar(F).values * grid.mask))
v_off = cauchy_at(w, other_grid.z[other_grid.mask])
"""

import json
import math
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from carleman.config import NumericsConfig
from carleman.errors import GridTooCoarse, InvalidInput, SupportTouchesEdge
from carleman.logging import logger
from carleman.summation import Accumulator
from carleman.workers import map_bounded

CUTOFF_INNER = 0.5
CUTOFF_OUTER = 0.9
EDGE_CELLS = 2


class EllipseDomain(BaseModel):
    """Open ellipse with vertices +-cosh(eps) and co-vertices +-i sinh(eps)."""

    model_config = ConfigDict(frozen=True)

    eps: float = Field(gt=0)

    @property
    def a(self) -> float:
        return math.cosh(self.eps)

    @property
    def b(self) -> float:
        return math.sinh(self.eps)

    def boundary(self, samples: int) -> np.ndarray:
        theta = np.linspace(0.0, 2 * math.pi, samples, endpoint=False)
        return self.a * np.cos(theta) + 1j * self.b * np.sin(theta)


class GridFn(BaseModel):
    """Samples on a uniform grid over [-X, X] x [-Y, Y] centered at 0.

    ``values`` has shape (ny, nx) with rows along y; ``mask`` marks the nodes
    of Omega_eps. The row y = 0 carries the samples of [-1, 1].
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    eps: float
    h: float
    nx: int
    ny: int
    values: np.ndarray
    mask: np.ndarray
    meta: Dict[str, float] = Field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.h * (np.arange(self.nx) - (self.nx - 1) / 2)

    @property
    def y(self) -> np.ndarray:
        return self.h * (np.arange(self.ny) - (self.ny - 1) / 2)

    @property
    def z(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y)
        return xx + 1j * yy

    @property
    def X(self) -> float:
        return self.h * (self.nx - 1) / 2

    @property
    def Y(self) -> float:
        return self.h * (self.ny - 1) / 2

    def with_values(self, values, meta: Optional[Dict[str, float]] = None) -> "GridFn":
        values = np.asarray(values)
        if values.shape != (self.ny, self.nx):
            raise InvalidInput("grid shape mismatch", expected=(self.ny, self.nx), got=values.shape)
        return GridFn(
            eps=self.eps, h=self.h, nx=self.nx, ny=self.ny, values=values,
            mask=self.mask, meta=dict(meta or {}),
        )

    def sup(self, mask: Optional[np.ndarray] = None) -> float:
        vals = np.abs(self.values)
        if mask is not None:
            vals = vals[mask]
        return float(vals.max()) if vals.size else 0.0

    def domain_mask(self, eps: float) -> np.ndarray:
        return elliptic_radius(self.z) < eps

    def interval_columns(self) -> np.ndarray:
        return np.abs(self.x) <= 1.0 + 1e-12

    def on_interval(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x, values) along the row y = 0 restricted to [-1, 1]."""
        cols = self.interval_columns()
        return self.x[cols], self.values[(self.ny - 1) // 2, cols]

    def interval_sup(self) -> float:
        return float(np.max(np.abs(self.on_interval()[1])))

    def to_json(self) -> str:
        vals = np.asarray(self.values, dtype=complex)
        payload = {
            "eps": self.eps,
            "h": self.h,
            "shape": [self.ny, self.nx],
            "re": vals.real.ravel().tolist(),
            "im": vals.imag.ravel().tolist(),
            "mask": self.mask.ravel().astype(int).tolist(),
            "meta": self.meta,
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, json_str: str) -> "GridFn":
        try:
            data = json.loads(json_str)
            ny, nx = data["shape"]
            vals = np.asarray(data["re"]) + 1j * np.asarray(data["im"])
            return cls(
                eps=data["eps"], h=data["h"], nx=nx, ny=ny,
                values=vals.reshape(ny, nx),
                mask=np.asarray(data["mask"], dtype=bool).reshape(ny, nx),
                meta=data.get("meta", {}),
            )
        except (KeyError, ValueError, TypeError) as e:
            logger.error("Error deserializing GridFn", error=str(e))
            raise ValueError(f"Error deserializing GridFn: {e}")


class GeometryConstants(BaseModel):
    Cgeom: float
    Egeom: float


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def ellipse_contains(D: EllipseDomain, z):
    z = np.asarray(z, dtype=complex)
    inside = (z.real / D.a) ** 2 + (z.imag / D.b) ** 2 < 1.0
    return bool(inside) if inside.ndim == 0 else inside


def elliptic_radius(z) -> np.ndarray:
    """The s with z on the boundary of Omega_s; 0 on [-1, 1]."""
    z = np.asarray(z, dtype=complex)
    u = (np.abs(z - 1) + np.abs(z + 1)) / 2
    return np.arccosh(np.maximum(u, 1.0))


def dist_to_interval(z):
    z = np.asarray(z, dtype=complex)
    over = np.maximum(np.abs(z.real) - 1.0, 0.0)
    d = np.hypot(over, z.imag)
    return float(d) if d.ndim == 0 else d


def geometry_constants(epsmax: float, samples: Optional[int] = None) -> GeometryConstants:
    """Cgeom = sup d(z, [-1, 1])/eps on Omega_eps; Egeom the largest E with
    the disk of radius E(1-b)eps around x in [-b, b] inside Omega_{eps/2}.

    Both are scanned over eps in (0, epsmax] and b in [0, 0.95].
    """
    if not 0 < epsmax <= 1:
        raise InvalidInput("epsmax must lie in (0, 1]", epsmax=epsmax)
    samples = samples or NumericsConfig().boundary_samples
    eps_grid = np.linspace(epsmax / 32, epsmax, 32)
    C = 0.0
    E = math.inf
    for eps in eps_grid:
        edge = EllipseDomain(eps=eps).boundary(samples)
        C = max(C, float(np.max(dist_to_interval(edge))) / eps)
        half = EllipseDomain(eps=eps / 2).boundary(samples)
        for b in np.linspace(0.0, 0.95, 20):
            xs = np.linspace(-b, b, 21)
            clearance = np.min(np.abs(half[None, :] - xs[:, None]), axis=1)
            E = min(E, float(np.min(clearance)) / ((1.0 - b) * eps))
    logger.debug("Geometry constants", epsmax=epsmax, Cgeom=C, Egeom=E)
    return GeometryConstants(Cgeom=C, Egeom=E)


def level_grid(
    eps: float,
    n: Optional[int] = None,
    outer: Optional[float] = None,
    min_gap_cells: Optional[int] = None,
) -> GridFn:
    """Zero grid covering Omega_outer (default Omega_eps) plus two cells.

    The spacing is 2 cosh(outer)/n, refined when needed so that the gap
    between Omega_{eps/2} and Omega_eps spans ``min_gap_cells`` cells.
    """
    cfg = NumericsConfig()
    n = n or cfg.grid
    outer = outer or eps
    min_gap_cells = min_gap_cells or cfg.min_gap_cells
    gap = math.sinh(eps) - math.sinh(eps / 2)
    h = min(2 * math.cosh(outer) / n, gap / min_gap_cells)
    half_x = math.ceil((math.cosh(outer) + EDGE_CELLS * h) / h)
    half_y = math.ceil((math.sinh(outer) + EDGE_CELLS * h) / h)
    nx, ny = 2 * half_x + 1, 2 * half_y + 1
    grid = GridFn(
        eps=eps, h=h, nx=nx, ny=ny,
        values=np.zeros((ny, nx), dtype=complex),
        mask=np.zeros((ny, nx), dtype=bool),
    )
    grid.mask = grid.domain_mask(eps)
    return grid


# ---------------------------------------------------------------------------
# cutoff and Wirtinger derivative
# ---------------------------------------------------------------------------


def _smooth_step(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """exp-based step S with S = 0 for t <= 0 and 1 for t >= 1, and S'."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / t), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / (1.0 - t)), 0.0)
        s = a / (a + b)
        da = np.where(t > 0, a / t**2, 0.0)
        db = np.where(t < 1, -b / (1.0 - t) ** 2, 0.0)
        ds = (da * b - a * db) / (a + b) ** 2
    return s, np.nan_to_num(ds)


def cutoff_phi(grid: GridFn, eps: float) -> GridFn:
    """phi = 1 on Omega_{eps/2}, 0 outside Omega_{0.9 eps}, smooth in between.

    The largest gradient sits at the real vertices, where |grad rho| =
    1/sinh(rho); it is evaluated on a fine radial sampling and reported in
    meta as ``grad_max`` and ``grad_eps2`` = grad_max * eps^2.
    """
    gap = math.sinh(eps) - math.sinh(eps / 2)
    need = NumericsConfig().min_gap_cells
    if gap < need * grid.h * (1 - 1e-12):
        logger.error("Cutoff gap under-resolved", eps=eps, h=grid.h, gap=gap)
        raise GridTooCoarse(
            f"gap {gap:.3g} spans fewer than {need} cells of size {grid.h:.3g}",
            eps=eps, h=grid.h,
        )
    width = (CUTOFF_OUTER - CUTOFF_INNER) * eps
    s, _ = _smooth_step((CUTOFF_OUTER * eps - elliptic_radius(grid.z)) / width)
    rho = np.linspace(CUTOFF_INNER * eps, CUTOFF_OUTER * eps, 2001)
    _, ds = _smooth_step((CUTOFF_OUTER * eps - rho) / width)
    gmax = float(np.max(np.abs(ds) / (width * np.sinh(rho))))
    return grid.with_values(s, meta={"grad_max": gmax, "grad_eps2": gmax * eps**2})


def dbar(F: GridFn) -> GridFn:
    """(1/2)(d/dx + i d/dy) F with centered differences, one-sided at the edge."""
    vals = np.asarray(F.values, dtype=complex)
    dx = np.gradient(vals, F.h, axis=1)
    dy = np.gradient(vals, F.h, axis=0)
    return F.with_values(0.5 * (dx + 1j * dy))


# ---------------------------------------------------------------------------
# Cauchy transform
# ---------------------------------------------------------------------------


def _cauchy_sum(
    w: GridFn, support: np.ndarray, zt: np.ndarray, chunk: int, workers: Optional[int]
) -> np.ndarray:
    """-(1/pi) sum over cells of w h^2/(zeta - z) at the points ``zt``."""
    vals = np.asarray(w.values, dtype=complex)
    zs = w.z[support]
    raw = vals[support]
    r2 = w.h**2 / math.pi
    ws = raw * r2
    source_chunks = [slice(i, i + chunk) for i in range(0, zs.size, chunk)]
    target_chunks = [slice(i, i + chunk) for i in range(0, zt.size, chunk)]

    def transform(tc: slice) -> np.ndarray:
        t = zt[tc]
        acc = Accumulator(t.shape, dtype=complex)
        for sc in source_chunks:
            diff = zs[None, sc] - t[:, None]
            # inside a cell, the transform of the disk of equal area
            near = diff.real**2 + diff.imag**2 < r2
            terms = np.divide(ws[None, sc], diff, out=np.zeros(diff.shape, dtype=complex), where=~near)
            if near.any():
                terms += np.where(near, raw[None, sc] * np.conj(diff), 0)
            acc.add(-terms.sum(axis=1))
        return acc.sum()

    parts = map_bounded(transform, target_chunks, workers)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=complex)


def cauchy_at(
    w: GridFn, points, chunk: Optional[int] = None, workers: Optional[int] = None
) -> np.ndarray:
    """Solid Cauchy transform of w at arbitrary complex ``points``."""
    points = np.asarray(points, dtype=complex)
    support = np.asarray(w.values) != 0
    if not support.any():
        return np.zeros(points.shape, dtype=complex)
    flat = _cauchy_sum(w, support, points.ravel(), chunk or NumericsConfig().chunk, workers)
    return flat.reshape(points.shape)


def solve_dbar(
    w: GridFn,
    targets: Optional[np.ndarray] = None,
    chunk: Optional[int] = None,
    workers: Optional[int] = None,
) -> GridFn:
    """Solid Cauchy transform of w evaluated on ``targets`` (default all nodes).

    meta: ``bound`` = 2 r_eq sup|w| with r_eq the radius of the disk of the
    same area as the support, and ``sup`` the measured sup of v on targets.
    """
    chunk = chunk or NumericsConfig().chunk
    vals = np.asarray(w.values, dtype=complex)
    support = vals != 0
    if targets is None:
        targets = np.ones_like(support)
    edge = np.zeros_like(support)
    edge[:EDGE_CELLS, :] = edge[-EDGE_CELLS:, :] = True
    edge[:, :EDGE_CELLS] = edge[:, -EDGE_CELLS:] = True
    if np.any(support & edge):
        logger.error("Source touches the grid edge", eps=w.eps, h=w.h)
        raise SupportTouchesEdge("d-bar source reaches the outer grid cells", eps=w.eps)

    out = np.zeros_like(vals)
    if not support.any():
        return w.with_values(out, meta={"bound": 0.0, "sup": 0.0})

    out[targets] = _cauchy_sum(w, support, w.z[targets], chunk, workers)
    r_eq = math.sqrt(support.sum() * w.h**2 / math.pi)
    bound = 2.0 * r_eq * float(np.abs(vals).max())
    sup = float(np.abs(out[targets]).max()) if targets.any() else 0.0
    logger.debug(
        "Cauchy transform", sources=int(support.sum()), targets=int(targets.sum()), sup=sup, bound=bound
    )
    return w.with_values(out, meta={"bound": bound, "sup": sup, "support_radius": r_eq})
