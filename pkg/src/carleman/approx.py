"""
Holomorphic approximation
=========================

Almost analytic extensions, the forward approximation of a smooth function by
holomorphic functions on shrinking ellipses, the three-lines shrink and the
inverse direction (derivative bounds recovered from an approximating family).

Key Concepts:
-------------
- Dynkin extension: F(x+iy) = sum_{k<=N} f^(k)(x)(iy)^k/k!, whose d-bar is
  exactly (1/2) f^(N+1)(x)(iy)^N/N!.
- ApproxFamily: per-eps holomorphic f_eps on Omega_eps with the measured
  constants K = sup ||f_eps|| and (c1, c2) fitted so that
  ||f - f_eps||_[-1,1] <= c1 h_m(c2 eps) on every stored level.
- holo_inverse: telescoping f = f_eps0 + sum (f_eps - f_2eps) with Cauchy
  estimates gives derivative bounds A sigma^k N_k.
- three_lines_family: the differences f_eps - f_2eps, certified on
  Omega_eps/2 from their size on Omega_eps and on [-1, 1].

Usage Examples:
---------------
fam = holo_forward(f, (G, G, G), [0.4, 0.2, 0.1], n=128)
cert = holo_inverse(fam, (G, G, G), b=0.5)
shrinks = three_lines_family(f, fam, G, G)

Design Notes:
-------------
- Each level freezes its truncation order N_eps, so F is smooth on Omega_eps
  and w_eps = dbar F is known in closed form; only the Cauchy transform is
  numerical.
- Levels are independent and run through ``map_bounded``.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from carleman.config import NumericsConfig
from carleman.cplane import (
    GridFn,
    _smooth_step,
    cauchy_at,
    dbar,
    dist_to_interval,
    elliptic_radius,
    geometry_constants,
    level_grid,
    solve_dbar,
)
from carleman.errors import (
    DerivativeCapBinds,
    HypothesisFailed,
    InvalidInput,
    TailNotSummable,
    ViolationFound,
)
from carleman.functions import SmoothFn1D
from carleman.logging import logger
from carleman.models import log_correlation
from carleman.seqcore import (
    AssocFns,
    WeightSequence,
    gamma_lower_many,
    h_log_many,
    moderate_growth_constant,
    regularity_certificate,
)
from carleman.workers import map_bounded

FIT_SPAN = 6.0
FIT_STEPS = 49
ERROR_FLOOR = 1e-12
MAX_TERMS = 200


class ApproxLevel(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    eps: float
    order: int
    h: float
    sup: float
    error: float
    dbar_sup: float
    approximant: Optional[GridFn] = Field(default=None, exclude=True)


class ApproxFamily(BaseModel):
    """Holomorphic approximants f_eps with the constants (K, c1, c2)."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    function: str
    source: str
    eps_list: List[float]
    levels: List[ApproxLevel]
    K: float
    c1: float
    c2: float
    c2_predicted: float
    rho: float
    floor: bool = False
    correlation: Optional[float] = None
    source_logm: List[float] = Field(default_factory=list)

    def bound(self, eps) -> np.ndarray:
        """c1 h_m(c2 eps) for the source sequence m."""
        logh, _ = h_log_many(np.asarray(self.source_logm), self.c2 * np.atleast_1d(eps))
        return self.c1 * np.exp(logh)

    def error_rows(self) -> List[Tuple[float, float, float]]:
        bounds = self.bound(self.eps_list)
        return [(lv.eps, lv.error, float(b)) for lv, b in zip(self.levels, bounds)]

    @property
    def c2_in_band(self) -> bool:
        return 0.1 <= self.c2 / self.c2_predicted <= 10.0


class ShrinkResult(BaseModel):
    eps: float
    certified: float
    intermediate: float
    measured: float
    slack: float
    holds: bool


class InverseCertificate(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    chain: List[str]
    b: float
    sigma: float
    A: float
    kmax: int
    D1: float
    D2: float
    E: float
    log_bounds: List[float]
    measured_ok: Optional[bool] = None


# ---------------------------------------------------------------------------
# almost analytic extension
# ---------------------------------------------------------------------------


def dynkin(f: SmoothFn1D, grid: GridFn, orders: np.ndarray):
    """F and dbar F on the grid for per-node truncation orders."""
    top = int(orders.max())
    T = f.taylor(grid.x, top + 1)
    iy = 1j * grid.y
    F = np.zeros((grid.ny, grid.nx), dtype=complex)
    W = np.zeros_like(F)
    p = np.ones(grid.ny, dtype=complex)
    for k in range(top + 1):
        F += np.where(orders >= k, np.outer(p, T[k]), 0)
        W += np.where(orders == k, 0.5 * (k + 1) * np.outer(p, T[k + 1]), 0)
        p = p * iy
    return F, W


def almost_analytic_ext(
    f: SmoothFn1D,
    M: WeightSequence,
    rho: float,
    grid: Optional[GridFn] = None,
    chi_eps: Optional[float] = None,
    strict: bool = False,
) -> GridFn:
    """Dynkin extension with N(z) = min(dcap - 1, Gamma-under_m(rho d(z))).

    meta: ``C_measured`` and ``rho_fit`` for |dbar F| <= C h_m(rho' d),
    measured for d in [4h, 0.5] above ``d_floor`` (the largest distance
    where the derivative cap binds), ``cap_binds`` as 0/1.
    """
    grid = grid or level_grid(0.4)
    z = grid.z
    d = dist_to_interval(z)
    logm = M.logm
    cap = f.dcap - 1
    with np.errstate(divide="ignore"):
        wanted = gamma_lower_many(logm, (rho * d).ravel()).reshape(d.shape)
    wanted = np.where(d > 0, wanted, M.K)
    orders = np.minimum(wanted, cap)
    F, W = dynkin(f, grid, orders)

    if chi_eps is not None:
        width = 0.4 * chi_eps
        chi, _ = _smooth_step((0.9 * chi_eps - elliptic_radius(z)) / width)
        dchi = dbar(grid.with_values(chi.astype(complex))).values
        W = W * chi + F * dchi
        F = F * chi
        logger.debug("Cutoff applied", chi_eps=chi_eps)

    binds = (wanted > cap) & (d > 0)
    d_floor = float(d[binds].max()) if binds.any() else 0.0
    if binds.any():
        msg = "Derivative cap binds near the interval"
        if strict:
            logger.error(msg, d_floor=d_floor, cap=cap)
            raise DerivativeCapBinds(msg, d_floor=d_floor, cap=cap)
        logger.warning(msg, d_floor=d_floor, cap=cap)

    band = (d >= 4 * grid.h) & (d <= 0.5) & (d > d_floor)
    C_measured, rho_fit = _envelope(np.abs(W[band]), d[band], logm, rho)
    meta = {
        "C_measured": C_measured,
        "rho_fit": rho_fit,
        "cap_binds": float(binds.any()),
        "d_floor": d_floor,
        "dbar_sup": float(np.abs(W).max()),
    }
    return grid.with_values(F, meta=meta)


def _envelope(w: np.ndarray, d: np.ndarray, logm: np.ndarray, rho: float) -> Tuple[float, float]:
    """Smallest rho' in rho 2^[-4..8] whose constant is within 2x of the best."""
    if w.size == 0 or not np.any(w > 0):
        return 0.0, rho
    candidates = rho * 2.0 ** np.arange(-4, 9)
    consts = []
    for r in candidates:
        logh, _ = h_log_many(logm, r * d)
        consts.append(float(np.max(w / np.exp(logh))))
    best = min(consts)
    for r, c in zip(candidates, consts):
        if c <= 2.0 * best:
            return c, float(r)
    return best, float(candidates[-1])


# ---------------------------------------------------------------------------
# forward approximation
# ---------------------------------------------------------------------------


def _frozen_order(logm: np.ndarray, rho: float, eps: float, cap: int) -> int:
    k = int(gamma_lower_many(logm, np.array([rho * math.sinh(eps)]))[0])
    return min(k, cap)


def _solve_level(f: SmoothFn1D, eps: float, order: int, n: Optional[int]) -> ApproxLevel:
    grid = level_grid(eps, n)
    orders = np.full((grid.ny, grid.nx), order)
    F, W = dynkin(f, grid, orders)
    w = grid.with_values(np.where(grid.mask, W, 0))
    # holomorphic on the mask only
    v = solve_dbar(w, workers=1)
    fe = grid.with_values(F - v.values)
    x, on_line = fe.on_interval()
    error = float(np.max(np.abs(f(x) - on_line)))
    return ApproxLevel(
        eps=eps,
        order=order,
        h=grid.h,
        sup=fe.sup(grid.mask),
        error=error,
        dbar_sup=float(np.abs(w.values).max()),
        approximant=fe,
    )


def holo_forward(
    f: SmoothFn1D,
    chain: Sequence[WeightSequence],
    eps_list: Optional[Sequence[float]] = None,
    n: Optional[int] = None,
    rho: float = 1.0,
    workers: Optional[int] = None,
) -> ApproxFamily:
    """Approximate f on [-1, 1] by f_eps = F_eps - v_eps, holomorphic on Omega_eps.

    Approximants are stored on the whole level grid; K is measured on Omega_eps.
    """
    M1, M2, M3 = chain
    eps_list = list(eps_list or NumericsConfig().eps_list())
    B1 = regularity_certificate(M1, M2, "R").C_gamma or 1.0
    B2 = float(np.exp(np.max((M2.logm[1:] - M3.logm[:-1]) / np.arange(1, M2.K + 1))))
    Cgeom = geometry_constants(min(1.0, max(eps_list))).Cgeom
    c2_pred = Cgeom * rho * B1
    cap = f.dcap - 1
    orders = [_frozen_order(M1.logm, rho, eps, cap) for eps in eps_list]
    logger.info(
        "Forward approximation",
        function=f.name,
        chain=[M.label for M in chain],
        eps=eps_list,
        orders=orders,
        B1=B1,
        B2=B2,
    )
    levels = map_bounded(
        lambda job: _solve_level(f, job[0], job[1], n), list(zip(eps_list, orders)), workers
    )
    K = max(lv.sup for lv in levels)
    c1, c2, floor, corr = _fit_constants(
        np.array(eps_list), np.array([lv.error for lv in levels]), M3.logm, c2_pred
    )
    fam = ApproxFamily(
        function=f.name,
        source=M3.label,
        eps_list=eps_list,
        levels=levels,
        K=K,
        c1=c1,
        c2=c2,
        c2_predicted=c2_pred,
        rho=rho,
        floor=floor,
        correlation=corr,
        source_logm=[float(v) for v in M3.logm],
    )
    if not fam.c2_in_band:
        logger.warning("Fitted c2 outside 10x band", c2=c2, predicted=c2_pred)
    logger.info("Forward family fitted", K=K, c1=c1, c2=c2, floor=floor, correlation=corr)
    return fam


def _fit_constants(
    eps: np.ndarray, err: np.ndarray, logm: np.ndarray, c2_pred: float
) -> Tuple[float, float, bool, Optional[float]]:
    order = np.argsort(-eps)
    eps, err = eps[order], err[order]
    seg = 1
    while seg < err.size and err[seg] < err[seg - 1]:
        seg += 1
    scale = max(1.0, float(err.max()))
    floor = seg < 2 or float(err[:seg].min()) <= ERROR_FLOOR * scale
    corr = None
    c2 = c2_pred
    if not floor:
        best = math.inf
        le = np.log(err[:seg])
        for c in c2_pred * 2.0 ** np.linspace(-FIT_SPAN, FIT_SPAN, FIT_STEPS):
            logh, _ = h_log_many(logm, c * eps[:seg])
            resid = le - logh
            sse = float(np.sum((resid - resid.mean()) ** 2))
            if sse < best:
                best, c2 = sse, float(c)
        logh, _ = h_log_many(logm, c2 * eps[:seg])
        corr = log_correlation(err[:seg], np.exp(logh))
        if math.isnan(corr):
            corr = None
    logh, _ = h_log_many(logm, c2 * eps)
    with np.errstate(divide="ignore", over="ignore"):
        c1 = float(np.exp(np.max(np.log(err) - logh)))
    return c1, c2, floor, corr


def rescale_family(fam: ApproxFamily, lam: float) -> ApproxFamily:
    """The same approximants read at scale lam: c2 -> c2/lam."""
    return fam.model_copy(
        update={"c2": fam.c2 / lam, "c2_predicted": fam.c2_predicted / lam}
    )


# ---------------------------------------------------------------------------
# three lines and the inverse direction
# ---------------------------------------------------------------------------


def interior_nodes(region: np.ndarray) -> np.ndarray:
    """Nodes of ``region`` whose four neighbours also lie in it."""
    core = np.zeros_like(region)
    core[1:-1, 1:-1] = (
        region[1:-1, 1:-1]
        & region[:-2, 1:-1]
        & region[2:, 1:-1]
        & region[1:-1, :-2]
        & region[1:-1, 2:]
    )
    return core


def grid_slack(g: GridFn, region: np.ndarray) -> float:
    """2h times the largest centered-difference gradient on interior nodes of ``region``."""
    vals = np.asarray(g.values, dtype=complex)
    gx = np.gradient(vals, g.h, axis=1)
    gy = np.gradient(vals, g.h, axis=0)
    core = interior_nodes(region)
    if not core.any():
        return 0.0
    return 2 * g.h * float(np.max(np.hypot(np.abs(gx), np.abs(gy))[core]))


def three_lines_shrink(
    g: GridFn,
    L: float,
    a1: float,
    a2: float,
    m: AssocFns,
    n: AssocFns,
    C: float,
    strict: bool = True,
    tol: float = 1e-9,
) -> ShrinkResult:
    """||g||_{Omega_eps/2} <= max(a1, L) h_n(e C a2 eps).

    Hypotheses: ||g||_{Omega_eps} <= L and ||g||_[-1,1] <= a1 h_m(a2 eps).
    The measured sup may exceed the certified bound by 2h times the grid
    Lipschitz estimate over nodes whose neighbours all lie in Omega_eps.

    ``intermediate`` is the two-constants step: log|g| is subharmonic off
    [-1, 1], at most log max(a1, L) on the boundary of Omega_eps and
    log(a1 h_m) on the segment. At distance y from the segment the harmonic
    measure of the segment is 1 - y/eps (three lines), at least 1/2 on
    Omega_eps/2, so there

        |g| <= (a1 h_m)^(1/2) max(a1, L)^(1/2) = a1 (max(1, L/a1) h_m)^(1/2).

    Moderate growth m_{2j} <= C^{2j} n_j^2 gives h_m(t)^(1/2) <= h_n(C t)
    <= h_n(e C t), and a1 max(1, L/a1)^(1/2) <= max(a1, L), which is the
    certified value.
    """
    eps = g.eps
    inner = g.domain_mask(eps)
    outer_sup = g.sup(inner)
    line_sup = g.interval_sup()
    hm = max(math.exp(h_log_many(m.values, np.array([a2 * eps]))[0][0]), 1e-300)
    if outer_sup > L * (1 + tol) + tol or line_sup > a1 * hm * (1 + tol) + tol:
        logger.error(
            "Three-lines hypotheses not met", eps=eps, outer=outer_sup, L=L,
            line=line_sup, line_bound=a1 * hm,
        )
        raise HypothesisFailed(
            "input bounds do not hold on the grid", eps=eps, outer=outer_sup, line=line_sup
        )
    a3 = max(a1, L)
    hn = math.exp(h_log_many(n.values, np.array([math.e * C * a2 * eps]))[0][0])
    certified = a3 * hn
    ratio = max(1.0, L / a1) if a1 > 0 else 1.0
    intermediate = a1 * math.sqrt(ratio * hm)
    slack = grid_slack(g, inner)
    measured = g.sup(g.domain_mask(eps / 2))
    holds = measured <= certified + slack
    result = ShrinkResult(
        eps=eps, certified=certified, intermediate=intermediate,
        measured=measured, slack=slack, holds=holds,
    )
    if not holds:
        if strict:
            logger.error("Three-lines bound exceeded", **result.model_dump())
            raise ViolationFound(
                f"sup on Omega_eps/2 {measured:.3g} exceeds {certified:.3g}", eps=eps
            )
        logger.warning("Three-lines bound exceeded", **result.model_dump())
    return result


def _approximant_at(f: SmoothFn1D, level: ApproxLevel, grid: GridFn, workers: Optional[int]) -> np.ndarray:
    """f_eps of ``level`` at the nodes of another grid inside its Omega_eps."""
    src = level.approximant
    _, W = dynkin(f, src, np.full((src.ny, src.nx), level.order))
    w = src.with_values(np.where(src.mask, W, 0))
    F, _ = dynkin(f, grid, np.full((grid.ny, grid.nx), level.order))
    v = np.zeros_like(F)
    v[grid.mask] = cauchy_at(w, grid.z[grid.mask], workers=workers)
    return F - v


def three_lines_family(
    f: SmoothFn1D,
    fam: ApproxFamily,
    M: WeightSequence,
    N: WeightSequence,
    strict: bool = False,
    workers: Optional[int] = None,
) -> List[ShrinkResult]:
    """Three-lines shrink of g_eps = f_eps - f_2eps for each stored pair (eps, 2eps).

    On [-1, 1] both approximants lie within c1 h_m(c2 2eps) of f, so the pair
    is taken with a1 = 2 c1 and a2 = 2 c2; a1 is raised to the measured line
    value where discretization exceeds it. L is the measured sup on Omega_eps.
    ``fam`` must keep its approximants and come from ``f`` with source M.
    """
    m = AssocFns(logv=M.logm.tolist(), label=M.label)
    n = AssocFns(logv=N.logm.tolist(), label=N.label)
    C = moderate_growth_constant(M, N).value
    a2 = 2.0 * fam.c2
    results = []
    for level in fam.levels:
        coarse = next((c for c in fam.levels if math.isclose(c.eps, 2.0 * level.eps)), None)
        if coarse is None:
            continue
        if level.approximant is None or coarse.approximant is None:
            raise InvalidInput("three-lines needs the stored approximants", eps=level.eps)
        fine = level.approximant
        diff = fine.values - _approximant_at(f, coarse, fine, workers)
        g = fine.with_values(np.where(fine.mask, diff, 0))
        hm = max(math.exp(h_log_many(m.values, np.array([a2 * level.eps]))[0][0]), 1e-300)
        a1 = max(2.0 * fam.c1, g.interval_sup() / hm)
        results.append(three_lines_shrink(g, g.sup(fine.mask), a1, a2, m, n, C, strict=strict))
    logger.info(
        "Three-lines on approximant differences",
        function=fam.function,
        pairs=len(results),
        holds=all(r.holds for r in results),
    )
    return results


def holo_inverse(
    fam: ApproxFamily,
    chain: Sequence[WeightSequence],
    b: float,
    kmax: Optional[int] = None,
    f: Optional[SmoothFn1D] = None,
    max_terms: int = MAX_TERMS,
) -> InverseCertificate:
    """Certify ||f^(k)||_[-b,b] <= A sigma^k N3_k, sigma = 2e D1 D2 c2/(E(1-b)).

    The bound B_k sums the Cauchy estimates of f_eps0 and of the telescoped
    differences f_eps - f_2eps over eps = eps0 2^-i, i < max_terms.
    """
    N1, N2, N3 = chain
    kmax = min(kmax or NumericsConfig().dcap, N3.K)
    D1 = moderate_growth_constant(N1, N2).value
    D2 = moderate_growth_constant(N2, N3).value
    eps0 = max(fam.eps_list)
    E = geometry_constants(min(1.0, eps0)).Egeom
    sigma = 2 * math.e * D1 * D2 * fam.c2 / (E * (1 - b))

    k = np.arange(kmax + 1, dtype=float)
    logfact = np.array([math.lgamma(v + 1) for v in k])
    radius0 = E * (1 - b) * eps0
    log_terms = [math.log(max(fam.K, 1e-300)) + logfact - k * math.log(radius0)]
    A_diff = max(fam.c1, 2 * fam.K, 1e-300)
    eps_i = eps0 * 2.0 ** -np.arange(1, max_terms + 1)
    logh, _ = h_log_many(N2.logm, 2 * math.e * D1 * fam.c2 * eps_i)
    for e, lh in zip(eps_i, logh):
        log_terms.append(math.log(A_diff) + logfact - k * math.log(E * (1 - b) * e) + lh)
    stacked = np.stack(log_terms)
    log_bounds = np.logaddexp.reduce(stacked, axis=0)
    last = stacked[-1] - log_bounds
    if np.any(last > math.log(1e-16)):
        bad = int(np.argmax(last > math.log(1e-16)))
        logger.error("Telescoped derivative bound not summable", k=bad, terms=max_terms)
        raise TailNotSummable(
            f"terms at derivative order {bad} still matter after {max_terms} levels", k=bad
        )
    logA = log_bounds - k * math.log(sigma) - N3.logM[: kmax + 1]
    A = float(np.exp(logA.max()))
    measured_ok = None
    if f is not None:
        x = np.linspace(-b, b, NumericsConfig().interval_samples)
        peaks = np.array([np.max(np.abs(f.derivative(int(j), x))) for j in k])
        with np.errstate(divide="ignore"):
            measured_ok = bool(np.all(np.log(peaks) <= log_bounds + 1e-9))
    cert = InverseCertificate(
        chain=[M.label for M in chain],
        b=b,
        sigma=sigma,
        A=A,
        kmax=kmax,
        D1=D1,
        D2=D2,
        E=E,
        log_bounds=[float(v) for v in log_bounds],
        measured_ok=measured_ok,
    )
    logger.info("Inverse certificate", sigma=sigma, A=A, kmax=kmax, measured_ok=measured_ok)
    return cert


def seminorm(
    f: SmoothFn1D, M: WeightSequence, sigma: float, samples: Optional[int] = None
) -> float:
    """sup over x in [-1, 1] and k <= min(dcap, K) of |f^(k)(x)|/(sigma^k M_k)."""
    x = np.linspace(-1.0, 1.0, samples or NumericsConfig().interval_samples)
    best = 0.0
    for k in range(min(f.dcap, M.K) + 1):
        peak = float(np.max(np.abs(f.derivative(k, x))))
        if peak == 0.0:
            continue
        best = max(best, math.exp(math.log(peak) - k * math.log(sigma) - M.logM[k]))
    return best
