"""
Weight functions
================

Sampled weight functions omega with their structural certificates, Young
conjugates of phi(u) = omega(e^u), associated weight matrices and the
omega-tilde construction that sits between a non-quasianalytic omega and a
faster growth function f.

Key Concepts:
-------------
- A WeightFunction is a log-spaced sample of omega (default t in [1e-2, 1e12],
  200 points per decade). Builtins also keep their closed form, which is used
  whenever values off the grid are needed; sampled data is interpolated
  piecewise linearly in (log t, omega).
- Certificates are finite-grid surrogates for the asymptotic conditions; each
  one records the numbers it was judged on.
- phi* is computed as a discrete max over u-nodes, refined with a bounded
  scalar search when a closed form is available. The u-range is extended
  geometrically up to u = 60 until the maximizer is interior.

Usage Examples:
---------------
omega = mk_weight_function("power:0.5")
conj = young_conjugate(omega, np.linspace(0, 64, 257))
matrix = associated_matrix(omega, [0.5, 1.0, 2.0], K=256)
tilde = omega_tilde(omega, mk_weight_function("t-over-log"), Nmax=8)
"""

import json
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.optimize import minimize_scalar

from carleman.errors import (
    FctmodViolation,
    GridExhausted,
    GridTooCoarse,
    InvalidInput,
    MaximizerAtBoundary,
    NotIncreasing,
)
from carleman.logging import logger
from carleman.models import Certificate, as_float_list, tail_slope
from carleman.registry import WEIGHT_FUNCTIONS
from carleman.seqcore import (
    PositiveSequence,
    WeightMatrix,
    WeightSequence,
    h_log_many,
    mk_weight_sequence,
)
from carleman.tails import tail_verdict

TOL = 1e-9
MIN_POINTS = 64
U_CAP = 60.0
GAP_TOL = 1e-6
DECADES_BACK = 6.0
DECAY_FACTOR = 0.75

OmegaLike = Union["WeightFunction", Callable[[np.ndarray], np.ndarray]]


class WeightFunction(BaseModel):
    """Samples of an increasing omega >= 0 together with its certificates."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    name: str
    grid: List[float]
    vals: List[float]
    certificates: Dict[str, Certificate] = Field(default_factory=dict)
    fn: Optional[Callable] = Field(default=None, exclude=True, repr=False)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.grid, dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.vals, dtype=float)

    @property
    def tmax(self) -> float:
        return self.grid[-1]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.fn is not None:
            return np.asarray(self.fn(t), dtype=float)
        with np.errstate(divide="ignore"):
            return np.interp(np.log(t), np.log(self.t), self.values)

    def phi(self, u) -> np.ndarray:
        return self(np.exp(np.asarray(u, dtype=float)))

    def passed(self, name: str) -> bool:
        cert = self.certificates.get(name)
        return bool(cert and cert.passed)

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "grid": self.grid, "vals": self.vals}, indent=2)

    @classmethod
    def from_json(cls, json_str: str) -> "WeightFunction":
        try:
            data = json.loads(json_str)
            return mk_weight_function((data["grid"], data["vals"]), name=data.get("name", "data"))
        except (KeyError, TypeError, ValueError) as e:
            logger.error("Failed to deserialize WeightFunction", error=str(e))
            raise ValueError(f"Invalid weight function JSON: {e}") from e


class YoungConjugate(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    owner: str
    sgrid: List[float]
    vals: List[float]
    argmax_u: List[float]
    unbounded: List[float] = Field(default_factory=list)
    certificates: Dict[str, Certificate] = Field(default_factory=dict)

    def __call__(self, s) -> np.ndarray:
        return np.interp(np.asarray(s, dtype=float), self.sgrid, self.vals)


class BiconjugateReport(BaseModel):
    u: List[float]
    values: List[float]
    max_error: float


class NQResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    value: float
    tail: Optional[float]
    slope: float
    convergent: bool


class MatrixReport(BaseModel):
    """Associated matrix with the order and fctmod checks it passed."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    matrix: WeightMatrix
    order_slack: float
    fctmod_slack: Optional[float]
    fctmod_pairs: List[Tuple[float, float]]


class OmegaTilde(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    base: str
    target: str
    x: List[float]
    y: List[float]
    z: List[float]
    omega_z: List[float]
    n_reached: int
    exhausted: bool
    grid: List[float]
    vals: List[float]
    certificates: Dict[str, Certificate] = Field(default_factory=dict)

    def as_weight_function(self) -> WeightFunction:
        return mk_weight_function((self.grid, self.vals), name=f"tilde[{self.base}]")


class EllComparison(BaseModel):
    holds: bool
    constant: float
    worst_k: int
    bounded: bool = True


# ---------------------------------------------------------------------------
# construction and certificates
# ---------------------------------------------------------------------------


def default_grid(tmin: float = 1e-2, tmax: float = 1e12, per_decade: int = 200) -> np.ndarray:
    decades = math.log10(tmax) - math.log10(tmin)
    n = int(round(decades * per_decade)) + 1
    return np.logspace(math.log10(tmin), math.log10(tmax), n)


@WEIGHT_FUNCTIONS.builtin("power", parametrised=True)
def _power(param: str) -> Callable:
    a = float(param)
    if a <= 0:
        raise InvalidInput("power exponent must be positive", a=a)
    return lambda t: np.power(t, a)


@WEIGHT_FUNCTIONS.builtin("log2")
def _log2() -> Callable:
    return lambda t: np.log1p(t) ** 2


@WEIGHT_FUNCTIONS.builtin("t-over-log")
def _t_over_log() -> Callable:
    return lambda t: t / np.log(math.e + t)


@WEIGHT_FUNCTIONS.builtin("t-over-log2")
def _t_over_log2() -> Callable:
    return lambda t: t / np.log(math.e + t) ** 2


def mk_weight_function(
    spec: Union[str, Tuple[Sequence[float], Sequence[float]], Callable],
    name: Optional[str] = None,
    grid: Optional[Sequence[float]] = None,
    tol: float = TOL,
) -> WeightFunction:
    """Build a WeightFunction from a builtin name, a callable or (grid, vals)."""
    fn = None
    if isinstance(spec, str):
        fn = WEIGHT_FUNCTIONS.resolve(spec)
        name = name or spec
    elif callable(spec):
        fn = spec
        name = name or getattr(spec, "__name__", "callable")
    if fn is not None:
        t = np.asarray(grid, dtype=float) if grid is not None else default_grid()
        vals = np.asarray(fn(t), dtype=float)
    else:
        t = np.asarray(spec[0], dtype=float)
        vals = np.asarray(spec[1], dtype=float)
        name = name or "data"

    if t.size < MIN_POINTS:
        logger.error("Weight function grid too coarse", name=name, points=int(t.size))
        raise GridTooCoarse(f"'{name}' needs at least {MIN_POINTS} grid points", points=int(t.size))
    if t.shape != vals.shape or np.any(np.diff(t) <= 0) or np.any(t <= 0):
        raise InvalidInput(f"'{name}' needs a positive increasing grid matching its values")
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        raise InvalidInput(f"'{name}' values must be finite and nonnegative")
    steps = np.diff(vals)
    if np.any(steps < -tol * np.maximum(1.0, np.abs(vals[1:]))):
        i = int(np.argmin(steps))
        logger.error("Weight function decreasing", name=name, t=float(t[i + 1]))
        raise NotIncreasing(f"'{name}' decreases at t={t[i + 1]:g}", t=float(t[i + 1]))

    wf = WeightFunction(
        name=name, grid=as_float_list(t), vals=as_float_list(vals), fn=fn
    )
    certs = _certificates(wf, tol)
    failed = [n for n, c in certs.items() if not c.passed]
    if failed:
        logger.warning("Weight function certificates failed", name=name, failed=failed)
    return wf.model_copy(update={"certificates": certs})


def _certificates(wf: WeightFunction, tol: float) -> Dict[str, Certificate]:
    t, vals = wf.t, wf.values
    certs: Dict[str, Certificate] = {}

    sel = (t >= 1.0) & (vals > 0) & (2.0 * t <= t[-1])
    if sel.sum() >= 4:
        ratio = wf(2.0 * t[sel]) / vals[sel]
        half = ratio.size // 2
        stable = ratio[half:].max() <= ratio[:half].max() + 0.05
        certs["omega1"] = Certificate(
            name="omega1",
            passed=bool(np.isfinite(ratio).all() and stable),
            witness=float(ratio.max()),
            tol=0.05,
            detail="sup omega(2t)/omega(t) over t >= 1",
        )
    else:
        certs["omega1"] = Certificate(name="omega1", passed=False, detail="no samples above t = 1")

    certs["omega2"] = _decay_certificate("omega2", t, vals / t, "omega(t)/t")
    with np.errstate(divide="ignore", invalid="ignore"):
        q3 = np.where(vals > 0, np.log(t) / vals, np.inf)
    certs["omega3"] = _decay_certificate("omega3", t, q3, "log(t)/omega(t)", tmin=10.0)

    upper = t >= 1.0
    u = np.log(t[upper])
    phi = vals[upper]
    slopes = np.diff(phi) / np.diff(u)
    second = np.diff(slopes)
    scale = np.maximum(1.0, np.abs(slopes[1:]))
    worst = float((second / scale).min()) if second.size else 0.0
    certs["omega4"] = Certificate(
        name="omega4",
        passed=worst >= -tol,
        witness=worst,
        tol=tol,
        detail="discrete convexity of phi(u) = omega(e^u) for u >= 0",
    )

    dslopes = np.diff(vals) / np.diff(t)
    rise = np.diff(dslopes) / np.maximum(np.abs(dslopes[:-1]), 1e-300)
    worst_c = float(rise.max()) if rise.size else 0.0
    certs["concave"] = Certificate(
        name="concave",
        passed=worst_c <= tol,
        witness=worst_c,
        tol=tol,
        detail="divided differences of omega nonincreasing",
    )
    return certs


def _decay_certificate(
    name: str, t: np.ndarray, q: np.ndarray, what: str, tmin: float = 1.0
) -> Certificate:
    sel = (t >= tmin) & np.isfinite(q)
    if sel.sum() < 2:
        return Certificate(name=name, passed=False, detail=f"{what}: no usable samples")
    ts, qs = t[sel], q[sel]
    span = math.log10(ts[-1]) - math.log10(ts[0])
    back = min(DECADES_BACK, span / 2.0)
    ref = int(np.searchsorted(np.log10(ts), math.log10(ts[-1]) - back))
    ratio = float(qs[-1] / qs[ref]) if qs[ref] > 0 else math.inf
    return Certificate(
        name=name,
        passed=ratio <= DECAY_FACTOR,
        witness=ratio,
        tol=DECAY_FACTOR,
        detail=f"{what} at grid end over its value {back:.1f} decades earlier",
    )


def normalized(omega: WeightFunction) -> WeightFunction:
    """omega - omega(1) clipped at 0, so the result vanishes on [0, 1]."""
    base = float(omega(np.array([1.0]))[0])
    if omega.fn is not None:
        inner = omega.fn
        return mk_weight_function(
            lambda t: np.maximum(np.asarray(inner(t)) - base, 0.0),
            name=f"{omega.name}~",
            grid=omega.grid,
        )
    vals = np.maximum(omega.values - base, 0.0)
    return mk_weight_function((omega.grid, vals), name=f"{omega.name}~")


def omega_moderate_growth(omega: WeightFunction, max_power: int = 40) -> Optional[float]:
    """Smallest H = 2^p with 2 omega(t) <= omega(Ht) + H on the grid."""
    t, vals = omega.t, omega.values
    for p in range(max_power + 1):
        H = 2.0**p
        sel = t * H <= t[-1] if omega.fn is None else np.ones_like(t, dtype=bool)
        if not sel.any():
            break
        if np.all(2.0 * vals[sel] <= omega(H * t[sel]) + H + TOL):
            return H
    logger.warning("No moderate growth constant found", name=omega.name)
    return None


# ---------------------------------------------------------------------------
# integrals and conjugates
# ---------------------------------------------------------------------------


def _tail_power(t: np.ndarray, vals: np.ndarray) -> float:
    last = t >= t[-1] / 10.0
    ok = last & (vals > 0)
    return tail_slope(np.log(t[ok]), np.log(vals[ok]))


def nq_integral(omega: WeightFunction) -> NQResult:
    """Integral of omega(t)/t^2 over [1, oo) with an extrapolated tail.

    The integrand is 1/nu with nu = t^2/omega, read at T/10^4, T/10^3, T/10
    and T by ``tails.tail_verdict``: t^p with p < 1 converges with tail
    omega(T)/(T (1 - p)), t/log t diverges and t/log^2 t converges with tail
    about 1/log T.
    """
    t, vals = omega.t, omega.values
    u = np.log(t[t > 1.0])
    phi = vals[t > 1.0]
    u = np.concatenate(([0.0], u))
    phi = np.concatenate((omega(np.array([1.0])), phi))
    value = float(trapezoid(phi * np.exp(-u), u))
    T = float(t[-1])
    p = _tail_power(t, vals)
    xs = T * np.array([1e-4, 1e-3, 1e-1, 1.0])
    with np.errstate(divide="ignore"):
        lognu = 2.0 * np.log(xs) - np.log(omega(xs))
    verdict = tail_verdict(xs, lognu, lognu) if np.all(np.isfinite(lognu)) else None
    if verdict is None or verdict.divergent is None:
        logger.warning("Tail of the integral unresolved on the grid", name=omega.name, T=T)
        return NQResult(value=value, tail=None, slope=p, convergent=False)
    if verdict.divergent:
        logger.info("Non-quasianalyticity integral diverges", name=omega.name, slope=p)
        return NQResult(value=value, tail=None, slope=p, convergent=False)
    tail = verdict.tail
    return NQResult(value=value + (tail or 0.0), tail=tail, slope=p, convergent=True)


def _u_nodes(omega: WeightFunction) -> Tuple[np.ndarray, np.ndarray]:
    t, vals = omega.t, omega.values
    upper = t >= 1.0
    u = np.log(t[upper])
    phi = vals[upper]
    if u.size == 0 or u[0] > 1e-12:
        u = np.concatenate(([0.0], u))
        phi = np.concatenate((omega(np.array([1.0])), phi))
    else:
        u[0] = 0.0
    return u, phi


def _conjugate_values(
    omega: WeightFunction, s: np.ndarray, strict_boundary: bool = True
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    s = np.asarray(s, dtype=float)
    u, phi = _u_nodes(omega)
    du = float(np.median(np.diff(u))) if u.size > 1 else 0.01
    while True:
        vals = s[:, None] * u[None, :] - phi[None, :]
        idx = np.argmax(vals, axis=1)
        at_edge = idx == u.size - 1
        if not at_edge.any() or omega.fn is None or u[-1] >= U_CAP:
            break
        new_top = min(U_CAP, max(u[-1] * 1.5, u[-1] + 1.0))
        extra = np.arange(u[-1] + du, new_top + du / 2, du)
        u = np.concatenate((u, extra))
        phi = np.concatenate((phi, omega.phi(extra)))
        logger.debug("Extended conjugate u-grid", name=omega.name, u_max=float(u[-1]))

    best = vals[np.arange(s.size), idx]
    unbounded: List[float] = []
    if at_edge.any():
        edge_s = as_float_list(s[at_edge])
        if not omega.passed("omega3") or not strict_boundary:
            logger.warning(
                "Conjugate maximizer at u-grid boundary",
                name=omega.name,
                count=len(edge_s),
                u_max=float(u[-1]),
            )
            unbounded = edge_s
        else:
            logger.error("Conjugate maximizer at u-grid boundary", name=omega.name, s=edge_s[0])
            raise MaximizerAtBoundary(
                f"maximizer of s*u - phi(u) at u={u[-1]:g} for s={edge_s[0]:g}",
                s=edge_s[0],
                u_max=float(u[-1]),
            )

    arg_u = u[idx].copy()
    if omega.fn is not None:
        for i, (si, k) in enumerate(zip(s, idx)):
            if at_edge[i]:
                continue
            lo = u[max(k - 1, 0)]
            hi = u[min(k + 1, u.size - 1)]
            if hi <= lo:
                continue
            res = minimize_scalar(
                lambda x, si=si: float(omega.phi(np.array([x]))[0]) - si * x,
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-10},
            )
            if -res.fun > best[i]:
                best[i] = -res.fun
                arg_u[i] = res.x
    return best, arg_u, unbounded


def young_conjugate(omega: WeightFunction, sgrid: Sequence[float]) -> YoungConjugate:
    """phi*(s) = sup_{u >= 0} (s u - phi(u)) on ``sgrid``."""
    s = np.asarray(sgrid, dtype=float)
    if np.any(np.diff(s) <= 0) or np.any(s < 0):
        raise InvalidInput("sgrid must be nonnegative and increasing")
    if not omega.passed("omega3"):
        logger.warning("omega3 fails, conjugate may be infinite", name=omega.name)
    vals, arg_u, unbounded = _conjugate_values(omega, s)

    certs = {}
    steps = np.diff(vals)
    certs["nondecreasing"] = Certificate(
        name="nondecreasing",
        passed=bool(np.all(steps >= -TOL)),
        witness=float(steps.min()) if steps.size else 0.0,
    )
    if s.size >= 3:
        slopes = steps / np.diff(s)
        jump = np.diff(slopes) / np.maximum(1.0, np.abs(slopes[1:]))
        certs["convex"] = Certificate(
            name="convex", passed=bool(jump.min() >= -1e-6), witness=float(jump.min()), tol=1e-6
        )
    return YoungConjugate(
        owner=omega.name,
        sgrid=as_float_list(s),
        vals=as_float_list(vals),
        argmax_u=as_float_list(arg_u),
        unbounded=unbounded,
        certificates=certs,
    )


def biconjugate(
    omega: WeightFunction, conj: YoungConjugate, u: Optional[Sequence[float]] = None
) -> BiconjugateReport:
    """phi**(u) = max_s (s u - phi*(s)) and its worst deviation from phi.

    By default the error is measured on the u-nodes covered by the
    conjugate's maximizers, where the s-grid reaches the slopes of phi.
    """
    s = np.asarray(conj.sgrid)
    cv = np.asarray(conj.vals)
    if u is None:
        nodes, _ = _u_nodes(omega)
        lo, hi = min(conj.argmax_u), max(conj.argmax_u)
        u = nodes[(nodes >= lo - 1e-12) & (nodes <= hi + 1e-12)]
    u = np.asarray(u, dtype=float)
    values = (u[:, None] * s[None, :] - cv[None, :]).max(axis=1)
    err = float(np.max(np.abs(values - omega.phi(u)))) if u.size else 0.0
    return BiconjugateReport(u=as_float_list(u), values=as_float_list(values), max_error=err)


def associated_matrix(
    omega: WeightFunction, xlist: Sequence[float], K: int = 256, tol: float = TOL
) -> MatrixReport:
    """Omega^x_k = exp((phi*(xk) - phi*(0))/x) for each x, checked for order and fctmod."""
    xs = sorted(float(x) for x in xlist)
    if not xs or xs[0] <= 0:
        raise InvalidInput("matrix indices must be positive")
    k = np.arange(K + 1, dtype=float)
    logs: Dict[float, np.ndarray] = {}
    for x in xs:
        vals, _, _ = _conjugate_values(omega, x * k)
        logs[x] = (vals - vals[0]) / x

    order_slack = math.inf
    for a, b in zip(xs, xs[1:]):
        order_slack = min(order_slack, float((logs[b] - logs[a]).min()))

    pairs = [(x, 2.0 * x) for x in xs if any(abs(2.0 * x - y) < 1e-12 for y in xs)]
    fctmod_slack = None
    idx = np.arange(K + 1)
    n = idx[:, None] + idx[None, :]
    valid = n <= K
    for x, x2 in pairs:
        A = logs[x]
        B = logs[next(y for y in xs if abs(y - x2) < 1e-12)]
        slack = np.where(valid, B[:, None] + B[None, :] - A[np.minimum(n, K)], np.inf)
        worst = float(slack.min())
        fctmod_slack = worst if fctmod_slack is None else min(fctmod_slack, worst)
        if worst < -tol:
            j, kk = np.unravel_index(int(np.argmin(slack)), slack.shape)
            logger.error("fctmod violated", name=omega.name, x=x, j=int(j), k=int(kk))
            raise FctmodViolation(
                f"Omega^{x}_{{j+k}} > Omega^{x2}_j Omega^{x2}_k at j={j}, k={kk}",
                x=x,
                j=int(j),
                k=int(kk),
                slack=worst,
            )

    members = [(x, mk_weight_sequence(logs[x], f"Omega^{x:g}[{omega.name}]")) for x in xs]
    matrix = WeightMatrix(members=members)
    logger.info(
        "Associated matrix built",
        name=omega.name,
        xs=xs,
        K=K,
        fctmod_slack=fctmod_slack,
    )
    return MatrixReport(
        matrix=matrix,
        order_slack=order_slack if len(xs) > 1 else 0.0,
        fctmod_slack=fctmod_slack,
        fctmod_pairs=pairs,
    )


# ---------------------------------------------------------------------------
# omega from sequences, omega-tilde, ell
# ---------------------------------------------------------------------------


def omega_from_sequence(M: WeightSequence, per_decade: int = 200) -> WeightFunction:
    """omega_M(t) = -log h_M(1/t) = max_k (k log t - log M_k).

    Sampled up to t = mu_K, beyond which the maximizer would sit at K.
    """
    logM = M.logM
    tmax = float(np.exp(M.logmu[-1]))
    grid = default_grid(1e-2, max(tmax, 1e2), per_decade)

    def omega_M(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        pos = t > 0
        if pos.any():
            best, _ = h_log_many(logM, 1.0 / t[pos])
            out[pos] = np.maximum(-best, 0.0)
        return out

    return mk_weight_function(omega_M, name=f"omega[{M.label}]", grid=grid)


def _as_values(f: OmegaLike, t: np.ndarray) -> np.ndarray:
    return np.asarray(f(t), dtype=float)


def omega_tilde(
    omega: WeightFunction,
    f: OmegaLike,
    Nmax: int = 8,
    strict: bool = False,
    tol: float = TOL,
) -> OmegaTilde:
    """Concave modification of omega squeezed between (n-2) omega and n omega.

    For n = 2..Nmax the breakpoints x_n take the max of the lower bounds
    imposed by the tail integral (<= 1/n^3), the spacing x_n > 2 y_{n-1} + n,
    the domination f >= n^2 omega beyond x_n and omega(x_n) >= 2^{n-i}
    omega(z_i). y_n is the first node where omega' has dropped to
    (n-1)/n omega'(x_n); omega(z_n) closes the linear branch continuously.
    """
    t, vals = omega.t, omega.values
    if not omega.passed("concave"):
        logger.warning("omega is not concave on the grid", name=omega.name)
    deriv = np.maximum(np.gradient(vals, t), 0.0)
    fvals = _as_values(f, t)
    target = getattr(f, "name", getattr(f, "__name__", "f"))
    with np.errstate(divide="ignore", invalid="ignore"):
        growth = fvals / vals
    if np.isfinite(growth[-1]) and np.isfinite(growth[len(t) // 2]):
        if growth[-1] <= growth[len(t) // 2]:
            logger.warning("omega = o(f) not visible on the grid", name=omega.name, target=target)

    # tail of int omega/(1+t^2), trapezoid in u = log t plus power-law remainder
    u = np.log(t)
    integrand = vals * t / (1.0 + t**2)
    cum = cumulative_trapezoid(integrand, u, initial=0.0)
    p = _tail_power(t, vals)
    remainder = vals[-1] / (t[-1] * (1.0 - p)) if p < 1.0 else math.inf
    tail = cum[-1] - cum + remainder

    x: List[float] = [0.0]
    y: List[float] = [0.0]
    z: List[float] = [0.0]
    wz: List[float] = [0.0]
    xi_list: List[int] = []
    yi_list: List[int] = []
    exhausted = False
    last = len(t) - 1
    for n in range(2, Nmax + 1):
        bounds = []
        hits = np.nonzero(tail <= 1.0 / n**3)[0]
        bounds.append(int(hits[0]) if hits.size else None)
        hits = np.nonzero(t > 2.0 * y[-1] + n)[0]
        bounds.append(int(hits[0]) if hits.size else None)
        bad = np.nonzero(fvals < n**2 * vals - tol)[0]
        bounds.append(0 if bad.size == 0 else (int(bad[-1]) + 1 if bad[-1] < last else None))
        need = max(2.0 ** (n - i) * wz[i - 1] for i in range(1, n))
        hits = np.nonzero(vals >= need)[0]
        bounds.append(int(hits[0]) if hits.size else None)
        if any(b is None for b in bounds):
            exhausted = True
            break
        xi = max(bounds)
        hits = np.nonzero(deriv[xi:] <= (n - 1) / n * deriv[xi])[0]
        if xi >= last or not hits.size:
            exhausted = True
            break
        yi = xi + int(hits[0])
        value = n * vals[yi] - (n - 1) * (vals[xi] + (t[yi] - t[xi]) * deriv[xi])
        if value <= 0:
            zt = 0.0
        else:
            zi = np.nonzero(vals >= value)[0]
            zt = float(t[zi[0]]) if zi.size else float(t[-1])
        x.append(float(t[xi]))
        y.append(float(t[yi]))
        z.append(zt)
        wz.append(float(max(value, 0.0)))
        xi_list.append(xi)
        yi_list.append(yi)

    n_reached = len(xi_list) + 1
    tilde = vals.copy()
    for b, (xi, yi) in enumerate(zip(xi_list, yi_list)):
        n = b + 2
        end = xi_list[b + 1] if b + 1 < len(xi_list) else len(t)
        lin = slice(xi, yi)
        top = slice(yi, end)
        # wz[i - 1] holds omega(z_i)
        tilde[lin] = (n - 1) * (vals[xi] + (t[lin] - t[xi]) * deriv[xi]) - sum(wz[1 : n - 1])
        tilde[top] = n * vals[top] - sum(wz[1:n])

    certs = {"sandwich": _sandwich(t, vals, tilde, xi_list, tol)}
    slopes = np.diff(tilde) / np.diff(t)
    rise = np.diff(slopes) - tol * np.maximum(1.0, np.abs(slopes[:-1]))
    certs["concave"] = Certificate(
        name="concave",
        passed=bool(np.all(rise <= 0.0)),
        witness=float(rise.max()) if rise.size else 0.0,
        tol=tol,
    )
    result = OmegaTilde(
        base=omega.name,
        target=target,
        x=x,
        y=y,
        z=z,
        omega_z=wz,
        n_reached=n_reached,
        exhausted=exhausted,
        grid=as_float_list(t),
        vals=as_float_list(tilde),
        certificates=certs,
    )
    if result.exhausted:
        msg = f"grid ends before x_{n_reached + 1}; reached n={n_reached}"
        if strict:
            logger.error("omega-tilde grid exhausted", n_reached=n_reached)
            raise GridExhausted(msg, partial=result, n_reached=n_reached)
        logger.warning("omega-tilde grid exhausted", n_reached=n_reached)
    logger.info(
        "omega-tilde built",
        base=omega.name,
        target=target,
        n_reached=n_reached,
        sandwich=certs["sandwich"].passed,
    )
    return result


def _sandwich(
    t: np.ndarray, vals: np.ndarray, tilde: np.ndarray, xi_list: List[int], tol: float
) -> Certificate:
    worst = math.inf
    for b, xi in enumerate(xi_list):
        n = b + 2
        end = xi_list[b + 1] if b + 1 < len(xi_list) else len(t)
        block = slice(xi, end)
        scale = np.maximum(1.0, n * vals[block])
        low = (tilde[block] - (n - 2) * vals[block]) / scale
        high = (n * vals[block] - tilde[block]) / scale
        worst = min(worst, float(low.min()), float(high.min()))
    if worst is math.inf:
        worst = 0.0
    return Certificate(
        name="sandwich",
        passed=worst >= -tol,
        witness=worst,
        tol=tol,
        detail="(n-2) omega <= tilde <= n omega on [x_n, x_{n+1})",
    )


def ell_compare(
    L: PositiveSequence, omega: WeightFunction, bound: Optional[float] = None
) -> EllComparison:
    """Fit the constant c with log max(L_k, 1) <= phi*(k) + c for all k <= K.

    A uniform constant exists when the gap ell - phi* has stopped growing:
    its maximum over the upper half of the truncation may exceed the maximum
    over the lower half by at most GAP_TOL. An explicit ``bound`` further
    caps c.
    """
    k = np.arange(L.K + 1, dtype=float)
    conj, _, _ = _conjugate_values(omega, k)
    ell = np.maximum(L.values, 0.0)
    gap = ell - conj
    worst = int(np.argmax(gap))
    constant = float(gap[worst])
    half = L.K // 2 + 1
    bounded = bool(gap[half:].max() <= gap[:half].max() + GAP_TOL) if L.K > 0 else True
    holds = math.isfinite(constant) and bounded and (bound is None or constant <= bound)
    log = logger.info if holds else logger.warning
    log("ell comparison", name=omega.name, constant=constant, worst_k=worst, bounded=bounded)
    return EllComparison(holds=holds, constant=constant, worst_k=worst, bounded=bounded)
