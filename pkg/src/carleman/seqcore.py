"""
Weight sequences
================

Weight sequences M = (M_k), their m-view m_k = M_k/k! and ratio view
mu_k = M_k/M_{k-1}, the associated functions h_m, Gamma-bar and Gamma-under,
pairwise relations and regularity certificates.

Key Concepts:
-------------
- Everything is stored in the log domain: (k!)^2 at k = 256 overflows doubles.
- Asymptotic notions (M_k^{1/k} -> oo, quasianalyticity, lhd) are judged on a
  finite truncation K. Each verdict states its extrapolation rule and every
  result carries the raw numbers it was judged on, so callers can re-judge.
- Comparisons use an absolute tolerance of 1e-9 in log units unless an
  operation says otherwise.

Usage Examples:
---------------
G = sequence_from_builtin("gevrey:2")
fact = sequence_from_builtin("factorial")
relation(fact, G).verdict            # Relation.LHD
h_eval(G.assoc(), 0.1)               # HValue(h=..., kstar=9, saturated=False)
regularity_certificate(G, G, "R")    # RegularityResult(passed=True, C=...)

Design Notes:
-------------
- Values are frozen pydantic models; operations are pure functions and there
  is no evaluation cache, so concurrent use on shared values is safe.
"""

import json
import math
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import gammaln

from carleman.errors import (
    InvalidInput,
    LengthMismatch,
    NonPositive,
    NotEventuallyIncreasing,
    TruncationSaturated,
    ViolationFound,
)
from carleman.logging import logger
from carleman.models import Certificate, as_float_list, tail_slope
from carleman.registry import SEQUENCES
from carleman.summation import fsum
from carleman.tails import tail_verdict

TOL = 1e-9
DEFAULT_K = 256
LHD_THRESHOLD = math.log(0.1)
NEITHER_SLOPE = 0.1
DIVERGENCE_TOL = 0.05


class PositiveSequence(BaseModel):
    """A positive sequence V_0..V_K held as logv[k] = log V_k.

    ``-inf`` entries stand for zero terms (derivative-bound sequences of
    polynomials); NaN and ``+inf`` are rejected.
    """

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    logv: List[float]
    label: str = ""

    @field_validator("logv")
    @classmethod
    def _finite_or_zero(cls, v: List[float]) -> List[float]:
        arr = np.asarray(v, dtype=float)
        if np.any(np.isnan(arr)) or np.any(arr == np.inf):
            raise ValueError("log entries must be finite or -inf")
        return v

    @property
    def K(self) -> int:
        return len(self.logv) - 1

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.logv, dtype=float)

    def truncate(self, K: int) -> "PositiveSequence":
        return PositiveSequence(logv=self.logv[: K + 1], label=self.label)


class WeightSequence(BaseModel):
    """A validated sequence M with derived m and mu views and its certificates."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    M: PositiveSequence
    kind: Literal["weight", "general"] = "weight"
    certificates: Dict[str, Certificate] = Field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.M.label

    @property
    def K(self) -> int:
        return self.M.K

    @property
    def logM(self) -> np.ndarray:
        return self.M.values

    @property
    def logm(self) -> np.ndarray:
        k = np.arange(self.K + 1)
        return self.logM - gammaln(k + 1.0)

    @property
    def logmu(self) -> np.ndarray:
        logM = self.logM
        return np.concatenate(([logM[0]], np.diff(logM)))

    def m_view(self) -> PositiveSequence:
        return PositiveSequence(logv=as_float_list(self.logm), label=f"m[{self.label}]")

    def assoc(self, view: Literal["m", "M"] = "m") -> "AssocFns":
        logv = self.logm if view == "m" else self.logM
        return AssocFns(logv=as_float_list(logv), label=f"{view}[{self.label}]")

    def truncate(self, K: int) -> "WeightSequence":
        return mk_weight_sequence(self.logM[: K + 1], self.label)

    def to_json(self) -> str:
        payload = {
            "label": self.label,
            "logM": self.M.logv,
            "K": self.K,
            "kind": self.kind,
            "certificates": {
                name: cert.model_dump() for name, cert in self.certificates.items()
            },
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, json_str: str) -> "WeightSequence":
        try:
            data = json.loads(json_str)
            logM = data["logM"]
            if "K" in data and int(data["K"]) != len(logM) - 1:
                raise ValueError(f"K={data['K']} does not match {len(logM)} entries")
            return mk_weight_sequence(logM, data.get("label", ""))
        except (KeyError, TypeError, ValueError) as e:
            logger.error("Failed to deserialize WeightSequence", error=str(e))
            raise ValueError(f"Invalid sequence JSON: {e}") from e


class AssocFns(BaseModel):
    """h_m(t) = inf_k m_k t^k together with its counting functions."""

    model_config = ConfigDict(frozen=True)

    logv: List[float]
    label: str = ""

    @property
    def K(self) -> int:
        return len(self.logv) - 1

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.logv, dtype=float)

    def threshold(self) -> float:
        """h(t) = 1 for every t at or above this value."""
        v = self.values[1:]
        k = np.arange(1, self.K + 1)
        return float(np.exp(-np.min(v / k)))


class WeightMatrix(BaseModel):
    """Sequences indexed by x > 0, pointwise nondecreasing in x."""

    model_config = ConfigDict(frozen=True)

    members: List[Tuple[float, WeightSequence]]

    @field_validator("members")
    @classmethod
    def _ordered(cls, members):
        xs = [x for x, _ in members]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("matrix indices must be strictly increasing")
        for (x, A), (y, B) in zip(members, members[1:]):
            if A.K != B.K:
                raise ValueError("matrix members must share the truncation length")
            if np.any(A.logM > B.logM + TOL):
                k = int(np.argmax(A.logM - B.logM))
                raise ValueError(f"matrix not ordered between x={x} and x={y} at k={k}")
        return members

    @property
    def xs(self) -> List[float]:
        return [x for x, _ in self.members]

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i: int) -> WeightSequence:
        return self.members[i][1]


class Relation(str, Enum):
    PRECEQ = "Preceq"
    LHD = "Lhd"
    NEITHER = "Neither"


class RelationResult(BaseModel):
    verdict: Relation
    sup: float
    slope: float
    r_last: float


class MGResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    value: float
    log_value: float
    argmax: Tuple[int, int]
    diverging: bool
    truncation: int


class ClosednessResult(BaseModel):
    closed: bool
    C: float
    C_mandelbrojt: float


class QuasiResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    quasianalytic: Optional[bool]
    partial_sum: float
    tail_bound: Optional[float]
    slope: Optional[float]
    depth: int = 0


class HValue(BaseModel):
    h: float
    log_h: float
    kstar: int
    saturated: bool = False


class InequalityReport(BaseModel):
    worst_growth_slack: float
    worst_growth_at: Tuple[float, int]
    worst_square_slack: float
    worst_square_at: float
    points: int


class RegularityResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    mode: Literal["R", "B"]
    passed: bool
    C: Optional[float]
    C_gamma: Optional[float]
    C_derivation: float
    derivation_stable: bool


SequenceLike = Union[WeightSequence, PositiveSequence]


def _logs(x: SequenceLike) -> np.ndarray:
    return x.logM if isinstance(x, WeightSequence) else x.values


def _label(x: SequenceLike) -> str:
    return x.label


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def mk_weight_sequence(
    logM: Sequence[float], label: str = "", tol: float = TOL
) -> WeightSequence:
    """Validate log M and compute all certificates.

    Sequences failing log-convexity or root growth are kept with kind
    ``"general"`` rather than rejected.
    """
    arr = np.asarray(logM, dtype=float)
    if arr.ndim != 1 or arr.size < 8:
        logger.error("Sequence too short", label=label, length=int(arr.size))
        raise InvalidInput(f"sequence '{label}' needs at least 8 terms", label=label)
    if not np.all(np.isfinite(arr)):
        k = int(np.argmax(~np.isfinite(arr)))
        logger.error("Non-finite log entry", label=label, k=k)
        raise NonPositive(f"sequence '{label}' has a non-finite log entry at k={k}", k=k)
    if abs(arr[0]) > tol:
        logger.error("Sequence does not start at 1", label=label, logM0=float(arr[0]))
        raise InvalidInput(f"sequence '{label}' must have M_0 = 1", label=label)
    arr = arr.copy()
    arr[0] = 0.0

    k = np.arange(arr.size)
    logm = arr - gammaln(k + 1.0)
    certs = {
        "log_convex": _convexity_certificate("log_convex", arr, tol),
        "m_log_convex": _convexity_certificate("m_log_convex", logm, tol),
        "root_increasing": _root_certificate(arr),
    }
    weight = certs["log_convex"].passed and certs["root_increasing"].passed
    if not weight:
        logger.warning(
            "Not a weight sequence, keeping as general",
            label=label,
            failed=[n for n, c in certs.items() if not c.passed],
        )
    return WeightSequence(
        M=PositiveSequence(logv=as_float_list(arr), label=label),
        kind="weight" if weight else "general",
        certificates=certs,
    )


def _convexity_certificate(name: str, logv: np.ndarray, tol: float) -> Certificate:
    second = logv[:-2] + logv[2:] - 2.0 * logv[1:-1]
    bad = np.nonzero(second < -tol)[0]
    if bad.size:
        k = int(bad[0]) + 1
        return Certificate(
            name=name,
            passed=False,
            witness=float(k),
            tol=tol,
            detail=f"three-term inequality fails first at k={k}",
        )
    return Certificate(name=name, passed=True, witness=float(second.min()), tol=tol)


def _root_certificate(logM: np.ndarray) -> Certificate:
    k = np.arange(1, logM.size)
    roots = logM[1:] / k
    steps = np.diff(roots)
    bad = np.nonzero(steps <= 0.0)[0]
    if bad.size:
        return Certificate(
            name="root_increasing",
            passed=False,
            witness=float(bad[0] + 2),
            tol=0.0,
            detail="M_k^(1/k) not strictly increasing (surrogate for -> oo)",
        )
    return Certificate(
        name="root_increasing",
        passed=True,
        witness=float(np.exp(roots[-1])),
        tol=0.0,
        detail="strict increase on stored range (surrogate for -> oo)",
    )


def sequence_from_builtin(spec: str, K: int = DEFAULT_K) -> WeightSequence:
    """Build a named sequence: factorial, gevrey:s, q:n, exp-k2."""
    import carleman.construct  # noqa: F401  registers the q:n family

    return SEQUENCES.resolve(spec, K=K)


@SEQUENCES.builtin("factorial")
def _factorial(K: int = DEFAULT_K) -> WeightSequence:
    k = np.arange(K + 1)
    return mk_weight_sequence(gammaln(k + 1.0), "factorial")


@SEQUENCES.builtin("gevrey", parametrised=True)
def _gevrey(param: str, K: int = DEFAULT_K) -> WeightSequence:
    s = float(param)
    k = np.arange(K + 1)
    return mk_weight_sequence(s * gammaln(k + 1.0), f"gevrey:{param}")


@SEQUENCES.builtin("exp-k2")
def _exp_k2(K: int = DEFAULT_K) -> WeightSequence:
    k = np.arange(K + 1, dtype=float)
    return mk_weight_sequence(k**2, "exp-k2")


# ---------------------------------------------------------------------------
# relations
# ---------------------------------------------------------------------------


def _relation_from_logs(
    a: np.ndarray, b: np.ndarray, threshold: float = LHD_THRESHOLD, tol: float = TOL
) -> RelationResult:
    K = a.size - 1
    k = np.arange(1, K + 1)
    r = (a[1:] - b[1:]) / k
    finite = np.isfinite(r)
    sup = float(np.max(r[finite])) if finite.any() else float("-inf")
    tail = slice(K // 2 - 1, K)
    r_tail = r[tail]
    if np.all(np.isneginf(r_tail)):
        return RelationResult(verdict=Relation.LHD, sup=sup, slope=0.0, r_last=-math.inf)
    ok = np.isfinite(r_tail)
    slope = tail_slope(np.log(k[tail][ok]), r_tail[ok])
    r_last = float(r[-1])
    decreasing = bool(np.all(np.diff(r_tail[ok]) <= tol))
    if decreasing and r_last < threshold:
        verdict = Relation.LHD
    elif slope > NEITHER_SLOPE:
        verdict = Relation.NEITHER
    else:
        verdict = Relation.PRECEQ
    return RelationResult(verdict=verdict, sup=sup, slope=slope, r_last=r_last)


def relation(
    M: SequenceLike, N: SequenceLike, threshold: float = LHD_THRESHOLD
) -> RelationResult:
    """Compare M with N through r_k = (log M_k - log N_k)/k.

    Lhd: r eventually nonincreasing over the tail half with r_K below
    ``threshold``. Neither: the tail trend of r against log k has slope above
    0.1. Preceq otherwise (always finite at a finite truncation).
    """
    a, b = _logs(M), _logs(N)
    if a.size != b.size:
        logger.error("Truncation mismatch", left=_label(M), right=_label(N))
        raise LengthMismatch(
            f"cannot compare K={a.size - 1} with K={b.size - 1}",
            left=a.size - 1,
            right=b.size - 1,
        )
    return _relation_from_logs(a, b, threshold)


def _mg_logs(
    a: np.ndarray, b: np.ndarray, truncation: Optional[int] = None
) -> MGResult:
    K = min(a.size, b.size) - 1
    if truncation is not None:
        K = min(K, truncation)
    idx = np.arange(K + 1)
    j = idx[:, None]
    k = idx[None, :]
    n = j + k
    valid = (n >= 1) & (n <= K)
    safe_n = np.where(valid, n, 1)
    with np.errstate(invalid="ignore"):
        cell = (a[np.minimum(safe_n, K)] - b[j] - b[k]) / safe_n
    cell = np.where(valid, cell, -np.inf)
    flat = int(np.argmax(cell))
    best = float(cell.flat[flat])
    arg = (int(flat // (K + 1)), int(flat % (K + 1)))
    head = np.where(valid & (n < K / 2), cell, -np.inf).max()
    tail = np.where(valid & (n >= K / 2), cell, -np.inf).max()
    diverging = bool(tail > head + DIVERGENCE_TOL)
    return MGResult(
        value=float(np.exp(best)),
        log_value=best,
        argmax=arg,
        diverging=diverging,
        truncation=K,
    )


def moderate_growth_constant(
    M: SequenceLike, N: SequenceLike, truncation: Optional[int] = None
) -> MGResult:
    """mg(M, N) = sup_{j+k>=1} (M_{j+k}/(N_j N_k))^{1/(j+k)} over j+k <= K.

    ``diverging`` is set when the cells with j+k >= K/2 beat those below K/2
    by more than 0.05 log units.
    """
    result = _mg_logs(_logs(M), _logs(N), truncation)
    if result.diverging:
        logger.warning(
            "Moderate growth constant still growing at truncation",
            left=_label(M),
            right=_label(N),
            log_value=result.log_value,
        )
    return result


def is_derivation_closed(M: WeightSequence) -> ClosednessResult:
    """M_{k+1} <= C^{k+1} M_k with the Mandelbrojt companion M_k <= C'^{k^2}.

    Verdict: the per-k exponent does not grow over the tail half by more than
    0.05 log units compared with the head half.
    """
    logM = M.logM
    K = M.K
    e = np.diff(logM) / np.arange(1, K + 1)
    C = float(np.exp(e.max()))
    k = np.arange(1, K + 1)
    C_prime = float(np.exp(np.max(logM[1:] / k**2)))
    half = K // 2
    closed = bool(e[half:].max() <= e[:half].max() + DIVERGENCE_TOL)
    return ClosednessResult(closed=closed, C=C, C_mandelbrojt=C_prime)


def is_quasianalytic(M: WeightSequence) -> QuasiResult:
    """Decide sum 1/mu_k = oo from the truncation.

    The tail is read at k = K/8, K/4, K/2, K by ``tails.tail_verdict`` with
    log mu_k as the power profile (exact for Gevrey-type data) and the root
    log M_k / k as the ladder profile (exact for the Q^n family); both series
    diverge together for log-convex M. When convergent, the tail bound is the
    integral-test remainder of the extrapolated mu past K.
    """
    K = M.K
    logmu = M.logmu[1:]
    partial = fsum(np.exp(-logmu))
    if np.any(np.diff(logmu) < -TOL):
        logger.warning("mu not increasing, verdict unavailable", label=M.label)
        return QuasiResult(
            quasianalytic=None, partial_sum=partial, tail_bound=None, slope=None
        )
    ks = np.array([K // 8, K // 4, K // 2, K])
    if ks[0] < 1:
        return QuasiResult(quasianalytic=None, partial_sum=partial, tail_bound=None, slope=None)
    verdict = tail_verdict(ks, M.logmu[ks], M.logM[ks] / ks)
    return QuasiResult(
        quasianalytic=verdict.divergent,
        partial_sum=partial,
        tail_bound=verdict.tail,
        slope=verdict.slope,
        depth=verdict.depth,
    )


# ---------------------------------------------------------------------------
# associated functions
# ---------------------------------------------------------------------------


def _h_matrix(logv: np.ndarray, logt: np.ndarray) -> np.ndarray:
    k = np.arange(logv.size)
    return logv[None, :] + k[None, :] * logt[:, None]


def h_log_many(logv: np.ndarray, t: np.ndarray, tol: float = TOL):
    """log h(t) and the smallest minimizer for an array of t > 0."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    vals = _h_matrix(logv, np.log(t))
    best = vals.min(axis=1)
    kstar = np.argmax(vals <= best[:, None] + tol, axis=1)
    return best, kstar


def h_eval(A: AssocFns, t: float, tol: float = TOL) -> HValue:
    """h(t) = min_k m_k t^k with kstar the smallest minimizer (Gamma-bar)."""
    if t < 0:
        raise InvalidInput("h is only defined for t >= 0", t=t)
    if t == 0:
        return HValue(h=0.0, log_h=-math.inf, kstar=1)
    best, kstar = h_log_many(A.values, np.array([t]), tol)
    k = int(kstar[0])
    saturated = k == A.K
    if saturated:
        logger.warning("h minimizer at truncation", label=A.label, t=t, K=A.K)
    return HValue(h=float(np.exp(best[0])), log_h=float(best[0]), kstar=k, saturated=saturated)


def gamma_lower_many(logv: np.ndarray, t: np.ndarray, tol: float = TOL) -> np.ndarray:
    """First k with m_{k+1}/m_k >= 1/t, or K when no ratio crosses."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ratios = np.diff(logv)
    with np.errstate(divide="ignore"):
        need = -np.log(t)
    hit = ratios[None, :] >= need[:, None] - tol
    first = np.argmax(hit, axis=1)
    return np.where(hit.any(axis=1), first, logv.size - 1)


def gamma_lower(A: AssocFns, t: float, strict: bool = False, tol: float = TOL) -> int:
    ratios = np.diff(A.values)
    if ratios.size > 3 and np.any(np.diff(ratios[2:]) < -tol):
        msg = "ratio sequence m_{k+1}/m_k is not monotone beyond index 2"
        if strict:
            logger.error(msg, label=A.label)
            raise NotEventuallyIncreasing(msg, label=A.label)
        logger.warning(msg, label=A.label)
    k = int(gamma_lower_many(A.values, np.array([t]), tol)[0])
    if k == A.K:
        logger.warning("No ratio crossing below truncation", label=A.label, t=t)
    return k


def verify_h_inequalities(
    m: AssocFns,
    n: AssocFns,
    C: float,
    tgrid: Sequence[float],
    jmax: int = 16,
    tol: float = TOL,
) -> InequalityReport:
    """Check h_m(t) <= C^j n_j t^j h_n(Ct) and h_m(t) <= h_n(eCt/2)^2.

    The right-hand sides use h_n truncated at K - j and K/2 respectively, the
    ranges the composition argument actually reaches, so both hold exactly at
    finite truncation whenever C >= mg(M, N).
    """
    t = np.asarray(tgrid, dtype=float)
    a = m.values
    b = n.values
    K = min(m.K, n.K)
    logC = math.log(C)
    lhs, _ = h_log_many(a, t)
    worst = math.inf
    worst_at = (float(t[0]), 0)
    for j in range(0, min(jmax, K - 1) + 1):
        rhs_h, _ = h_log_many(b[: K - j + 1], C * t)
        rhs = j * logC + b[j] + j * np.log(t) + rhs_h
        slack = rhs - lhs
        i = int(np.argmin(slack))
        if slack[i] < worst:
            worst = float(slack[i])
            worst_at = (float(t[i]), j)
    sq, _ = h_log_many(b[: K // 2 + 1], math.e * C * t / 2.0)
    square_slack = 2.0 * sq - lhs
    i = int(np.argmin(square_slack))
    report = InequalityReport(
        worst_growth_slack=worst,
        worst_growth_at=worst_at,
        worst_square_slack=float(square_slack[i]),
        worst_square_at=float(t[i]),
        points=int(t.size),
    )
    if worst < -tol:
        logger.error("h moderate-growth inequality violated", t=worst_at[0], j=worst_at[1])
        raise ViolationFound(
            f"h_m(t) <= C^j n_j t^j h_n(Ct) fails at t={worst_at[0]:g}, j={worst_at[1]}",
            t=worst_at[0],
            j=worst_at[1],
        )
    if report.worst_square_slack < -tol:
        logger.error("h square inequality violated", t=report.worst_square_at)
        raise ViolationFound(
            f"h_m(t) <= h_n(eCt/2)^2 fails at t={report.worst_square_at:g}",
            t=report.worst_square_at,
            j=None,
        )
    logger.debug("h inequalities verified", **report.model_dump())
    return report


# ---------------------------------------------------------------------------
# compositions
# ---------------------------------------------------------------------------


def m_circle_all(m: SequenceLike) -> np.ndarray:
    """log m°_k for k = 0..K; entry 0 is 0 by convention."""
    logm = _logs(m)
    K = logm.size - 1
    idx = np.arange(K + 1)
    a = idx[1:, None]
    k = idx[None, :]
    shift = k - a
    valid = shift >= 0
    shift = np.where(valid, shift, 0)
    B = np.full(K + 1, -np.inf)
    B[0] = 0.0
    out = np.full(K + 1, -np.inf)
    out[0] = 0.0
    for j in range(1, K + 1):
        cand = np.where(valid, logm[1:, None] + B[shift], -np.inf)
        B = cand.max(axis=0)
        out = np.maximum(out, logm[j] + B)
    out[0] = 0.0
    return out


def m_circle(m: SequenceLike, k: int) -> float:
    """m°_k = max over compositions a_1+..+a_j = k of m_j m_{a_1}..m_{a_j}."""
    K = _logs(m).size - 1
    if not 1 <= k <= K:
        raise InvalidInput(f"k must lie in [1, {K}]", k=k)
    return float(np.exp(m_circle_all(m)[k]))


def fdb_condition(m: SequenceLike, n: SequenceLike) -> RelationResult:
    """Relation of the composition sequence m° to n (m° preceq n is wanted)."""
    circ = m_circle_all(m)
    return _relation_from_logs(circ, _logs(n))


# ---------------------------------------------------------------------------
# regularity
# ---------------------------------------------------------------------------


def _tgrid_for(logv: np.ndarray, points: int = 200) -> np.ndarray:
    K = logv.size - 1
    ratios = np.diff(logv)
    lo = -ratios[K // 2]
    hi = math.log(2.0) - ratios[0]
    if hi <= lo:
        hi = lo + 1.0
    return np.exp(np.linspace(lo, hi, points))


def _stable_exponent(e: np.ndarray) -> Tuple[float, bool]:
    half = e.size // 2
    return float(e.max()), bool(e[half:].max() <= e[:half].max() + DIVERGENCE_TOL)


def regularity_certificate(
    M: WeightSequence,
    N: WeightSequence,
    mode: Literal["R", "B"] = "R",
    points: int = 200,
) -> RegularityResult:
    """Search the smallest C in 2^0..2^20 linking the counting functions.

    R: Gamma-bar_n(Ct) <= Gamma-under_m(t) and M_{j+1} <= C^{j+1} N_j.
    B: Gamma-bar_m(Ct) <= Gamma-under_n(t) and N_{j+1} <= C^j M_j.
    The t-grid spans the range where Gamma-under lies in [0, K/2].
    """
    if M.K != N.K:
        raise LengthMismatch("regularity needs equal truncations", left=M.K, right=N.K)
    if mode == "R":
        lower, upper = M.logm, N.logm
        e = (M.logM[1:] - N.logM[:-1]) / np.arange(1, M.K + 1)
    else:
        lower, upper = N.logm, M.logm
        e = (N.logM[2:] - M.logM[1:-1]) / np.arange(1, M.K)
    logC_d, stable = _stable_exponent(e)
    C_d = float(np.exp(max(logC_d, 0.0)))

    t = _tgrid_for(lower, points)
    g_lower = gamma_lower_many(lower, t)
    K = M.K
    C_gamma = None
    saturated_everywhere = True
    for p in range(21):
        C = 2.0**p
        _, kstar = h_log_many(upper, C * t)
        if np.any(kstar >= K):
            continue
        saturated_everywhere = False
        if np.all(kstar <= g_lower):
            C_gamma = C
            break
    if C_gamma is None and saturated_everywhere:
        logger.error("Counting functions saturate the truncation", left=M.label, right=N.label)
        raise TruncationSaturated(
            "Gamma values reach K on the whole search; shrink the t-grid or raise K",
            left=M.label,
            right=N.label,
        )
    passed = C_gamma is not None and stable
    C = max(C_gamma, C_d) if C_gamma is not None else None
    result = RegularityResult(
        mode=mode,
        passed=passed,
        C=C,
        C_gamma=C_gamma,
        C_derivation=C_d,
        derivation_stable=stable,
    )
    logger.debug("Regularity certificate", left=M.label, right=N.label, **result.model_dump())
    return result


def is_regular(M: WeightSequence) -> Tuple[bool, Optional[float]]:
    """Single-sequence regularity: root growth, derivation closedness, Gamma link."""
    closed = is_derivation_closed(M)
    cert = regularity_certificate(M, M, "R")
    ok = M.certificates["root_increasing"].passed and closed.closed and cert.passed
    C = None if cert.C is None else max(cert.C, closed.C)
    return ok, C
