"""
Sequence constructions
======================

The reduction of a pair L lhd M to an intermediate weight sequence S, the
intersectability test through M-check, the Q^n families, the N' construction,
derivative-bound sequences of test functions, sequence-space membership and
Frobenius representations of integers.

Every construction returns its audit: the conditions it is meant to satisfy,
re-measured on the produced numbers. A failed audit raises ``AuditFailed``
unless the caller asked for a non-strict run.
"""

import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import gammaln

from carleman.config import NumericsConfig
from carleman.errors import (
    AuditFailed,
    DerivativeCapExceeded,
    FactorNonpositive,
    InvalidInput,
    NotCoprime,
    NotLhd,
)
from carleman.logging import logger
from carleman.models import Certificate, CertificateBundle, as_float_list, tail_slope
from carleman.registry import SEQUENCES
from carleman.seqcore import (
    DEFAULT_K,
    TOL,
    PositiveSequence,
    Relation,
    SequenceLike,
    WeightSequence,
    is_quasianalytic,
    mk_weight_sequence,
    moderate_growth_constant,
    relation,
)
from carleman.summation import fsum
from carleman.tails import iterated_logs


def _logs(x: SequenceLike) -> np.ndarray:
    return x.logM if isinstance(x, WeightSequence) else x.values


class LambdaMembership(BaseModel):
    member: bool
    rho: float
    slope: float


class ReductionResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    S: WeightSequence
    N: WeightSequence
    beta: PositiveSequence
    delta: PositiveSequence
    C: float
    C_S: float
    audit: CertificateBundle

    def csv_rows(self, L: SequenceLike, M: WeightSequence) -> List[Tuple[int, float, float, float]]:
        """(k, log L_k, log S_k, log M_k) rows."""
        logL = _logs(L)
        return [
            (k, float(logL[k]), float(self.S.logM[k]), float(M.logM[k]))
            for k in range(M.K + 1)
        ]


class IntersectableResult(BaseModel):
    passed: bool
    threshold: int
    Mcheck: WeightSequence


class NPrimeResult(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    Nprime: WeightSequence
    C: float
    audit: CertificateBundle


class FrobeniusTable(BaseModel):
    p: int
    q: int
    rows: List[Tuple[int, int, int]]
    largest_gap: int
    complete: bool


# ---------------------------------------------------------------------------
# membership and rescaling
# ---------------------------------------------------------------------------


def lambda_membership(c: PositiveSequence, M: WeightSequence) -> LambdaMembership:
    """rho = sup_k (|c_k|/M_k)^{1/k}; member when the exponent has stopped growing."""
    logc = c.values
    K = min(c.K, M.K)
    k = np.arange(1, K + 1)
    e = (logc[1 : K + 1] - M.logM[1 : K + 1]) / k
    ok = np.isfinite(e)
    if not ok.any():
        return LambdaMembership(member=True, rho=0.0, slope=0.0)
    rho = float(np.exp(e[ok].max()))
    tail = ok & (k >= K // 2)
    slope = tail_slope(np.log(k[tail]), e[tail])
    return LambdaMembership(member=slope <= 0.1, rho=rho, slope=slope)


def rescale_to_dominate(N: WeightSequence, M: SequenceLike) -> WeightSequence:
    """N_k C^k with the least C >= 1 making it dominate M termwise."""
    logN, logM = N.logM, _logs(M)
    k = np.arange(1, N.K + 1)
    logC = max(0.0, float(np.max((logM[1:] - logN[1:]) / k)))
    if logC == 0.0:
        return N
    scaled = logN + logC * np.arange(N.K + 1)
    return mk_weight_sequence(scaled, f"{N.label}*{math.exp(logC):.4g}^k")


# ---------------------------------------------------------------------------
# reduction
# ---------------------------------------------------------------------------


def _lower_convex_hull(y: np.ndarray) -> np.ndarray:
    """Largest convex minorant of the points (k, y_k), evaluated at every k."""
    hull: List[int] = []
    for i in range(y.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (y[b] - y[a]) * (i - a) >= (y[i] - y[a]) * (b - a):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(np.arange(y.size), hull, y[hull])


def reduce_L_to_M(
    L: SequenceLike, M: WeightSequence, strict: bool = True, tol: float = TOL
) -> ReductionResult:
    """Build S with L <= S lhd M, s log-convex and S non-quasianalytic.

    beta_k = sup_{p >= k} (L_p/M_p)^{1/p}; delta starts from
    min(beta^{-1/2}, mu^{1/2}) and a forward pass makes it nondecreasing with
    mu/delta nondecreasing. N = prod mu_i/delta_i, scaled to dominate L, and S
    is k! times the largest log-convex minorant of n, scaled again if needed.
    """
    rel = relation(L, M)
    if rel.verdict != Relation.LHD:
        logger.error("Reduction needs L lhd M", verdict=rel.verdict.value, r_last=rel.r_last)
        raise NotLhd(
            f"relation(L, M) is {rel.verdict.value}, not Lhd", verdict=rel.verdict.value
        )
    logL = _logs(L)
    K = M.K
    k = np.arange(K + 1, dtype=float)
    kk = k[1:]
    logmu = M.logmu

    e = (logL[1:] - M.logM[1:]) / kk
    logbeta = np.maximum.accumulate(e[::-1])[::-1]
    raw = np.minimum(-0.5 * logbeta, 0.5 * logmu[1:])
    logdelta = np.empty(K)
    logdelta[0] = raw[0]
    for i in range(1, K):
        up = max(logdelta[i - 1], raw[i])
        logdelta[i] = min(up, logdelta[i - 1] + logmu[i + 1] - logmu[i])

    logN = np.concatenate(([0.0], np.cumsum(logmu[1:] - logdelta)))
    logC = max(0.0, float(np.max((logL[1:] - logN[1:]) / kk)))
    logN = logN + logC * k
    N = mk_weight_sequence(logN, f"N[{L.label}->{M.label}]")

    logfact = gammaln(k + 1.0)
    logs = _lower_convex_hull(logN - logfact)
    logS = logs + logfact
    logCS = max(0.0, float(np.max((logL[1:] - logS[1:]) / kk)))
    logS = logS + logCS * k
    logs = logS - logfact
    S = mk_weight_sequence(logS, f"S[{L.label}->{M.label}]")

    audit = _audit_reduction(logL, M, S, logs, logbeta, logdelta, tol)
    result = ReductionResult(
        S=S,
        N=N,
        beta=PositiveSequence(logv=as_float_list(np.concatenate(([logbeta[0]], logbeta))), label="beta"),
        delta=PositiveSequence(logv=as_float_list(np.concatenate(([logdelta[0]], logdelta))), label="delta"),
        C=math.exp(logC),
        C_S=math.exp(logCS),
        audit=audit,
    )
    logger.info(
        "Reduction audited",
        L=L.label,
        M=M.label,
        passed=audit.passed,
        failed=audit.failed(),
    )
    if not audit.passed and strict:
        raise AuditFailed(
            f"reduction audit failed: {', '.join(audit.failed())}",
            failed=audit.failed(),
            result=result,
        )
    return result


def _audit_reduction(
    logL: np.ndarray,
    M: WeightSequence,
    S: WeightSequence,
    logs: np.ndarray,
    logbeta: np.ndarray,
    logdelta: np.ndarray,
    tol: float,
) -> CertificateBundle:
    K = M.K
    kk = np.arange(1, K + 1, dtype=float)
    half = K // 2 - 1
    tail = kk >= K // 2
    logmu = M.logmu[1:]
    bundle = CertificateBundle()

    slope = tail_slope(np.log(kk[tail]), logdelta[tail])
    bundle.add(
        Certificate(
            name="divergent",
            passed=slope > 0 and logdelta[-1] > logdelta[half],
            witness=slope,
            detail="delta_k -> oo: positive tail slope of log delta against log k",
        )
    )
    prod = logdelta + logbeta
    slope = tail_slope(np.log(kk[tail]), prod[tail])
    bundle.add(
        Certificate(
            name="zerosequence",
            passed=slope < 0 and prod[-1] < prod[half],
            witness=slope,
            detail="delta_k beta_k -> 0: negative tail trend",
        )
    )
    ratio = logmu - logdelta
    worst = float(np.diff(ratio).min())
    bundle.add(
        Certificate(
            name="decreasing",
            passed=worst >= -tol,
            witness=worst,
            tol=tol,
            detail="mu_k/delta_k nondecreasing",
        )
    )
    lhs = fsum(np.exp(logdelta - logmu))
    rhs = 8.0 * math.exp(logdelta[0]) * fsum(np.exp(-logmu))
    bundle.add(
        Certificate(
            name="nqthm",
            passed=lhs <= rhs,
            witness=lhs / rhs,
            detail="sum delta/mu <= 8 delta_1 sum 1/mu",
        )
    )
    gap = float(np.max(logL - S.logM))
    bundle.add(Certificate(name="L_le_S", passed=gap <= tol, witness=gap, tol=tol))

    r = (S.logM[1:] - M.logM[1:]) / kk
    r_slope = tail_slope(np.log(kk[tail]), r[tail])
    steady = bool(np.all(np.diff(r[tail]) <= tol))
    verdict = relation(S, M).verdict.value
    bundle.add(
        Certificate(
            name="S_lhd_M",
            passed=steady and r_slope < 0,
            witness=r_slope,
            detail=f"tail of (log S_k - log M_k)/k decreasing; relation verdict {verdict}",
        )
    )
    second = logs[:-2] + logs[2:] - 2.0 * logs[1:-1]
    bundle.add(
        Certificate(
            name="s_log_convex",
            passed=float(second.min()) >= -tol,
            witness=float(second.min()),
            tol=tol,
        )
    )
    mg = moderate_growth_constant(S, S)
    bundle.add(
        Certificate(name="S_moderate_growth", passed=not mg.diverging, witness=mg.value)
    )
    C_prime = float(np.exp(np.max(S.logM[1:] / kk**2)))
    bundle.add(
        Certificate(
            name="S_derivation_closed",
            passed=math.isfinite(C_prime),
            witness=C_prime,
            detail="M_k <= C^(k^2)",
        )
    )
    qa = is_quasianalytic(S)
    bundle.add(
        Certificate(
            name="S_non_quasianalytic",
            passed=qa.quasianalytic is False,
            witness=qa.slope,
        )
    )
    return bundle


# ---------------------------------------------------------------------------
# intersectability and the Q families
# ---------------------------------------------------------------------------


def check_intersectable(M: WeightSequence, tol: float = TOL) -> IntersectableResult:
    """Sufficient test: m-check log-convex from an early index on.

    log Mcheck_k = log M_k + k sum_{j<=k} log(1 - M_j^{-1/j}); the reported
    threshold is the first index from which all second differences of
    log mcheck are >= -tol. Passed when it lies within the first quarter.
    """
    K = M.K
    kk = np.arange(1, K + 1, dtype=float)
    roots = M.logM[1:] / kk
    if np.any(roots <= 0.0):
        j = int(np.argmax(roots <= 0.0)) + 1
        logger.error("Mcheck factor nonpositive", label=M.label, j=j)
        raise FactorNonpositive(f"M_j^(1/j) <= 1 at j={j}", j=j)
    factors = np.cumsum(np.log1p(-np.exp(-roots)))
    logcheck = np.concatenate(([0.0], M.logM[1:] + kk * factors))
    logm = logcheck - gammaln(np.arange(K + 1) + 1.0)
    second = logm[:-2] + logm[2:] - 2.0 * logm[1:-1]
    bad = np.nonzero(second < -tol)[0]
    threshold = 0 if bad.size == 0 else int(bad[-1]) + 2
    passed = threshold <= K // 4
    logger.info("Intersectability checked", label=M.label, threshold=threshold, passed=passed)
    check = mk_weight_sequence(logcheck, f"check[{M.label}]")
    return IntersectableResult(passed=passed, threshold=threshold, Mcheck=check)


def _anchor_index(n: int, K: int) -> int:
    """ceil(exp^[i](1)) for the deepest i <= n whose threshold lies within K."""
    level, anchor = 1.0, 1
    for _ in range(n):
        if level > math.log(K):
            break
        level = math.exp(level)
        anchor = math.ceil(level)
    return anchor


def family_Q(n: int, K: int = DEFAULT_K) -> WeightSequence:
    """Q^0_k = (k log(k+e))^k; Q^n_k = (k log k ... log^[n] k)^k for n = 1..4.

    The product formula holds from the threshold exp^[i](1) of the deepest
    logarithm reached by the truncation; below it log Q^n is continued
    linearly from Q_0 = 1 to the threshold value. Deeper logarithms stay
    below their own thresholds on the stored range and are pinned at 1, so
    Q^3 and Q^4 coincide with Q^2 unless K exceeds exp^[3](1).
    """
    if not 0 <= n <= 4:
        raise InvalidInput("family_Q is defined for n in 0..4", n=n)
    k = np.arange(K + 1, dtype=float)
    logQ = np.zeros(K + 1)
    if n == 0:
        logQ[1:] = k[1:] * (np.log(k[1:]) + np.log(np.log(k[1:] + math.e)))
    else:
        a = _anchor_index(n, K)
        top = k[a:]
        logQ[a:] = top * (np.log(top) + sum(np.log(level) for level in iterated_logs(top, n)))
        logQ[:a] = k[:a] / a * logQ[a]
    return mk_weight_sequence(logQ, f"q:{n}")


@SEQUENCES.builtin("q", parametrised=True)
def _q_builtin(param: str, K: int = DEFAULT_K) -> WeightSequence:
    return family_Q(int(param), K)


def nprime(
    N: WeightSequence, M: WeightSequence, strict: bool = True, tol: float = TOL
) -> NPrimeResult:
    """n'_k = C^k min_j n_j n_{k-j} with C = mg(m, m)."""
    if N.K != M.K:
        raise InvalidInput("nprime needs equal truncations", left=N.K, right=M.K)
    K = N.K
    C = moderate_growth_constant(M.m_view(), M.m_view()).value
    logn = N.logm
    idx = np.arange(K + 1)
    j = idx[:, None]
    kk = idx[None, :]
    valid = j <= kk
    cells = np.where(valid, logn[np.minimum(j, K)] + logn[np.clip(kk - j, 0, K)], np.inf)
    best = cells.min(axis=0)
    logC = math.log(C)
    lognp = best + logC * idx
    logfact = gammaln(idx + 1.0)
    Np = mk_weight_sequence(lognp + logfact, f"N'[{N.label}]")

    bundle = CertificateBundle()
    balanced = cells[idx // 2, idx]
    gap = float(np.max(balanced - best))
    bundle.add(Certificate(name="balanced", passed=gap <= tol, witness=gap, tol=tol))
    second = lognp[:-2] + lognp[2:] - 2.0 * lognp[1:-1]
    bundle.add(
        Certificate(
            name="nprime_log_convex",
            passed=float(second.min()) >= -tol,
            witness=float(second.min()),
            tol=tol,
        )
    )
    dom = float(np.min(Np.logM - M.logM))
    bundle.add(Certificate(name="dominates_M", passed=dom >= -tol, witness=dom, tol=tol))
    jj = np.arange(1, K // 2 + 1, dtype=float)
    lhs = Np.logM[2 * jj.astype(int)] / (2 * jj)
    rhs = math.log(2 * C / math.e) + np.log(jj) + logn[jj.astype(int)] / jj
    slack = float(np.min(lhs - rhs))
    bundle.add(
        Certificate(
            name="non_quasianalytic_bound",
            passed=slack >= -tol,
            witness=slack,
            tol=tol,
            detail="(N'_2j)^(1/2j) >= (2C/e) j n_j^(1/j)",
        )
    )
    logger.info("N' constructed", N=N.label, M=M.label, C=C, failed=bundle.failed())
    result = NPrimeResult(Nprime=Np, C=C, audit=bundle)
    if not bundle.passed and strict:
        raise AuditFailed(
            f"nprime audit failed: {', '.join(bundle.failed())}",
            failed=bundle.failed(),
            result=result,
        )
    return result


# ---------------------------------------------------------------------------
# test functions and integers
# ---------------------------------------------------------------------------


def derivative_bound_sequence(
    g, h, kmax: int, samples: Optional[int] = None
) -> PositiveSequence:
    """L_k = max over [-1, 1] of |g^(k)| and |h^(k)|, stored as log (-inf for 0)."""
    cap = min(g.dcap, h.dcap)
    if kmax > cap:
        logger.error("Derivative order above cap", kmax=kmax, cap=cap)
        raise DerivativeCapExceeded(f"kmax={kmax} exceeds derivative cap {cap}", kmax=kmax, cap=cap)
    x = np.linspace(-1.0, 1.0, samples or NumericsConfig().interval_samples)
    logL = []
    for k in range(kmax + 1):
        peak = max(float(np.max(np.abs(g.derivative(k, x)))), float(np.max(np.abs(h.derivative(k, x)))))
        logL.append(math.log(peak) if peak > 0 else -math.inf)
    return PositiveSequence(logv=logL, label=f"L[{g.name},{h.name}]")


def frobenius_cover(p: int, q: int) -> FrobeniusTable:
    """Representations j = a1 p + a2 q for j in [pq, 3pq] and the largest gap below pq."""
    if p < 1 or q < 1:
        raise InvalidInput("p and q must be positive", p=p, q=q)
    if math.gcd(p, q) != 1:
        logger.error("Frobenius pair not coprime", p=p, q=q)
        raise NotCoprime(f"gcd({p}, {q}) = {math.gcd(p, q)}", p=p, q=q)

    def represent(j: int) -> Optional[Tuple[int, int]]:
        for a1 in range(j // p + 1):
            rest = j - a1 * p
            if rest % q == 0:
                return a1, rest // q
        return None

    rows = []
    complete = True
    for j in range(p * q, 3 * p * q + 1):
        rep = represent(j)
        if rep is None:
            complete = False
            continue
        rows.append((j, rep[0], rep[1]))
    gaps = [j for j in range(p * q) if represent(j) is None]
    return FrobeniusTable(
        p=p, q=q, rows=rows, largest_gap=max(gaps) if gaps else -1, complete=complete
    )
