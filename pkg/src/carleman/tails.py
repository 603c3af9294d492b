"""
Tail verdicts
=============

Decides whether sum 1/nu_k (or the integral of 1/nu) diverges from a finite
stretch of nu, by comparing nu with the iterated-logarithm scale

    x,  x log x,  x log x log log x,  ...

whose reciprocals all diverge while x (log x)^q and its deeper analogues with
q > 1 converge.

Key Concepts:
-------------
- Two log profiles are read at four abscissae x_a < x_b <= x_c < x_d, giving
  a "mid" window [x_a, x_b] and an "end" window [x_c, x_d]:
  the power profile log nu, exact for power laws, and the ladder profile,
  exact for products of iterated logarithms (the root log M_k / k for
  sequences). For integrals both are log nu.
- Rung d peels log x + log l_1 + ... + log l_{d-1} off a profile and takes
  the secant elasticity kappa of the remainder against log l_d on each
  window. kappa ~ q flat means a factor l_d^q; an excess growing like a
  power of l_d makes kappa increase by the factor the pure excess l_d would
  show between the windows. Reaching half of that factor (geometrically)
  counts as power-like growth, so convergence.
- Power stage: rung 1 on the power profile. Ladder stage: rungs 1..4 on the
  ladder profile; kappa below 1 - tol diverges, kappa near 1 peels one more
  logarithm, and a rung whose logarithm is clipped flat on both windows ends
  the ladder with the last resolved kappa deciding.

Usage Examples:
---------------
xs = [32, 64, 128, 256]
tail_verdict(xs, logmu[xs], logM[xs] / xs)      # TailVerdict(divergent=..., ...)

Design Notes:
-------------
- Iterated logarithms are clipped as l_i = log(max(l_{i-1}, e)) >= 1, the
  same convention the Q^n family is built with.
- A slope of log nu above 1 + 4/log x_d clears every ladder product of total
  exponent up to 4 and is taken as convergent without further rungs.
"""

import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from carleman.logging import logger

LADDER_TOL = 0.1
POWER_FLOOR = 0.05
LADDER_SPAN = 4.0
MAX_DEPTH = 4
RESOLUTION = 1e-12


class TailVerdict(BaseModel):
    divergent: Optional[bool]
    depth: int = 0
    exponent: Optional[float] = None
    slope: Optional[float] = None
    tail: Optional[float] = None


class _Rung(BaseModel):
    mid: float
    end: float
    power_like: bool


def iterated_logs(x: np.ndarray, depth: int) -> List[np.ndarray]:
    """[l_1, ..., l_depth] with l_0 = x and l_i = log(max(l_{i-1}, e))."""
    level = np.asarray(x, dtype=float)
    out = []
    for _ in range(depth):
        level = np.log(np.maximum(level, math.e))
        out.append(level)
    return out


def _secant(y: np.ndarray, x: np.ndarray, i: int, j: int) -> Optional[float]:
    dx = float(x[j] - x[i])
    if abs(dx) < RESOLUTION:
        return None
    return float(y[j] - y[i]) / dx


def _rung(xs: np.ndarray, profile: np.ndarray, d: int) -> Optional[_Rung]:
    ells = iterated_logs(xs, d)
    scale = ells[-1]
    x = np.log(scale)
    w = profile - np.log(xs) - sum((np.log(e) for e in ells[:-1]), np.zeros_like(xs))
    mid, end = _secant(w, x, 0, 1), _secant(w, x, 2, 3)
    pure_mid, pure_end = _secant(scale, x, 0, 1), _secant(scale, x, 2, 3)
    if mid is None or end is None:
        return None
    growth = math.sqrt(pure_end / pure_mid)
    power_like = end > POWER_FLOOR and (mid <= 0.0 or end >= growth * mid)
    return _Rung(mid=mid, end=end, power_like=power_like)


def _tail(xs: np.ndarray, log_nu_end: float, depth: int, q: Optional[float]) -> Optional[float]:
    # integral of 1/nu past x_d with nu ~ x l_1 ... l_{depth-1} l_depth^q
    if q is None or q <= 1.0:
        return None
    logs = sum(float(np.log(e[-1])) for e in iterated_logs(xs, depth))
    return float(math.exp(math.log(xs[-1]) + logs - log_nu_end) / (q - 1.0))


def tail_verdict(
    xs: Sequence[float], power_logs: Sequence[float], ladder_logs: Sequence[float]
) -> TailVerdict:
    """Divergence of sum (or integral) of 1/nu from four samples of nu.

    ``power_logs`` and ``ladder_logs`` are the two profiles at ``xs``; the
    tail estimate is reported for convergent verdicts only.
    """
    xs = np.asarray(xs, dtype=float)
    power_logs = np.asarray(power_logs, dtype=float)
    ladder_logs = np.asarray(ladder_logs, dtype=float)
    log_nu_end = float(power_logs[-1])
    slope = _secant(power_logs, np.log(xs), 2, 3)

    def convergent(depth: int, q: Optional[float]) -> TailVerdict:
        return TailVerdict(
            divergent=False,
            depth=depth,
            exponent=q,
            slope=slope,
            tail=_tail(xs, log_nu_end, depth, q),
        )

    if slope is None:
        return TailVerdict(divergent=None)
    if slope - 1.0 >= LADDER_SPAN / math.log(xs[-1]):
        return convergent(0, slope)
    power = _rung(xs, power_logs, 1)
    if power is None:
        return TailVerdict(divergent=None, slope=slope)
    if power.power_like:
        return convergent(0, slope)

    best_depth, best_q = 0, slope
    last: Optional[_Rung] = None
    last_depth = 0
    for d in range(1, MAX_DEPTH + 1):
        rung = _rung(xs, ladder_logs, d)
        if rung is None:
            break
        last, last_depth = rung, d
        if rung.power_like:
            return convergent(best_depth, best_q)
        if rung.end < 1.0 - LADDER_TOL:
            return TailVerdict(divergent=True, depth=d, exponent=rung.end, slope=slope)
        if rung.end > 1.0 + LADDER_TOL:
            best_depth, best_q = d, rung.end
    if last is None:
        return TailVerdict(divergent=None, slope=slope)
    if last.end > 1.0 + LADDER_TOL:
        return convergent(best_depth, best_q)
    logger.debug("Tail matches the logarithmic scale", depth=last_depth, kappa=last.end)
    return TailVerdict(divergent=True, depth=last_depth, exponent=last.end, slope=slope)
