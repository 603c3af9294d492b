"""Compensated summation.

``Accumulator`` keeps a running sum as an unevaluated pair (s, t) updated with
an error-free two-sum, elementwise over numpy arrays. Results depend only on
the order in which chunks are added, never on how targets are partitioned.
"""

import math
from typing import Iterable

import numpy as np


def two_sum(u: np.ndarray, v: np.ndarray):
    """Error-free transformation: u + v = s + t exactly."""
    s = u + v
    up = s - v
    vpp = s - up
    up = up - u
    vpp = vpp - v
    t = -(up + vpp)
    return s, t


class Accumulator:
    """Like math.fsum, but elementwise and with a running sum."""

    def __init__(self, shape, dtype=np.float64):
        self._s = np.zeros(shape, dtype=dtype)
        self._t = np.zeros(shape, dtype=dtype)

    def add(self, y: np.ndarray) -> None:
        if np.iscomplexobj(self._s):
            re = _pair_add(self._s.real, self._t.real, np.real(y))
            im = _pair_add(self._s.imag, self._t.imag, np.imag(y))
            self._s = re[0] + 1j * im[0]
            self._t = re[1] + 1j * im[1]
        else:
            self._s, self._t = _pair_add(self._s, self._t, y)

    def sum(self) -> np.ndarray:
        return self._s + self._t


def _pair_add(s: np.ndarray, t: np.ndarray, y):
    y, u = two_sum(np.asarray(y, dtype=np.float64), t)
    s, t = two_sum(y, s)
    return s, t + u


def fsum(values: Iterable[float]) -> float:
    """Exactly rounded sum of finite floats, ignoring nothing."""
    return math.fsum(float(v) for v in values)
