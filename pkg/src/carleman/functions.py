"""
Test functions on [-1, 1]
=========================

Smooth functions with exact access to high-order derivatives, used as the data
f, g = f^j and h = f^(j+1) of the approximation and division engines.

Key Concepts:
-------------
- SmoothFn1D: evaluation and k-th derivative for k <= dcap (default 40).
- Polynomial, ChebFn: spectral representations via ``numpy.polynomial``.
- TrigSeries: lacunary cosine series sum a_j cos(b_j x); derivatives are exact.
- Pole: c/(x0 - x), analytic on a neighborhood of [-1, 1].
- Power: f^n through products of truncated Taylor expansions, so g and h keep
  exact derivatives whatever f is.

Usage Examples:
---------------
f = function_from_builtin("bump:gevrey2")
g, h = f.power(2), f.power(3)
d5 = g.derivative(5, np.linspace(-1, 1, 401))

Design Notes:
-------------
- ChebFn differentiation amplifies coefficient error roughly like
  (2.4 n)^k for degree n, so closed-form rules are used for the builtins.
"""

import math
from typing import List

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial import Polynomial as NpPolynomial
from pydantic import BaseModel, ConfigDict
from scipy.special import gammaln

from carleman.errors import DerivativeCapExceeded, InvalidInput
from carleman.logging import logger
from carleman.registry import TEST_FUNCTIONS

DCAP = 40
BUMP_TERMS = 15


class SmoothFn1D(BaseModel):
    """A smooth function on [-1, 1] with derivatives up to ``dcap``."""

    model_config = ConfigDict(frozen=True)

    name: str = ""
    dcap: int = DCAP

    def _derivative(self, k: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, k: int, x) -> np.ndarray:
        if k > self.dcap:
            logger.error("Derivative order above cap", name=self.name, k=k, dcap=self.dcap)
            raise DerivativeCapExceeded(
                f"derivative order {k} exceeds cap {self.dcap}", k=k, cap=self.dcap
            )
        return self._derivative(k, np.asarray(x, dtype=float))

    def __call__(self, x) -> np.ndarray:
        return self.derivative(0, x)

    def taylor(self, x, order: int) -> np.ndarray:
        """Rows f^(k)(x)/k! for k = 0..order."""
        x = np.asarray(x, dtype=float)
        return np.stack(
            [self.derivative(k, x) / math.exp(gammaln(k + 1.0)) for k in range(order + 1)]
        )

    def power(self, n: int) -> "SmoothFn1D":
        if n == 1:
            return self
        return Power(base=self, n=n, name=f"({self.name})^{n}", dcap=self.dcap)


class Polynomial(SmoothFn1D):
    coef: List[float]

    def _derivative(self, k: int, x: np.ndarray) -> np.ndarray:
        p = NpPolynomial(self.coef)
        return np.broadcast_to(p.deriv(k)(x), x.shape).astype(float)


class ChebFn(SmoothFn1D):
    """Chebyshev series on [-1, 1]."""

    coef: List[float]

    @classmethod
    def interpolate(cls, fn, deg: int, name: str = "", dcap: int = DCAP) -> "ChebFn":
        if deg > 2048:
            raise InvalidInput("Chebyshev degree above 2048", deg=deg)
        series = Chebyshev.interpolate(fn, deg)
        return cls(coef=[float(c) for c in series.coef], name=name, dcap=dcap)

    def _derivative(self, k: int, x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(Chebyshev(self.coef).deriv(k)(x), x.shape).astype(float)


class TrigSeries(SmoothFn1D):
    """sum_j a_j cos(b_j x)."""

    amps: List[float]
    freqs: List[float]

    def _derivative(self, k: int, x: np.ndarray) -> np.ndarray:
        a = np.asarray(self.amps)
        b = np.asarray(self.freqs)
        weights = a * b**k
        phase = np.multiply.outer(x, b) + k * math.pi / 2
        return np.cos(phase) @ weights


class Pole(SmoothFn1D):
    """scale/(center - x) with center outside [-1, 1]."""

    center: float = 2.0
    scale: float = 1.0

    def _derivative(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.scale * math.exp(gammaln(k + 1.0)) / (self.center - x) ** (k + 1)


class Power(SmoothFn1D):
    """base^n with derivatives from the n-fold Cauchy product of Taylor rows."""

    base: SmoothFn1D
    n: int

    def taylor(self, x, order: int) -> np.ndarray:
        if order > self.dcap:
            raise DerivativeCapExceeded(
                f"derivative order {order} exceeds cap {self.dcap}", k=order, cap=self.dcap
            )
        t = self.base.taylor(x, order)
        out = t.copy()
        for _ in range(self.n - 1):
            out = _truncated_product(out, t)
        return out

    def _derivative(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.taylor(x, k)[k] * math.exp(gammaln(k + 1.0))


def _truncated_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    order = a.shape[0]
    out = np.zeros_like(a)
    for k in range(order):
        out[k] = np.sum(a[: k + 1] * b[k::-1], axis=0)
    return out


# ---------------------------------------------------------------------------
# builtins
# ---------------------------------------------------------------------------


def function_from_builtin(spec: str, dcap: int = DCAP) -> SmoothFn1D:
    """Resolve a named test function: linear, zero, square, analytic, bump:gevreyS."""
    return TEST_FUNCTIONS.resolve(spec, dcap=dcap)


@TEST_FUNCTIONS.builtin("linear")
def _linear(dcap: int = DCAP) -> SmoothFn1D:
    return Polynomial(coef=[0.0, 1.0], name="linear", dcap=dcap)


@TEST_FUNCTIONS.builtin("zero")
def _zero(dcap: int = DCAP) -> SmoothFn1D:
    return Polynomial(coef=[0.0], name="zero", dcap=dcap)


@TEST_FUNCTIONS.builtin("square")
def _square(dcap: int = DCAP) -> SmoothFn1D:
    return Polynomial(coef=[0.0, 0.0, 1.0], name="square", dcap=dcap)


@TEST_FUNCTIONS.builtin("analytic")
def _analytic(dcap: int = DCAP) -> SmoothFn1D:
    return Pole(center=2.0, name="analytic", dcap=dcap)


@TEST_FUNCTIONS.builtin("bump", parametrised=True)
def _bump(param: str, dcap: int = DCAP) -> SmoothFn1D:
    """Lacunary series sum_j exp(-b_j^(1/s)) cos(b_j x), b_j = 2^j, in the Gevrey-s class."""
    try:
        s = float(param.removeprefix("gevrey"))
    except ValueError:
        raise InvalidInput(f"bump parameter must look like 'gevrey2', got {param!r}", param=param)
    if s <= 1.0:
        raise InvalidInput("bump Gevrey order must exceed 1", s=s)
    b = 2.0 ** np.arange(BUMP_TERMS)
    return TrigSeries(
        amps=[float(v) for v in np.exp(-(b ** (1.0 / s)))],
        freqs=[float(v) for v in b],
        name=f"bump:{param}",
        dcap=dcap,
    )
