import math

import numpy as np
import pytest

from carleman.errors import DerivativeCapExceeded, InvalidInput, UnknownBuiltin
from carleman.functions import ChebFn, Polynomial, function_from_builtin

X = np.linspace(-1.0, 1.0, 101)


def test_polynomial_derivatives():
    cube = Polynomial(coef=[0.0, 0.0, 0.0, 1.0], name="cube")
    assert np.allclose(cube.derivative(2, X), 6 * X)
    assert np.allclose(cube.derivative(3, X), 6.0)
    assert np.allclose(cube.derivative(7, X), 0.0)


def test_pole_derivatives_at_zero():
    f = function_from_builtin("analytic")
    for k in (0, 1, 5, 20):
        assert f.derivative(k, [0.0])[0] == pytest.approx(math.factorial(k) / 2 ** (k + 1))


def test_bump_value_and_gevrey_bound():
    f = function_from_builtin("bump:gevrey2")
    assert f([0.0])[0] == pytest.approx(sum(f.amps))
    a, b = np.asarray(f.amps), np.asarray(f.freqs)
    for k in (1, 10, 30):
        assert np.max(np.abs(f.derivative(k, X))) <= np.sum(a * b**k) * (1 + 1e-12)


def test_power_matches_pointwise_products():
    f = function_from_builtin("bump:gevrey2")
    g = f.power(2)
    assert np.allclose(g(X), f(X) ** 2)
    assert np.allclose(g.derivative(1, X), 2 * f(X) * f.derivative(1, X))
    h = function_from_builtin("linear").power(3)
    assert np.allclose(h.derivative(2, X), 6 * X)
    assert np.allclose(h.derivative(4, X), 0.0)


def test_power_one_is_identity():
    f = function_from_builtin("square")
    assert f.power(1) is f


def test_chebyshev_interpolant_derivatives():
    f = ChebFn.interpolate(np.exp, 30, name="exp")
    assert np.allclose(f.derivative(3, X), np.exp(X), atol=1e-8)


def test_derivative_cap():
    f = function_from_builtin("linear", dcap=10)
    f.derivative(10, X)
    with pytest.raises(DerivativeCapExceeded):
        f.derivative(11, X)
    with pytest.raises(DerivativeCapExceeded):
        f.power(2).derivative(11, X)


def test_unknown_and_invalid_builtins():
    with pytest.raises(UnknownBuiltin):
        function_from_builtin("sine")
    with pytest.raises(InvalidInput):
        function_from_builtin("bump:gevrey1")
    with pytest.raises(InvalidInput):
        function_from_builtin("bump:wide")
