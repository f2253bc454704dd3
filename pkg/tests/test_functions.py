import math

import numpy as np
import pytest

from functions import (
    REGISTRY,
    CallableSignal,
    Constant,
    DerivativeUnavailableError,
    Sine,
    SpaceFunction,
    UnknownFunctionError,
    resolve,
    resolve_signal,
)


def test_resolve_known_names():
    assert isinstance(resolve("zero"), Constant)
    assert resolve("sin_t") is REGISTRY["sin_t"]
    fn = Sine(2.0)
    assert resolve(fn) is fn


def test_resolve_unknown_name():
    with pytest.raises(UnknownFunctionError, match="nope"):
        resolve("nope")
    with pytest.raises(KeyError):
        resolve("nope")


def test_resolve_signal_rejects_space_functions():
    with pytest.raises(ValueError, match="not a function of time"):
        resolve_signal("xy")


def test_sine_derivatives():
    g = resolve_signal("sin_t")
    assert g.derivative(0, 0.3) == pytest.approx(math.sin(0.3))
    assert g.derivative(1, 0.0) == pytest.approx(1.0)
    assert g.derivative(2, math.pi / 2) == pytest.approx(-1.0)
    assert g.derivative(3, 0.0) == pytest.approx(-1.0)


def test_negative_derivative_order():
    with pytest.raises(ValueError):
        resolve_signal("sin_t").derivative(-1, 0.0)


@pytest.mark.parametrize("epsilon", [0.5, 0.1, 0.01])
def test_sine_penalty_solution_solves_the_ode(epsilon):
    g = Sine(1.5, 2.0)
    k0 = 0.25
    t = np.linspace(0.05, 1.0, 20)
    h = 1e-6
    k = g.penalty_solution(k0, epsilon, t)
    dk = (g.penalty_solution(k0, epsilon, t + h) - g.penalty_solution(k0, epsilon, t - h)) / (2 * h)
    np.testing.assert_allclose(epsilon * dk + k, g.value(t), atol=1e-6)
    assert float(g.penalty_solution(k0, epsilon, 0.0)) == pytest.approx(k0)


def test_constant_penalty_solution():
    g = Constant(2.0)
    t = np.array([0.0, 0.1, 1.0])
    np.testing.assert_allclose(g.penalty_solution(1.0, 0.1, t), 2.0 - np.exp(-t / 0.1))


def test_callable_signal_has_no_derivatives():
    g = CallableSignal(np.cos, name="cos")
    assert g.derivative(0, 0.0) == pytest.approx(1.0)
    assert g.penalty_solution(0.0, 0.1, 0.5) is None
    with pytest.raises(DerivativeUnavailableError, match="cos"):
        g.derivative(1, 0.0)


def test_time_signal_broadcasts_over_nodes():
    values = REGISTRY["sin_t"](np.zeros((3, 2)), 0.0, 0.5)
    assert values.shape == (3, 2)
    np.testing.assert_allclose(values, math.sin(0.5))
    np.testing.assert_array_equal(REGISTRY["one"].d2x(np.linspace(0, 1, 4)), np.zeros(4))


def test_wave_profiles():
    assert float(REGISTRY["paper_square_u0"](0.0, 0.0)) == pytest.approx(0.5)
    assert float(REGISTRY["paper_1d_u0"](0.0, 0.0)) == pytest.approx(math.sin(3 * math.pi / 4))
    assert float(REGISTRY["paper_1d_u0"](1.0, 0.0)) == pytest.approx(0.0, abs=1e-12)


def test_wave_profile_aliases():
    assert resolve("wave_square_u0") is resolve("paper_square_u0")
    assert resolve("wave_1d_u0") is resolve("paper_1d_u0")
    assert resolve("paper_square_u0").name == "paper_square_u0"


def test_xy_vanishes_on_the_axes():
    theta = np.array([0.0, math.pi / 2, math.pi, 3 * math.pi / 2])
    np.testing.assert_allclose(REGISTRY["xy"](np.cos(theta), np.sin(theta)), 0.0, atol=1e-15)


def test_second_derivative_fallback_matches_analytic():
    plain = SpaceFunction("plain_sine", lambda x, y: np.sin(math.pi * x))
    x = np.linspace(0.1, 0.9, 9)
    np.testing.assert_allclose(plain.d2x(x), REGISTRY["sin_pi_x"].d2x(x), atol=1e-5)
