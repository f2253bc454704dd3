import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from analysis import peak_error, run_pair
from corrector1d import (
    CorrectorSpec,
    build_corrector,
    corrector_spec_for,
    s0,
    s1,
    s1_closed_form,
    solve_corrected,
)
from domain import Corrector, Direct, Interval1D, Penalty, ProblemSpec, SquareGrid, TimeGrid
from heat_solver import solve

NU = 0.2
ALPHA0 = -math.sin(3 * math.pi / 4)


def wave_spec(mode, n_cells=24, steps=1000):
    return ProblemSpec(Interval1D(n_cells), NU, "paper_1d_u0", TimeGrid(steps), boundary_mode=mode)


def test_s0_values():
    assert s0(0.0, 0.3, NU) == 1.0
    assert s0(0.0, 0.0, NU) == 1.0
    assert s0(0.4, 0.0, NU) == 0.0
    x = 2 * math.sqrt(NU * 0.5)
    assert s0(x, 0.5, NU) == pytest.approx(0.1572992070502851, rel=1e-10)
    assert s0(10.0, 0.01, NU) < 1e-100
    np.testing.assert_allclose(s0(np.array([0.0, 0.5]), 0.0, NU), [1.0, 0.0])


def test_s0_domain():
    with pytest.raises(ValueError):
        s0(-0.1, 0.5, NU)
    with pytest.raises(ValueError):
        s1(0.1, -0.5, NU)


def test_s1_values():
    assert s1(0.0, 0.7, NU) == pytest.approx(0.7)
    assert s1(0.3, 0.0, NU) == 0.0
    assert s1_closed_form(0.0, 0.7, NU) == pytest.approx(0.7)
    assert s1(0.2, 0.5, NU) == pytest.approx(s1_closed_form(0.2, 0.5, NU), rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(min_value=0.0, max_value=1.0), t=st.floats(min_value=0.001, max_value=1.0))
def test_s1_quadrature_matches_closed_form(x, t):
    assert s1(x, t, NU) == pytest.approx(s1_closed_form(x, t, NU), rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("x", [1e-4, 1e-3, 1e-2])
def test_s1_resolves_the_layer_near_the_left_end(x):
    assert s1(x, 1.0, NU) == pytest.approx(s1_closed_form(x, 1.0, NU), rel=1e-10)


@pytest.mark.parametrize("kernel", [s0, s1_closed_form])
def test_kernels_solve_the_heat_equation(kernel):
    x, t, h, k = 0.3, 0.2, 1e-3, 1e-5
    dt = (kernel(x, t + k, NU) - kernel(x, t - k, NU)) / (2 * k)
    dxx = (kernel(x + h, t, NU) - 2 * kernel(x, t, NU) + kernel(x - h, t, NU)) / h**2
    assert dt - NU * dxx == pytest.approx(0.0, abs=1e-4)


def test_coefficients_of_the_wave_run():
    first = corrector_spec_for(wave_spec(Corrector(1)), 1)
    assert first.alpha0 == pytest.approx(ALPHA0)
    assert first.alpha0_right == pytest.approx(0.0, abs=1e-12)
    assert first.alpha1 == 0.0
    second = corrector_spec_for(wave_spec(Corrector(2)), 2)
    assert second.alpha1 == pytest.approx(NU * (5 * math.pi / 4) ** 2 * math.sin(3 * math.pi / 4))


def test_corrector_procedures():
    x = np.linspace(0.0, 1.0, 11)
    silent = build_corrector(CorrectorSpec(0, ALPHA0, 1.0, NU))
    np.testing.assert_array_equal(silent(x, 0.4), np.zeros(11))

    first = build_corrector(CorrectorSpec(1, ALPHA0, 0.0, NU))
    assert first(np.array([0.0]), 0.3)[0] == pytest.approx(ALPHA0)
    np.testing.assert_allclose(first(x, 0.3), ALPHA0 * s0(x, 0.3, NU))

    second = build_corrector(CorrectorSpec(2, ALPHA0, 2.0, NU))
    np.testing.assert_allclose(second(x, 0.3), ALPHA0 * s0(x, 0.3, NU) + 2.0 * s1_closed_form(x, 0.3, NU))


def test_mirrored_term_at_the_right_end():
    corrector = build_corrector(CorrectorSpec(1, 0.0, 0.0, NU, alpha0_right=0.5))
    assert corrector(np.array([1.0]), 0.2)[0] == pytest.approx(0.5)
    assert corrector(np.array([0.0]), 0.2)[0] == pytest.approx(0.5 * float(s0(1.0, 0.2, NU)))


def test_invalid_procedure():
    with pytest.raises(ValueError):
        CorrectorSpec(3, 0.0, 0.0, NU)


def test_procedure_zero_is_the_direct_solve():
    corrected = solve(wave_spec(Corrector(0), 12, 250))
    direct = solve(wave_spec(Direct(), 12, 250))
    np.testing.assert_allclose(corrected.final.values, direct.final.values, rtol=0, atol=1e-15)


def test_corrected_solution_starts_from_the_data():
    run = solve_corrected(wave_spec(Corrector(1), 12, 250))
    first = run.snapshots[0][1].values
    grid = Interval1D(12)
    np.testing.assert_allclose(first[1:], np.sin(5 * math.pi / 4 * grid.x[1:] + 3 * math.pi / 4))
    assert first[0] == pytest.approx(0.0, abs=1e-15)
    assert run.by_step()[5].values[0] == pytest.approx(0.0, abs=1e-15)


def test_corrected_solve_needs_the_interval():
    with pytest.raises(ValueError):
        solve_corrected(wave_spec(Direct(), 12, 250))
    with pytest.raises(ValueError):
        ProblemSpec(SquareGrid(4, 4), NU, "xy", TimeGrid(100), boundary_mode=Corrector(1))


def test_procedure_ordering_near_the_corner():
    peaks = {}
    for mode in (Direct(), Penalty(0.1), Corrector(1), Corrector(2)):
        curve, _ = run_pair(wave_spec(mode))
        peaks[mode.label] = peak_error(curve, until=0.05)[0]
    assert peaks["corrector2"] <= peaks["corrector1"] <= peaks["penalty_eps0.1"] < peaks["direct"]
