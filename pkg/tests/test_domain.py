import math

import numpy as np
import pytest

from domain import (
    Corrector,
    Direct,
    Interval1D,
    NonFiniteFieldError,
    Penalty,
    PolarGrid,
    ProblemSpec,
    ScalarField,
    SquareGrid,
    TimeGrid,
    boundary_nodes,
    evaluate_initial,
)
from functions import UnknownFunctionError


def test_interval_nodes():
    grid = Interval1D(4)
    np.testing.assert_allclose(grid.x, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert grid.dx == 0.25
    assert list(np.nonzero(grid.boundary_mask())[0]) == [0, 4]
    assert grid.refined(3) == Interval1D(12)


@pytest.mark.parametrize("make", [lambda: Interval1D(1), lambda: SquareGrid(1, 4), lambda: PolarGrid(1, 8)])
def test_degenerate_grids(make):
    with pytest.raises(ValueError):
        make()


def test_square_boundary_order():
    grid = SquareGrid(3, 3)
    nodes = boundary_nodes(grid)
    assert len(nodes) == 12 == np.count_nonzero(grid.boundary_mask())
    assert nodes[0].index == (0, 0)
    assert nodes[1].index == (0, 1)
    assert nodes[-1].index == (3, 3)
    x, y = grid.coordinates()
    assert x[2, 1] == pytest.approx(2 / 3) and y[2, 1] == pytest.approx(1 / 3)


def test_polar_layout():
    grid = PolarGrid(2, 8)
    assert grid.shape == (17,)
    r, theta = grid.polar_coordinates()
    assert r[0] == 0.0
    np.testing.assert_allclose(r[-8:], 1.0)
    np.testing.assert_allclose(theta[-8:], np.arange(8) * math.pi / 4)
    assert np.count_nonzero(grid.boundary_mask()) == 8
    assert grid.boundary_mask()[-8:].all()

    values = np.arange(17, dtype=float)
    origin, rings = grid.split(values)
    assert origin == 0.0
    assert rings.shape == (2, 8)
    np.testing.assert_array_equal(grid.join(origin, rings), values)


def test_boundary_node_counts():
    assert [node.x for node in boundary_nodes(Interval1D(5))] == [0.0, 1.0]
    assert len(boundary_nodes(SquareGrid(2, 2))) == 8
    assert len(boundary_nodes(PolarGrid(2, 4))) == 4


def test_polar_boundary_nodes_on_the_unit_circle():
    nodes = boundary_nodes(PolarGrid(3, 12))
    assert len(nodes) == 12
    for node in nodes:
        assert node.x**2 + node.y**2 == pytest.approx(1.0)
        assert node.index[0] == 3


def test_time_grid():
    time = TimeGrid(4, 2.0)
    assert time.dt == 0.5
    assert time.time(3) == 1.5
    np.testing.assert_allclose(time.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(ValueError):
        TimeGrid(0)
    with pytest.raises(ValueError):
        TimeGrid(10, 0.0)


def test_mode_labels():
    assert Direct().label == "direct"
    assert Penalty(0.1).label == "penalty_eps0.1"
    assert Corrector(2).label == "corrector2"
    with pytest.raises(ValueError):
        Penalty(0.0)
    with pytest.raises(ValueError):
        Corrector(3)


def test_spec_validation():
    time = TimeGrid(10)
    with pytest.raises(ValueError, match="Interval1D"):
        ProblemSpec(SquareGrid(4, 4), 0.2, "xy", time, boundary_mode=Corrector(1))
    with pytest.raises(ValueError, match="g_right"):
        ProblemSpec(SquareGrid(4, 4), 0.2, "xy", time, g_right="one")
    with pytest.raises(ValueError, match="nu"):
        ProblemSpec(Interval1D(4), 0.0, "zero", time)
    with pytest.raises(UnknownFunctionError):
        ProblemSpec(Interval1D(4), 0.2, "not_registered", time)


def test_boundary_values_with_right_data():
    spec = ProblemSpec(Interval1D(4), 0.2, "zero", TimeGrid(10), g="zero", g_right="one")
    np.testing.assert_array_equal(spec.boundary_values(0.3), [0.0, 1.0])
    assert spec.is_uniform_boundary()

    square = ProblemSpec(SquareGrid(3, 3), 0.2, "xy", TimeGrid(10), g="sin_t")
    np.testing.assert_allclose(square.boundary_values(0.5), math.sin(0.5))
    assert square.boundary_values(0.5).shape == (12,)


def test_scalar_field_checks():
    grid = Interval1D(4)
    with pytest.raises(ValueError, match="shape"):
        ScalarField(grid, np.zeros(4))
    with pytest.raises(NonFiniteFieldError):
        ScalarField(grid, np.array([0.0, np.nan, 0.0, 0.0, 0.0]))
    field = ScalarField(grid, np.array([0.5, -2.0, 0.0, 1.0, 0.25]))
    assert field.max_abs() == 2.0
    np.testing.assert_array_equal(field.boundary(), [0.5, 0.25])


def test_evaluate_initial_on_the_disk():
    grid = PolarGrid(4, 16)
    field = evaluate_initial(ProblemSpec(grid, 0.2, "xy", TimeGrid(10)))
    assert field.values[0] == 0.0
    theta = grid.theta
    np.testing.assert_allclose(field.boundary(), np.cos(theta) * np.sin(theta), atol=1e-15)
