"""
Grid and problem descriptions shared by all solvers.

This module provides:
1. The three structured meshes: ``Interval1D``, ``SquareGrid`` and ``PolarGrid``.
2. ``TimeGrid`` for the uniform time discretization.
3. The boundary treatments ``Direct``, ``Penalty`` and ``Corrector``.
4. ``ProblemSpec``, the full description of one heat-equation run.
5. ``ScalarField``, the values of one time level on a grid.
6. ``evaluate_initial`` and ``boundary_nodes``.

All types are frozen and safe to share between workers.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from functions import BuiltinFunction, FunctionRef, TimeSignal, resolve
from utils import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]


@dataclass(frozen=True)
class Interval1D:
    """Uniform mesh of [0, 1] with nodes x_i = i / n_cells."""

    n_cells: int

    def __post_init__(self) -> None:
        if self.n_cells < 2:
            raise ValueError(f"Interval1D needs n_cells >= 2, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def spacing(self) -> float:
        return self.dx

    @property
    def x(self) -> FloatArray:
        return np.arange(self.n_cells + 1, dtype=np.float64) / self.n_cells

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n_cells + 1,)

    def coordinates(self) -> Tuple[FloatArray, FloatArray]:
        return self.x, np.zeros(self.shape)

    def boundary_mask(self) -> BoolArray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[[0, -1]] = True
        return mask

    def refined(self, factor: int) -> "Interval1D":
        return Interval1D(self.n_cells * factor)


@dataclass(frozen=True)
class SquareGrid:
    """Uniform mesh of the unit square, values indexed [i, j] with x = i dx, y = j dy."""

    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"SquareGrid needs nx, ny >= 2, got ({self.nx}, {self.ny})")

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def dy(self) -> float:
        return 1.0 / self.ny

    @property
    def spacing(self) -> float:
        return max(self.dx, self.dy)

    @property
    def x(self) -> FloatArray:
        return np.arange(self.nx + 1, dtype=np.float64) / self.nx

    @property
    def y(self) -> FloatArray:
        return np.arange(self.ny + 1, dtype=np.float64) / self.ny

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.nx + 1, self.ny + 1)

    def coordinates(self) -> Tuple[FloatArray, FloatArray]:
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return xx, yy

    def boundary_mask(self) -> BoolArray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[[0, -1], :] = True
        mask[:, [0, -1]] = True
        return mask

    def refined(self, factor: int) -> "SquareGrid":
        return SquareGrid(self.nx * factor, self.ny * factor)


@dataclass(frozen=True)
class PolarGrid:
    """
    Polar mesh of the unit disk.

    Values are stored flat: index 0 is the origin, followed by the rings r_i = i dr,
    i = 1..nr, each holding ntheta angles theta_k = k dtheta. The angle index is periodic.
    """

    nr: int
    ntheta: int

    def __post_init__(self) -> None:
        if self.nr < 2:
            raise ValueError(f"PolarGrid needs nr >= 2, got {self.nr}")
        if self.ntheta < 4:
            raise ValueError(f"PolarGrid needs ntheta >= 4, got {self.ntheta}")

    @property
    def dr(self) -> float:
        return 1.0 / self.nr

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.ntheta

    @property
    def spacing(self) -> float:
        return self.dr

    @property
    def r(self) -> FloatArray:
        return np.arange(self.nr + 1, dtype=np.float64) / self.nr

    @property
    def theta(self) -> FloatArray:
        return np.arange(self.ntheta, dtype=np.float64) * self.dtheta

    @property
    def shape(self) -> Tuple[int, ...]:
        return (1 + self.nr * self.ntheta,)

    def polar_coordinates(self) -> Tuple[FloatArray, FloatArray]:
        rr, tt = np.meshgrid(self.r[1:], self.theta, indexing="ij")
        return np.concatenate(([0.0], rr.ravel())), np.concatenate(([0.0], tt.ravel()))

    def coordinates(self) -> Tuple[FloatArray, FloatArray]:
        r, theta = self.polar_coordinates()
        return r * np.cos(theta), r * np.sin(theta)

    def split(self, values: FloatArray) -> Tuple[float, FloatArray]:
        """Return the origin value and a (nr, ntheta) view of the rings."""
        return float(values[0]), values[1:].reshape(self.nr, self.ntheta)

    def join(self, origin: float, rings: FloatArray) -> FloatArray:
        return np.concatenate(([origin], rings.ravel()))

    def boundary_mask(self) -> BoolArray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[-self.ntheta :] = True
        return mask

    def refined(self, factor: int) -> "PolarGrid":
        return PolarGrid(self.nr * factor, self.ntheta * factor)


Grid = Union[Interval1D, SquareGrid, PolarGrid]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time levels t_n = n * t_end / n_steps, n = 0..n_steps."""

    n_steps: int
    t_end: float = 1.0

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError(f"TimeGrid needs n_steps >= 1, got {self.n_steps}")
        if not self.t_end > 0:
            raise ValueError(f"TimeGrid needs t_end > 0, got {self.t_end}")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def time(self, n: int) -> float:
        return n * self.t_end / self.n_steps

    @property
    def times(self) -> FloatArray:
        return np.arange(self.n_steps + 1, dtype=np.float64) * self.t_end / self.n_steps


@dataclass(frozen=True)
class Direct:
    """Boundary set to g directly."""

    @property
    def label(self) -> str:
        return "direct"


@dataclass(frozen=True)
class Penalty:
    """Boundary relaxed toward g through eps * k' + k = g, k(0) = u0 on the boundary."""

    epsilon: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"Penalty needs epsilon > 0, got {self.epsilon}")

    @property
    def label(self) -> str:
        return f"penalty_eps{self.epsilon:g}"


@dataclass(frozen=True)
class Corrector:
    """1D singular-function correction (procedure 0, 1 or 2)."""

    procedure: int

    def __post_init__(self) -> None:
        if self.procedure not in (0, 1, 2):
            raise ValueError(f"Corrector procedure must be 0, 1 or 2, got {self.procedure}")

    @property
    def label(self) -> str:
        return f"corrector{self.procedure}"


BoundaryMode = Union[Direct, Penalty, Corrector]


@dataclass(frozen=True)
class ProblemSpec:
    """
    Everything needed for one run of u_t - nu * Laplace(u) = f.

    Functions are registry names (or function objects) so specs stay picklable.
    ``g_right`` only applies to ``Interval1D`` and defaults to ``g``.
    """

    domain: Grid
    nu: float
    u0: FunctionRef
    time: TimeGrid
    f: FunctionRef = "zero"
    g: FunctionRef = "zero"
    boundary_mode: BoundaryMode = field(default_factory=Direct)
    g_right: Optional[FunctionRef] = None
    snapshot_stride: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ValueError(f"Diffusivity nu must be positive, got {self.nu}")
        if isinstance(self.boundary_mode, Corrector) and not isinstance(self.domain, Interval1D):
            raise ValueError("Corrector mode is only valid on Interval1D")
        if self.g_right is not None and not isinstance(self.domain, Interval1D):
            raise ValueError("g_right is only valid on Interval1D")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise ValueError(f"snapshot_stride must be >= 1, got {self.snapshot_stride}")
        # Fail early on unknown names
        for ref in (self.u0, self.f, self.g, self.g_right):
            if ref is not None:
                resolve(ref)

    @property
    def initial(self) -> BuiltinFunction:
        return resolve(self.u0)

    @property
    def forcing(self) -> BuiltinFunction:
        return resolve(self.f)

    @property
    def boundary(self) -> BuiltinFunction:
        return resolve(self.g)

    @property
    def boundary_right(self) -> BuiltinFunction:
        return resolve(self.g if self.g_right is None else self.g_right)

    def boundary_values(self, t: float) -> FloatArray:
        """g sampled at every boundary node at time t, in ``boundary_nodes`` order."""
        xb, yb = boundary_coordinates(self.domain)
        values = np.array(self.boundary(xb, yb, t), dtype=np.float64)
        if isinstance(self.domain, Interval1D):
            values[-1] = self.boundary_right(xb[-1:], yb[-1:], t)[0]
        return values

    def is_uniform_boundary(self) -> bool:
        return isinstance(self.boundary, TimeSignal) and isinstance(self.boundary_right, TimeSignal)


class NonFiniteFieldError(ValueError):
    """Raised when a field holds NaN or Inf."""


@dataclass(frozen=True)
class ScalarField:
    """One value per grid node at a single time level."""

    grid: Grid
    values: FloatArray

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise ValueError(f"Field shape {self.values.shape} does not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteFieldError(f"Field holds {np.count_nonzero(~np.isfinite(self.values))} non-finite values")

    def boundary(self) -> FloatArray:
        return self.values[self.grid.boundary_mask()]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


class BoundaryNode(NamedTuple):
    """Grid index of a boundary node and its Cartesian position."""

    index: Tuple[int, ...]
    x: float
    y: float


def boundary_nodes(domain: Grid) -> List[BoundaryNode]:
    """
    List the boundary nodes of a grid in a fixed order.

    Order: {left, right} for Interval1D, row-major over (i, j) for SquareGrid, increasing
    theta on the outer ring for PolarGrid. This is also the order of ``boundary_mask``
    selections, so boundary value arrays line up with this list.

    Args:
        domain (Grid): The grid.

    Returns:
        List[BoundaryNode]: The boundary nodes.
    """
    if isinstance(domain, Interval1D):
        return [BoundaryNode((0,), 0.0, 0.0), BoundaryNode((domain.n_cells,), 1.0, 0.0)]
    if isinstance(domain, SquareGrid):
        mask = domain.boundary_mask()
        return [
            BoundaryNode((int(i), int(j)), float(domain.x[i]), float(domain.y[j])) for i, j in zip(*np.nonzero(mask))
        ]
    return [
        BoundaryNode((domain.nr, k), math.cos(theta), math.sin(theta)) for k, theta in enumerate(domain.theta)
    ]


@lru_cache(maxsize=32)
def boundary_coordinates(domain: Grid) -> Tuple[FloatArray, FloatArray]:
    """Cartesian coordinates of the boundary nodes, in ``boundary_nodes`` order."""
    x, y = domain.coordinates()
    mask = domain.boundary_mask()
    return x[mask], y[mask]


def evaluate_initial(spec: ProblemSpec) -> ScalarField:
    """
    Sample u0 at every grid node, boundary nodes included.

    Args:
        spec (ProblemSpec): The problem.

    Returns:
        ScalarField: u0 on the grid.
    """
    x, y = spec.domain.coordinates()
    values = np.array(spec.initial(x, y, 0.0), dtype=np.float64)
    logger.debug("Sampled %s on %s nodes", spec.initial.name, values.size)
    return ScalarField(spec.domain, values)
