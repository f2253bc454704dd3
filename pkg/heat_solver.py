"""
Explicit FTCS time stepping for u_t - nu * Laplace(u) = f.

This module provides:
1. ``cfl_check`` and ``stable_steps`` for the explicit stability bound lambda <= 1/2.
2. One-step updates on each mesh: ``step_1d``, ``step_square`` and ``step_polar``.
3. ``solve``, which marches a ``ProblemSpec`` to its horizon with the boundary supplied
   directly (g), through the penalty ODE (k^eps) or by the 1D corrector.
4. Reference solutions for the compatible sine-mode problem.

The interior update at step n -> n+1 always reads level n; the boundary nodes are then
overwritten with the level n+1 boundary values.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from domain import (
    BoolArray,
    Corrector,
    Direct,
    Grid,
    Interval1D,
    NonFiniteFieldError,
    Penalty,
    PolarGrid,
    ProblemSpec,
    ScalarField,
    SquareGrid,
    evaluate_initial,
)
from penalty_layer import check_penalty_ratio, penalty_step
from utils import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]

CFL_LIMIT = 0.5
MAX_SNAPSHOTS = 2000


class UnstableSchemeError(ValueError):
    """Raised when a spec violates the explicit stability bound."""

    def __init__(self, report: "CflReport") -> None:
        super().__init__(f"Unstable explicit scheme: lambda = {report.lam:.6g} > {report.limit} ({report.formula})")
        self.report = report


class NonFiniteSolutionError(RuntimeError):
    """Raised when a time step produces NaN or Inf."""

    def __init__(self, step: int, detail: str) -> None:
        super().__init__(f"Non-finite solution at step {step}: {detail}")
        self.step = step


@dataclass(frozen=True)
class CflReport:
    """Dimensionless stability number of the explicit scheme."""

    lam: float
    stable: bool
    formula: str
    limit: float = CFL_LIMIT


def _cfl_coefficient(domain: Grid) -> Tuple[float, str]:
    if isinstance(domain, Interval1D):
        return 1.0 / domain.dx**2, "nu*dt/dx^2"
    if isinstance(domain, SquareGrid):
        return 1.0 / domain.dx**2 + 1.0 / domain.dy**2, "nu*dt*(1/dx^2 + 1/dy^2)"
    # most restrictive interior ring r = dr
    r_min = domain.dr
    coefficient = 1.0 / domain.dr**2 + 1.0 / (r_min * domain.dr) + 1.0 / (r_min**2 * domain.dtheta**2)
    return coefficient, "nu*dt*(1/dr^2 + 1/(r*dr) + 1/(r^2*dtheta^2)) at r = dr"


def cfl_check(spec: ProblemSpec) -> CflReport:
    """
    Compute the stability number of a spec.

    Args:
        spec (ProblemSpec): The problem.

    Returns:
        CflReport: lambda, whether lambda <= 1/2, and the formula used.
    """
    coefficient, formula = _cfl_coefficient(spec.domain)
    lam = spec.nu * spec.time.dt * coefficient
    return CflReport(lam=lam, stable=lam <= CFL_LIMIT, formula=formula)


def stable_steps(domain: Grid, nu: float, t_end: float = 1.0, multiple_of: int = 1, minimum: int = 1) -> int:
    """
    Smallest step count that is a multiple of ``multiple_of``, at least ``minimum``,
    and satisfies the stability bound on ``domain``.
    """
    coefficient, _ = _cfl_coefficient(domain)
    needed = max(float(minimum), nu * t_end * coefficient / CFL_LIMIT)
    n_steps = multiple_of * max(1, math.ceil(needed / multiple_of - 1e-12))
    while nu * (t_end / n_steps) * coefficient > CFL_LIMIT:
        n_steps += multiple_of
    return n_steps


@lru_cache(maxsize=32)
def _coordinates(grid: Grid) -> Tuple[FloatArray, FloatArray]:
    return grid.coordinates()


@lru_cache(maxsize=32)
def _boundary_mask(grid: Grid) -> BoolArray:
    return grid.boundary_mask()


def _forcing(spec: ProblemSpec, n: int) -> FloatArray:
    x, y = _coordinates(spec.domain)
    return np.asarray(spec.forcing(x, y, spec.time.time(n)), dtype=np.float64)


def _finalize(grid: Grid, values: FloatArray, n: int) -> ScalarField:
    try:
        return ScalarField(grid, values)
    except NonFiniteFieldError as exc:
        logger.error("Aborting at step %s: %s", n, exc)
        raise NonFiniteSolutionError(n, str(exc)) from exc


def step_1d(u_n: ScalarField, left: float, right: float, spec: ProblemSpec, n: int = 0) -> ScalarField:
    """
    u_i <- u_i + lambda (u_{i+1} + u_{i-1} - 2 u_i) + dt f_i, endpoints set to left/right.

    Args:
        u_n (ScalarField): Level n.
        left (float): Level n+1 value at x = 0.
        right (float): Level n+1 value at x = 1.
        spec (ProblemSpec): Problem on an ``Interval1D``.
        n (int): Step index, used for f^n and error reports.

    Returns:
        ScalarField: Level n+1.
    """
    grid = spec.domain
    if not isinstance(grid, Interval1D):
        raise ValueError("step_1d needs an Interval1D domain")
    dt = spec.time.dt
    lam = spec.nu * dt / grid.dx**2
    u = u_n.values
    new = u.copy()
    new[1:-1] = u[1:-1] + lam * (u[2:] + u[:-2] - 2.0 * u[1:-1]) + dt * _forcing(spec, n)[1:-1]
    new[0] = left
    new[-1] = right
    return _finalize(grid, new, n + 1)


def step_square(u_n: ScalarField, boundary: FloatArray, spec: ProblemSpec, n: int = 0) -> ScalarField:
    """
    Five-point FTCS update on the unit square.

    Args:
        u_n (ScalarField): Level n.
        boundary (FloatArray): Level n+1 boundary values in ``boundary_nodes`` order.
        spec (ProblemSpec): Problem on a ``SquareGrid``.
        n (int): Step index.

    Returns:
        ScalarField: Level n+1.
    """
    grid = spec.domain
    if not isinstance(grid, SquareGrid):
        raise ValueError("step_square needs a SquareGrid domain")
    dt = spec.time.dt
    u = u_n.values
    new = u.copy()
    laplacian = (u[2:, 1:-1] + u[:-2, 1:-1] - 2.0 * u[1:-1, 1:-1]) / grid.dx**2 + (
        u[1:-1, 2:] + u[1:-1, :-2] - 2.0 * u[1:-1, 1:-1]
    ) / grid.dy**2
    new[1:-1, 1:-1] = u[1:-1, 1:-1] + spec.nu * dt * laplacian + dt * _forcing(spec, n)[1:-1, 1:-1]
    new[_boundary_mask(grid)] = boundary
    return _finalize(grid, new, n + 1)


def step_polar(u_n: ScalarField, boundary: FloatArray, spec: ProblemSpec, n: int = 0) -> ScalarField:
    """
    FTCS update of u_rr + u_r / r + u_thth / r^2 on the unit disk.

    The origin uses the averaged five-point Laplacian (4 / dr^2) (mean of ring 1 - u(0)).

    Args:
        u_n (ScalarField): Level n.
        boundary (FloatArray): Level n+1 values on the ring r = 1, increasing theta.
        spec (ProblemSpec): Problem on a ``PolarGrid``.
        n (int): Step index.

    Returns:
        ScalarField: Level n+1.
    """
    grid = spec.domain
    if not isinstance(grid, PolarGrid):
        raise ValueError("step_polar needs a PolarGrid domain")
    dt, dr, dtheta = spec.time.dt, grid.dr, grid.dtheta
    origin, rings = grid.split(u_n.values)
    f_origin, f_rings = grid.split(_forcing(spec, n))

    # padded[i] holds ring r_i, padded[0] the origin repeated
    padded = np.vstack([np.full((1, grid.ntheta), origin), rings])
    center = padded[1:-1]
    r = grid.r[1:-1, np.newaxis]
    radial = (padded[2:] - 2.0 * center + padded[:-2]) / dr**2 + (padded[2:] - padded[:-2]) / (2.0 * r * dr)
    angular = (np.roll(center, -1, axis=1) - 2.0 * center + np.roll(center, 1, axis=1)) / (r**2 * dtheta**2)

    new_rings = rings.copy()
    new_rings[:-1] = center + spec.nu * dt * (radial + angular) + dt * f_rings[:-1]
    new_origin = origin + spec.nu * dt * (4.0 / dr**2) * (float(np.mean(rings[0])) - origin) + dt * f_origin

    new = grid.join(new_origin, new_rings)
    new[_boundary_mask(grid)] = boundary
    return _finalize(grid, new, n + 1)


def advance(u_n: ScalarField, boundary: FloatArray, spec: ProblemSpec, n: int) -> ScalarField:
    """Dispatch one step to the update of the spec's mesh."""
    if isinstance(spec.domain, Interval1D):
        return step_1d(u_n, float(boundary[0]), float(boundary[-1]), spec, n)
    if isinstance(spec.domain, SquareGrid):
        return step_square(u_n, boundary, spec, n)
    return step_polar(u_n, boundary, spec, n)


@dataclass
class Trajectory:
    """Snapshots of a run, with the per-node boundary history in penalty mode."""

    spec: ProblemSpec
    snapshots: List[Tuple[int, ScalarField]]
    boundary_history: Optional[FloatArray] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def steps(self) -> List[int]:
        return [step for step, _ in self.snapshots]

    @property
    def times(self) -> FloatArray:
        return np.array([self.spec.time.time(step) for step in self.steps])

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1][1]

    def by_step(self) -> Dict[int, ScalarField]:
        return dict(self.snapshots)

    def at_time(self, t: float) -> ScalarField:
        """Snapshot closest to time t."""
        index = int(np.argmin(np.abs(self.times - t)))
        return self.snapshots[index][1]


def default_stride(n_steps: int) -> int:
    """Every step up to MAX_SNAPSHOTS steps, otherwise ceil(n_steps / MAX_SNAPSHOTS)."""
    return 1 if n_steps <= MAX_SNAPSHOTS else math.ceil(n_steps / MAX_SNAPSHOTS)


def march(
    spec: ProblemSpec, next_boundary: Callable[[int], FloatArray], initial: Optional[ScalarField] = None
) -> List[Tuple[int, ScalarField]]:
    """
    March a spec from level 0 to its horizon.

    Args:
        spec (ProblemSpec): The problem.
        next_boundary (Callable[[int], FloatArray]): Called with n before the step
            n -> n+1, returns the level n+1 boundary values.
        initial (Optional[ScalarField]): Level 0, sampled u0 when omitted.

    Returns:
        List[Tuple[int, ScalarField]]: Snapshots at the spec's stride, step 0 and the
        final step always included.
    """
    n_steps = spec.time.n_steps
    stride = spec.snapshot_stride or default_stride(n_steps)
    u = evaluate_initial(spec) if initial is None else initial
    snapshots = [(0, u)]
    for n in range(n_steps):
        u = advance(u, next_boundary(n), spec, n)
        if (n + 1) % stride == 0 or n + 1 == n_steps:
            snapshots.append((n + 1, u))
    return snapshots


def solve(spec: ProblemSpec) -> Trajectory:
    """
    Solve a problem with its boundary treatment.

    Direct feeds g(t_{n+1}) as the level n+1 boundary. Penalty starts from k^0 = u0 on
    the boundary, advances k^{n+1} = penalty_step(k^n, g(t_n)) and feeds k^{n+1}.
    Corrector delegates to ``corrector1d.solve_corrected``.

    Args:
        spec (ProblemSpec): The problem.

    Returns:
        Trajectory: Snapshots of the run.

    Raises:
        UnstableSchemeError: If lambda > 1/2.
        NonFiniteSolutionError: If a step produces NaN or Inf.
    """
    report = cfl_check(spec)
    if not report.stable:
        logger.error("Refusing unstable spec: lambda = %.6g (%s)", report.lam, report.formula)
        raise UnstableSchemeError(report)

    mode = spec.boundary_mode
    if isinstance(mode, Corrector):
        from corrector1d import solve_corrected

        return solve_corrected(spec)

    logger.info(
        "Solving %s on %s with %s steps, mode %s (lambda = %.4f)",
        spec.initial.name,
        type(spec.domain).__name__,
        spec.time.n_steps,
        mode.label,
        report.lam,
    )
    initial = evaluate_initial(spec)
    notes: List[str] = []
    history: Optional[FloatArray] = None

    if isinstance(mode, Direct):

        def next_boundary(n: int) -> FloatArray:
            return spec.boundary_values(spec.time.time(n + 1))

    else:
        assert isinstance(mode, Penalty)
        epsilon, dt = mode.epsilon, spec.time.dt
        message = check_penalty_ratio(epsilon, dt)
        if message is not None:
            notes.append(message)
        k = np.empty((spec.time.n_steps + 1, int(np.count_nonzero(_boundary_mask(spec.domain)))))
        k[0] = initial.boundary()
        history = k

        def next_boundary(n: int) -> FloatArray:
            k[n + 1] = penalty_step(k[n], spec.boundary_values(spec.time.time(n)), epsilon, dt, warn=False)
            return k[n + 1]

    snapshots = march(spec, next_boundary, initial)
    logger.info("Finished %s steps, max |u(T)| = %.6g", spec.time.n_steps, snapshots[-1][1].max_abs())
    return Trajectory(spec=spec, snapshots=snapshots, boundary_history=history, warnings=notes)


def exact_sine_mode(x: FloatArray, t: float, nu: float) -> FloatArray:
    """exp(-nu pi^2 t) sin(pi x), the solution for u0 = sin(pi x) with zero data."""
    return np.exp(-nu * math.pi**2 * t) * np.sin(math.pi * x)


def discrete_sine_mode(grid: Interval1D, nu: float, dt: float, steps: int) -> FloatArray:
    """The FTCS iterate of sin(pi x) after ``steps`` steps: an exact eigenvector of the stencil."""
    lam = nu * dt / grid.dx**2
    factor = 1.0 - 4.0 * lam * math.sin(math.pi * grid.dx / 2.0) ** 2
    return factor**steps * np.sin(math.pi * grid.x)
