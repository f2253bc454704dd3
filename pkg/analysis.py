"""
Comparative errors between mesh resolutions, convergence rates and epsilon sweeps.

This module provides:
1. ``comparative_error``: the max (and RMS) difference between a coarse run and a
   nested finer run, restricted to the coarse nodes at coincident snapshot times.
2. ``fit_rate`` and ``refinement_study`` for log-log convergence slopes.
3. ``epsilon_sweep`` and ``mode_comparison``, optionally spread over worker processes.
4. Diagnostics used by the experiments: ``max_gradient``, ``section``,
   ``boundary_layer_trace`` and ``remainder_table``.
"""

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from domain import BoundaryMode, Grid, Interval1D, Penalty, PolarGrid, ProblemSpec, ScalarField, SquareGrid, TimeGrid
from functions import TimeSignal
from heat_solver import Trajectory, UnstableSchemeError, cfl_check, default_stride, solve, stable_steps
from penalty_layer import PenaltyParams, asymptotic_approx, boundary_remainder_norms, penalty_exact
from utils import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]


class NestingError(ValueError):
    """Raised when a fine run does not refine a coarse run by integer ratios."""


@dataclass(frozen=True)
class ErrorCurve:
    """Comparative error of a coarse run against a nested fine run."""

    times: FloatArray
    max_errors: FloatArray
    l2_errors: FloatArray
    coarse: ProblemSpec
    fine: ProblemSpec

    @property
    def mode(self) -> str:
        return self.coarse.boundary_mode.label

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "max_error": self.max_errors})

    def l2_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "l2_error": self.l2_errors})


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log(error) against log(h)."""

    resolutions: Tuple[float, ...]
    errors: Tuple[float, ...]
    slope: float
    residual: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"h": list(self.resolutions), "error": list(self.errors), "slope": [self.slope] * len(self.errors)}
        )


def _ratio(fine: int, coarse: int, what: str) -> int:
    if fine < coarse or fine % coarse != 0:
        logger.error("Meshes do not nest: %s %s / %s", what, fine, coarse)
        raise NestingError(f"{what} ratio {fine}/{coarse} is not an integer >= 1")
    return fine // coarse


def restrict(fine: ScalarField, coarse_grid: Grid) -> FloatArray:
    """
    Inject a fine field onto the nodes of a coarse grid.

    Args:
        fine (ScalarField): Field on a refinement of ``coarse_grid``.
        coarse_grid (Grid): The coarse grid.

    Returns:
        FloatArray: Values in the coarse grid's layout.

    Raises:
        NestingError: If the fine grid does not refine the coarse grid.
    """
    grid = fine.grid
    if type(grid) is not type(coarse_grid):
        raise NestingError(f"Cannot restrict a {type(grid).__name__} field to a {type(coarse_grid).__name__}")
    if isinstance(grid, Interval1D):
        assert isinstance(coarse_grid, Interval1D)
        return fine.values[:: _ratio(grid.n_cells, coarse_grid.n_cells, "n_cells")]
    if isinstance(grid, SquareGrid):
        assert isinstance(coarse_grid, SquareGrid)
        rx = _ratio(grid.nx, coarse_grid.nx, "nx")
        ry = _ratio(grid.ny, coarse_grid.ny, "ny")
        return fine.values[::rx, ::ry]
    assert isinstance(grid, PolarGrid) and isinstance(coarse_grid, PolarGrid)
    rr = _ratio(grid.nr, coarse_grid.nr, "nr")
    rt = _ratio(grid.ntheta, coarse_grid.ntheta, "ntheta")
    origin, rings = grid.split(fine.values)
    return coarse_grid.join(origin, rings[rr - 1 :: rr, ::rt])


def comparative_error(coarse: Trajectory, fine: Trajectory) -> ErrorCurve:
    """
    Max over coarse nodes of |u_coarse - restrict(u_fine)| at every coincident snapshot.

    Args:
        coarse (Trajectory): The coarse run.
        fine (Trajectory): A run on a nested mesh whose step count is a multiple of the coarse one.

    Returns:
        ErrorCurve: The error at each coincident time, t = 0 included.

    Raises:
        NestingError: If meshes or time steps do not nest.
    """
    if not math.isclose(coarse.spec.time.t_end, fine.spec.time.t_end):
        raise NestingError(f"Horizons differ: {coarse.spec.time.t_end} vs {fine.spec.time.t_end}")
    q = _ratio(fine.spec.time.n_steps, coarse.spec.time.n_steps, "n_steps")
    fine_by_step = fine.by_step()

    times: List[float] = []
    max_errors: List[float] = []
    l2_errors: List[float] = []
    for step, field in coarse.snapshots:
        match = fine_by_step.get(step * q)
        if match is None:
            continue
        diff = field.values - restrict(match, field.grid)
        times.append(coarse.spec.time.time(step))
        max_errors.append(float(np.max(np.abs(diff))))
        l2_errors.append(float(np.sqrt(np.mean(diff * diff))))

    if len(times) < 2:
        logger.warning("Only %s coincident snapshot(s) between the runs", len(times))
    return ErrorCurve(np.array(times), np.array(max_errors), np.array(l2_errors), coarse.spec, fine.spec)


def initial_step_error(curve: ErrorCurve) -> float:
    """Error at the first coincident time after t = 0."""
    later = np.nonzero(curve.times > 0.0)[0]
    if later.size == 0:
        raise ValueError("Error curve has no sample after t = 0")
    return float(curve.max_errors[later[0]])


def final_step_error(curve: ErrorCurve) -> float:
    return float(curve.max_errors[-1])


def peak_error(curve: ErrorCurve, until: Optional[float] = None) -> Tuple[float, float]:
    """Largest error (and its time) over samples with t <= until."""
    keep = np.ones(curve.times.shape, dtype=bool) if until is None else curve.times <= until + 1e-12
    if not np.any(keep):
        raise ValueError(f"Error curve has no sample before t = {until}")
    index = int(np.argmax(np.where(keep, curve.max_errors, -np.inf)))
    return float(curve.max_errors[index]), float(curve.times[index])


def fit_rate(points: Sequence[Tuple[float, float]]) -> RateFit:
    """
    Fit log(error) = slope * log(h) + c by ordinary least squares.

    Args:
        points (Sequence[Tuple[float, float]]): (h, error) pairs, at least 3.

    Returns:
        RateFit: Slope and RMS residual of the fit in log space.

    Raises:
        ValueError: With fewer than 3 points or a nonpositive h or error.
    """
    if len(points) < 3:
        raise ValueError(f"fit_rate needs at least 3 points, got {len(points)}")
    h = np.array([p[0] for p in points], dtype=np.float64)
    errors = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(h <= 0) or np.any(errors <= 0):
        logger.error("Nonpositive value in rate data: h=%s errors=%s", h, errors)
        raise ValueError("fit_rate needs positive mesh sizes and errors")
    log_h, log_e = np.log(h), np.log(errors)
    slope, intercept = np.polyfit(log_h, log_e, 1)
    residual = float(np.sqrt(np.mean((slope * log_h + intercept - log_e) ** 2)))
    return RateFit(tuple(h.tolist()), tuple(errors.tolist()), float(slope), residual)


def refine_spec(spec: ProblemSpec, space_factor: int = 2, time_factor: int = 4) -> ProblemSpec:
    """
    Nested fine spec for the comparative error.

    The mesh is refined by ``space_factor``; the step count is the smallest multiple of
    the coarse one that is at least ``time_factor`` times it and stable. Snapshot strides
    are aligned so every coarse snapshot has a fine counterpart.

    Args:
        spec (ProblemSpec): The coarse spec.
        space_factor (int): Spatial refinement ratio.
        time_factor (int): Minimal temporal refinement ratio.

    Returns:
        ProblemSpec: The fine spec.
    """
    if space_factor < 1 or time_factor < 1:
        raise ValueError(f"Refinement factors must be >= 1, got {space_factor}, {time_factor}")
    domain = spec.domain.refined(space_factor)
    n_coarse = spec.time.n_steps
    n_fine = stable_steps(domain, spec.nu, spec.time.t_end, multiple_of=n_coarse, minimum=n_coarse * time_factor)
    if n_fine != n_coarse * time_factor:
        logger.info("Fine step count raised to %s (%sx coarse) for stability", n_fine, n_fine // n_coarse)
    stride = (spec.snapshot_stride or default_stride(n_coarse)) * (n_fine // n_coarse)
    return replace(spec, domain=domain, time=TimeGrid(n_fine, spec.time.t_end), snapshot_stride=stride)


def run_pair(spec: ProblemSpec, fine: Optional[ProblemSpec] = None) -> Tuple[ErrorCurve, List[str]]:
    """
    Solve a spec and its refinement and compare them.

    Returns:
        Tuple[ErrorCurve, List[str]]: The curve and the warnings raised by either run.
    """
    fine = refine_spec(spec) if fine is None else fine
    for candidate in (spec, fine):
        report = cfl_check(candidate)
        if not report.stable:
            raise UnstableSchemeError(report)
    coarse_run = solve(spec)
    fine_run = solve(fine)
    return comparative_error(coarse_run, fine_run), coarse_run.warnings + fine_run.warnings


def _pair_task(task: Tuple[ProblemSpec, int, int]) -> Tuple[ErrorCurve, List[str]]:
    spec, space_factor, time_factor = task
    return run_pair(spec, refine_spec(spec, space_factor, time_factor))


def _run_many(
    specs: Sequence[ProblemSpec], workers: int, space_factor: int = 2, time_factor: int = 4
) -> List[Tuple[ErrorCurve, List[str]]]:
    tasks = [(spec, space_factor, time_factor) for spec in specs]
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(specs))) as pool:
            return list(pool.map(_pair_task, tasks))
    return [_pair_task(task) for task in tasks]


def _solve_with_refinement(task: Tuple[ProblemSpec, int, int]) -> Tuple[Trajectory, Trajectory]:
    spec, space_factor, time_factor = task
    return solve(spec), solve(refine_spec(spec, space_factor, time_factor))


def solve_pairs(
    specs: Sequence[ProblemSpec], space_factor: int = 2, time_factor: int = 4, workers: int = 1
) -> List[Tuple[Trajectory, Trajectory]]:
    """
    Solve each spec and its refinement, keeping both trajectories.

    Results follow the order of ``specs``.
    """
    for spec in specs:
        report = cfl_check(spec)
        if not report.stable:
            logger.error("Refusing unstable spec: lambda = %.6g", report.lam)
            raise UnstableSchemeError(report)
    tasks = [(spec, space_factor, time_factor) for spec in specs]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(_solve_with_refinement, tasks))
    return [_solve_with_refinement(task) for task in tasks]


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    initial_error: float
    final_error: float
    warning: str
    curve: Optional[ErrorCurve] = dataclasses.field(default=None, compare=False, repr=False)


def epsilon_sweep(
    spec: ProblemSpec, epsilons: Iterable[float], workers: int = 1, space_factor: int = 2, time_factor: int = 4
) -> List[SweepRow]:
    """
    Run the comparative error of Penalty(eps) for each eps.

    Rows are sorted by eps, whatever the execution order.

    Args:
        spec (ProblemSpec): Base spec, its boundary mode is replaced.
        epsilons (Iterable[float]): Penalty parameters.
        workers (int): Worker processes, 1 runs in-process.

    Returns:
        List[SweepRow]: One row per eps.
    """
    values = sorted(set(float(eps) for eps in epsilons))
    specs = [replace(spec, boundary_mode=Penalty(eps)) for eps in values]
    for member in specs:
        report = cfl_check(member)
        if not report.stable:
            logger.error("Sweep member refused: lambda = %.6g", report.lam)
            raise UnstableSchemeError(report)
    logger.info("Sweeping %s epsilon values with %s worker(s)", len(values), workers)
    rows = []
    for eps, (curve, notes) in zip(values, _run_many(specs, workers, space_factor, time_factor)):
        rows.append(
            SweepRow(eps, initial_step_error(curve), final_step_error(curve), "; ".join(dict.fromkeys(notes)), curve)
        )
    return rows


def sweep_frame(rows: Sequence[SweepRow]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "epsilon": [r.epsilon for r in rows],
            "initial_error": [r.initial_error for r in rows],
            "final_error": [r.final_error for r in rows],
            "warning": [r.warning for r in rows],
        }
    )


def mode_comparison(spec: ProblemSpec, modes: Sequence[BoundaryMode], workers: int = 1) -> Dict[str, ErrorCurve]:
    """Comparative error of the same problem under several boundary treatments, keyed by mode label."""
    specs = [replace(spec, boundary_mode=mode) for mode in modes]
    return {mode.label: curve for mode, (curve, _) in zip(modes, _run_many(specs, workers))}


def peak_summary(curves: Dict[str, ErrorCurve], until: Optional[float] = None) -> pd.DataFrame:
    rows = [(label, *peak_error(curve, until)) for label, curve in curves.items()]
    return pd.DataFrame(rows, columns=["mode", "peak_error", "peak_time"])


def truncate(spec: ProblemSpec, n_steps: int) -> ProblemSpec:
    """The same spec with its horizon cut after ``n_steps`` steps, every step kept."""
    dt = spec.time.dt
    return replace(spec, time=TimeGrid(n_steps, n_steps * dt), snapshot_stride=1)


@dataclass(frozen=True)
class RefinementLevel:
    h: float
    initial_error: float
    final_error: float


def refinement_study(
    spec: ProblemSpec, levels: int = 3, space_factor: int = 2, time_factor: int = 4
) -> List[RefinementLevel]:
    """
    Initial-step and final-step comparative errors over nested refinements.

    Level l refines the mesh by space_factor^l and the step count by time_factor^l,
    so lambda is unchanged for space_factor = 2, time_factor = 4. Each level is
    compared with its own refinement. The initial-step error comes from a one-step
    run, the final one from a run keeping only t = 0 and t = T.

    Args:
        spec (ProblemSpec): The coarsest spec.
        levels (int): Number of levels.
        space_factor (int): Spatial ratio between levels.
        time_factor (int): Temporal ratio between levels.

    Returns:
        List[RefinementLevel]: One entry per level, coarsest first.
    """
    results = []
    level = spec
    for index in range(levels):
        if index > 0:
            level = refine_spec(level, space_factor, time_factor)
        first, _ = run_pair(truncate(level, 1), refine_spec(truncate(level, 1), space_factor, time_factor))
        last_spec = replace(level, snapshot_stride=level.time.n_steps)
        last, _ = run_pair(last_spec, refine_spec(last_spec, space_factor, time_factor))
        entry = RefinementLevel(level.domain.spacing, initial_step_error(first), final_step_error(last))
        logger.info("Level h=%.5g: initial %.4e, final %.4e", entry.h, entry.initial_error, entry.final_error)
        results.append(entry)
    return results


def max_gradient(field: ScalarField) -> float:
    """Max norm of the finite-difference gradient of a field."""
    grid = field.grid
    if isinstance(grid, Interval1D):
        return float(np.max(np.abs(np.gradient(field.values, grid.dx))))
    if isinstance(grid, SquareGrid):
        gx, gy = np.gradient(field.values, grid.dx, grid.dy)
        return float(np.max(np.hypot(gx, gy)))
    origin, rings = grid.split(field.values)
    padded = np.vstack([np.full((1, grid.ntheta), origin), rings])
    gr = np.gradient(padded, grid.dr, axis=0)[1:]
    r = grid.r[1:, np.newaxis]
    gt = (np.roll(rings, -1, axis=1) - np.roll(rings, 1, axis=1)) / (2.0 * grid.dtheta * r)
    return float(np.max(np.hypot(gr, gt)))


def section(trajectory: Trajectory, position: Optional[float] = None, until: Optional[float] = None) -> pd.DataFrame:
    """
    Profiles of a run along a line, one block of rows per snapshot.

    Interval1D: the whole field, columns ``t,x,u``. SquareGrid: the line y = position,
    columns ``t,x,u``. PolarGrid: the ray theta = position (nearest mesh angle), origin
    included, columns ``t,r,u``.

    Args:
        trajectory (Trajectory): The run.
        position (Optional[float]): y for the square, theta for the disk.
        until (Optional[float]): Only snapshots with t <= until.

    Returns:
        pd.DataFrame: The profiles.
    """
    grid = trajectory.spec.domain
    if isinstance(grid, Interval1D):
        axis_name, coordinate = "x", grid.x

        def extract(values: FloatArray) -> FloatArray:
            return values

    elif isinstance(grid, SquareGrid):
        if position is None:
            raise ValueError("A square section needs a y position")
        j = min(max(int(round(position * grid.ny)), 0), grid.ny)
        if not math.isclose(j / grid.ny, position, abs_tol=1e-9):
            logger.info("Section at y=%.6g uses the nearest mesh line y=%.6g", position, j / grid.ny)
        axis_name, coordinate = "x", grid.x

        def extract(values: FloatArray) -> FloatArray:
            return values[:, j]

    else:
        if position is None:
            raise ValueError("A disk section needs a theta position")
        k = int(round(position / grid.dtheta)) % grid.ntheta
        if not math.isclose(k * grid.dtheta, position % (2.0 * math.pi), abs_tol=1e-9):
            logger.info("Section at theta=%.6g uses the nearest mesh angle %.6g", position, k * grid.dtheta)
        axis_name, coordinate = "r", grid.r
        polar = grid

        def extract(values: FloatArray) -> FloatArray:
            origin, rings = polar.split(values)
            return np.concatenate(([origin], rings[:, k]))

    frames = []
    for step, field in trajectory.snapshots:
        t = trajectory.spec.time.time(step)
        if until is not None and t > until + 1e-12:
            break
        frames.append(pd.DataFrame({"t": t, axis_name: coordinate, "u": extract(field.values)}))
    return pd.concat(frames, ignore_index=True)


def field_frame(field: ScalarField) -> pd.DataFrame:
    """One row per node: ``x,u`` in 1D, ``x,y,u`` on the square, ``r,theta,u`` on the disk."""
    grid = field.grid
    if isinstance(grid, Interval1D):
        return pd.DataFrame({"x": grid.x, "u": field.values})
    if isinstance(grid, SquareGrid):
        x, y = grid.coordinates()
        return pd.DataFrame({"x": x.ravel(), "y": y.ravel(), "u": field.values.ravel()})
    r, theta = grid.polar_coordinates()
    return pd.DataFrame({"r": r, "theta": theta, "u": field.values})


def boundary_layer_trace(params: PenaltyParams, time: TimeGrid, orders: Sequence[int] = (0, 1)) -> pd.DataFrame:
    """Exact k^eps next to its truncated expansions at every time level."""
    t = time.times
    frame = pd.DataFrame({"t": t, "g": params.g.value(t), "k_eps": penalty_exact(params, t)})
    for n in orders:
        frame[f"approx_n{n}"] = asymptotic_approx(n, params, t)
    return frame


def remainder_table(
    epsilons: Sequence[float], orders: Sequence[int], k0_values: Sequence[float], g: TimeSignal, time: TimeGrid
) -> pd.DataFrame:
    """Remainder norms for every (eps, order), max over the given boundary values."""
    rows = []
    for eps in sorted(epsilons):
        for n in orders:
            report = boundary_remainder_norms(n, eps, k0_values, g, time)
            rows.append((eps, n, report.l2_norm, report.sup_norm))
    return pd.DataFrame(rows, columns=["epsilon", "order", "l2_norm", "sup_norm"])
