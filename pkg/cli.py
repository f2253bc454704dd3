"""
Command-line front end for the heat-equation experiments.

Subcommands:
- boundary-layer: exact penalty boundary value against its truncated expansions,
  plus remainder norms over a list of eps.
- square, disk: Direct and Penalty runs on the unit square or disk, their comparative
  errors, snapshots, sections and convergence rates.
- oned: Direct, Penalty and Corrector runs on [0, 1] with a peak-error summary.
- sweep-epsilon: the epsilon sweep of a configured experiment.

Parameters merge in increasing precedence: experiment defaults from ``config.json``,
a ``key = value`` file given by ``--config``, then command-line flags. Results are
written as CSV files to the output folder of the active environment, overridden by
``SOLVER_OUT_DIR``, overridden by ``--out``.
"""

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd

import analysis
from domain import (
    BoundaryMode,
    Corrector,
    Direct,
    Grid,
    Interval1D,
    Penalty,
    PolarGrid,
    ProblemSpec,
    SquareGrid,
    TimeGrid,
)
from functions import REGISTRY, DerivativeUnavailableError, resolve, resolve_signal
from heat_solver import NonFiniteSolutionError, UnstableSchemeError, cfl_check
from penalty_layer import PenaltyParams, QuadratureError
from utils import get_logger, load_config, set_log_level

logger = get_logger(__name__)

CONFIG_FILE = "config.json"
OUT_DIR_VARIABLE = "SOLVER_OUT_DIR"
CSV_FLOAT_FORMAT = "%.15g"

EXIT_CONFIG = 1
EXIT_UNSTABLE = 2
EXIT_NUMERICAL = 3

EXPERIMENTS = ("boundary-layer", "square", "disk", "oned", "sweep-epsilon")
MODES = ("all", "direct", "penalty", "corrector")

STRING_KEYS = {"experiment", "u0", "f", "g", "g_right", "mode"}
FUNCTION_KEYS = {"u0", "f", "g", "g_right"}
INT_KEYS = {
    "procedure",
    "nx",
    "ny",
    "n_cells",
    "nr",
    "ntheta",
    "steps",
    "space_refinement",
    "time_refinement",
    "refinements",
    "workers",
    "trace_steps",
    "rate_nr",
    "rate_ntheta",
    "rate_steps",
}
FLOAT_KEYS = {"nu", "epsilon", "t_end", "point_x", "point_y", "section", "peak_window"}
FLOAT_LIST_KEYS = {"epsilons"}
INT_LIST_KEYS = {"orders"}
KNOWN_KEYS = STRING_KEYS | INT_KEYS | FLOAT_KEYS | FLOAT_LIST_KEYS | INT_LIST_KEYS
# Keys where zero is a meaningful value
NONNEGATIVE_KEYS = {"procedure", "refinements", "point_x", "point_y", "section", "orders"}


class ConfigError(ValueError):
    """Raised on a malformed configuration, with the offending line when known."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def parse_value(key: str, raw: str, line: Optional[int] = None) -> Any:
    """
    Convert the raw text of a configuration value to its typed value.

    Args:
        key (str): A known configuration key.
        raw (str): The text after ``=``.
        line (Optional[int]): Line number for error messages.

    Returns:
        Any: str, int, float or a tuple of them.

    Raises:
        ConfigError: On unknown keys, unknown function names, bad numbers or out of range values.
    """
    if key not in KNOWN_KEYS:
        raise ConfigError(f"unknown key {key!r}", line)
    raw = raw.strip()
    if not raw:
        raise ConfigError(f"empty value for {key!r}", line)

    if key in STRING_KEYS:
        if key in FUNCTION_KEYS and raw not in REGISTRY:
            raise ConfigError(f"unknown function {raw!r} for {key!r}; known: {', '.join(sorted(REGISTRY))}", line)
        if key == "mode" and raw not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {raw!r}", line)
        if key == "experiment" and raw not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {raw!r}", line)
        return raw

    parts = [part.strip() for part in raw.split(",")] if key in FLOAT_LIST_KEYS | INT_LIST_KEYS else [raw]
    cast: Callable[[str], Any] = int if key in INT_KEYS | INT_LIST_KEYS else float
    values = []
    for part in parts:
        try:
            value = cast(part)
        except ValueError:
            expected = "integers" if cast is int else "numbers"
            raise ConfigError(f"{key!r} expects {expected}, got {part!r}", line) from None
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{key!r} must be finite, got {part!r}", line)
        if value < 0 or (value == 0 and key not in NONNEGATIVE_KEYS):
            bound = "nonnegative" if key in NONNEGATIVE_KEYS else "positive"
            raise ConfigError(f"{key!r} must be {bound}, got {part}", line)
        values.append(value)
    if key == "procedure" and values[0] not in (0, 1, 2):
        raise ConfigError(f"procedure must be 0, 1 or 2, got {values[0]}", line)
    return tuple(values) if key in FLOAT_LIST_KEYS | INT_LIST_KEYS else values[0]


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parse ``key = value`` lines; ``#`` starts a comment and blank lines are skipped.

    Raises:
        ConfigError: On malformed lines, duplicate keys or invalid values.
    """
    settings: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, raw = content.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {line.strip()!r}", number)
        if key in settings:
            raise ConfigError(f"duplicate key {key!r}", number)
        settings[key] = parse_value(key, raw, number)
    return settings


def parse_config_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    logger.info("Reading run configuration from %s", path)
    return parse_config_text(path.read_text(encoding="utf-8"))


@dataclass(frozen=True)
class RunConfig:
    """Fully merged parameters of one experiment run."""

    experiment: str
    out_dir: Path
    u0: str = "zero"
    f: str = "zero"
    g: str = "zero"
    g_right: Optional[str] = None
    nu: float = 0.2
    epsilon: float = 0.1
    epsilons: Tuple[float, ...] = (0.01, 0.05, 0.1, 0.2, 0.5, 1.0)
    mode: str = "all"
    procedure: int = 1
    nx: int = 24
    ny: int = 24
    n_cells: int = 24
    nr: int = 10
    ntheta: int = 63
    steps: int = 1000
    t_end: float = 1.0
    # Peak errors are taken over [0, peak_window * t_end]
    peak_window: float = 0.05
    space_refinement: int = 2
    time_refinement: int = 4
    refinements: int = 3
    workers: int = 1
    point_x: float = 0.0
    point_y: float = 0.0
    section: Optional[float] = None
    orders: Tuple[int, ...] = (0, 1)
    trace_steps: int = 1000
    rate_nr: int = 5
    rate_ntheta: int = 16
    rate_steps: int = 100

    @classmethod
    def from_settings(cls, experiment: str, out_dir: Path, settings: Dict[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)} - {"experiment", "out_dir"}
        unknown = set(settings) - names
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
        return cls(experiment=experiment, out_dir=out_dir, **settings)

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.steps, self.t_end)


def experiment_defaults(config: Dict[str, Any], experiment: str) -> Dict[str, Any]:
    """Defaults of an experiment from ``config.json``, with the active environment's overrides."""
    env = config[config["active_environment"]]
    merged: Dict[str, Any] = {}
    for block in (config.get("experiments", {}), env.get("experiments", {})):
        for key, raw in block.get(experiment, {}).items():
            merged[key] = parse_value(key, ",".join(map(str, raw)) if isinstance(raw, list) else str(raw))
    return merged


def output_directory(config: Dict[str, Any], root_path: Path, flag: Optional[str]) -> Path:
    if flag:
        return Path(flag)
    if os.environ.get(OUT_DIR_VARIABLE):
        return Path(os.environ[OUT_DIR_VARIABLE])
    return Path(root_path, config[config["active_environment"]]["output_folder_path"])


def write_csv(frame: pd.DataFrame, out_dir: Path, name: str) -> Path:
    """Write a table with 15 significant digits; the same inputs give the same bytes."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = Path(out_dir, name)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info("Wrote %s rows to %s", len(frame), path)
    return path


def _modes(cfg: RunConfig, allow_corrector: bool) -> List[BoundaryMode]:
    if cfg.mode == "corrector" and not allow_corrector:
        raise ConfigError(f"corrector mode is only available for the oned experiment, not {cfg.experiment}")
    if cfg.mode == "direct":
        return [Direct()]
    if cfg.mode == "penalty":
        return [Penalty(cfg.epsilon)]
    if cfg.mode == "corrector":
        return [Corrector(cfg.procedure)]
    modes: List[BoundaryMode] = [Direct(), Penalty(cfg.epsilon)]
    if allow_corrector:
        modes += [Corrector(1), Corrector(2)]
    return modes


def _problem(cfg: RunConfig, domain: Grid, mode: BoundaryMode = Direct()) -> ProblemSpec:
    return ProblemSpec(
        domain=domain,
        nu=cfg.nu,
        u0=cfg.u0,
        time=cfg.time_grid(),
        f=cfg.f,
        g=cfg.g,
        boundary_mode=mode,
        g_right=cfg.g_right if isinstance(domain, Interval1D) else None,
    )


def _domain(cfg: RunConfig, experiment: str) -> Grid:
    if experiment == "square":
        return SquareGrid(cfg.nx, cfg.ny)
    if experiment == "disk":
        return PolarGrid(cfg.nr, cfg.ntheta)
    return Interval1D(cfg.n_cells)


def _require_stable(spec: ProblemSpec) -> None:
    report = cfl_check(spec)
    logger.info("lambda = %.4f (%s)", report.lam, report.formula)
    if not report.stable:
        raise UnstableSchemeError(report)


def cmd_boundary_layer(cfg: RunConfig) -> List[Path]:
    """Boundary trace of k^eps and its expansions for each eps, and the remainder norms."""
    g = resolve_signal(cfg.g)
    k0 = float(resolve(cfg.u0)(cfg.point_x, cfg.point_y, 0.0))
    time = TimeGrid(cfg.trace_steps, cfg.t_end)
    logger.info("Boundary layer at (%s, %s): k0 = %.6g, g = %s", cfg.point_x, cfg.point_y, k0, g.name)
    written = []
    for eps in sorted(cfg.epsilons):
        trace = analysis.boundary_layer_trace(PenaltyParams(eps, k0, g), time, cfg.orders)
        written.append(write_csv(trace, cfg.out_dir, f"boundary_trace_eps{eps:g}.csv"))
    table = analysis.remainder_table(cfg.epsilons, cfg.orders, [k0], g, time)
    written.append(write_csv(table, cfg.out_dir, "remainder_norms.csv"))
    return written


def _rate_files(cfg: RunConfig, base: ProblemSpec, prefix: str) -> List[Path]:
    if cfg.refinements < 3:
        logger.warning("Skipping rate fits: %s refinement level(s), at least 3 needed", cfg.refinements)
        return []
    levels = analysis.refinement_study(base, cfg.refinements, cfg.space_refinement, cfg.time_refinement)
    initial = analysis.fit_rate([(level.h, level.initial_error) for level in levels])
    final = analysis.fit_rate([(level.h, level.final_error) for level in levels])
    logger.info("%s slopes: initial %.3f, final %.3f", prefix, initial.slope, final.slope)
    return [
        write_csv(initial.to_frame(), cfg.out_dir, f"{prefix}_rate_initial.csv"),
        write_csv(final.to_frame(), cfg.out_dir, f"{prefix}_rate_final.csv"),
    ]


def _two_dimensional(cfg: RunConfig, experiment: str, section_at: float) -> List[Path]:
    base = _problem(cfg, _domain(cfg, experiment))
    _require_stable(base)
    modes = _modes(cfg, allow_corrector=False)
    specs = [replace(base, boundary_mode=mode) for mode in modes]
    pairs = analysis.solve_pairs(specs, cfg.space_refinement, cfg.time_refinement, cfg.workers)

    written = []
    curves = {}
    for mode, (coarse, fine) in zip(modes, pairs):
        prefix = f"{experiment}_{mode.label}"
        curve = analysis.comparative_error(coarse, fine)
        curves[mode.label] = curve
        written.append(write_csv(curve.to_frame(), cfg.out_dir, f"{prefix}_error.csv"))
        written.append(write_csv(curve.l2_frame(), cfg.out_dir, f"{prefix}_error_l2.csv"))
        for t in (0.0, 0.5 * cfg.t_end, cfg.t_end):
            field = coarse.at_time(t)
            written.append(write_csv(analysis.field_frame(field), cfg.out_dir, f"{prefix}_field_t{t:g}.csv"))
        profile = analysis.section(coarse, section_at, until=0.05 * cfg.t_end)
        written.append(write_csv(profile, cfg.out_dir, f"{prefix}_section.csv"))
        gradients = pd.DataFrame(
            {"t": coarse.times, "max_gradient": [analysis.max_gradient(field) for _, field in coarse.snapshots]}
        )
        written.append(write_csv(gradients, cfg.out_dir, f"{prefix}_gradient.csv"))
        if coarse.warnings:
            logger.warning("%s: %s", mode.label, "; ".join(coarse.warnings))

    peaks = analysis.peak_summary(curves, until=cfg.peak_window * cfg.t_end)
    written.append(write_csv(peaks, cfg.out_dir, f"{experiment}_peak_summary.csv"))
    rate_base = base
    if experiment == "disk":
        rate_grid = PolarGrid(cfg.rate_nr, cfg.rate_ntheta)
        rate_base = replace(base, domain=rate_grid, time=TimeGrid(cfg.rate_steps, cfg.t_end))
    for mode in modes:
        written += _rate_files(cfg, replace(rate_base, boundary_mode=mode), f"{experiment}_{mode.label}")
    return written


def cmd_square(cfg: RunConfig) -> List[Path]:
    return _two_dimensional(cfg, "square", 0.6 if cfg.section is None else cfg.section)


def cmd_disk(cfg: RunConfig) -> List[Path]:
    written = _two_dimensional(cfg, "disk", math.pi / 4.0 if cfg.section is None else cfg.section)
    written += _sweep_files(cfg, "disk")
    return written


def cmd_1d(cfg: RunConfig) -> List[Path]:
    """Every boundary treatment on [0, 1], the peak-error summary and the eps sweep."""
    base = _problem(cfg, Interval1D(cfg.n_cells))
    _require_stable(base)
    modes = _modes(cfg, allow_corrector=True)
    curves = analysis.mode_comparison(base, modes, cfg.workers)
    written = [write_csv(curve.to_frame(), cfg.out_dir, f"oned_{label}_error.csv") for label, curve in curves.items()]
    peaks = analysis.peak_summary(curves, until=cfg.peak_window * cfg.t_end)
    written.append(write_csv(peaks, cfg.out_dir, "oned_peak_summary.csv"))
    written += _sweep_files(cfg, "oned")
    return written


def _sweep_files(cfg: RunConfig, experiment: str) -> List[Path]:
    base = _problem(cfg, _domain(cfg, experiment))
    rows = analysis.epsilon_sweep(base, cfg.epsilons, cfg.workers, cfg.space_refinement, cfg.time_refinement)
    written = [write_csv(analysis.sweep_frame(rows), cfg.out_dir, f"{experiment}_sweep.csv")]
    for row in rows:
        if row.curve is not None:
            name = f"{experiment}_sweep_eps{row.epsilon:g}_error.csv"
            written.append(write_csv(row.curve.to_frame(), cfg.out_dir, name))
    return written


def cmd_sweep_epsilon(cfg: RunConfig, target: str) -> List[Path]:
    if target not in ("square", "disk", "oned"):
        raise ConfigError(f"sweep-epsilon needs experiment = square, disk or oned, got {target!r}")
    _require_stable(_problem(cfg, _domain(cfg, target)))
    return _sweep_files(cfg, target)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solver", description="Heat equation with incompatible data")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", type=Path, help="key = value run configuration")
        sub.add_argument("--epsilon", type=str, help="penalty parameter")
        sub.add_argument("--nx", type=str, help="mesh size (nx/ny, n_cells or nr)")
        sub.add_argument("--steps", type=str, help="number of time steps")
        sub.add_argument("--mode", type=str, help=f"one of {', '.join(MODES)}")
        sub.add_argument("--workers", type=str, help="worker processes")
        sub.add_argument("--out", type=str, help="output directory")
    return parser


def _flag_settings(args: argparse.Namespace) -> Dict[str, Any]:
    settings: Dict[str, Any] = {}
    if args.epsilon is not None:
        settings["epsilon"] = parse_value("epsilon", args.epsilon)
    if args.nx is not None:
        size = parse_value("nx", args.nx)
        settings.update(nx=size, ny=size, n_cells=size, nr=size)
    if args.steps is not None:
        settings["steps"] = parse_value("steps", args.steps)
    if args.mode is not None:
        settings["mode"] = parse_value("mode", args.mode)
    if args.workers is not None:
        settings["workers"] = parse_value("workers", args.workers)
    return settings


def run(argv: Optional[Sequence[str]] = None, root_path: Optional[Path] = None) -> List[Path]:
    """
    Parse the command line, merge the configuration and run one experiment.

    Returns:
        List[Path]: The files written.
    """
    args = build_parser().parse_args(argv)
    root_path = Path(os.getcwd()) if root_path is None else root_path
    config = load_config(str(Path(root_path, CONFIG_FILE)))
    env = config[config["active_environment"]]
    set_log_level(env.get("log_level", "INFO"))

    settings = experiment_defaults(config, args.command)
    if args.config is not None:
        settings.update(parse_config_file(args.config))
    settings.update(_flag_settings(args))

    if args.command != "sweep-epsilon" and "experiment" in settings:
        raise ConfigError(f"experiment is only read by sweep-epsilon, not by {args.command}")
    target = settings.pop("experiment", "square")
    if args.command == "sweep-epsilon":
        for key, value in experiment_defaults(config, target).items():
            settings.setdefault(key, value)
    cfg = RunConfig.from_settings(args.command, output_directory(config, root_path, args.out), settings)
    logger.info("Running %s into %s", cfg.experiment, cfg.out_dir)

    if args.command == "boundary-layer":
        return cmd_boundary_layer(cfg)
    if args.command == "square":
        return cmd_square(cfg)
    if args.command == "disk":
        return cmd_disk(cfg)
    if args.command == "oned":
        return cmd_1d(cfg)
    return cmd_sweep_epsilon(cfg, target)


def _fail(code: int, exc: BaseException) -> int:
    message = str(exc).replace('"', "'")
    print(f'error={code} message="{message}"', file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        run(argv)
    except UnstableSchemeError as exc:
        logger.error("Refused: %s", exc)
        return _fail(EXIT_UNSTABLE, exc)
    except (NonFiniteSolutionError, QuadratureError, DerivativeUnavailableError) as exc:
        logger.error("Numerical failure: %s", exc)
        return _fail(EXIT_NUMERICAL, exc)
    except (ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        logger.error("Configuration error: %s", exc)
        return _fail(EXIT_CONFIG, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
