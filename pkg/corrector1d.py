"""
The 1D corrector method for incompatible data on [0, 1].

The solution is split as u = v + S, where S is built from the heat-kernel profiles

    S0(x, t) = erfc(x / (2 sqrt(nu t))),    S1(x, t) = integral_0^t S0(x, tau) dtau

and absorbs the incompatibilities at x = 0 (mirrored at x = 1 when needed):

    procedure 0: S = 0
    procedure 1: S = a0 S0
    procedure 2: S = a0 S0 + a1 S1

with a0 = g1(0) - u0(0) and a1 = g1'(0) - nu u0''(0). The remainder v solves the heat
equation with the shifted boundary data g - S and is computed by the FTCS solver.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import IntegrationWarning, quad
from scipy.special import erfc

from domain import Corrector, Interval1D, ProblemSpec, ScalarField, evaluate_initial
from functions import resolve_signal
from heat_solver import Trajectory, UnstableSchemeError, cfl_check, march
from penalty_layer import QUAD_ABSOLUTE_TOLERANCE, QUAD_RELATIVE_TOLERANCE, QUAD_SUBINTERVALS, QuadratureError
from utils import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]
Value = Union[float, FloatArray]
SpaceTimeFunction = Callable[[ArrayLike, float], FloatArray]

# Coefficients below this magnitude are treated as compatible data
COMPATIBLE_TOLERANCE = 1e-12

# S1 quadrature breakpoints in units of x^2 / nu, dropped below LAYER_FLOOR * t
LAYER_SCALES = (0.01, 0.1, 1.0, 10.0, 100.0)
LAYER_FLOOR = 1e-12


@dataclass(frozen=True)
class CorrectorSpec:
    """Procedure and coefficients of the singular correction."""

    procedure: int
    alpha0: float
    alpha1: float
    nu: float
    alpha0_right: float = 0.0
    alpha1_right: float = 0.0

    def __post_init__(self) -> None:
        if self.procedure not in (0, 1, 2):
            raise ValueError(f"Corrector procedure must be 0, 1 or 2, got {self.procedure}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")


def _as_value(result: FloatArray) -> Value:
    return float(result) if result.ndim == 0 else result


def s0(x: ArrayLike, t: ArrayLike, nu: float) -> Value:
    """
    Heat-kernel profile erfc(x / (2 sqrt(nu t))).

    At t = 0 the pointwise limit is used: 1 at x = 0, 0 for x > 0.
    """
    xa = np.asarray(x, dtype=np.float64)
    ta = np.asarray(t, dtype=np.float64)
    if np.any(xa < 0) or np.any(ta < 0):
        raise ValueError("s0 needs x >= 0 and t >= 0")
    positive = ta > 0
    safe_t = np.where(positive, ta, 1.0)
    profile = erfc(xa / (2.0 * np.sqrt(nu * safe_t)))
    limit = np.where(xa == 0.0, 1.0, 0.0)
    return _as_value(np.where(positive, profile, limit))


def _s1_quadrature(x: float, t: float, nu: float) -> float:
    if t == 0.0:
        return 0.0
    # S0 switches on within a few multiples of x^2 / nu, a thin layer when x is small
    layer = x * x / nu
    points = [layer * scale for scale in LAYER_SCALES if LAYER_FLOOR * t < layer * scale < t] or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(
                lambda tau: float(s0(x, tau, nu)),
                0.0,
                t,
                epsabs=QUAD_ABSOLUTE_TOLERANCE,
                epsrel=QUAD_RELATIVE_TOLERANCE,
                limit=QUAD_SUBINTERVALS,
                points=points,
            )
        except IntegrationWarning as exc:
            logger.error("S1 quadrature failed at x=%s on [0, %s]", x, t)
            raise QuadratureError(f"S1 integral did not converge at x={x} on [0, {t}]: {exc}") from exc
    return float(value)


def s1(x: ArrayLike, t: ArrayLike, nu: float) -> Value:
    """
    S1(x, t) = integral_0^t S0(x, tau) dtau by adaptive quadrature.

    Raises:
        QuadratureError: If the quadrature does not converge.
    """
    xa = np.asarray(x, dtype=np.float64)
    ta = np.asarray(t, dtype=np.float64)
    if np.any(xa < 0) or np.any(ta < 0):
        raise ValueError("s1 needs x >= 0 and t >= 0")
    result = np.vectorize(lambda xi, ti: _s1_quadrature(float(xi), float(ti), nu), otypes=[np.float64])(xa, ta)
    return _as_value(result)


def s1_closed_form(x: ArrayLike, t: ArrayLike, nu: float) -> Value:
    """(t + x^2 / (2 nu)) erfc(eta) - x sqrt(t / (pi nu)) exp(-eta^2), eta = x / (2 sqrt(nu t))."""
    xa = np.asarray(x, dtype=np.float64)
    ta = np.asarray(t, dtype=np.float64)
    positive = ta > 0
    safe_t = np.where(positive, ta, 1.0)
    eta = xa / (2.0 * np.sqrt(nu * safe_t))
    value = (safe_t + xa**2 / (2.0 * nu)) * erfc(eta) - xa * np.sqrt(safe_t / (math.pi * nu)) * np.exp(-(eta**2))
    return _as_value(np.where(positive, value, 0.0))


def corrector_spec_for(spec: ProblemSpec, procedure: int) -> CorrectorSpec:
    """
    Derive the coefficients from the data of a 1D problem.

    a0 = g1(0) - u0(0), a1 = g1'(0) - nu u0''(0) at x = 0, and the same with g2 and
    u0 at x = 1 for the mirrored terms.
    """
    if procedure == 0:
        return CorrectorSpec(procedure=0, alpha0=0.0, alpha1=0.0, nu=spec.nu)
    u0 = spec.initial
    g_left = resolve_signal(spec.g)
    g_right = resolve_signal(spec.g if spec.g_right is None else spec.g_right)
    ends = np.array([0.0, 1.0])
    u0_ends = u0(ends, np.zeros(2))
    alpha0 = float(g_left.value(0.0)) - float(u0_ends[0])
    alpha0_right = float(g_right.value(0.0)) - float(u0_ends[1])
    alpha1 = alpha1_right = 0.0
    if procedure == 2:
        d2 = u0.d2x(ends, np.zeros(2))
        alpha1 = float(g_left.derivative(1, 0.0)) - spec.nu * float(d2[0])
        alpha1_right = float(g_right.derivative(1, 0.0)) - spec.nu * float(d2[1])
    cspec = CorrectorSpec(procedure, alpha0, alpha1, spec.nu, alpha0_right, alpha1_right)
    logger.info("Corrector procedure %s: alpha0=%.6g alpha1=%.6g (right: %.3g, %.3g)", procedure, *_coefficients(cspec))
    return cspec


def _coefficients(cspec: CorrectorSpec) -> Tuple[float, float, float, float]:
    return cspec.alpha0, cspec.alpha1, cspec.alpha0_right, cspec.alpha1_right


def build_corrector(cspec: CorrectorSpec) -> SpaceTimeFunction:
    """
    Assemble S(x, t) for a procedure.

    S1 is evaluated in closed form here so whole grids are corrected at once.

    Args:
        cspec (CorrectorSpec): Procedure and coefficients.

    Returns:
        SpaceTimeFunction: S(x, t) for x in [0, 1].
    """
    nu = cspec.nu
    terms: List[Tuple[float, Callable[[ArrayLike, float], Value], bool]] = []
    if cspec.procedure >= 1:
        terms += [
            (cspec.alpha0, lambda x, t: s0(x, t, nu), False),
            (cspec.alpha0_right, lambda x, t: s0(x, t, nu), True),
        ]
    if cspec.procedure == 2:
        terms += [
            (cspec.alpha1, lambda x, t: s1_closed_form(x, t, nu), False),
            (cspec.alpha1_right, lambda x, t: s1_closed_form(x, t, nu), True),
        ]
    active = [(alpha, kernel, mirrored) for alpha, kernel, mirrored in terms if abs(alpha) > COMPATIBLE_TOLERANCE]

    def corrector(x: ArrayLike, t: float) -> FloatArray:
        xa = np.asarray(x, dtype=np.float64)
        total = np.zeros(xa.shape)
        for alpha, kernel, mirrored in active:
            position = np.clip(1.0 - xa, 0.0, None) if mirrored else xa
            total = total + alpha * np.asarray(kernel(position, t))
        return total

    return corrector


def solve_corrected(spec: ProblemSpec) -> Trajectory:
    """
    Solve a 1D problem as u = v + S.

    v solves the heat equation with v(x, 0) = u0(x), v(0, t) = g1(t) - S(0, t) and
    v(1, t) = g2(t) - S(1, t); snapshots hold u = v + S.

    Args:
        spec (ProblemSpec): Problem on an ``Interval1D`` in ``Corrector`` mode.

    Returns:
        Trajectory: Snapshots of u.

    Raises:
        UnstableSchemeError: If lambda > 1/2.
    """
    mode = spec.boundary_mode
    grid = spec.domain
    if not isinstance(mode, Corrector) or not isinstance(grid, Interval1D):
        raise ValueError("solve_corrected needs an Interval1D problem in Corrector mode")
    report = cfl_check(spec)
    if not report.stable:
        logger.error("Refusing unstable spec: lambda = %.6g", report.lam)
        raise UnstableSchemeError(report)

    corrector = build_corrector(corrector_spec_for(spec, mode.procedure))
    ends = np.array([0.0, 1.0])
    logger.info("Solving corrected problem with %s steps, procedure %s", spec.time.n_steps, mode.procedure)

    def next_boundary(n: int) -> FloatArray:
        t = spec.time.time(n + 1)
        return spec.boundary_values(t) - corrector(ends, t)

    v_snapshots = march(spec, next_boundary, evaluate_initial(spec))
    snapshots = [
        (step, ScalarField(grid, v.values + corrector(grid.x, spec.time.time(step)))) for step, v in v_snapshots
    ]
    return Trajectory(spec=spec, snapshots=snapshots)
