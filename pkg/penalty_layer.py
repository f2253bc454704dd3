"""
The penalty boundary ODE and its boundary-layer expansion.

On every boundary node the boundary value k relaxes toward the data g:

    k' + (k - g) / eps = 0,    k(0) = u0 on the boundary.

This module provides the exact solution (closed form for built-in signals, adaptive
quadrature otherwise), the explicit Euler step used by the solver, the outer terms
k^j = (-1)^j g^(j) and inner terms theta^j(t) = exp(-t/eps) theta^j(0) of the
asymptotic expansion, and the L2/sup norms of the expansion remainder.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import IntegrationWarning, quad

from domain import TimeGrid
from functions import TimeSignal
from utils import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]
Value = Union[float, FloatArray]

QUAD_RELATIVE_TOLERANCE = 1e-10
QUAD_ABSOLUTE_TOLERANCE = 1e-14
QUAD_SUBINTERVALS = 200


class QuadratureError(RuntimeError):
    """Raised when the adaptive quadrature does not reach its tolerance."""


class StiffPenaltyWarning(RuntimeWarning):
    """Issued when dt / eps > 1: the explicit penalty update overshoots g."""


@dataclass(frozen=True)
class PenaltyParams:
    """Penalty parameter, initial boundary value and boundary data of one node."""

    epsilon: float
    k0: float
    g: TimeSignal

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def _penalty_by_quadrature(params: PenaltyParams, t: float) -> float:
    if t == 0.0:
        return params.k0
    eps = params.epsilon

    def integrand(s: float) -> float:
        return float(params.g.value(s)) * math.exp((s - t) / eps)

    # the kernel is concentrated within a few eps of t
    layer_start = t - 20.0 * eps
    points = [layer_start] if layer_start > 0.0 else None
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            integral, _ = quad(
                integrand,
                0.0,
                t,
                epsabs=QUAD_ABSOLUTE_TOLERANCE,
                epsrel=QUAD_RELATIVE_TOLERANCE,
                limit=QUAD_SUBINTERVALS,
                points=points,
            )
        except IntegrationWarning as exc:
            logger.error("Penalty quadrature failed on [0, %s]: %s", t, exc)
            raise QuadratureError(f"Penalty integral did not converge on [0, {t}] (eps={eps}): {exc}") from exc
    return math.exp(-t / eps) * params.k0 + integral / eps


def penalty_exact(params: PenaltyParams, t: ArrayLike) -> Value:
    """
    Exact solution of the penalty ODE.

    k(t) = exp(-t/eps) k0 + (1/eps) * integral_0^t g(s) exp((s - t)/eps) ds

    Args:
        params (PenaltyParams): Node parameters.
        t (ArrayLike): Time or array of times, all >= 0.

    Returns:
        Value: k at the requested times (float for scalar input).

    Raises:
        ValueError: If a time is negative.
        QuadratureError: If the quadrature fallback does not converge.
    """
    ta = np.asarray(t, dtype=np.float64)
    if np.any(ta < 0):
        raise ValueError("penalty_exact needs t >= 0")

    closed = params.g.penalty_solution(params.k0, params.epsilon, ta)
    if closed is None:
        closed = np.vectorize(lambda s: _penalty_by_quadrature(params, float(s)), otypes=[np.float64])(ta)
    if closed.ndim == 0:
        return float(closed)
    return closed


def penalty_discrete(params: PenaltyParams, time: TimeGrid) -> FloatArray:
    """Explicit Euler trajectory k^0..k^N of the penalty ODE on a time grid."""
    check_penalty_ratio(params.epsilon, time.dt)
    k = np.empty(time.n_steps + 1)
    k[0] = params.k0
    g = params.g.value(time.times)
    for n in range(time.n_steps):
        k[n + 1] = penalty_step(k[n], g[n], params.epsilon, time.dt, warn=False)
    return k


def check_penalty_ratio(epsilon: float, dt: float) -> Optional[str]:
    """
    Warn when dt / eps exceeds 1.

    At dt / eps = 1 the update sets k to g in one step: a note is returned, no warning issued.

    Args:
        epsilon (float): Penalty parameter.
        dt (float): Time step.

    Returns:
        Optional[str]: The warning or note, or None when the ratio is below 1.
    """
    ratio = dt / epsilon
    if math.isclose(ratio, 1.0):
        message = "dt/eps = 1: boundary value reaches g in one step"
        logger.info(message)
        return message
    if ratio < 1.0:
        return None
    message = f"dt/eps = {ratio:.4g} > 1: explicit penalty update overshoots g"
    logger.warning(message)
    warnings.warn(message, StiffPenaltyWarning, stacklevel=3)
    return message


def penalty_step(k_n: Value, g_n: Value, epsilon: float, dt: float, warn: bool = True) -> Value:
    """
    One explicit Euler step of the penalty ODE.

    Args:
        k_n (Value): Boundary value(s) at level n.
        g_n (Value): Data at level n.
        epsilon (float): Penalty parameter.
        dt (float): Time step.
        warn (bool): Check dt / eps and warn when it exceeds 1.

    Returns:
        Value: k_n - (dt/eps) (k_n - g_n).
    """
    if not (epsilon > 0 and dt > 0):
        raise ValueError(f"penalty_step needs epsilon > 0 and dt > 0, got {epsilon}, {dt}")
    if warn:
        check_penalty_ratio(epsilon, dt)
    return k_n - (dt / epsilon) * (k_n - g_n)


def boundary_gap(params: PenaltyParams, t: ArrayLike) -> Value:
    """(k - g)(t): the distance of the relaxed boundary value from the data."""
    gap = np.asarray(penalty_exact(params, t)) - params.g.value(t)
    return float(gap) if gap.ndim == 0 else gap


@dataclass(frozen=True)
class ExpansionTerm:
    """Order j of the outer expansion k^j(t) and the inner expansion theta^j(t/eps)."""

    order: int
    outer: Callable[[ArrayLike], FloatArray]
    inner_initial: float

    def outer_value(self, t: ArrayLike) -> FloatArray:
        return self.outer(t)

    def inner_value(self, t: ArrayLike, epsilon: float) -> FloatArray:
        return np.exp(-np.asarray(t, dtype=np.float64) / epsilon) * self.inner_initial


def outer_term(j: int, g: TimeSignal) -> Callable[[ArrayLike], FloatArray]:
    """
    Outer term k^j = (-1)^j g^(j).

    Raises:
        DerivativeUnavailableError: If g does not provide the j-th derivative.
    """
    if j < 0:
        raise ValueError(f"Expansion order must be nonnegative, got {j}")
    g.derivative(j, 0.0)
    sign = (-1.0) ** j

    def term(t: ArrayLike) -> FloatArray:
        return sign * g.derivative(j, t)

    return term


def inner_initial(j: int, params: PenaltyParams) -> float:
    """theta^0(0) = k0 - g(0); theta^j(0) = (-1)^(j+1) g^(j)(0) for j >= 1."""
    if j < 0:
        raise ValueError(f"Expansion order must be nonnegative, got {j}")
    if j == 0:
        return params.k0 - float(params.g.value(0.0))
    return float((-1.0) ** (j + 1) * params.g.derivative(j, 0.0))


def expansion_term(j: int, params: PenaltyParams) -> ExpansionTerm:
    return ExpansionTerm(order=j, outer=outer_term(j, params.g), inner_initial=inner_initial(j, params))


def inner_term(j: int, params: PenaltyParams, t: ArrayLike) -> Value:
    """Inner term theta^j(t) = exp(-t/eps) theta^j(0)."""
    value = expansion_term(j, params).inner_value(t, params.epsilon)
    return float(value) if value.ndim == 0 else value


def asymptotic_approx(n: int, params: PenaltyParams, t: ArrayLike) -> Value:
    """
    Truncated expansion sum_{j=0..n} eps^j (k^j(t) + theta^j(t)).

    Args:
        n (int): Highest order kept.
        params (PenaltyParams): Node parameters.
        t (ArrayLike): Time or array of times.

    Returns:
        Value: The approximation of k at t.
    """
    ta = np.asarray(t, dtype=np.float64)
    total = np.zeros(ta.shape)
    for j in range(n + 1):
        term = expansion_term(j, params)
        total = total + params.epsilon**j * (term.outer_value(ta) + term.inner_value(ta, params.epsilon))
    return float(total) if total.ndim == 0 else total


@dataclass(frozen=True)
class RemainderReport:
    """Norms over [0, T] of w = k - (truncated outer + inner expansion)."""

    order: int
    epsilon: float
    l2_norm: float
    sup_norm: float
    initial_remainder: float


def remainder_norms(n: int, params: PenaltyParams, time: TimeGrid) -> RemainderReport:
    """
    Sample the remainder on a time grid and take its norms.

    L2 norm = sqrt(dt * sum w^2), sup norm = max |w|.

    Args:
        n (int): Expansion order.
        params (PenaltyParams): Node parameters.
        time (TimeGrid): Sample times.

    Returns:
        RemainderReport: The norms.
    """
    times = time.times
    w = np.asarray(penalty_exact(params, times)) - np.asarray(asymptotic_approx(n, params, times))
    report = RemainderReport(
        order=n,
        epsilon=params.epsilon,
        l2_norm=float(np.sqrt(time.dt * np.sum(w * w))),
        sup_norm=float(np.max(np.abs(w))),
        initial_remainder=float(abs(w[0])),
    )
    logger.debug("Remainder n=%s eps=%s: L2=%.3e sup=%.3e", n, params.epsilon, report.l2_norm, report.sup_norm)
    return report


def boundary_remainder_norms(
    n: int, epsilon: float, k0_values: Sequence[float], g: TimeSignal, time: TimeGrid
) -> RemainderReport:
    """Remainder norms of every boundary node, reduced by the max over nodes."""
    reports = [remainder_norms(n, PenaltyParams(epsilon, float(k0), g), time) for k0 in k0_values]
    return RemainderReport(
        order=n,
        epsilon=epsilon,
        l2_norm=max(r.l2_norm for r in reports),
        sup_norm=max(r.sup_norm for r in reports),
        initial_remainder=max(r.initial_remainder for r in reports),
    )
