"""
Built-in functions for initial data, forcing and boundary data.

Problems never parse expressions: every f, g and u0 is picked by name from ``REGISTRY``.
Two families exist:

- ``TimeSignal``: spatially uniform functions of time. They know their analytic
  derivatives and, where available, the closed-form solution of the penalty ODE
  ``eps * k' + k = g`` with ``k(0) = k0``.
- ``SpaceFunction``: time independent functions of the Cartesian coordinates, with
  their second x-derivative (used by the 1D corrector).

Every function is callable as ``fn(x, y, t)`` and returns an array broadcast to the
shape of ``x`` and ``y``.
"""

import math
from abc import ABC, abstractmethod
from typing import Callable, Dict, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from utils import get_logger

logger = get_logger(__name__)

FloatArray = NDArray[np.float64]

# Step used for the finite-difference second derivative fallback
D2X_STEP = 1e-4


class UnknownFunctionError(KeyError):
    """Raised when a function name is not in the registry."""


class DerivativeUnavailableError(ValueError):
    """Raised when a derivative order exceeds what a signal provides analytically."""


class BuiltinFunction(ABC):
    """Base class of every named function."""

    name: str = "anonymous"

    @abstractmethod
    def __call__(self, x: ArrayLike, y: ArrayLike, t: float = 0.0) -> FloatArray:
        ...

    def d2x(self, x: ArrayLike, y: ArrayLike = 0.0) -> FloatArray:
        """Second x-derivative at time 0, by central differences unless overridden."""
        xa = np.asarray(x, dtype=np.float64)
        h = D2X_STEP
        return (self(xa + h, y) - 2.0 * self(xa, y) + self(xa - h, y)) / (h * h)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"


class TimeSignal(BuiltinFunction):
    """Spatially uniform function of time with analytic derivatives."""

    # None means derivatives of every order are available
    max_order: Optional[int] = None

    @abstractmethod
    def value(self, t: ArrayLike) -> FloatArray:
        ...

    @abstractmethod
    def _derivative(self, order: int, t: ArrayLike) -> FloatArray:
        ...

    def derivative(self, order: int, t: ArrayLike) -> FloatArray:
        """
        Evaluate the derivative of the given order.

        Args:
            order (int): Derivative order, 0 returns the value itself.
            t (ArrayLike): Time or array of times.

        Returns:
            FloatArray: The derivative values.

        Raises:
            DerivativeUnavailableError: If the order is not available analytically.
        """
        if order < 0:
            raise ValueError(f"Derivative order must be nonnegative, got {order}")
        if self.max_order is not None and order > self.max_order:
            logger.error("Derivative of order %s requested from %s (max %s)", order, self, self.max_order)
            raise DerivativeUnavailableError(
                f"{self.name} provides derivatives up to order {self.max_order}, requested {order}"
            )
        if order == 0:
            return self.value(t)
        return self._derivative(order, t)

    def penalty_solution(self, k0: ArrayLike, epsilon: float, t: ArrayLike) -> Optional[FloatArray]:
        """Closed-form solution of ``eps * k' + k = g``, or None when there is none."""
        return None

    def __call__(self, x: ArrayLike, y: ArrayLike, t: float = 0.0) -> FloatArray:
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.full(shape, float(self.value(t)), dtype=np.float64)

    def d2x(self, x: ArrayLike, y: ArrayLike = 0.0) -> FloatArray:
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=np.float64)


class Constant(TimeSignal):
    """g(t) = c."""

    def __init__(self, c: float, name: Optional[str] = None) -> None:
        self.c = float(c)
        self.name = name or f"constant({c})"

    def value(self, t: ArrayLike) -> FloatArray:
        return np.full(np.shape(t), self.c, dtype=np.float64)

    def _derivative(self, order: int, t: ArrayLike) -> FloatArray:
        return np.zeros(np.shape(t), dtype=np.float64)

    def penalty_solution(self, k0: ArrayLike, epsilon: float, t: ArrayLike) -> Optional[FloatArray]:
        ta = np.asarray(t, dtype=np.float64)
        return self.c + (np.asarray(k0, dtype=np.float64) - self.c) * np.exp(-ta / epsilon)


class Sine(TimeSignal):
    """g(t) = a sin(w t)."""

    def __init__(self, amplitude: float = 1.0, omega: float = 1.0, name: Optional[str] = None) -> None:
        self.amplitude = float(amplitude)
        self.omega = float(omega)
        self.name = name or f"sine({amplitude}, {omega})"

    def value(self, t: ArrayLike) -> FloatArray:
        return self.amplitude * np.sin(self.omega * np.asarray(t, dtype=np.float64))

    def _derivative(self, order: int, t: ArrayLike) -> FloatArray:
        phase = order * math.pi / 2.0
        scale = self.amplitude * self.omega**order
        return scale * np.sin(self.omega * np.asarray(t, dtype=np.float64) + phase)

    def penalty_solution(self, k0: ArrayLike, epsilon: float, t: ArrayLike) -> Optional[FloatArray]:
        ta = np.asarray(t, dtype=np.float64)
        ew = epsilon * self.omega
        denom = 1.0 + ew * ew
        particular = self.amplitude * (np.sin(self.omega * ta) - ew * np.cos(self.omega * ta)) / denom
        particular_0 = -self.amplitude * ew / denom
        return particular + (np.asarray(k0, dtype=np.float64) - particular_0) * np.exp(-ta / epsilon)


class CallableSignal(TimeSignal):
    """Wraps an arbitrary function of time. No derivatives, no closed-form penalty solution."""

    max_order = 0

    def __init__(self, fn: Callable[[FloatArray], ArrayLike], name: str = "callable") -> None:
        self.fn = fn
        self.name = name

    def value(self, t: ArrayLike) -> FloatArray:
        return np.asarray(self.fn(np.asarray(t, dtype=np.float64)), dtype=np.float64)

    def _derivative(self, order: int, t: ArrayLike) -> FloatArray:  # pragma: no cover - guarded by max_order
        raise DerivativeUnavailableError(f"{self.name} has no analytic derivatives")


class SpaceFunction(BuiltinFunction):
    """Time independent function of (x, y)."""

    def __init__(
        self,
        name: str,
        fn: Callable[[FloatArray, FloatArray], FloatArray],
        d2x_fn: Optional[Callable[[FloatArray, FloatArray], FloatArray]] = None,
    ) -> None:
        self.name = name
        self.fn = fn
        self.d2x_fn = d2x_fn

    def __call__(self, x: ArrayLike, y: ArrayLike, t: float = 0.0) -> FloatArray:
        xa, ya = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
        return np.asarray(self.fn(xa, ya), dtype=np.float64)

    def d2x(self, x: ArrayLike, y: ArrayLike = 0.0) -> FloatArray:
        if self.d2x_fn is None:
            return super().d2x(x, y)
        xa, ya = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
        return np.asarray(self.d2x_fn(xa, ya), dtype=np.float64)


# sin(5pi/4 s + 3pi/4): incompatible with zero data at s = 0, compatible at s = 1
_WAVE = 5.0 * math.pi / 4.0
_SHIFT = 3.0 * math.pi / 4.0


def _wave_profile(s: FloatArray) -> FloatArray:
    return np.sin(_WAVE * s + _SHIFT)


_SQUARE_U0 = SpaceFunction(
    "paper_square_u0",
    lambda x, y: _wave_profile(x) * _wave_profile(y),
    lambda x, y: -(_WAVE**2) * _wave_profile(x) * _wave_profile(y),
)
_INTERVAL_U0 = SpaceFunction(
    "paper_1d_u0",
    lambda x, y: _wave_profile(x),
    lambda x, y: -(_WAVE**2) * _wave_profile(x),
)

REGISTRY: Dict[str, BuiltinFunction] = {
    "zero": Constant(0.0, name="zero"),
    "one": Constant(1.0, name="one"),
    "sin_t": Sine(name="sin_t"),
    "paper_square_u0": _SQUARE_U0,
    "paper_1d_u0": _INTERVAL_U0,
    "xy": SpaceFunction("xy", lambda x, y: x * y, lambda x, y: np.zeros_like(x)),
    "sin_pi_x": SpaceFunction(
        "sin_pi_x",
        lambda x, y: np.sin(math.pi * x),
        lambda x, y: -(math.pi**2) * np.sin(math.pi * x),
    ),
    # aliases
    "wave_square_u0": _SQUARE_U0,
    "wave_1d_u0": _INTERVAL_U0,
}

FunctionRef = Union[str, BuiltinFunction]


def resolve(ref: FunctionRef) -> BuiltinFunction:
    """
    Return the function a reference points to.

    Args:
        ref (FunctionRef): A registry name or a function object.

    Returns:
        BuiltinFunction: The resolved function.

    Raises:
        UnknownFunctionError: If a name is not registered.
    """
    if isinstance(ref, BuiltinFunction):
        return ref
    try:
        return REGISTRY[ref]
    except KeyError:
        logger.error("Unknown function name: %s", ref)
        raise UnknownFunctionError(f"Unknown function {ref!r}; known: {', '.join(sorted(REGISTRY))}") from None


def resolve_signal(ref: FunctionRef) -> TimeSignal:
    """Resolve a reference that must be a spatially uniform time signal."""
    fn = resolve(ref)
    if not isinstance(fn, TimeSignal):
        raise ValueError(f"{fn.name} is not a function of time only")
    return fn
