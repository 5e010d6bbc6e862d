"""1D damped-pulse benchmark: exact HF model and two cheap LF approximations."""

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

from ..core.exceptions import OutOfDomainError
from ..numerics.grid import Field, Grid

PulseCase = Literal["C1", "C2"]

DECAY_BOUNDS: Tuple[float, float] = (40.0, 60.0)
FREQUENCY_BOUNDS = {"C1": (60.0, 80.0), "C2": (30.0, 50.0)}
_DEGREES = 180.0 / np.pi


@dataclass(frozen=True)
class PulseParams:
    """Decay rate ``a`` and frequency ``b`` of one pulse realization."""
    a: float
    b: float
    case: PulseCase = "C2"

    def check(self) -> "PulseParams":
        """Raise if (a, b) fall outside the case's bounds."""
        lo_b, hi_b = FREQUENCY_BOUNDS[self.case]
        if not (DECAY_BOUNDS[0] <= self.a <= DECAY_BOUNDS[1] and lo_b <= self.b <= hi_b):
            raise OutOfDomainError(f"Pulse parameters (a={self.a}, b={self.b}) outside {self.case} bounds")
        return self


def _columns(x: np.ndarray, a, b):
    # Broadcast grid points (n_g, 1) against parameter rows (1, M)
    return x[:, None], np.atleast_1d(a)[None, :], np.atleast_1d(b)[None, :]


def pulse_hf_values(x: np.ndarray, a, b) -> np.ndarray:
    """exp(-a x) sin(b x) for every (a, b) pair; returns (n_g, M)."""
    x, a, b = _columns(np.asarray(x, dtype=float), a, b)
    return np.exp(-a * x) * np.sin(b * x)


def pulse_lf_c1_values(x: np.ndarray, a, b, replace_sine: bool = False) -> np.ndarray:
    """
    Truncated-series LF model.

    As printed, the series bx - (bx)^3/3! + (bx)^5/5! is the argument of an
    outer sine; ``replace_sine`` uses the series in place of the sine.
    """
    x, a, b = _columns(np.asarray(x, dtype=float), a, b)
    bx = b * x
    series = bx - bx ** 3 / 6.0 + bx ** 5 / 120.0
    oscillation = series if replace_sine else np.sin(series)
    return np.exp(-a * x) * oscillation


def pulse_lf_c2_values(x: np.ndarray, a, b) -> np.ndarray:
    """Rational approximation in degrees: 3.5 g(180-g) / (15000 - g(180-g)), g = b x 180/pi."""
    x, a, b = _columns(np.asarray(x, dtype=float), a, b)
    g = b * x * _DEGREES
    product = g * (180.0 - g)
    return np.exp(-a * x) * (3.5 * product) / (15000.0 - product)


def _field(grid: Grid, values: np.ndarray) -> Field:
    return Field(grid, values[:, 0])


def pulse_hf(grid: Grid, p: PulseParams) -> Field:
    return _field(grid, pulse_hf_values(grid.axes()[0], p.a, p.b))


def pulse_lf_c1(grid: Grid, p: PulseParams, replace_sine: bool = False) -> Field:
    return _field(grid, pulse_lf_c1_values(grid.axes()[0], p.a, p.b, replace_sine=replace_sine))


def pulse_lf_c2(grid: Grid, p: PulseParams) -> Field:
    return _field(grid, pulse_lf_c2_values(grid.axes()[0], p.a, p.b))
