"""2D periodic convection-diffusion benchmark solved with explicit finite volumes."""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ..core.exceptions import InstabilityError, InvalidArgumentError, OutOfDomainError
from ..core.logging_config import get_logger
from ..numerics.grid import Field, Grid, make_uniform_grid_2d

logger = get_logger(__name__)

PARAM_NAMES = ("theta_s", "theta_h", "theta_x", "theta_y")
PARAM_BOUNDS: Dict[str, Tuple[float, float]] = {
    "theta_s": (0.01, 0.05),
    "theta_h": (0.05, 0.08),
    "theta_x": (0.3, 0.7),
    "theta_y": (0.55, 0.85),
}
# Time steps used for the reference grid sizes
REFERENCE_TIME_STEPS = {32: 0.02, 128: 0.0012}
BLOWUP_LIMIT = 1e6
SOURCE_SHIFT = 0.05
VELOCITY_SHIFT = 0.05


@dataclass(frozen=True)
class ConvDiffParams:
    """Source parameters plus the fixed physical constants."""
    theta_s: float
    theta_h: float
    theta_x: float
    theta_y: float
    alpha: float = 0.01
    t_end: float = 2.5
    cfl: float = 0.8

    def __post_init__(self):
        if self.alpha <= 0.0 or self.t_end <= 0.0 or self.cfl <= 0.0:
            raise InvalidArgumentError("alpha, t_end and cfl must be positive")

    def check(self) -> "ConvDiffParams":
        for name in PARAM_NAMES:
            lo, hi = PARAM_BOUNDS[name]
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise OutOfDomainError(f"{name}={value} outside [{lo}, {hi}]")
        return self

    @classmethod
    def from_vector(cls, theta) -> "ConvDiffParams":
        values = [float(v) for v in np.ravel(theta)]
        if len(values) != len(PARAM_NAMES):
            raise InvalidArgumentError(f"Expected {len(PARAM_NAMES)} parameters, got {len(values)}")
        return cls(*values)


def velocity_components(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Steady advection velocity (u, v) evaluated pointwise."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    below = np.pi * (y - VELOCITY_SHIFT)
    above = np.pi * (y + VELOCITY_SHIFT)
    u = 0.1 - np.sin(np.pi * x) ** 2 * (np.sin(below) * np.cos(below) - np.sin(above) * np.cos(above))
    v = np.sin(np.pi * x) * np.cos(np.pi * x) * (np.sin(below) ** 2 - np.sin(above) ** 2)
    return u, v


def velocity_field(grid: Grid) -> Tuple[Field, Field]:
    u, v = velocity_components(grid.coordinates[:, 0], grid.coordinates[:, 1])
    return Field(grid, u), Field(grid, v)


def source_values(p: ConvDiffParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Difference of two equal-mass Gaussians, the second shifted by (-0.05, -0.05)."""
    two_h2 = 2.0 * p.theta_h ** 2
    first = np.exp(-((x - p.theta_x) ** 2 + (y - p.theta_y) ** 2) / two_h2)
    second = np.exp(-((x - p.theta_x + SOURCE_SHIFT) ** 2 + (y - p.theta_y + SOURCE_SHIFT) ** 2) / two_h2)
    return p.theta_s / (np.pi * two_h2) * (first - second)


def source_field(p: ConvDiffParams, grid: Grid) -> Field:
    return Field(grid, source_values(p, grid.coordinates[:, 0], grid.coordinates[:, 1]))


def advective_cfl(grid: Grid, dt: float) -> float:
    """max(|u|/dx + |v|/dy) * dt at cell centers."""
    u, v = velocity_field(grid)
    dx, dy = grid.spacing
    return float(np.max(np.abs(u.values) / dx + np.abs(v.values) / dy) * dt)


def time_step(grid: Grid, p: Optional[ConvDiffParams] = None) -> float:
    """
    Reference time step for the grid.

    Square 32 and 128 grids use the reference values; other sizes use
    cfl / (max(|u|/dx + |v|/dy) + 2 alpha (1/dx^2 + 1/dy^2)).
    """
    p = p or ConvDiffParams(0.03, 0.065, 0.5, 0.7)
    n_x, n_y = grid.shape
    if n_x == n_y and n_x in REFERENCE_TIME_STEPS:
        return REFERENCE_TIME_STEPS[n_x]
    u, v = velocity_field(grid)
    dx, dy = grid.spacing
    rate = np.max(np.abs(u.values) / dx + np.abs(v.values) / dy) + 2.0 * p.alpha * (1.0 / dx ** 2 + 1.0 / dy ** 2)
    return float(p.cfl / rate)


def step_schedule(t_end: float, dt: float) -> np.ndarray:
    """Constant steps with the final one shortened to land exactly on ``t_end``."""
    n_steps = int(np.ceil(t_end / dt - 1e-9))
    steps = np.full(n_steps, dt)
    steps[-1] = t_end - dt * (n_steps - 1)
    return steps


def _face_velocities(u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # Face i+1/2 along x and j+1/2 along y, averaged from the adjacent centers
    return 0.5 * (u + np.roll(u, -1, axis=0)), 0.5 * (v + np.roll(v, -1, axis=1))


def convdiff_solve(p: ConvDiffParams, grid: Grid, dt: Optional[float] = None) -> Field:
    """
    Integrate phi_t + div(u phi) = alpha lap(phi) + source from phi = 0 to ``t_end``.

    Donor-cell upwind fluxes on face velocities, central diffusion and
    forward Euler in time on a periodic cell-centered grid.

    Args:
        p: Source parameters and constants
        grid: Periodic 2D grid
        dt: Time step (defaults to :func:`time_step`)

    Returns:
        phi(x, t_end)

    Raises:
        InstabilityError: If |phi| exceeds 1e6 or becomes non-finite
    """
    if grid.dim != 2 or not grid.periodic:
        raise InvalidArgumentError("The convection-diffusion solver needs a periodic 2D grid")
    dt = time_step(grid, p) if dt is None else float(dt)
    if dt <= 0.0:
        raise InvalidArgumentError(f"Time step must be positive, got {dt}")
    n_x, n_y = grid.shape
    dx, dy = grid.spacing

    u, v = velocity_field(grid)
    u_face, v_face = _face_velocities(u.values.reshape(n_x, n_y), v.values.reshape(n_x, n_y))
    u_pos, u_neg = np.maximum(u_face, 0.0), np.minimum(u_face, 0.0)
    v_pos, v_neg = np.maximum(v_face, 0.0), np.minimum(v_face, 0.0)
    source = source_field(p, grid).values.reshape(n_x, n_y)
    diff_x, diff_y = p.alpha / dx ** 2, p.alpha / dy ** 2

    phi = np.zeros((n_x, n_y))
    for step, h in enumerate(step_schedule(p.t_end, dt), start=1):
        east = np.roll(phi, -1, axis=0)
        north = np.roll(phi, -1, axis=1)
        flux_x = u_pos * phi + u_neg * east
        flux_y = v_pos * phi + v_neg * north
        divergence = (flux_x - np.roll(flux_x, 1, axis=0)) / dx + (flux_y - np.roll(flux_y, 1, axis=1)) / dy
        laplacian = diff_x * (east - 2.0 * phi + np.roll(phi, 1, axis=0)) \
            + diff_y * (north - 2.0 * phi + np.roll(phi, 1, axis=1))
        phi = phi + h * (laplacian - divergence + source)
        peak = np.max(np.abs(phi))
        if not np.isfinite(peak) or peak > BLOWUP_LIMIT:
            logger.error(f"Solution blew up at step {step} (|phi| = {peak})")
            raise InstabilityError(f"Explicit integration unstable at step {step}", step=step)
    return Field(grid, phi.ravel())


def fidelity_grid(n: int) -> Grid:
    return make_uniform_grid_2d(n, n)
