"""Discrete Karhunen-Loeve expansion of snapshot sets on weighted grids."""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..core.exceptions import (
    DegenerateModeError,
    IncompatibleGridsError,
    InsufficientDataError,
    InvalidArgumentError,
)
from ..core.logging_config import get_logger
from .grid import Field, Grid

logger = get_logger(__name__)

# Relative slack on the cumulative-variance test so rho = 1 keeps every mode
_FRACTION_SLACK = 1e-12


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """
    Field realizations paired with their parameter design.

    ``values`` is ``n_g x N`` (one column per realization); ``design`` holds
    the N normalized parameter rows.
    """
    grid: Grid
    values: np.ndarray = field(repr=False)
    design: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        design = np.asarray(self.design, dtype=float)
        if design.ndim == 1:
            design = design[:, None]
        if values.shape[0] != self.grid.n_points:
            raise IncompatibleGridsError(
                f"Snapshot rows ({values.shape[0]}) do not match grid points ({self.grid.n_points})"
            )
        if values.shape[1] != design.shape[0]:
            raise InvalidArgumentError(
                f"{values.shape[1]} snapshots for {design.shape[0]} design rows"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("Snapshot values must be finite")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "design", _readonly(design))

    @property
    def n_samples(self) -> int:
        return int(self.values.shape[1])

    @property
    def n_params(self) -> int:
        return int(self.design.shape[1])

    def column(self, index: int) -> Field:
        return Field(self.grid, self.values[:, index])

    def subset(self, indices: Sequence[int]) -> "SnapshotSet":
        indices = np.asarray(indices, dtype=int)
        return SnapshotSet(self.grid, self.values[:, indices], self.design[indices])

    def append(self, other: "SnapshotSet") -> "SnapshotSet":
        if not self.grid.matches(other.grid):
            raise IncompatibleGridsError("Cannot append snapshots defined on a different grid")
        return SnapshotSet(
            self.grid,
            np.hstack([self.values, other.values]),
            np.vstack([self.design, other.design]),
        )


@dataclass(frozen=True, eq=False)
class KleBasis:
    """
    Truncated weighted KLE.

    ``eigenvalues`` and the columns of ``modes`` hold the retained pairs;
    ``spectrum`` keeps every eigenvalue that survived the cutoff, so the
    retained fraction can be reported.
    """
    mean: Field
    eigenvalues: np.ndarray
    modes: np.ndarray = field(repr=False)
    variance_fraction: float
    spectrum: np.ndarray = field(repr=False)
    total_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))
        modes = np.asarray(self.modes, dtype=float).reshape(self.mean.grid.n_points, -1)
        object.__setattr__(self, "modes", _readonly(modes))
        object.__setattr__(self, "spectrum", _readonly(self.spectrum))
        if self.modes.shape[1] != self.eigenvalues.shape[0]:
            raise InvalidArgumentError("Mode count does not match eigenvalue count")

    @property
    def grid(self) -> Grid:
        return self.mean.grid

    @property
    def k_t(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def retained_fraction(self) -> float:
        if self.total_variance <= 0.0:
            return 1.0
        return float(np.sum(self.eigenvalues) / self.total_variance)


def center_snapshots(snaps: SnapshotSet) -> Tuple[Field, SnapshotSet]:
    """
    Subtract the columnwise sample mean.

    Raises:
        InsufficientDataError: With fewer than two snapshots
    """
    if snaps.n_samples < 2:
        raise InsufficientDataError(f"Centering needs at least 2 snapshots, got {snaps.n_samples}")
    mean = snaps.values.mean(axis=1)
    centered = SnapshotSet(snaps.grid, snaps.values - mean[:, None], snaps.design)
    return Field(snaps.grid, mean), centered


def _sign_normalize(modes: np.ndarray) -> np.ndarray:
    if modes.shape[1] == 0:
        return modes
    pivots = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[pivots, np.arange(modes.shape[1])])
    signs[signs == 0.0] = 1.0
    return modes * signs


def truncation_rank(spectrum: np.ndarray, rho: float, total: Optional[float] = None) -> int:
    """Smallest k whose cumulative eigenvalue fraction reaches ``rho``."""
    if spectrum.size == 0:
        return 0
    total = float(np.sum(spectrum)) if total is None else total
    if rho >= 1.0 or total <= 0.0:
        return int(spectrum.size)
    cumulative = np.cumsum(spectrum) / total
    k = int(np.searchsorted(cumulative, rho * (1.0 - _FRACTION_SLACK), side="left")) + 1
    return min(k, int(spectrum.size))


def fit_kle(centered: SnapshotSet, rho: float = 0.99, mean: Optional[Field] = None,
            eigen_cutoff: float = 1e-12) -> KleBasis:
    """
    Solve the weighted discrete eigenproblem through an SVD.

    With ``B = W^{1/2} S / sqrt(N-1)``, the eigenvalues are the squared
    singular values of B and the modes are ``W^{-1/2} U``.

    Args:
        centered: Mean-free snapshots
        rho: Retained variance fraction in (0, 1]
        mean: Mean field stored with the basis (zero field if omitted)
        eigen_cutoff: Eigenvalues below ``eigen_cutoff * lambda_1`` are discarded

    Returns:
        KleBasis with k_t retained modes (k_t = 0 for all-zero data)
    """
    if not (0.0 < rho <= 1.0):
        raise InvalidArgumentError(f"rho must lie in (0, 1], got {rho}")
    if centered.n_samples < 2:
        raise InsufficientDataError(f"A KLE needs at least 2 snapshots, got {centered.n_samples}")
    grid = centered.grid
    if mean is None:
        mean = Field(grid, np.zeros(grid.n_points))
    elif not mean.grid.matches(grid):
        raise IncompatibleGridsError("Mean field and snapshots live on different grids")

    sqrt_w = np.sqrt(grid.weights)
    scaled = sqrt_w[:, None] * centered.values / np.sqrt(centered.n_samples - 1)
    left, singular, _ = scipy.linalg.svd(scaled, full_matrices=False, lapack_driver="gesdd")
    eigenvalues = singular ** 2
    total = float(np.sum(eigenvalues))

    if eigenvalues.size == 0 or eigenvalues[0] <= 0.0:
        logger.debug("Zero-variance snapshot set: empty KLE spectrum")
        return KleBasis(mean=mean, eigenvalues=np.zeros(0), modes=np.zeros((grid.n_points, 0)),
                        variance_fraction=rho, spectrum=np.zeros(0), total_variance=0.0)

    keep = eigenvalues >= eigen_cutoff * eigenvalues[0]
    keep &= eigenvalues > 0.0
    spectrum = eigenvalues[keep]
    modes = left[:, keep] / sqrt_w[:, None]
    k_t = truncation_rank(spectrum, rho, total)
    modes = _sign_normalize(modes[:, :k_t])

    logger.debug(f"KLE spectrum head {spectrum[:5]}, k_t={k_t} of {spectrum.size}")
    return KleBasis(mean=mean, eigenvalues=spectrum[:k_t], modes=modes,
                    variance_fraction=rho, spectrum=spectrum, total_variance=total)


def fit_snapshots(snaps: SnapshotSet, rho: float = 0.99, eigen_cutoff: float = 1e-12) -> KleBasis:
    """Center then fit, keeping the sample mean in the basis."""
    mean, centered = center_snapshots(snaps)
    return fit_kle(centered, rho=rho, mean=mean, eigen_cutoff=eigen_cutoff)


def _check_retained(basis: KleBasis) -> None:
    if basis.k_t == 0:
        raise InvalidArgumentError("Projection needs at least one retained mode")
    if np.any(basis.eigenvalues <= 0.0):
        raise DegenerateModeError("A retained KLE mode has a zero eigenvalue")


def project_snapshots(basis: KleBasis, centered_values: np.ndarray) -> np.ndarray:
    """
    Modal coefficients of centered fields.

    Args:
        basis: Fitted basis
        centered_values: (n_g, M) centered fields, one per column

    Returns:
        (M, k_t) coefficient matrix
    """
    _check_retained(basis)
    centered_values = np.asarray(centered_values, dtype=float)
    if centered_values.ndim == 1:
        centered_values = centered_values[:, None]
    if centered_values.shape[0] != basis.grid.n_points:
        raise IncompatibleGridsError("Fields and basis have different point counts")
    weighted_modes = basis.grid.weights[:, None] * basis.modes
    return (centered_values.T @ weighted_modes) / np.sqrt(basis.eigenvalues)


def project_coefficients(basis: KleBasis, centered_field: Field) -> np.ndarray:
    """zeta_k = (1/sqrt(lambda_k)) sum_j w_j y0(x_j) q_kj for one centered field."""
    if not centered_field.grid.matches(basis.grid):
        raise IncompatibleGridsError("Field and basis live on different grids")
    return project_snapshots(basis, centered_field.values)[0]


def reconstruct_values(basis: KleBasis, zeta: np.ndarray, include_mean: bool = True) -> np.ndarray:
    """
    Evaluate the truncated expansion for a batch of coefficient rows.

    Args:
        zeta: (k_t,) or (M, k_t)

    Returns:
        (n_g,) or (n_g, M)
    """
    zeta = np.asarray(zeta, dtype=float)
    single = zeta.ndim == 1
    rows = zeta[None, :] if single else zeta
    if rows.shape[1] != basis.k_t:
        raise InvalidArgumentError(f"Expected {basis.k_t} coefficients, got {rows.shape[1]}")
    values = basis.modes @ (np.sqrt(basis.eigenvalues)[:, None] * rows.T)
    if include_mean:
        values = values + basis.mean.values[:, None]
    return values[:, 0] if single else values


def reconstruct(basis: KleBasis, zeta: np.ndarray, include_mean: bool = True) -> Field:
    """mu(x) [if include_mean] + sum_k sqrt(lambda_k) q_k(x) zeta_k."""
    return Field(basis.grid, reconstruct_values(basis, zeta, include_mean=include_mean))


def zeta_diagnostics(zeta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-mode sample mean and (N-1)-normalized variance of coefficient samples."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[0] < 2:
        return zeta.mean(axis=0), np.full(zeta.shape[1], np.nan)
    return zeta.mean(axis=0), zeta.var(axis=0, ddof=1)
