"""KLE+PCE field surrogates and their additive bifidelity combination."""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import IncompatibleGridsError, InsufficientDataError, InvalidArgumentError, PairingError
from ..core.logging_config import get_logger
from ..core.utils import make_rng
from ..numerics.design import ParameterSpace
from ..numerics.grid import Field, Grid
from ..numerics.kle import (
    KleBasis,
    SnapshotSet,
    center_snapshots,
    fit_kle,
    project_snapshots,
    reconstruct_values,
    zeta_diagnostics,
)
from ..numerics.pce import PceModel, TauPolicy, fit_pce, pce_predict_many, total_order_index_set

logger = get_logger(__name__)


@dataclass(frozen=True)
class BuildSettings:
    """Knobs shared by every component build."""
    rho: float = 0.99
    degree: int = 3
    tau: TauPolicy = TauPolicy()
    eigen_cutoff: float = 1e-12


@dataclass(frozen=True, eq=False)
class KlePceComponent:
    """Mean field, truncated KLE and one PCE per retained mode."""
    basis: KleBasis
    pce: PceModel
    space: ParameterSpace
    n_train: int = 0
    zeta_mean: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    zeta_variance: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def __post_init__(self):
        if self.pce.n_modes != self.basis.k_t:
            raise InvalidArgumentError(
                f"PCE predicts {self.pce.n_modes} modes but the KLE retains {self.basis.k_t}"
            )

    @property
    def grid(self) -> Grid:
        return self.basis.grid

    @property
    def k_t(self) -> int:
        return self.basis.k_t

    def predict_unit_many(self, xi: np.ndarray) -> np.ndarray:
        """(M, n_s) normalized points to (n_g, M) fields."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.k_t == 0:
            # pce_predict_many still validates the domain
            pce_predict_many(self.pce, xi)
            return np.repeat(self.basis.mean.values[:, None], xi.shape[0], axis=1)
        return reconstruct_values(self.basis, pce_predict_many(self.pce, xi), include_mean=True)

    def predict_many(self, thetas: np.ndarray) -> np.ndarray:
        return self.predict_unit_many(self.space.to_unit(np.atleast_2d(thetas)))

    def predict(self, theta: np.ndarray) -> Field:
        return Field(self.grid, self.predict_many(np.atleast_2d(theta))[:, 0])


@dataclass(frozen=True, eq=False)
class BifidelitySurrogate:
    """LF surrogate plus discrepancy surrogate on a shared grid."""
    lf: KlePceComponent
    delta: KlePceComponent
    n_lf: int = 0
    n_hf: int = 0

    def __post_init__(self):
        if not self.lf.grid.matches(self.delta.grid):
            raise IncompatibleGridsError("LF and discrepancy components live on different grids")
        if self.lf.space != self.delta.space:
            raise IncompatibleGridsError("LF and discrepancy components use different parameter bounds")

    @property
    def grid(self) -> Grid:
        return self.lf.grid

    @property
    def space(self) -> ParameterSpace:
        return self.lf.space

    def predict_unit_many(self, xi: np.ndarray) -> np.ndarray:
        return self.lf.predict_unit_many(xi) + self.delta.predict_unit_many(xi)

    def predict_many(self, thetas: np.ndarray) -> np.ndarray:
        return self.predict_unit_many(self.space.to_unit(np.atleast_2d(thetas)))

    def predict(self, theta: np.ndarray) -> Field:
        """lf.predict(theta) + delta.predict(theta) for one physical point."""
        return Field(self.grid, self.predict_many(np.atleast_2d(theta))[:, 0])


def build_component(snaps: SnapshotSet, space: ParameterSpace,
                    settings: BuildSettings = BuildSettings()) -> KlePceComponent:
    """
    Center, fit the KLE, project coefficients and regress them on the design.

    Zero-variance data yields a mean-only component.
    """
    mean, centered = center_snapshots(snaps)
    basis = fit_kle(centered, rho=settings.rho, mean=mean, eigen_cutoff=settings.eigen_cutoff)
    index_set = total_order_index_set(snaps.n_params, settings.degree)
    if basis.k_t == 0:
        logger.debug(f"Mean-only component from {snaps.n_samples} snapshots")
        pce = fit_pce(snaps.design, np.zeros((snaps.n_samples, 0)), index_set, settings.tau)
        return KlePceComponent(basis, pce, space, n_train=snaps.n_samples)
    zeta = project_snapshots(basis, centered.values)
    zeta_mean, zeta_variance = zeta_diagnostics(zeta)
    logger.debug(f"zeta sample means {zeta_mean}, variances {zeta_variance}")
    pce = fit_pce(snaps.design, zeta, index_set, settings.tau)
    logger.debug(f"Component: {snaps.n_samples} snapshots, k_t={basis.k_t}, "
                 f"retained {basis.retained_fraction:.4f}, tau={pce.tau:.3e}")
    return KlePceComponent(basis, pce, space, n_train=snaps.n_samples,
                           zeta_mean=zeta_mean, zeta_variance=zeta_variance)


def build_single_fidelity(snaps: SnapshotSet, space: ParameterSpace,
                          settings: BuildSettings = BuildSettings()) -> KlePceComponent:
    """Single-fidelity KLE surrogate (LF-only or HF-only baseline)."""
    return build_component(snaps, space, settings)


def discrepancy_snapshots(paired_hf: SnapshotSet, paired_lf: SnapshotSet) -> SnapshotSet:
    """HF - LF at identical design rows."""
    if not paired_hf.grid.matches(paired_lf.grid):
        raise IncompatibleGridsError("Paired HF and LF snapshots live on different grids")
    if paired_hf.design.shape != paired_lf.design.shape or not np.array_equal(paired_hf.design, paired_lf.design):
        raise PairingError("Paired HF and LF snapshots must share identical design rows")
    return SnapshotSet(paired_hf.grid, paired_hf.values - paired_lf.values, paired_hf.design)


def build_bifidelity(lf_snaps: SnapshotSet, paired_hf: SnapshotSet, paired_lf: SnapshotSet,
                     space: ParameterSpace, settings: BuildSettings = BuildSettings(),
                     lf_component: Optional[KlePceComponent] = None) -> BifidelitySurrogate:
    """
    Fuse an LF surrogate with a discrepancy surrogate.

    Args:
        lf_snaps: Every LF run (pilot and paired)
        paired_hf: HF runs, already on the common grid
        paired_lf: LF runs at the same design rows as ``paired_hf``
        space: Physical parameter bounds
        settings: Build settings shared by both components
        lf_component: Prebuilt LF component to reuse

    Returns:
        BifidelitySurrogate
    """
    if not lf_snaps.grid.matches(paired_hf.grid):
        raise IncompatibleGridsError("LF and HF snapshots live on different grids")
    delta_snaps = discrepancy_snapshots(paired_hf, paired_lf)
    lf = lf_component if lf_component is not None else build_component(lf_snaps, space, settings)
    delta = build_component(delta_snaps, space, settings)
    return BifidelitySurrogate(lf=lf, delta=delta, n_lf=lf_snaps.n_samples, n_hf=paired_hf.n_samples)


def propagate_uq(surr, m: int, seed: int) -> Tuple[Field, Field]:
    """
    Monte-Carlo mean and standard deviation fields over uniform parameter draws.

    Works for any surrogate exposing ``grid``, ``space`` and ``predict_unit_many``.
    """
    if m < 2:
        raise InsufficientDataError(f"Propagation needs at least 2 samples, got {m}")
    xi = make_rng(seed, "uq").uniform(-1.0, 1.0, size=(m, surr.space.dim))
    values = surr.predict_unit_many(xi)
    mean = values.mean(axis=1)
    std = values.std(axis=1, ddof=1)
    return Field(surr.grid, mean), Field(surr.grid, std)


def correlation_field(lf_snaps: SnapshotSet, hf_snaps: SnapshotSet) -> np.ndarray:
    """
    Pointwise Pearson correlation between paired LF and HF samples.

    Returns:
        (n_g,) coefficients in [-1, 1]; NaN where either fidelity has zero variance
    """
    if not np.array_equal(lf_snaps.design, hf_snaps.design):
        raise PairingError("Correlation needs LF and HF samples at identical designs")
    if not lf_snaps.grid.matches(hf_snaps.grid):
        raise IncompatibleGridsError("Correlation needs both fidelities on one grid")
    if lf_snaps.n_samples < 3:
        raise InsufficientDataError("Correlation needs at least 3 samples")
    lf = lf_snaps.values - lf_snaps.values.mean(axis=1, keepdims=True)
    hf = hf_snaps.values - hf_snaps.values.mean(axis=1, keepdims=True)
    lf_ss = np.sum(lf * lf, axis=1)
    hf_ss = np.sum(hf * hf, axis=1)
    scale_lf = np.max(np.abs(lf_snaps.values), axis=1)
    scale_hf = np.max(np.abs(hf_snaps.values), axis=1)
    defined = (lf_ss > (1e-14 * scale_lf) ** 2 * lf_snaps.n_samples) & (hf_ss > (1e-14 * scale_hf) ** 2 * hf_snaps.n_samples)
    r = np.full(lf.shape[0], np.nan)
    r[defined] = np.sum(lf * hf, axis=1)[defined] / np.sqrt(lf_ss[defined] * hf_ss[defined])
    return np.clip(r, -1.0, 1.0)
