"""Cross-validated and oracle-based relative errors of bifidelity surrogates."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.model_selection import KFold

from ..core.exceptions import (
    DegenerateModeError,
    InsufficientDataError,
    InvalidArgumentError,
    PairingError,
)
from ..core.logging_config import get_logger
from ..core.utils import make_rng, relative_error
from ..numerics.design import ParameterSpace
from ..numerics.kle import SnapshotSet
from .bifidelity import BuildSettings, KlePceComponent, build_bifidelity, build_component

logger = get_logger(__name__)

SKIP_FLAG_FRACTION = 0.01
_PREDICT_CHUNK = 4096

# (lf_snaps, paired_hf, paired_lf) for one quantity of interest
QoiData = Tuple[SnapshotSet, SnapshotSet, SnapshotSet]


@dataclass
class CvErrors:
    """
    Per-sample held-out relative errors.

    ``errors[i]`` is NaN when sample i's fold was skipped.
    """
    errors: np.ndarray
    folds: np.ndarray
    design: np.ndarray = field(repr=False)
    seed: int = 0
    k: int = 0

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.errors)

    @property
    def n_skipped(self) -> int:
        return int(np.sum(~self.valid))

    def max(self) -> float:
        """Largest finite error (the acquisition incumbent)."""
        if not np.any(self.valid):
            return float("nan")
        return float(np.max(self.errors[self.valid]))

    def mean(self) -> float:
        if not np.any(self.valid):
            return float("nan")
        return float(np.mean(self.errors[self.valid]))


def fold_assignment(n: int, k: int, seed: int) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray]]]:
    """Shuffled k-fold partition; fold sizes differ by at most one."""
    if k < 2 or n < k:
        raise InvalidArgumentError(f"Need 2 <= k <= N, got k={k}, N={n}")
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    splits = list(splitter.split(np.zeros((n, 1))))
    folds = np.empty(n, dtype=int)
    for fold_id, (_, test) in enumerate(splits):
        folds[test] = fold_id
    return folds, splits


def _heldout_lf_columns(lf_snaps: SnapshotSet, heldout_design: np.ndarray, n_pilot_lf: int) -> np.ndarray:
    # LF runs added after the pilot that sit exactly on a held-out pair
    drop = np.zeros(lf_snaps.n_samples, dtype=bool)
    for i in range(n_pilot_lf, lf_snaps.n_samples):
        if np.any(np.all(heldout_design == lf_snaps.design[i], axis=1)):
            drop[i] = True
    return drop


def _fold_error(lf_snaps: SnapshotSet, paired_hf: SnapshotSet, paired_lf: SnapshotSet,
                train: np.ndarray, test: np.ndarray, space: ParameterSpace, settings: BuildSettings,
                lf_component: Optional[KlePceComponent], exclude_heldout_lf: bool,
                n_pilot_lf: int) -> Optional[np.ndarray]:
    if train.size < 2:
        logger.warning(f"Skipping CV fold: {train.size} training pair(s) left")
        return None
    try:
        lf_train = lf_snaps
        if exclude_heldout_lf:
            drop = _heldout_lf_columns(lf_snaps, paired_hf.design[test], n_pilot_lf)
            if np.any(drop):
                lf_train = lf_snaps.subset(np.flatnonzero(~drop))
                lf_component = None
        surrogate = build_bifidelity(lf_train, paired_hf.subset(train), paired_lf.subset(train),
                                     space, settings, lf_component=lf_component)
        predicted = surrogate.predict_unit_many(paired_hf.design[test])
    except (InsufficientDataError, DegenerateModeError) as e:
        logger.warning(f"Skipping CV fold after a degenerate rebuild: {e}")
        return None
    return np.atleast_1d(relative_error(paired_hf.values[:, test], predicted, paired_hf.grid.weights))


def kfold_errors(lf_snaps: SnapshotSet, paired_hf: SnapshotSet, paired_lf: SnapshotSet,
                 space: ParameterSpace, k: int, seed: int, settings: BuildSettings = BuildSettings(),
                 exclude_heldout_lf: bool = False, n_pilot_lf: Optional[int] = None,
                 n_jobs: int = 1) -> CvErrors:
    """
    Held-out relative L2 error of every paired HF sample.

    Only the discrepancy pairs rotate through folds. The LF component is
    built once from every LF run unless ``exclude_heldout_lf`` is set, in
    which case LF runs beyond the first ``n_pilot_lf`` that coincide with a
    held-out pair are dropped from that fold's LF build.

    Args:
        lf_snaps: Every LF run, pilot runs first
        paired_hf: HF runs on the common grid
        paired_lf: LF runs at the HF design rows
        space: Parameter bounds
        k: Fold count (k = N gives leave-one-out)
        seed: Partition seed
        settings: Component build settings
        exclude_heldout_lf: Drop held-out pairs' own LF runs from the LF build
        n_pilot_lf: Number of leading LF runs that are always retained
        n_jobs: Concurrent fold rebuilds

    Returns:
        CvErrors
    """
    if paired_hf.n_samples != paired_lf.n_samples or not np.array_equal(paired_hf.design, paired_lf.design):
        raise PairingError("Paired HF and LF snapshots must share identical design rows")
    n = paired_hf.n_samples
    folds, splits = fold_assignment(n, k, seed)
    n_pilot_lf = lf_snaps.n_samples if n_pilot_lf is None else n_pilot_lf
    shared_lf = build_component(lf_snaps, space, settings)

    results = Parallel(n_jobs=max(1, min(n_jobs, k)), prefer="threads")(
        delayed(_fold_error)(lf_snaps, paired_hf, paired_lf, train, test, space, settings,
                             shared_lf, exclude_heldout_lf, n_pilot_lf)
        for train, test in splits
    )
    errors = np.full(n, np.nan)
    for (_, test), fold_errors in zip(splits, results):
        if fold_errors is not None:
            errors[test] = fold_errors
    logger.info(f"{k}-fold CV over {n} pairs: max error {np.nanmax(errors) if np.any(np.isfinite(errors)) else float('nan'):.4e}")
    return CvErrors(errors=errors, folds=folds, design=np.array(paired_hf.design), seed=seed, k=k)


def loo_errors(lf_snaps: SnapshotSet, paired_hf: SnapshotSet, paired_lf: SnapshotSet,
               space: ParameterSpace, settings: BuildSettings = BuildSettings(), seed: int = 0,
               **kwargs) -> CvErrors:
    """Leave-one-out errors (k-fold with k = N)."""
    return kfold_errors(lf_snaps, paired_hf, paired_lf, space, paired_hf.n_samples, seed, settings, **kwargs)


def multi_qoi_errors(qois: Sequence[QoiData], space: ParameterSpace, k: int, seed: int,
                     settings: BuildSettings = BuildSettings(), **kwargs) -> CvErrors:
    """
    Per-sample mean over quantities of interest of their CV errors.

    Every QoI shares one design and therefore one fold partition.
    """
    if not qois:
        raise InvalidArgumentError("At least one quantity of interest is required")
    reference = qois[0][1].design
    for lf_snaps, paired_hf, paired_lf in qois[1:]:
        if paired_hf.design.shape != reference.shape or not np.array_equal(paired_hf.design, reference):
            raise PairingError("All quantities of interest must share the same paired design")
    per_qoi = [kfold_errors(lf, hf, lf_pairs, space, k, seed, settings, **kwargs) for lf, hf, lf_pairs in qois]
    stacked = np.vstack([result.errors for result in per_qoi])
    return CvErrors(errors=stacked.mean(axis=0), folds=per_qoi[0].folds, design=np.array(reference),
                    seed=seed, k=k)


def multi_qoi_loo_errors(qois: Sequence[QoiData], space: ParameterSpace,
                         settings: BuildSettings = BuildSettings(), seed: int = 0, **kwargs) -> CvErrors:
    """Leave-one-out flavor of :func:`multi_qoi_errors`."""
    if not qois:
        raise InvalidArgumentError("At least one quantity of interest is required")
    return multi_qoi_errors(qois, space, qois[0][1].n_samples, seed, settings, **kwargs)


@dataclass(frozen=True)
class GridRule:
    """Tensor grid of cell midpoints in [-1, 1]^n_s."""
    points_per_dim: int = 200
    name: str = "grid"

    def nodes(self, n_s: int) -> np.ndarray:
        total = self.points_per_dim ** n_s
        if total > 2_000_000:
            raise InvalidArgumentError(f"A {self.points_per_dim}^{n_s} grid is too large; use Monte Carlo")
        axis = -1.0 + (np.arange(self.points_per_dim) + 0.5) * 2.0 / self.points_per_dim
        mesh = np.meshgrid(*([axis] * n_s), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


@dataclass(frozen=True)
class MonteCarloRule:
    """Uniform random nodes drawn from a seeded stream."""
    samples: int = 1000
    seed: int = 12345
    name: str = "monte_carlo"

    def nodes(self, n_s: int) -> np.ndarray:
        return make_rng(self.seed, "oracle").uniform(-1.0, 1.0, size=(self.samples, n_s))


@dataclass
class ReferenceSet:
    """True HF fields at the quadrature nodes of one rule."""
    nodes: np.ndarray = field(repr=False)
    truth: np.ndarray = field(repr=False)
    failed: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    rule: str = "grid"

    @property
    def n_skipped(self) -> int:
        return int(np.sum(self.failed))

    @property
    def flagged(self) -> bool:
        return self.n_skipped > SKIP_FLAG_FRACTION * self.nodes.shape[0]


@dataclass
class OracleError:
    mean: float
    std_error: float
    n_nodes: int
    n_skipped: int
    flagged: bool


def build_reference(oracle: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]], space: ParameterSpace,
                    weights: np.ndarray, rule) -> ReferenceSet:
    """
    Evaluate the HF oracle at every node of ``rule``.

    Args:
        oracle: Physical parameter rows -> (n_g x Q values, failed mask)
        space: Parameter bounds
        weights: Grid weights for the error norm
        rule: GridRule or MonteCarloRule
    """
    nodes = rule.nodes(space.dim)
    truth, failed = oracle(space.from_unit(nodes))
    if np.any(failed):
        logger.warning(f"Oracle failed at {int(np.sum(failed))} of {nodes.shape[0]} nodes")
    return ReferenceSet(nodes=nodes, truth=truth, failed=np.asarray(failed, dtype=bool),
                        weights=np.asarray(weights, dtype=float), rule=rule.name)


def integrated_relative_error(surr, reference: ReferenceSet) -> OracleError:
    """
    Average relative L2 error of ``surr`` over the reference nodes.

    Nodes where the oracle failed are skipped; the result is flagged when
    more than 1% of nodes were skipped.
    """
    keep = np.flatnonzero(~reference.failed)
    if keep.size == 0:
        raise InsufficientDataError("The oracle failed at every node")
    errors = np.empty(keep.size)
    for start in range(0, keep.size, _PREDICT_CHUNK):
        chunk = keep[start:start + _PREDICT_CHUNK]
        predicted = surr.predict_unit_many(reference.nodes[chunk])
        errors[start:start + chunk.size] = relative_error(reference.truth[:, chunk], predicted, reference.weights)
    std_error = float(np.std(errors, ddof=1) / np.sqrt(errors.size)) if errors.size > 1 else 0.0
    result = OracleError(mean=float(np.mean(errors)), std_error=std_error, n_nodes=int(reference.nodes.shape[0]),
                         n_skipped=reference.n_skipped, flagged=reference.flagged)
    if result.flagged:
        logger.warning(f"Integrated error flagged: {result.n_skipped} of {result.n_nodes} oracle nodes skipped")
    return result
