"""Legendre polynomial chaos: total-order bases and Tikhonov-regularized regression."""

import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.polynomial import legendre
from sklearn.model_selection import KFold

from ..core.exceptions import InvalidArgumentError, OutOfDomainError
from ..core.logging_config import get_logger

logger = get_logger(__name__)

DOMAIN_TOL = 1e-12
# Bumped when the multi-index ordering changes; stored with persisted models
INDEX_ORDERING_VERSION = 1
_TIE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Total-order multi-indices in graded-lexicographic order."""
    n_s: int
    p: int
    indices: np.ndarray = field(repr=False)

    @property
    def n_terms(self) -> int:
        return int(self.indices.shape[0])


def _compositions(n_s: int, total: int) -> Iterator[Tuple[int, ...]]:
    # Descending lexicographic within one total degree
    if n_s == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(n_s - 1, total - first):
            yield (first,) + rest


def total_order_index_set(n_s: int, p: int) -> MultiIndexSet:
    """
    All multi-indices with ||beta||_1 <= p.

    Ordered by total degree, then descending lexicographically, e.g.
    (0,0), (1,0), (0,1), (2,0), (1,1), (0,2) for n_s = 2, p = 2.
    """
    if n_s < 1 or p < 0:
        raise InvalidArgumentError(f"Need n_s >= 1 and p >= 0, got n_s={n_s}, p={p}")
    rows = [beta for degree in range(p + 1) for beta in _compositions(n_s, degree)]
    indices = np.array(rows, dtype=int).reshape(-1, n_s)
    indices.setflags(write=False)
    assert indices.shape[0] == comb(n_s + p, p)
    return MultiIndexSet(n_s=n_s, p=p, indices=indices)


def _check_domain(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        raise OutOfDomainError("Normalized parameters must be finite")
    if np.any(np.abs(xi) > 1.0 + DOMAIN_TOL):
        worst = float(np.max(np.abs(xi)))
        raise OutOfDomainError(f"Normalized parameter {worst!r} lies outside [-1, 1]")
    return np.clip(xi, -1.0, 1.0)


def legendre_orthonormal(degree: int, xi):
    """sqrt(2d+1) P_d(xi), orthonormal under the uniform density on [-1, 1]."""
    if degree < 0:
        raise InvalidArgumentError(f"Degree must be non-negative, got {degree}")
    xi = _check_domain(xi)
    values = legendre.legvander(xi, degree)[..., degree] * np.sqrt(2 * degree + 1)
    return float(values) if np.ndim(values) == 0 else values


def _univariate_table(design: np.ndarray, p: int) -> np.ndarray:
    # (N, n_s, p+1) orthonormal Legendre values per coordinate
    scale = np.sqrt(2.0 * np.arange(p + 1) + 1.0)
    return legendre.legvander(design, p) * scale


def basis_matrix(design: np.ndarray, idx: MultiIndexSet) -> np.ndarray:
    """
    Regression matrix of multivariate basis values.

    Args:
        design: (N, n_s) normalized parameters
        idx: Multi-index set

    Returns:
        (N, n_t) matrix, entry (n, j) = prod_i psi_{beta_j,i}(xi_n,i)
    """
    design = np.atleast_2d(_check_domain(design))
    if design.shape[1] != idx.n_s:
        raise InvalidArgumentError(f"Design has {design.shape[1]} columns, index set expects {idx.n_s}")
    table = _univariate_table(design, idx.p)
    per_coordinate = table[:, np.arange(idx.n_s)[None, :], idx.indices]
    return np.prod(per_coordinate, axis=2)


def difference_matrix(n_t: int) -> np.ndarray:
    """(n_t-1) x n_t first differences; row j is -e_j + e_{j+1}."""
    return np.diff(np.eye(n_t), axis=0)


def fit_ridge(A: np.ndarray, c: np.ndarray, tau: float) -> np.ndarray:
    """
    Minimize ||A b - c||^2 + tau ||Gamma b||^2.

    ``c`` may hold several right-hand sides as columns. Rank-deficient
    systems (tau = 0 with N < n_t) return the minimum-norm solution.

    Returns:
        (n_t,) or (n_t, k) coefficients
    """
    if tau < 0.0 or not np.isfinite(tau):
        raise InvalidArgumentError(f"tau must be a finite non-negative number, got {tau}")
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
        raise InvalidArgumentError("Regression inputs must be finite")
    if A.shape[0] != c.shape[0]:
        raise InvalidArgumentError(f"A has {A.shape[0]} rows but c has {c.shape[0]}")
    n_t = A.shape[1]

    if tau == 0.0:
        solution, *_ = scipy.linalg.lstsq(A, c)
        return solution

    gamma = difference_matrix(n_t)
    gram = A.T @ A + tau * (gamma.T @ gamma)
    rhs = A.T @ c
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(gram, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        stacked = np.vstack([A, np.sqrt(tau) * gamma])
        padded = np.concatenate([c, np.zeros((gamma.shape[0],) + c.shape[1:])])
        solution, *_ = scipy.linalg.lstsq(stacked, padded)
        return solution


def default_tau_grid(tau_min: float = 1e-8, tau_max: float = 1e2, count: int = 25) -> np.ndarray:
    return np.logspace(np.log10(tau_min), np.log10(tau_max), count)


def cv_scores(A: np.ndarray, c: np.ndarray, tau_grid: Sequence[float], folds: int = 5,
              seed: int = 0) -> np.ndarray:
    """Mean held-out squared error for each tau over one fixed k-fold partition."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    n = A.shape[0]
    if folds < 2 or n < folds:
        raise InvalidArgumentError(f"Need 2 <= folds <= N, got folds={folds}, N={n}")
    splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)
    partition = list(splitter.split(A))
    scores = np.zeros(len(tau_grid))
    for t, tau in enumerate(tau_grid):
        squared = 0.0
        for train, test in partition:
            b = fit_ridge(A[train], c[train], float(tau))
            residual = A[test] @ b - c[test]
            squared += float(np.sum(residual * residual))
        scores[t] = squared / n
    return scores


def select_tau(A: np.ndarray, c: np.ndarray, tau_grid: Sequence[float], folds: int = 5,
               seed: int = 0) -> float:
    """
    Cross-validated regularization weight.

    Ties (relative 1e-10) go to the larger tau.

    Raises:
        InvalidArgumentError: Empty grid or too few samples for the folds
    """
    tau_grid = np.asarray(list(tau_grid), dtype=float)
    if tau_grid.size == 0:
        raise InvalidArgumentError("tau grid is empty")
    if np.any(tau_grid <= 0.0):
        raise InvalidArgumentError("tau grid values must be positive")
    scores = cv_scores(A, c, tau_grid, folds=folds, seed=seed)
    best = float(np.min(scores))
    tied = np.flatnonzero(scores <= best + _TIE_RTOL * abs(best))
    chosen = float(np.max(tau_grid[tied]))
    logger.debug(f"tau selection: best CV score {best:.3e} at tau={chosen:.3e}")
    return chosen


@dataclass(frozen=True)
class TauPolicy:
    """Either a fixed tau or a cross-validated choice over a log grid."""
    fixed: Optional[float] = None
    tau_min: float = 1e-8
    tau_max: float = 1e2
    count: int = 25
    folds: int = 5
    seed: int = 0

    def grid(self) -> np.ndarray:
        return default_tau_grid(self.tau_min, self.tau_max, self.count)


@dataclass(frozen=True, eq=False)
class PceModel:
    """One coefficient column per KLE mode over a shared index set."""
    index_set: MultiIndexSet
    coefficients: np.ndarray = field(repr=False)
    tau: float = 0.0

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=float).reshape(self.index_set.n_terms, -1)
        if not np.all(np.isfinite(coefficients)):
            raise InvalidArgumentError("PCE coefficients must be finite")
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def n_modes(self) -> int:
        return int(self.coefficients.shape[1])


def fit_pce(design: np.ndarray, zeta: np.ndarray, index_set: MultiIndexSet,
            policy: TauPolicy = TauPolicy()) -> PceModel:
    """
    Regress every mode's coefficient samples on one shared basis.

    tau is selected on the first mode and reused for all modes.
    """
    zeta = np.asarray(zeta, dtype=float).reshape(np.shape(design)[0], -1)
    A = basis_matrix(design, index_set)
    if zeta.shape[1] == 0:
        return PceModel(index_set, np.zeros((index_set.n_terms, 0)), tau=policy.fixed or 0.0)
    if policy.fixed is not None:
        tau = float(policy.fixed)
    else:
        folds = min(policy.folds, A.shape[0])
        if folds < 2:
            raise InvalidArgumentError("Selecting tau needs at least 2 samples")
        tau = select_tau(A, zeta[:, 0], policy.grid(), folds=folds, seed=policy.seed)
    return PceModel(index_set, fit_ridge(A, zeta, tau), tau=tau)


def pce_predict_many(model: PceModel, design: np.ndarray) -> np.ndarray:
    """(M, n_s) normalized points to (M, k_t) coefficients."""
    return basis_matrix(design, model.index_set) @ model.coefficients


def pce_predict(model: PceModel, xi: np.ndarray) -> np.ndarray:
    """zeta_k = sum_j b_kj Psi_j(xi) at one normalized point."""
    xi = np.asarray(xi, dtype=float).reshape(1, -1)
    return pce_predict_many(model, xi)[0]
