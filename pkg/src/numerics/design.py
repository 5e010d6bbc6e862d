"""Sampling designs in the normalized parameter hypercube [-1, 1]^n_s."""

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import qmc

from ..core.exceptions import InvalidArgumentError, OutOfDomainError
from ..core.utils import make_rng

DesignKind = Literal["lhs", "random", "subset", "acquired", "external"]
SeedLike = Union[int, np.random.Generator]

BOUNDS_TOL = 1e-12


def _as_rng(seed: SeedLike, stream: str) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(int(seed), stream)


@dataclass(frozen=True, eq=False)
class Design:
    """N x n_s points in [-1, 1]^n_s."""
    points: np.ndarray = field(repr=False)
    kind: DesignKind = "lhs"
    seed: Optional[int] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=float).reshape(len(self.points), -1)
        if np.any(np.abs(points) > 1.0 + BOUNDS_TOL):
            raise OutOfDomainError("Design points must lie in [-1, 1]")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise InvalidArgumentError("Design rows must be pairwise distinct")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def n_points(self) -> int:
        return int(self.points.shape[0])

    @property
    def n_params(self) -> int:
        return int(self.points.shape[1])

    def subset(self, indices: Sequence[int]) -> "Design":
        return Design(self.points[np.asarray(indices, dtype=int)], kind="subset", seed=self.seed)


@dataclass(frozen=True)
class ParameterSpace:
    """Named physical bounds and the affine map theta <-> xi."""
    names: Tuple[str, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)) or not self.names:
            raise InvalidArgumentError("Parameter names and bounds must have the same non-zero length")
        lower, upper = np.asarray(self.lower, dtype=float), np.asarray(self.upper, dtype=float)
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper)) and np.all(lower < upper)):
            raise InvalidArgumentError(f"Bounds must be finite with lo < hi: {self.lower} / {self.upper}")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def check_physical(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        span = self.hi - self.lo
        if theta.shape[-1] != self.dim:
            raise InvalidArgumentError(f"Expected {self.dim} parameters, got {theta.shape[-1]}")
        if not np.all(np.isfinite(theta)) or np.any(theta < self.lo - BOUNDS_TOL * span) \
                or np.any(theta > self.hi + BOUNDS_TOL * span):
            raise OutOfDomainError(f"Parameters {theta.tolist()} fall outside bounds {self.lower} - {self.upper}")
        return theta

    def to_unit(self, theta: np.ndarray) -> np.ndarray:
        """xi = 2 (theta - lo) / (hi - lo) - 1, clipped into [-1, 1]."""
        theta = self.check_physical(theta)
        xi = 2.0 * (theta - self.lo) / (self.hi - self.lo) - 1.0
        return np.clip(xi, -1.0, 1.0)

    def from_unit(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if np.any(np.abs(xi) > 1.0 + BOUNDS_TOL):
            raise OutOfDomainError("Normalized parameters must lie in [-1, 1]")
        return self.lo + 0.5 * (np.clip(xi, -1.0, 1.0) + 1.0) * (self.hi - self.lo)

    def metadata(self) -> dict:
        return {"names": list(self.names), "lower": list(self.lower), "upper": list(self.upper)}


def latin_hypercube(n: int, n_s: int, seed: SeedLike = 0) -> Design:
    """
    Stratified design: each coordinate has one point in each of N equal strata.

    Points are placed randomly inside their strata.
    """
    if n < 1 or n_s < 1:
        raise InvalidArgumentError(f"Need N >= 1 and n_s >= 1, got N={n}, n_s={n_s}")
    rng = _as_rng(seed, "lhs")
    sampler = qmc.LatinHypercube(d=n_s, scramble=True, seed=rng)
    unit = sampler.random(n)
    return Design(2.0 * unit - 1.0, kind="lhs", seed=seed if isinstance(seed, int) else None)


def maximin_subset(parent: Design, m: int) -> List[int]:
    """
    Greedy maximin selection of ``m`` parent rows.

    Starts from the point nearest the centroid, then repeatedly adds the
    point farthest (in minimum distance) from those already chosen.
    """
    n = parent.n_points
    if m < 1 or m > n:
        raise InvalidArgumentError(f"Cannot select {m} of {n} points")
    points = parent.points
    centroid = points.mean(axis=0, keepdims=True)
    first = int(np.argmin(cdist(points, centroid)[:, 0]))
    chosen = [first]
    nearest = cdist(points, points[[first]])[:, 0]
    for _ in range(m - 1):
        nearest[chosen] = -np.inf
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, cdist(points, points[[nxt]])[:, 0])
    return chosen


def random_design(n: int, n_s: int, seed: SeedLike = 0) -> Design:
    """i.i.d. uniform points on [-1, 1]^n_s."""
    if n < 1 or n_s < 1:
        raise InvalidArgumentError(f"Need N >= 1 and n_s >= 1, got N={n}, n_s={n_s}")
    rng = _as_rng(seed, "random")
    return Design(rng.uniform(-1.0, 1.0, size=(n, n_s)), kind="random",
                  seed=seed if isinstance(seed, int) else None)
