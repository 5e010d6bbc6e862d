"""Expected-improvement acquisition over the normalized hypercube, with Kriging-Believer batches."""

from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.stats import norm, qmc

from ..core.exceptions import InvalidArgumentError
from ..core.logging_config import get_logger
from ..core.utils import make_rng
from .gpr import GpModel, condition_gp, gp_posterior

logger = get_logger(__name__)

SIGMA_FLOOR = 1e-12
MIN_SEPARATION = 1e-6

Policy = Literal["ei_max", "ei_min", "random"]


@dataclass
class Proposal:
    """One selected point and how it was found."""
    point: np.ndarray
    ei: float
    fallback: bool = False


@dataclass
class AcquisitionResult:
    """
    Batch of newly selected points.

    ``eps_star`` and ``believed`` are per point: the incumbent in force when
    the point was chosen and the posterior mean used as its pseudo-observation.
    """
    points: np.ndarray
    ei: np.ndarray
    eps_star: np.ndarray
    believed: np.ndarray
    fallback: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    policy: str = "ei_max"

    @property
    def q(self) -> int:
        return int(self.points.shape[0])


def ei_from_moments(mean, std, eps_star):
    """Closed-form E[max(Y - eps_star, 0)] for Y ~ N(mean, std^2)."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improvement = mean - eps_star
    degenerate = std < SIGMA_FLOOR
    safe_std = np.where(degenerate, 1.0, std)
    z = improvement / safe_std
    value = improvement * norm.cdf(z) + safe_std * norm.pdf(z)
    value = np.where(degenerate, np.maximum(improvement, 0.0), value)
    value = np.maximum(value, 0.0)
    return float(value) if value.ndim == 0 else value


def expected_improvement(model: GpModel, theta: np.ndarray, eps_star: float):
    """
    EI of exceeding the incumbent error ``eps_star`` (raw target units).

    Args:
        theta: (n_s,) or (Q, n_s) normalized points

    Returns:
        Scalar or (Q,) array, always >= 0
    """
    mean, variance = gp_posterior(model, theta)
    return ei_from_moments(mean, np.sqrt(variance), float(model.transform(eps_star)))


def candidate_points(n_s: int, count: int = 4096, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points mapped to [-1, 1]^n_s."""
    sampler = qmc.Sobol(d=n_s, scramble=True, seed=make_rng(seed, "sobol"))
    m = int(np.ceil(np.log2(max(count, 2))))
    return 2.0 * sampler.random_base2(m)[:count] - 1.0


def _too_close(points: np.ndarray, exclude: Optional[np.ndarray]) -> np.ndarray:
    if exclude is None or len(exclude) == 0:
        return np.zeros(points.shape[0], dtype=bool)
    return np.min(cdist(points, exclude), axis=1) < MIN_SEPARATION


def _refine(objective, start: np.ndarray) -> np.ndarray:
    n_s = start.shape[0]
    result = minimize(objective, start, method="L-BFGS-B", bounds=[(-1.0, 1.0)] * n_s)
    return np.clip(result.x, -1.0, 1.0)


def _search(model: GpModel, eps_star: float, sign: float, exclude: Optional[np.ndarray],
            n_candidates: int, n_refine: int, seed: int) -> Proposal:
    """
    Rank Sobol candidates by ``sign * EI`` and polish the best few with L-BFGS-B.

    ``sign`` = +1 maximizes EI, -1 minimizes it. When maximizing and no
    unblocked candidate has positive EI, no refinement runs: the candidate
    of largest posterior variance is returned with ``fallback=True``. Ties
    go to the earliest candidate, so a flat posterior yields the first
    unblocked Sobol point.
    """
    candidates = candidate_points(model.n_params, n_candidates, seed)
    blocked = _too_close(candidates, exclude)
    if np.all(blocked):
        raise InvalidArgumentError("Every candidate point is already in the design")
    scores = np.asarray(expected_improvement(model, candidates, eps_star))
    ranked = np.where(blocked, -np.inf, sign * scores)

    if sign > 0 and np.max(ranked) <= 0.0:
        _, variance = gp_posterior(model, candidates)
        variance = np.where(blocked, -np.inf, variance)
        best = int(np.argmax(variance))
        logger.warning("EI vanishes on every candidate; taking the point of largest posterior variance")
        return Proposal(point=candidates[best], ei=float(scores[best]), fallback=True)

    order = np.argsort(-ranked, kind="stable")
    best_point = candidates[order[0]]
    best_value = float(ranked[order[0]])

    def objective(x):
        return -sign * float(expected_improvement(model, x, eps_star))

    for index in order[:n_refine]:
        if not np.isfinite(ranked[index]):
            break
        refined = _refine(objective, candidates[index])
        value = -objective(refined)
        if value > best_value and not _too_close(refined[None, :], exclude)[0]:
            best_point, best_value = refined, value
    return Proposal(point=best_point, ei=sign * best_value)


def maximize_ei(model: GpModel, eps_star: float, exclude: Optional[np.ndarray] = None,
                n_candidates: int = 4096, n_refine: int = 10, seed: int = 0) -> Proposal:
    """
    argmax EI over [-1, 1]^n_s.

    Candidates closer than 1e-6 to ``exclude`` (the training inputs by
    default) are never returned.
    """
    exclude = model.inputs if exclude is None else exclude
    return _search(model, eps_star, 1.0, exclude, n_candidates, n_refine, seed)


def minimize_ei_baseline(model: GpModel, eps_star: float, exclude: Optional[np.ndarray] = None,
                         n_candidates: int = 4096, n_refine: int = 10, seed: int = 0) -> Proposal:
    """argmin EI over the same candidate scheme; ties go to the first candidate."""
    exclude = model.inputs if exclude is None else exclude
    return _search(model, eps_star, -1.0, exclude, n_candidates, n_refine, seed)


def kriging_believer_batch(model: GpModel, eps_star: float, q: int, minimize_ei: bool = False,
                           n_candidates: int = 4096, n_refine: int = 10, seed: int = 0) -> AcquisitionResult:
    """
    Select ``q`` points by sequential EI optimization.

    After each pick, the posterior mean at the point is added as a
    pseudo-observation (hyperparameters frozen) and the incumbent becomes
    the max of itself and the believed value.
    """
    if q < 1:
        raise InvalidArgumentError(f"Batch size must be >= 1, got {q}")
    search = minimize_ei_baseline if minimize_ei else maximize_ei
    current = model
    incumbent = float(eps_star)
    exclude = np.array(model.inputs, copy=True)
    points: List[np.ndarray] = []
    ei_values, incumbents, believed, fallbacks = [], [], [], []
    for i in range(q):
        proposal = search(current, incumbent, exclude=exclude, n_candidates=n_candidates,
                          n_refine=n_refine, seed=seed)
        mean, _ = gp_posterior(current, proposal.point)
        raw_mean = float(np.exp(mean)) if current.log_targets else float(mean)
        points.append(proposal.point)
        ei_values.append(proposal.ei)
        incumbents.append(incumbent)
        believed.append(raw_mean)
        fallbacks.append(proposal.fallback)
        logger.info(f"Batch pick {i + 1}/{q}: EI={proposal.ei:.4e}, eps*={incumbent:.4e}, believed={raw_mean:.4e}")
        exclude = np.vstack([exclude, proposal.point])
        if i + 1 < q:
            incumbent = max(incumbent, raw_mean)
            current = condition_gp(current, proposal.point[None, :], [mean])
    return AcquisitionResult(points=np.vstack(points), ei=np.array(ei_values), eps_star=np.array(incumbents),
                             believed=np.array(believed), fallback=np.array(fallbacks, dtype=bool),
                             policy="ei_min" if minimize_ei else "ei_max")


def random_batch(q: int, n_s: int, rng: np.random.Generator,
                 exclude: Optional[np.ndarray] = None) -> AcquisitionResult:
    """Uniform random picks, redrawn if they land on an existing point."""
    if q < 1:
        raise InvalidArgumentError(f"Batch size must be >= 1, got {q}")
    chosen: List[np.ndarray] = []
    taken = np.zeros((0, n_s)) if exclude is None else np.atleast_2d(exclude)
    while len(chosen) < q:
        point = rng.uniform(-1.0, 1.0, size=n_s)
        if not _too_close(point[None, :], taken)[0]:
            chosen.append(point)
            taken = np.vstack([taken, point])
    nan = np.full(q, np.nan)
    return AcquisitionResult(points=np.vstack(chosen), ei=nan, eps_star=nan.copy(), believed=nan.copy(),
                             fallback=np.zeros(q, dtype=bool), policy="random")


def acquire(policy: Policy, q: int, n_s: int, model: Optional[GpModel] = None, eps_star: float = 0.0,
            rng: Optional[np.random.Generator] = None, exclude: Optional[np.ndarray] = None,
            n_candidates: int = 4096, n_refine: int = 10, seed: int = 0) -> AcquisitionResult:
    """Dispatch one batch selection by policy name."""
    if policy == "random":
        if rng is None:
            raise InvalidArgumentError("Random acquisition needs a generator")
        return random_batch(q, n_s, rng, exclude=exclude)
    if model is None:
        raise InvalidArgumentError(f"Policy '{policy}' needs a fitted GP")
    return kriging_believer_batch(model, eps_star, q, minimize_ei=(policy == "ei_min"),
                                  n_candidates=n_candidates, n_refine=n_refine, seed=seed)
