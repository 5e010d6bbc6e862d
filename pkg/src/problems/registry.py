"""Built-in HF/LF problem definitions behind one evaluation interface."""

from typing import Literal, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..config.campaign import CampaignConfig
from ..core.exceptions import InvalidArgumentError, ModelEvaluationError, OutOfDomainError
from ..core.logging_config import get_logger
from ..numerics.design import ParameterSpace
from ..numerics.grid import Grid, make_uniform_grid_1d, restrict_values
from . import convdiff, pulse

logger = get_logger(__name__)

Fidelity = Literal["hf", "lf"]


class Problem:
    """
    A pair of forward models sharing a parameter space.

    Snapshots are returned as ``n_g x M`` matrices on the common grid
    (HF results are restricted to it where the fidelities differ).
    """

    name: str = "problem"
    has_models: bool = True
    default_oracle: str = "none"

    def __init__(self, space: ParameterSpace, grid: Grid, n_jobs: int = 1):
        self.space = space
        self.grid = grid
        self.n_jobs = max(int(n_jobs), 1)

    def _evaluate(self, fidelity: Fidelity, thetas: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, fidelity: Fidelity, thetas: np.ndarray) -> np.ndarray:
        """
        Run one fidelity at physical parameter rows.

        Raises:
            ModelEvaluationError: Wrapping any solver failure
        """
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        self.space.check_physical(thetas)
        if thetas.shape[0] == 0:
            return np.zeros((self.grid.n_points, 0))
        try:
            values = self._evaluate(fidelity, thetas)
        except ModelEvaluationError:
            raise
        except Exception as e:
            logger.error(f"{self.name} {fidelity.upper()} evaluation failed: {e}")
            raise ModelEvaluationError(f"{self.name} {fidelity.upper()} model failed: {e}",
                                       problem=self.name, cause=e)
        if not np.all(np.isfinite(values)):
            raise ModelEvaluationError(f"{self.name} {fidelity.upper()} model returned non-finite values",
                                       problem=self.name)
        return values

    def evaluate_tolerant(self, fidelity: Fidelity, thetas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Evaluate row by row; failed rows come back as NaN columns with a mask."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        try:
            return self.evaluate(fidelity, thetas), np.zeros(thetas.shape[0], dtype=bool)
        except (ModelEvaluationError, OutOfDomainError):
            pass
        values = np.full((self.grid.n_points, thetas.shape[0]), np.nan)
        failed = np.zeros(thetas.shape[0], dtype=bool)
        for i, theta in enumerate(thetas):
            try:
                values[:, i] = self.evaluate(fidelity, theta[None, :])[:, 0]
            except (ModelEvaluationError, OutOfDomainError) as e:
                logger.warning(f"{self.name} evaluation skipped at {theta.tolist()}: {e}")
                failed[i] = True
        return values, failed

    def hf(self, thetas: np.ndarray) -> np.ndarray:
        return self.evaluate("hf", thetas)

    def lf(self, thetas: np.ndarray) -> np.ndarray:
        return self.evaluate("lf", thetas)


class PulseProblem(Problem):
    """Damped pulse, cases C1 and C2, on a 1D grid."""

    default_oracle = "grid"

    def __init__(self, case: str, n_points: int = 256, lower: float = 0.0, upper: float = 0.1,
                 c1_replace_sine: bool = False, n_jobs: int = 1):
        space = ParameterSpace(names=("a", "b"), lower=(pulse.DECAY_BOUNDS[0], pulse.FREQUENCY_BOUNDS[case][0]),
                               upper=(pulse.DECAY_BOUNDS[1], pulse.FREQUENCY_BOUNDS[case][1]))
        super().__init__(space, make_uniform_grid_1d(n_points, lower, upper), n_jobs=n_jobs)
        self.case = case
        self.name = f"pulse_{case.lower()}"
        self.c1_replace_sine = c1_replace_sine

    def _evaluate(self, fidelity: Fidelity, thetas: np.ndarray) -> np.ndarray:
        x = self.grid.axes()[0]
        a, b = thetas[:, 0], thetas[:, 1]
        if fidelity == "hf":
            return pulse.pulse_hf_values(x, a, b)
        if self.case == "C1":
            return pulse.pulse_lf_c1_values(x, a, b, replace_sine=self.c1_replace_sine)
        return pulse.pulse_lf_c2_values(x, a, b)


def _convdiff_snapshot(theta: np.ndarray, n: int, dt: Optional[float], coarse_n: int) -> np.ndarray:
    grid = convdiff.fidelity_grid(n)
    phi = convdiff.convdiff_solve(convdiff.ConvDiffParams.from_vector(theta), grid, dt=dt)
    if n == coarse_n:
        return phi.values
    return restrict_values(phi.values, grid, convdiff.fidelity_grid(coarse_n))


class ConvDiffProblem(Problem):
    """Convection-diffusion on a fine (HF) and a coarse (LF) periodic grid."""

    name = "convdiff"
    default_oracle = "monte_carlo"

    def __init__(self, hf_n: int = 128, lf_n: int = 32, hf_dt: Optional[float] = None,
                 lf_dt: Optional[float] = None, n_jobs: int = 1):
        names = convdiff.PARAM_NAMES
        space = ParameterSpace(names=names,
                               lower=tuple(convdiff.PARAM_BOUNDS[k][0] for k in names),
                               upper=tuple(convdiff.PARAM_BOUNDS[k][1] for k in names))
        super().__init__(space, convdiff.fidelity_grid(lf_n), n_jobs=n_jobs)
        self.hf_n, self.lf_n = hf_n, lf_n
        self.hf_dt, self.lf_dt = hf_dt, lf_dt

    def _evaluate(self, fidelity: Fidelity, thetas: np.ndarray) -> np.ndarray:
        n, dt = (self.hf_n, self.hf_dt) if fidelity == "hf" else (self.lf_n, self.lf_dt)
        jobs = min(self.n_jobs, thetas.shape[0])
        columns = Parallel(n_jobs=jobs)(
            delayed(_convdiff_snapshot)(theta, n, dt, self.lf_n) for theta in thetas
        )
        return np.column_stack(columns)


class ExternalProblem(Problem):
    """Data-only problem: snapshots come from ingested files."""

    name = "external"
    has_models = False

    def _evaluate(self, fidelity: Fidelity, thetas: np.ndarray) -> np.ndarray:
        raise ModelEvaluationError("External problems have no forward models; ingest new runs instead",
                                   problem=self.name)


def get_problem(config: CampaignConfig, n_jobs: int = 1, space: Optional[ParameterSpace] = None,
                grid: Optional[Grid] = None) -> Problem:
    """Instantiate the configured problem; external problems take space and grid from the bundle."""
    if config.problem in ("pulse_c1", "pulse_c2"):
        return PulseProblem(case=config.problem[-2:].upper(), n_points=config.pulse.n_points,
                            lower=config.pulse.lower, upper=config.pulse.upper,
                            c1_replace_sine=config.pulse.c1_replace_sine, n_jobs=n_jobs)
    if config.problem == "convdiff":
        return ConvDiffProblem(hf_n=config.convdiff.hf_n, lf_n=config.convdiff.lf_n,
                               hf_dt=config.convdiff.hf_dt, lf_dt=config.convdiff.lf_dt, n_jobs=n_jobs)
    if config.problem == "external":
        if space is None or grid is None:
            raise InvalidArgumentError("External problems need the parameter space and grid of their bundle")
        return ExternalProblem(space, grid, n_jobs=n_jobs)
    raise InvalidArgumentError(f"Unknown problem '{config.problem}'")
