"""Gaussian-process regression of scalar cross-validation errors over [-1, 1]^n_s."""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.exceptions import ConvergenceWarning
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Kernel, Matern, WhiteKernel

from ..core.exceptions import InsufficientDataError, InvalidArgumentError
from ..core.logging_config import get_logger

logger = get_logger(__name__)

JITTER = 1e-10
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class GpHyper:
    """Kernel hyperparameters in standardized target units."""
    signal_variance: float
    length_scales: Tuple[float, ...]
    nugget: float

    def __post_init__(self):
        if self.signal_variance <= 0.0 or self.nugget < 0.0 or min(self.length_scales) <= 0.0:
            raise InvalidArgumentError(f"Hyperparameters must be positive: {self}")

    def as_dict(self) -> dict:
        return {
            "signal_variance": self.signal_variance,
            "length_scales": list(self.length_scales),
            "nugget": self.nugget,
        }


@dataclass(frozen=True)
class GpSettings:
    """Hyperparameter search configuration."""
    starts: int = 8
    length_scale_bounds: Tuple[float, float] = (1e-2, 1e1)
    signal_variance_bounds: Tuple[float, float] = (1e-3, 1e1)
    nugget_bounds: Tuple[float, float] = (1e-8, 1e-1)
    log_targets: bool = False
    seed: int = 0


@dataclass(frozen=True, eq=False)
class GpModel:
    """
    Fitted GP with its standardization.

    ``targets`` are the raw observations; the regressor sees
    ``(transform(targets) - shift) / scale``.
    """
    inputs: np.ndarray = field(repr=False)
    targets: np.ndarray = field(repr=False)
    shift: float
    scale: float
    hyper: GpHyper
    log_likelihood: float
    regressor: GaussianProcessRegressor = field(repr=False)
    log_targets: bool = False

    @property
    def n_params(self) -> int:
        return int(self.inputs.shape[1])

    def transform(self, values):
        """Map raw target values into the space the GP models."""
        values = np.asarray(values, dtype=float)
        if self.log_targets:
            return np.log(np.maximum(values, _LOG_FLOOR))
        return values

    def log_likelihood_at(self, hyper: GpHyper) -> float:
        """Log marginal likelihood of the standardized data under ``hyper``."""
        return float(self.regressor.log_marginal_likelihood(hyper_to_theta(hyper)))


def build_kernel(n_s: int, settings: GpSettings = GpSettings(), hyper: Optional[GpHyper] = None) -> Kernel:
    """sigma^2 * Matern52(anisotropic) + nugget * I."""
    if hyper is None:
        signal = ConstantKernel(1.0, constant_value_bounds=settings.signal_variance_bounds)
        matern = Matern(length_scale=np.ones(n_s), length_scale_bounds=settings.length_scale_bounds, nu=2.5)
        nugget_start = float(np.sqrt(settings.nugget_bounds[0] * settings.nugget_bounds[1]))
        white = WhiteKernel(noise_level=nugget_start, noise_level_bounds=settings.nugget_bounds)
        return signal * matern + white
    signal = ConstantKernel(hyper.signal_variance, constant_value_bounds="fixed")
    matern = Matern(length_scale=np.asarray(hyper.length_scales), length_scale_bounds="fixed", nu=2.5)
    white = WhiteKernel(noise_level=max(hyper.nugget, 0.0), noise_level_bounds="fixed")
    return signal * matern + white


def hyper_from_kernel(kernel: Kernel) -> GpHyper:
    product, white = kernel.k1, kernel.k2
    length_scales = np.atleast_1d(product.k2.length_scale).astype(float)
    return GpHyper(
        signal_variance=float(product.k1.constant_value),
        length_scales=tuple(float(v) for v in length_scales),
        nugget=float(white.noise_level),
    )


def hyper_to_theta(hyper: GpHyper) -> np.ndarray:
    """Log-space parameter vector in sklearn's kernel order."""
    return np.log(np.concatenate([[hyper.signal_variance], hyper.length_scales, [hyper.nugget]]))


def matern52(x: np.ndarray, x_prime: np.ndarray, hyper: GpHyper) -> float:
    """sigma^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r), r the scaled distance."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x_prime = np.atleast_2d(np.asarray(x_prime, dtype=float))
    if x.shape[1] != x_prime.shape[1]:
        raise InvalidArgumentError("Kernel inputs must have the same dimension")
    kernel = Matern(length_scale=np.asarray(hyper.length_scales), nu=2.5)
    return float(hyper.signal_variance * kernel(x, x_prime)[0, 0])


def _standardization(values: np.ndarray) -> Tuple[float, float]:
    shift = float(np.mean(values))
    scale = float(np.std(values))
    if not scale > 1e-12 * max(1.0, abs(shift)):
        scale = 1.0
    return shift, scale


def _fit_regressor(inputs: np.ndarray, standardized: np.ndarray, kernel: Kernel, starts: int,
                   seed: int, optimize: bool) -> GaussianProcessRegressor:
    regressor = GaussianProcessRegressor(
        kernel=kernel,
        alpha=JITTER,
        optimizer="fmin_l_bfgs_b" if optimize else None,
        n_restarts_optimizer=max(starts - 1, 0),
        normalize_y=False,
        copy_X_train=True,
        random_state=seed,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        regressor.fit(inputs, standardized)
    return regressor


def _check_training(inputs: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.ravel(np.asarray(targets, dtype=float))
    if inputs.shape[0] != targets.shape[0]:
        raise InvalidArgumentError(f"{inputs.shape[0]} inputs for {targets.shape[0]} targets")
    if not np.all(np.isfinite(targets)):
        raise InvalidArgumentError("GP targets must be finite")
    if not np.all(np.isfinite(inputs)):
        raise InvalidArgumentError("GP inputs must be finite")
    if np.unique(inputs, axis=0).shape[0] < 2:
        raise InsufficientDataError("A GP fit needs at least 2 distinct inputs")
    return inputs, targets


def fit_gp(inputs: np.ndarray, targets: np.ndarray, settings: GpSettings = GpSettings(),
           hyper: Optional[GpHyper] = None) -> GpModel:
    """
    Fit a zero-mean GP to standardized targets.

    Hyperparameters maximize the log marginal likelihood over
    ``settings.starts`` L-BFGS-B starts (the first from the kernel's
    initial values, the rest drawn log-uniformly within bounds). Passing
    ``hyper`` skips the optimization.

    Args:
        inputs: (M, n_s) normalized parameters
        targets: (M,) observations
        settings: Search bounds, start count and target transform
        hyper: Fixed hyperparameters

    Returns:
        GpModel
    """
    inputs, targets = _check_training(inputs, targets)
    if settings.log_targets and np.any(targets <= 0.0):
        logger.warning("Non-positive targets floored before the log transform")
    modeled = np.log(np.maximum(targets, _LOG_FLOOR)) if settings.log_targets else targets
    shift, scale = _standardization(modeled)
    kernel = build_kernel(inputs.shape[1], settings, hyper)
    regressor = _fit_regressor(inputs, (modeled - shift) / scale, kernel, settings.starts,
                               settings.seed, optimize=hyper is None)
    fitted = hyper_from_kernel(regressor.kernel_)
    log_likelihood = float(regressor.log_marginal_likelihood_value_)
    logger.debug(f"GP fit on {inputs.shape[0]} points: {fitted.as_dict()}, log-likelihood {log_likelihood:.4f}")
    return GpModel(inputs=inputs, targets=targets, shift=shift, scale=scale, hyper=fitted,
                   log_likelihood=log_likelihood, regressor=regressor,
                   log_targets=settings.log_targets)


def gp_posterior(model: GpModel, theta_star: np.ndarray) -> Tuple[Union[float, np.ndarray], Union[float, np.ndarray]]:
    """
    Posterior mean and latent variance in the modeled target space.

    Variance is k(x*, x*) - k^T K^{-1} k with the nugget on the training
    diagonal only, clamped at zero.

    Args:
        theta_star: (n_s,) point or (Q, n_s) points

    Returns:
        (mean, variance): scalars for one point, arrays otherwise
    """
    theta_star = np.asarray(theta_star, dtype=float)
    single = theta_star.ndim == 1
    points = np.atleast_2d(theta_star)
    if points.shape[1] != model.n_params:
        raise InvalidArgumentError(f"Expected {model.n_params} parameters, got {points.shape[1]}")
    regressor = model.regressor
    signal = regressor.kernel_.k1
    cross = signal(points, regressor.X_train_)
    mean = cross @ regressor.alpha_
    v = solve_triangular(regressor.L_, cross.T, lower=True, check_finite=False)
    variance = signal.diag(points) - np.einsum("ij,ij->j", v, v)
    variance = np.maximum(variance, 0.0)
    mean = mean * model.scale + model.shift
    variance = variance * model.scale ** 2
    if single:
        return float(mean[0]), float(variance[0])
    return mean, variance


def condition_gp(model: GpModel, new_inputs: np.ndarray, new_targets: np.ndarray) -> GpModel:
    """
    Condition on extra observations with frozen hyperparameters and standardization.

    ``new_targets`` are given in the modeled space (e.g. posterior means).
    """
    new_inputs = np.atleast_2d(np.asarray(new_inputs, dtype=float))
    new_targets = np.ravel(np.asarray(new_targets, dtype=float))
    inputs = np.vstack([model.inputs, new_inputs])
    modeled = np.concatenate([model.transform(model.targets), new_targets])
    kernel = build_kernel(model.n_params, hyper=model.hyper)
    regressor = _fit_regressor(inputs, (modeled - model.shift) / model.scale, kernel, 1, 0, optimize=False)
    raw_new = np.exp(new_targets) if model.log_targets else new_targets
    return GpModel(inputs=inputs, targets=np.concatenate([model.targets, raw_new]),
                   shift=model.shift, scale=model.scale, hyper=model.hyper,
                   log_likelihood=float(regressor.log_marginal_likelihood_value_),
                   regressor=regressor, log_targets=model.log_targets)
