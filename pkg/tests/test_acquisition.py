import numpy as np
import pytest

from src.core.exceptions import InvalidArgumentError
from src.numerics.acquisition import (
    acquire,
    candidate_points,
    ei_from_moments,
    expected_improvement,
    kriging_believer_batch,
    maximize_ei,
    minimize_ei_baseline,
    random_batch,
)
from src.numerics.gpr import GpHyper, GpSettings, fit_gp


@pytest.fixture
def error_model():
    rng = np.random.default_rng(11)
    inputs = rng.uniform(-1, 1, size=(8, 2))
    errors = 0.05 + 0.02 * (inputs[:, 0] + 1.0) ** 2 + 0.01 * inputs[:, 1]
    return fit_gp(inputs, errors, GpSettings(starts=2, seed=0))


def test_closed_form_ei_matches_monte_carlo():
    samples = np.random.default_rng(3).normal(0.3, 0.2, size=1_000_000)
    expected = np.mean(np.maximum(samples - 0.35, 0.0))
    assert ei_from_moments(0.3, 0.2, 0.35) == pytest.approx(expected, abs=1e-3)


def test_degenerate_std_gives_plain_improvement():
    assert ei_from_moments(0.5, 0.0, 0.2) == pytest.approx(0.3)
    assert ei_from_moments(0.1, 0.0, 0.2) == 0.0


def test_ei_is_never_negative(error_model):
    values = expected_improvement(error_model, candidate_points(2, 512, seed=1), 0.2)
    assert values.shape == (512,)
    assert np.all(values >= 0.0)


def test_candidate_points_are_reproducible_and_in_bounds():
    points = candidate_points(3, 100, seed=4)
    assert points.shape == (100, 3)
    assert np.all(np.abs(points) <= 1.0)
    assert np.array_equal(points, candidate_points(3, 100, seed=4))


def test_maximizer_avoids_training_inputs(error_model):
    proposal = maximize_ei(error_model, float(np.max(error_model.targets)), n_candidates=256, n_refine=2)
    distances = np.linalg.norm(error_model.inputs - proposal.point, axis=1)
    assert np.min(distances) >= 1e-6
    assert proposal.ei >= 0.0


@pytest.mark.parametrize("minimize_ei", [False, True])
def test_believer_batch_picks_distinct_points(error_model, minimize_ei):
    eps_star = float(np.max(error_model.targets))
    result = kriging_believer_batch(error_model, eps_star, q=3, minimize_ei=minimize_ei,
                                    n_candidates=256, n_refine=2, seed=0)
    assert result.q == 3
    assert result.policy == ("ei_min" if minimize_ei else "ei_max")
    assert np.all(np.abs(result.points) <= 1.0)
    assert np.unique(result.points, axis=0).shape[0] == 3
    assert result.eps_star[0] == eps_star
    assert np.all(np.diff(result.eps_star) >= 0.0)
    assert np.all(np.isfinite(result.believed))


def test_believer_batch_rejects_empty_batch(error_model):
    with pytest.raises(InvalidArgumentError):
        kriging_believer_batch(error_model, 0.1, q=0)


def test_random_batch_skips_existing_points():
    rng = np.random.default_rng(0)
    existing = np.array([[0.0, 0.0], [0.5, 0.5]])
    result = random_batch(4, 2, rng, exclude=existing)
    assert result.q == 4 and result.policy == "random"
    assert np.all(np.isnan(result.ei))
    combined = np.vstack([existing, result.points])
    assert np.unique(combined, axis=0).shape[0] == 6


def test_acquire_dispatches_by_policy(error_model):
    random = acquire("random", 2, 2, rng=np.random.default_rng(1))
    assert random.policy == "random"
    guided = acquire("ei_max", 1, 2, model=error_model, eps_star=0.1, n_candidates=128, n_refine=1)
    assert guided.policy == "ei_max"


def test_acquire_requires_its_inputs(error_model):
    with pytest.raises(InvalidArgumentError):
        acquire("random", 1, 2)
    with pytest.raises(InvalidArgumentError):
        acquire("ei_max", 1, 2)


ONE_D_INPUTS = np.array([[-0.9], [-0.5], [-0.1], [0.3]])
ONE_D_ERRORS = np.array([0.01, 0.02, 0.05, 0.12])
ONE_D_HYPER = GpHyper(signal_variance=1.0, length_scales=(0.5,), nugget=1e-6)


@pytest.fixture
def model_1d():
    return fit_gp(ONE_D_INPUTS, ONE_D_ERRORS, hyper=ONE_D_HYPER)


@pytest.fixture
def dense_grid():
    return np.linspace(-1.0, 1.0, 20001)[:, None]


def test_maximizer_matches_dense_grid_argmax(model_1d, dense_grid):
    eps_star = float(np.max(ONE_D_ERRORS))
    grid_ei = expected_improvement(model_1d, dense_grid, eps_star)
    proposal = maximize_ei(model_1d, eps_star, n_candidates=1024, n_refine=10, seed=0)
    assert proposal.ei == pytest.approx(grid_ei.max(), rel=1e-4)
    assert expected_improvement(model_1d, proposal.point, eps_star) == pytest.approx(proposal.ei, rel=1e-12)
    assert abs(proposal.point[0] - dense_grid[np.argmax(grid_ei), 0]) < 0.05
    assert not proposal.fallback


def test_minimizer_matches_dense_grid_argmin(model_1d, dense_grid):
    eps_star = float(np.max(ONE_D_ERRORS))
    grid_ei = expected_improvement(model_1d, dense_grid, eps_star)
    proposal = minimize_ei_baseline(model_1d, eps_star, n_candidates=1024, n_refine=10, seed=0)
    assert proposal.ei >= 0.0
    assert proposal.ei == pytest.approx(grid_ei.min(), abs=1e-12)
    assert np.min(np.abs(ONE_D_INPUTS[:, 0] - proposal.point[0])) >= 1e-6


def test_single_point_batch_equals_maximizer(error_model):
    eps_star = float(np.max(error_model.targets))
    single = maximize_ei(error_model, eps_star, n_candidates=256, n_refine=3, seed=5)
    batch = kriging_believer_batch(error_model, eps_star, q=1, n_candidates=256, n_refine=3, seed=5)
    np.testing.assert_array_equal(batch.points[0], single.point)
    assert batch.ei[0] == single.ei
    assert batch.eps_star[0] == eps_star


def test_argmax_is_invariant_under_affine_target_maps():
    rng = np.random.default_rng(21)
    inputs = rng.uniform(-1, 1, size=(10, 2))
    errors = 0.1 + 0.05 * np.sin(2.0 * inputs[:, 0]) + 0.03 * inputs[:, 1] ** 2
    hyper = GpHyper(signal_variance=1.2, length_scales=(0.6, 0.9), nugget=1e-6)
    scale, offset = 3.0, 0.5
    base = fit_gp(inputs, errors, hyper=hyper)
    mapped = fit_gp(inputs, scale * errors + offset, hyper=hyper)
    eps_star = float(np.max(errors))
    first = maximize_ei(base, eps_star, n_candidates=512, n_refine=5, seed=2)
    second = maximize_ei(mapped, scale * eps_star + offset, n_candidates=512, n_refine=5, seed=2)
    np.testing.assert_allclose(second.point, first.point, atol=1e-4)
    assert second.ei == pytest.approx(scale * first.ei, rel=1e-4)


def test_returned_ei_dominates_every_candidate(error_model):
    eps_star = float(np.median(error_model.targets))
    proposal = maximize_ei(error_model, eps_star, n_candidates=256, n_refine=4, seed=9)
    candidates = candidate_points(2, 256, seed=9)
    assert proposal.ei >= np.max(expected_improvement(error_model, candidates, eps_star))


def test_flat_posterior_falls_back_to_first_candidate():
    # length scales this short leave every candidate uncorrelated with the data
    hyper = GpHyper(signal_variance=1.0, length_scales=(1e-5, 1e-5), nugget=1e-6)
    model = fit_gp(np.array([[1.0, 1.0], [-1.0, -1.0]]), np.array([0.1, 0.2]), hyper=hyper)
    candidates = candidate_points(2, 64, seed=3)
    assert np.all(expected_improvement(model, candidates, 1e6) == 0.0)
    proposal = maximize_ei(model, 1e6, n_candidates=64, n_refine=4, seed=3)
    assert proposal.fallback
    assert proposal.ei == 0.0
    np.testing.assert_array_equal(proposal.point, candidates[0])
    again = maximize_ei(model, 1e6, n_candidates=64, n_refine=4, seed=3)
    np.testing.assert_array_equal(again.point, proposal.point)
