from math import comb

import numpy as np
import pytest

from src.core.exceptions import InvalidArgumentError, OutOfDomainError
from src.numerics.design import latin_hypercube
from src.numerics.pce import (
    TauPolicy,
    basis_matrix,
    difference_matrix,
    fit_pce,
    fit_ridge,
    legendre_orthonormal,
    pce_predict,
    pce_predict_many,
    select_tau,
    total_order_index_set,
)


def test_index_set_order_for_two_parameters():
    idx = total_order_index_set(2, 2)
    assert idx.indices.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]


@pytest.mark.parametrize("n_s,p", [(1, 0), (1, 5), (2, 3), (4, 3), (3, 4)])
def test_index_set_size_is_binomial(n_s, p):
    idx = total_order_index_set(n_s, p)
    assert idx.n_terms == comb(n_s + p, p)
    assert np.all(idx.indices.sum(axis=1) <= p)
    assert np.unique(idx.indices, axis=0).shape[0] == idx.n_terms


def test_legendre_values():
    assert legendre_orthonormal(0, 0.3) == pytest.approx(1.0)
    assert legendre_orthonormal(1, 0.5) == pytest.approx(np.sqrt(3) * 0.5)
    assert legendre_orthonormal(2, 1.0) == pytest.approx(np.sqrt(5))
    with pytest.raises(OutOfDomainError):
        legendre_orthonormal(1, 1.5)


def test_basis_is_orthonormal_under_uniform_sampling():
    idx = total_order_index_set(2, 3)
    xi = np.random.default_rng(0).uniform(-1, 1, size=(200_000, 2))
    A = basis_matrix(xi, idx)
    gram = A.T @ A / xi.shape[0]
    assert np.allclose(gram, np.eye(idx.n_terms), atol=2e-2)


def test_basis_matrix_rejects_wrong_dimension():
    with pytest.raises(InvalidArgumentError):
        basis_matrix(np.zeros((3, 3)), total_order_index_set(2, 2))


def test_difference_matrix_rows():
    gamma = difference_matrix(4)
    assert gamma.shape == (3, 4)
    assert gamma[0].tolist() == [-1.0, 1.0, 0.0, 0.0]
    assert gamma[2].tolist() == [0.0, 0.0, -1.0, 1.0]


def test_exact_polynomial_is_recovered_without_regularization():
    idx = total_order_index_set(2, 2)
    rng = np.random.default_rng(4)
    truth = rng.normal(size=idx.n_terms)
    xi = rng.uniform(-1, 1, size=(3 * idx.n_terms, 2))
    zeta = basis_matrix(xi, idx) @ truth
    model = fit_pce(xi, zeta, idx, TauPolicy(fixed=0.0))
    assert np.max(np.abs(model.coefficients[:, 0] - truth)) < 1e-8
    assert pce_predict(model, xi[0]) == pytest.approx([zeta[0]], abs=1e-10)


def test_ridge_matches_normal_equations():
    rng = np.random.default_rng(5)
    A, c = rng.normal(size=(20, 6)), rng.normal(size=20)
    tau = 0.3
    gamma = difference_matrix(6)
    expected = np.linalg.solve(A.T @ A + tau * gamma.T @ gamma, A.T @ c)
    assert np.allclose(fit_ridge(A, c, tau), expected, atol=1e-10)


def test_ridge_handles_several_right_hand_sides():
    rng = np.random.default_rng(6)
    A, c = rng.normal(size=(15, 4)), rng.normal(size=(15, 3))
    together = fit_ridge(A, c, 0.1)
    assert together.shape == (4, 3)
    assert np.allclose(together[:, 1], fit_ridge(A, c[:, 1], 0.1))


def test_underdetermined_least_squares_gives_minimum_norm():
    rng = np.random.default_rng(7)
    A, c = rng.normal(size=(3, 6)), rng.normal(size=3)
    b = fit_ridge(A, c, 0.0)
    assert np.allclose(A @ b, c)
    assert np.allclose(b, np.linalg.pinv(A) @ c)


def test_ridge_rejects_negative_tau():
    with pytest.raises(InvalidArgumentError):
        fit_ridge(np.eye(3), np.ones(3), -1.0)


def test_selected_tau_comes_from_the_grid_and_favors_small_values_on_exact_data():
    idx = total_order_index_set(1, 3)
    xi = np.linspace(-1, 1, 30)[:, None]
    A = basis_matrix(xi, idx)
    c = A @ np.array([1.0, -2.0, 0.5, 3.0])
    grid = [1e-8, 1e-4, 1.0, 100.0]
    tau = select_tau(A, c, grid, folds=5, seed=0)
    assert tau in grid
    assert tau <= 1e-4


def test_tied_scores_pick_the_larger_tau():
    # c = 0 gives zero error for every tau
    A = np.random.default_rng(8).normal(size=(10, 3))
    assert select_tau(A, np.zeros(10), [1e-3, 1e-1, 10.0], folds=5) == 10.0


def test_select_tau_needs_enough_samples():
    with pytest.raises(InvalidArgumentError):
        select_tau(np.eye(3), np.ones(3), [1.0], folds=5)
    with pytest.raises(InvalidArgumentError):
        select_tau(np.eye(3), np.ones(3), [], folds=2)


def test_mode_free_model_predicts_nothing():
    idx = total_order_index_set(2, 2)
    model = fit_pce(np.zeros((4, 2)) + np.linspace(-0.5, 0.5, 4)[:, None], np.zeros((4, 0)), idx)
    assert model.n_modes == 0
    assert pce_predict_many(model, np.zeros((3, 2))).shape == (3, 0)


def test_prediction_outside_the_hypercube_is_rejected():
    idx = total_order_index_set(2, 1)
    model = fit_pce(np.array([[0.0, 0.0], [0.5, -0.5], [-0.5, 0.5], [1.0, 1.0]]), np.arange(4.0), idx,
                    TauPolicy(fixed=1e-8))
    with pytest.raises(OutOfDomainError):
        pce_predict(model, np.array([1.2, 0.0]))


def test_penalty_norm_shrinks_as_tau_grows():
    rng = np.random.default_rng(14)
    A = rng.normal(size=(20, 8))
    c = rng.normal(size=20)
    gamma = difference_matrix(8)
    norms = np.array([np.linalg.norm(gamma @ fit_ridge(A, c, tau)) for tau in np.logspace(-6, 4, 30)])
    assert np.all(np.diff(norms) <= 1e-10 * norms[0])
    assert norms[-1] < 0.1 * norms[0]


def test_pure_noise_selects_the_largest_tau():
    idx = total_order_index_set(2, 4)
    xi = latin_hypercube(30, 2, 4).points
    A = basis_matrix(xi, idx)
    # many independent noise vectors average the CV curve over draws
    noise = np.random.default_rng(5).normal(size=(30, 500))
    grid = [1e-6, 1e-2, 1e2]
    assert select_tau(A, noise, grid, folds=5, seed=0) == 1e2
