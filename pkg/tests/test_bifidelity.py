import numpy as np
import pytest

from src.core.exceptions import InsufficientDataError, PairingError
from src.core.utils import make_rng, relative_error
from src.numerics.design import latin_hypercube
from src.numerics.kle import SnapshotSet
from src.numerics.pce import TauPolicy
from src.problems.registry import PulseProblem
from src.surrogates.bifidelity import (
    BuildSettings,
    build_bifidelity,
    build_component,
    build_single_fidelity,
    correlation_field,
    discrepancy_snapshots,
    propagate_uq,
)

EXACT = BuildSettings(rho=1.0, degree=2, tau=TauPolicy(fixed=0.0))
SMALL = BuildSettings(degree=2, tau=TauPolicy(fixed=1e-6))


def _polynomial_fields(grid, xi):
    # fields spanned by three spatial shapes with quadratic coefficients in xi
    x = grid.coordinates[:, 0]
    shapes = np.vstack([np.sin(np.pi * x), x, np.cos(3 * x)])
    coefficients = np.vstack([1.0 + xi[:, 0] * xi[:, 1], xi[:, 0] ** 2 - xi[:, 1], 0.5 * xi[:, 1] ** 2])
    return shapes.T @ coefficients


def test_component_reproduces_fields_polynomial_in_the_parameters(grid_1d, space_2d):
    design = latin_hypercube(15, 2, 2).points
    component = build_component(SnapshotSet(grid_1d, _polynomial_fields(grid_1d, design), design),
                                space_2d, EXACT)
    assert component.k_t <= 3
    xi = latin_hypercube(6, 2, 9).points
    assert np.allclose(component.predict_unit_many(xi), _polynomial_fields(grid_1d, xi), atol=1e-8)


def test_bifidelity_prediction_is_the_sum_of_its_parts(pulse_snapshots, pulse_c2):
    lf, hf, paired_lf = pulse_snapshots
    surrogate = build_bifidelity(lf, hf, paired_lf, pulse_c2.space, SMALL)
    theta = np.array([47.0, 41.0])
    field = surrogate.predict(theta)
    assert np.allclose(field.values, surrogate.lf.predict(theta).values + surrogate.delta.predict(theta).values)
    assert surrogate.n_lf == 30 and surrogate.n_hf == 8


def test_identical_fidelities_give_a_zero_discrepancy(pulse_snapshots, pulse_c2):
    lf, _, paired_lf = pulse_snapshots
    surrogate = build_bifidelity(lf, paired_lf, paired_lf, pulse_c2.space, SMALL)
    assert surrogate.delta.k_t == 0
    xi = latin_hypercube(5, 2, 4).points
    assert np.allclose(surrogate.predict_unit_many(xi), surrogate.lf.predict_unit_many(xi))


def test_discrepancy_correction_beats_the_lf_surrogate(pulse_snapshots, pulse_c2):
    lf, hf, paired_lf = pulse_snapshots
    surrogate = build_bifidelity(lf, hf, paired_lf, pulse_c2.space, SMALL)
    lf_only = build_single_fidelity(lf, pulse_c2.space, SMALL)
    xi = latin_hypercube(20, 2, 21).points
    truth = pulse_c2.hf(pulse_c2.space.from_unit(xi))
    w = pulse_c2.grid.weights
    bf_error = np.mean(relative_error(truth, surrogate.predict_unit_many(xi), w))
    lf_error = np.mean(relative_error(truth, lf_only.predict_unit_many(xi), w))
    assert bf_error < lf_error


def test_discrepancy_needs_matching_designs(pulse_snapshots):
    lf, hf, _ = pulse_snapshots
    with pytest.raises(PairingError):
        discrepancy_snapshots(hf, lf.subset(range(1, 9)))


def test_propagation_is_seeded_and_nonnegative(pulse_snapshots, pulse_c2):
    lf, hf, paired_lf = pulse_snapshots
    surrogate = build_bifidelity(lf, hf, paired_lf, pulse_c2.space, SMALL)
    mean, std = propagate_uq(surrogate, 50, seed=3)
    again, _ = propagate_uq(surrogate, 50, seed=3)
    assert np.array_equal(mean.values, again.values)
    assert np.all(std.values >= 0.0)
    with pytest.raises(InsufficientDataError):
        propagate_uq(surrogate, 1, seed=3)


def test_mean_only_component_has_zero_spread(grid_1d, space_2d):
    design = latin_hypercube(6, 2, 1).points
    component = build_component(SnapshotSet(grid_1d, np.full((grid_1d.n_points, 6), 2.0), design), space_2d)
    mean, std = propagate_uq(component, 10, seed=0)
    assert np.allclose(mean.values, 2.0)
    assert np.allclose(std.values, 0.0)


def test_correlation_field(pulse_snapshots):
    _, hf, paired_lf = pulse_snapshots
    r = correlation_field(paired_lf, paired_lf)
    # every pulse vanishes at x = 0
    assert np.isnan(r[0])
    assert np.allclose(r[1:], 1.0)
    flipped = SnapshotSet(hf.grid, 1.0 - 2.0 * paired_lf.values, paired_lf.design)
    assert np.allclose(correlation_field(paired_lf, flipped)[1:], -1.0)
    with pytest.raises(InsufficientDataError):
        correlation_field(paired_lf.subset([0, 1]), paired_lf.subset([0, 1]))


@pytest.mark.slow
def test_bifidelity_mean_corrects_the_low_fidelity_mean_on_c1():
    problem = PulseProblem("C1")
    design = latin_hypercube(200, 2, 5).points
    theta = problem.space.from_unit(design)
    lf = SnapshotSet(problem.grid, problem.lf(theta), design)
    paired = np.arange(20)
    hf = SnapshotSet(problem.grid, problem.hf(theta[paired]), design[paired])
    settings = BuildSettings(degree=3, tau=TauPolicy(fixed=1e-6))
    surrogate = build_bifidelity(lf, hf, lf.subset(paired), problem.space, settings)

    xi = make_rng(11, "uq").uniform(-1.0, 1.0, size=(2000, 2))
    truth_mean = problem.hf(problem.space.from_unit(xi)).mean(axis=1)
    bf_mean, _ = propagate_uq(surrogate, 2000, 11)
    lf_mean, _ = propagate_uq(surrogate.lf, 2000, 11)
    w = problem.grid.weights
    assert relative_error(truth_mean, bf_mean.values, w) < relative_error(truth_mean, lf_mean.values, w)
