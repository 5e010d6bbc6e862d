import numpy as np
import pytest

from src.core.exceptions import InvalidArgumentError, OutOfDomainError
from src.numerics.design import Design, ParameterSpace, latin_hypercube, maximin_subset, random_design


def test_latin_hypercube_has_one_point_per_stratum():
    n = 50
    design = latin_hypercube(n, 3, seed=1)
    assert design.points.shape == (n, 3)
    assert np.all(np.abs(design.points) <= 1.0)
    strata = np.floor((design.points + 1.0) / 2.0 * n).astype(int)
    for column in strata.T:
        assert sorted(column.tolist()) == list(range(n))


def test_latin_hypercube_is_reproducible_per_seed():
    assert np.array_equal(latin_hypercube(10, 2, 5).points, latin_hypercube(10, 2, 5).points)
    assert not np.array_equal(latin_hypercube(10, 2, 5).points, latin_hypercube(10, 2, 6).points)


def test_maximin_starts_near_the_centroid_and_spreads_out():
    points = np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, -1.0], [0.8, 0.8], [-0.8, -0.8]])
    chosen = maximin_subset(Design(points, kind="external"), 3)
    assert chosen[0] == 0
    assert set(chosen[1:]) == {1, 2}


def test_maximin_subset_size_and_uniqueness():
    parent = latin_hypercube(40, 2, 3)
    chosen = maximin_subset(parent, 10)
    assert len(chosen) == len(set(chosen)) == 10
    with pytest.raises(InvalidArgumentError):
        maximin_subset(parent, 41)


def test_design_rejects_duplicates_and_out_of_range_rows():
    with pytest.raises(InvalidArgumentError):
        Design(np.array([[0.1, 0.2], [0.1, 0.2]]))
    with pytest.raises(OutOfDomainError):
        Design(np.array([[0.1, 1.5]]))


def test_random_design_stays_in_the_hypercube():
    design = random_design(200, 4, seed=2)
    assert design.points.shape == (200, 4)
    assert np.all(np.abs(design.points) <= 1.0)


def test_parameter_space_maps_bounds_to_the_hypercube(space_2d):
    xi = space_2d.to_unit(np.array([[40.0, 50.0], [50.0, 40.0]]))
    assert np.allclose(xi, [[-1.0, 1.0], [0.0, 0.0]])
    theta = np.array([[43.1, 37.7]])
    assert np.allclose(space_2d.from_unit(space_2d.to_unit(theta)), theta)


def test_parameter_space_rejects_out_of_bounds_values(space_2d):
    with pytest.raises(OutOfDomainError):
        space_2d.to_unit(np.array([61.0, 40.0]))
    with pytest.raises(InvalidArgumentError):
        space_2d.to_unit(np.array([45.0]))
    with pytest.raises(InvalidArgumentError):
        ParameterSpace(names=("a",), lower=(1.0,), upper=(1.0,))


def _min_distance(points):
    gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return float(np.min(gaps[np.triu_indices(len(points), k=1)]))


def test_maximin_beats_the_median_random_subset():
    parent = latin_hypercube(200, 2, 0)
    chosen = _min_distance(parent.points[maximin_subset(parent, 10)])
    rng = np.random.default_rng(1)
    random_gaps = [_min_distance(parent.points[rng.choice(200, size=10, replace=False)]) for _ in range(200)]
    assert chosen >= np.median(random_gaps)
