"""Shared fixtures: small grids, snapshot sets and campaign configs that run in seconds."""

from pathlib import Path

import numpy as np
import pytest

from src.config.campaign import CampaignConfig, parse_campaign_config
from src.core.utils import make_rng
from src.numerics.design import ParameterSpace, latin_hypercube
from src.numerics.grid import make_uniform_grid_1d
from src.numerics.kle import SnapshotSet
from src.problems.registry import PulseProblem

SMALL_CAMPAIGN = """
# small pulse campaign
problem = pulse_c2
budget = 7
batch_size = 1
seed = 7
pilot.n_lf = 20
pilot.n_delta = 5
cv.folds = 5
pce.degree = 2
pce.tau = 1e-6
pulse.n_points = 64
oracle.rule = grid
oracle.grid_points = 8
gp.starts = 2
acquisition.candidates = 256
acquisition.refine = 2
uq.samples = 64
"""


def campaign_text(output_dir: Path, **overrides) -> str:
    """SMALL_CAMPAIGN with ``output_dir`` and dotted-key overrides appended."""
    lines = [SMALL_CAMPAIGN.strip(), f"output_dir = {output_dir}"]
    body = "\n".join(lines) + "\n"
    config = parse_campaign_config(body)
    entries = {k.replace("__", "."): v for k, v in overrides.items()}
    if entries:
        config = config.with_updates(**entries)
    return config.to_flat_text()


@pytest.fixture
def grid_1d():
    return make_uniform_grid_1d(33, 0.0, 1.0)


@pytest.fixture
def space_2d():
    return ParameterSpace(names=("a", "b"), lower=(40.0, 30.0), upper=(60.0, 50.0))


@pytest.fixture
def pulse_c2():
    return PulseProblem("C2", n_points=64)


@pytest.fixture
def random_snapshots(grid_1d):
    """Twelve smooth random fields with a random 2D design."""
    rng = make_rng(3, "fixture")
    x = grid_1d.coordinates[:, 0]
    design = latin_hypercube(12, 2, 3).points
    amplitudes = rng.normal(size=(4, 12))
    basis = np.vstack([np.ones_like(x), np.sin(np.pi * x), np.cos(2 * np.pi * x), x ** 2])
    return SnapshotSet(grid_1d, basis.T @ amplitudes, design)


@pytest.fixture
def pulse_snapshots(pulse_c2):
    """(lf, paired_hf, paired_lf) pulse C2 snapshots: 30 LF runs, 8 paired HF runs."""
    design = latin_hypercube(30, 2, 11).points
    theta = pulse_c2.space.from_unit(design)
    lf = SnapshotSet(pulse_c2.grid, pulse_c2.lf(theta), design)
    paired = np.arange(8)
    hf = SnapshotSet(pulse_c2.grid, pulse_c2.hf(theta[paired]), design[paired])
    return lf, hf, lf.subset(paired)


@pytest.fixture
def small_config(tmp_path) -> CampaignConfig:
    return parse_campaign_config(campaign_text(tmp_path / "campaign"))


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "campaign.cfg"
    path.write_text(campaign_text(tmp_path / "campaign"), encoding="utf-8")
    return path
