import numpy as np
import pandas as pd
import pytest

from src.campaign.store import (
    CampaignStore,
    RunManifest,
    load_design,
    load_field,
    load_kle,
    load_surrogate,
    read_table,
    save_design,
    save_field,
    save_kle,
    save_surrogate,
    write_table,
)
from src.core.exceptions import DataError, InvalidConfigurationError, StorageError
from src.numerics.design import latin_hypercube
from src.numerics.grid import Field, make_uniform_grid_2d
from src.numerics.kle import SnapshotSet, fit_snapshots
from src.numerics.pce import TauPolicy
from src.surrogates.bifidelity import BuildSettings, build_bifidelity

SMALL = BuildSettings(degree=2, tau=TauPolicy(fixed=1e-6))


def test_tables_keep_full_float_precision(tmp_path):
    values = np.array([0.1, 1.0 / 3.0, 1e-300, -2.5e17, np.pi])
    write_table(tmp_path / "t.csv", pd.DataFrame({"x": values}))
    assert np.array_equal(read_table(tmp_path / "t.csv")["x"].to_numpy(), values)


def test_missing_table_raises_storage_error(tmp_path):
    with pytest.raises(StorageError):
        read_table(tmp_path / "absent.csv")


def test_field_sidecar_restores_the_grid(tmp_path):
    grid = make_uniform_grid_2d(4, 2)
    field = Field(grid, np.arange(8.0) / 7.0)
    path = save_field(tmp_path / "phi.csv", field)
    assert (tmp_path / "phi.meta").is_file()
    loaded = load_field(path)
    assert loaded.grid.matches(grid)
    assert np.array_equal(loaded.values, field.values)


def test_design_files_hold_physical_and_normalized_columns(tmp_path, space_2d):
    xi = latin_hypercube(5, 2, 0).points
    path = save_design(tmp_path / "design.csv", xi, space_2d)
    frame = read_table(path)
    assert list(frame.columns) == ["a", "b", "xi_a", "xi_b"]
    assert np.allclose(frame[["a", "b"]].to_numpy(), space_2d.from_unit(xi))
    assert np.array_equal(load_design(path, space_2d), xi)


def test_kle_files_round_trip(tmp_path, random_snapshots):
    basis = fit_snapshots(random_snapshots, rho=0.95)
    save_kle(tmp_path / "kle", basis)
    loaded = load_kle(tmp_path / "kle")
    assert loaded.k_t == basis.k_t
    assert np.array_equal(loaded.modes, basis.modes)
    assert np.array_equal(loaded.eigenvalues, basis.eigenvalues)


def test_empty_kle_round_trips(tmp_path, grid_1d):
    snaps = SnapshotSet(grid_1d, np.full((grid_1d.n_points, 3), 4.0), np.linspace(-1, 1, 3))
    save_kle(tmp_path / "kle", fit_snapshots(snaps))
    loaded = load_kle(tmp_path / "kle")
    assert loaded.k_t == 0
    assert np.allclose(loaded.mean.values, 4.0)


def test_saved_surrogate_predicts_identically(tmp_path, pulse_snapshots, pulse_c2):
    lf, hf, paired_lf = pulse_snapshots
    surrogate = build_bifidelity(lf, hf, paired_lf, pulse_c2.space, SMALL)
    save_surrogate(tmp_path / "s", surrogate)
    loaded = load_surrogate(tmp_path / "s")
    xi = latin_hypercube(7, 2, 5).points
    assert np.array_equal(loaded.predict_unit_many(xi), surrogate.predict_unit_many(xi))
    assert loaded.n_lf == 30 and loaded.n_hf == 8


def test_tampered_surrogate_fails_its_digest(tmp_path, pulse_snapshots, pulse_c2):
    lf, hf, paired_lf = pulse_snapshots
    save_surrogate(tmp_path / "s", build_bifidelity(lf, hf, paired_lf, pulse_c2.space, SMALL))
    mean = tmp_path / "s" / "delta" / "kle" / "mean.csv"
    mean.write_text(mean.read_text().replace("0", "1", 1))
    with pytest.raises(StorageError):
        load_surrogate(tmp_path / "s")


def test_manifest_verification():
    stored = RunManifest(config_hash="abc", input_digests={"bundle": "d1"})
    stored.verify(RunManifest(config_hash="abc", input_digests={"bundle": "d1"}))
    with pytest.raises(InvalidConfigurationError):
        stored.verify(RunManifest(config_hash="xyz"))
    with pytest.raises(DataError):
        stored.verify(RunManifest(config_hash="abc", input_digests={"bundle": "d2"}))
    with pytest.raises(DataError):
        stored.verify(RunManifest(config_hash="abc", rng="mt19937"))


def test_manifest_entries_round_trip(tmp_path):
    store = CampaignStore(tmp_path / "c")
    store.ensure()
    store.write_manifest(RunManifest(config_hash="abc", input_digests={"bundle": "d1"}))
    manifest = store.read_manifest()
    assert manifest.config_hash == "abc"
    assert manifest.input_digests == {"bundle": "d1"}
    assert manifest.updated


def test_stage_directories_are_published_on_commit(tmp_path):
    store = CampaignStore(tmp_path / "c")
    store.ensure()
    for stage in range(3):
        tmp = store.begin_stage(stage)
        (tmp / "marker").write_text(str(stage))
        store.commit_stage(stage, tmp)
    store.begin_stage(3)
    assert store.stage_numbers() == [0, 1, 2]
    store.discard_after(1)
    assert store.stage_numbers() == [0, 1]
    assert (store.stage_dir(1) / "marker").read_text() == "1"


def test_state_file_is_replaced_atomically(tmp_path):
    store = CampaignStore(tmp_path / "c")
    store.ensure()
    assert not store.exists()
    store.write_state({"stage": 0, "status": "running"})
    store.write_state({"stage": 1, "status": "complete"})
    assert store.exists()
    assert store.read_state() == {"stage": "1", "status": "complete"}
    assert not (store.root / ".state.cfg.tmp").exists()


def test_surrogates_are_stored_per_qoi(tmp_path, pulse_snapshots, pulse_c2):
    lf, hf, paired_lf = pulse_snapshots
    store = CampaignStore(tmp_path / "c")
    store.save_surrogate(build_bifidelity(lf, hf, paired_lf, pulse_c2.space, SMALL), "field")
    assert store.surrogate_qois() == ["field"]
    assert store.load_surrogate("field").n_hf == 8
