import numpy as np
import pytest

from src.campaign.history import (
    METRIC_COLUMNS,
    AlHistory,
    StageRecord,
    load_history,
    read_stage_record,
    write_stage_record,
)
from src.campaign.store import CampaignStore
from src.core.exceptions import DataError
from src.numerics.acquisition import AcquisitionResult
from src.surrogates.crossval import CvErrors, OracleError


def _cv(n=3):
    return CvErrors(errors=np.array([0.1, np.nan, 0.3])[:n], folds=np.arange(n),
                    design=np.linspace(-0.5, 0.5, 2 * n).reshape(n, 2), seed=4, k=n)


def _record(stage, n_hf, with_batch=True):
    acquisition = None
    if with_batch:
        acquisition = AcquisitionResult(points=np.array([[0.2, -0.4]]), ei=np.array([0.05]),
                                        eps_star=np.array([0.3]), believed=np.array([0.25]),
                                        fallback=np.array([False]), policy="ei_max")
    return StageRecord(stage=stage, n_lf=20 + stage, n_hf=n_hf, cv=_cv(),
                       gp={"signal_variance": 1.5, "length_scale_1": 0.4} if with_batch else None,
                       acquisition=acquisition, pre_errors=np.array([0.12]) if with_batch else np.zeros(0),
                       oracle=OracleError(mean=0.02, std_error=0.001, n_nodes=64, n_skipped=1, flagged=True),
                       wall_clock=1.25)


def test_metrics_use_finite_cv_errors_only():
    metrics = _record(1, 6).metrics()
    assert metrics["cv_max"] == pytest.approx(0.3)
    assert metrics["cv_mean"] == pytest.approx(0.2)
    assert metrics["cv_skipped"] == 1
    assert metrics["n_acquired"] == 1
    assert list(metrics) == METRIC_COLUMNS


def test_history_enforces_stage_order():
    history = AlHistory(problem="pulse_c2", policy="ei_max", seed=1)
    history.append(_record(0, 5, with_batch=False))
    history.append(_record(1, 6))
    with pytest.raises(DataError):
        history.append(_record(3, 7))
    with pytest.raises(DataError):
        history.append(_record(2, 4))
    assert history.stages == [0, 1]
    assert history.metrics_frame().shape == (2, len(METRIC_COLUMNS))


def test_empty_history_has_no_final_stage():
    with pytest.raises(DataError):
        _ = AlHistory(problem="p", policy="random", seed=0).final


def test_stage_record_files_round_trip(tmp_path, space_2d):
    write_stage_record(tmp_path, _record(2, 7), space_2d)
    loaded = read_stage_record(tmp_path, space_2d)
    assert loaded.stage == 2 and loaded.n_hf == 7 and loaded.n_lf == 22
    assert np.array_equal(loaded.cv.errors, _cv().errors, equal_nan=True)
    assert loaded.cv.seed == 4 and loaded.cv.k == 3
    assert loaded.gp == {"signal_variance": 1.5, "length_scale_1": 0.4}
    assert np.array_equal(loaded.acquisition.points, [[0.2, -0.4]])
    assert loaded.acquisition.policy == "ei_max"
    assert loaded.pre_errors.tolist() == [0.12]
    assert loaded.oracle.mean == pytest.approx(0.02) and loaded.oracle.flagged


def test_corrupt_stages_can_be_skipped(tmp_path, space_2d):
    store = CampaignStore(tmp_path / "c")
    store.ensure()
    for stage, n_hf in ((0, 5), (1, 6), (2, 7)):
        tmp = store.begin_stage(stage)
        write_stage_record(tmp, _record(stage, n_hf, with_batch=stage > 0), space_2d)
        store.commit_stage(stage, tmp)
    (store.stage_dir(1) / "metrics.cfg").unlink()
    with pytest.raises(DataError):
        load_history(store, space_2d)
    history, corrupt = load_history(store, space_2d, skip_corrupt=True)
    assert corrupt == [1]
    assert history.stages == [0, 2]
