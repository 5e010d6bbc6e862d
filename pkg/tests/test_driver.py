import shutil

import numpy as np
import pandas as pd
import pytest

from src.campaign.driver import (
    PROPOSALS_FILE,
    aggregate_replicates,
    cross_policy_test,
    may_continue,
    run_campaign,
    run_replicates,
    select_batch,
)
from src.campaign.ingest import append_runs, ingest
from src.campaign.state import load_campaign_data
from src.campaign.store import CampaignStore, read_table
from src.config.campaign import parse_campaign_config
from src.core.exceptions import InvalidConfigurationError
from src.numerics.design import latin_hypercube
from src.problems.registry import PulseProblem
from src.surrogates.crossval import CvErrors
from tests.conftest import campaign_text


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    root = tmp_path_factory.mktemp("al") / "ei_max"
    config = parse_campaign_config(campaign_text(root))
    return config, run_campaign(config), root


@pytest.fixture(scope="module")
def finished_random(tmp_path_factory):
    root = tmp_path_factory.mktemp("al") / "random"
    config = parse_campaign_config(campaign_text(root, acquisition__policy="random"))
    return config, run_campaign(config), root


def test_campaign_runs_to_budget(finished):
    _, history, root = finished
    assert history.status == "complete"
    assert history.stages == [0, 1, 2]
    assert [r.n_hf for r in history.records] == [5, 6, 7]
    assert [r.n_lf for r in history.records] == [20, 21, 22]
    assert all(r.oracle is not None and np.isfinite(r.oracle.mean) for r in history.records)
    assert CampaignStore(root).read_state()["status"] == "complete"
    assert len(read_table(root / "metrics.csv")) == 3
    assert (root / "surrogate" / "field" / "manifest.cfg").is_file()


def test_acquired_points_are_new_and_recorded(finished):
    _, history, root = finished
    data = load_campaign_data(CampaignStore(root))
    assert np.unique(data.hf_design, axis=0).shape[0] == 7
    for record in history.records[1:]:
        assert record.acquisition.q == 1 and record.acquisition.policy == "ei_max"
        assert np.all(np.isfinite(record.pre_errors))
        assert record.gp is not None and record.gp["n_train"] >= 5
    table = read_table(root / "stages" / "stage_002" / "acquisition.csv")
    assert np.array_equal(table[["xi_a", "xi_b"]].to_numpy(), data.hf_design[6:])


def test_complete_campaign_is_not_extended(finished):
    config, history, root = finished
    again = run_campaign(config, resume=True, out=root)
    assert again.stages == history.stages
    assert again.status == "complete"


def test_existing_directory_needs_resume(finished):
    config, _, root = finished
    with pytest.raises(InvalidConfigurationError):
        run_campaign(config, out=root)
    with pytest.raises(InvalidConfigurationError):
        run_campaign(config.with_updates(seed=8), resume=True, out=root)


def test_interrupted_campaign_resumes_identically(finished, tmp_path):
    config, _, root = finished
    copy = tmp_path / "copy"
    shutil.copytree(root, copy)
    store = CampaignStore(copy)
    shutil.rmtree(store.stage_dir(2))
    store.write_state({"status": "running", "last_stage": 1})
    history = run_campaign(config, resume=True, out=copy)
    assert history.stages == [0, 1, 2]
    original = read_table(root / "stages" / "stage_002" / "acquisition.csv")
    resumed = read_table(copy / "stages" / "stage_002" / "acquisition.csv")
    assert np.array_equal(original[["xi_a", "xi_b"]].to_numpy(), resumed[["xi_a", "xi_b"]].to_numpy())


def test_random_policy_campaign(finished_random):
    _, history, _ = finished_random
    assert history.stages == [0, 1, 2]
    batch = history.records[1].acquisition
    assert batch.policy == "random"
    assert np.all(np.isnan(batch.ei))
    assert history.records[1].gp is None


def test_too_few_cv_errors_fall_back_to_random(finished):
    config, _, root = finished
    data = load_campaign_data(CampaignStore(root))
    cv = CvErrors(errors=np.full(data.n_hf, np.nan), folds=np.arange(data.n_hf), design=data.hf_design)
    result, gp = select_batch(config, data, cv, stage=3)
    assert gp is None
    assert result.policy == "ei_max"
    assert result.fallback.tolist() == [True]


@pytest.mark.parametrize("n_hf,q,budget,strict,overshoot", [
    (5, 1, 7, True, True),
    (7, 1, 7, False, False),
    (6, 2, 7, False, True),
    (5, 2, 7, True, True),
])
def test_loop_guards(n_hf, q, budget, strict, overshoot):
    assert may_continue(n_hf, q, budget, "strict") is strict
    assert may_continue(n_hf, q, budget, "overshoot") is overshoot


def test_aggregate_replicates():
    def frame(values):
        return pd.DataFrame({"stage": np.arange(len(values)), "mu_eps": values})

    frames = [("ei_max", 0, frame([0.3, 0.1])), ("ei_max", 1, frame([0.5, 0.2])),
              ("random", 0, frame([0.4])), ("random", 1, None)]
    table = aggregate_replicates(frames, replicates=2)
    first = table[(table.policy == "ei_max") & (table.stage == 0)].iloc[0]
    assert first["mean"] == pytest.approx(0.4)
    assert first["std"] == pytest.approx(np.std([0.3, 0.5], ddof=1))
    assert first["min"] == pytest.approx(0.3) and first["max"] == pytest.approx(0.5)
    assert bool(first["complete"])
    lone = table[table.policy == "random"].iloc[0]
    assert lone["n_completed"] == 1 and lone["std"] == 0.0 and not bool(lone["complete"])


def test_cross_policy_test(finished, finished_random, tmp_path):
    _, _, root_a = finished
    _, _, root_b = finished_random
    table, excluded = cross_policy_test(root_a, root_b, out=tmp_path / "cross.csv")
    assert set(excluded) == {"ei_max", "random"}
    assert set(table["surrogate"]) <= {"ei_max", "random"}
    assert len(table) == 4 - sum(excluded.values())
    assert np.all(table["error"] >= 0.0)
    assert list(table.columns) == ["surrogate", "test_source", "point", "a", "b", "error"]
    assert (tmp_path / "cross.csv").is_file()


def _write_runs(directory, problem, lf_theta, hf_theta, name):
    records = []
    for fidelity, thetas in (("lf", lf_theta), ("hf", hf_theta)):
        values = problem.evaluate(fidelity, thetas)
        for i, theta in enumerate(thetas):
            file = f"{name}_{fidelity}_{i}.csv"
            pd.DataFrame({"value": values[:, i]}).to_csv(directory / file, index=False)
            records.append({"fidelity": fidelity, "a": theta[0], "b": theta[1], "file": file})
    pd.DataFrame(records).to_csv(directory / f"{name}.csv", index=False)
    return directory / f"{name}.csv"


def test_external_ask_tell_loop(tmp_path):
    problem = PulseProblem("C2", n_points=64)
    meta = tmp_path / "grid.meta"
    meta.write_text("grid.dim = 1\ngrid.shape = 64\ngrid.lower = 0.0\ngrid.upper = 0.1\n"
                    "params.names = a, b\nparams.lower = 40.0, 30.0\nparams.upper = 60.0, 50.0\n")
    lf_theta = problem.space.from_unit(latin_hypercube(20, 2, 5).points)
    ingest(_write_runs(tmp_path, problem, lf_theta, lf_theta[:5], "pilot"), meta, tmp_path / "bundle")
    text = (f"problem = external\nbundle = {tmp_path / 'bundle'}\nbudget = 10\nbatch_size = 5\n"
            f"cv.folds = 5\npce.degree = 2\npce.tau = 1e-6\ngp.starts = 2\n"
            f"acquisition.candidates = 256\nacquisition.refine = 2\noutput_dir = {tmp_path / 'campaign'}\n")
    config = parse_campaign_config(text)

    history = run_campaign(config)
    assert history.status == "awaiting_evaluations" and history.stages == [0]
    proposals = read_table(tmp_path / "campaign" / PROPOSALS_FILE)
    assert len(proposals) == 5
    theta = proposals[["a", "b"]].to_numpy()

    again = run_campaign(config)
    assert again.stages == [0]

    append_runs(tmp_path / "bundle", _write_runs(tmp_path, problem, theta, theta, "batch1"))
    history = run_campaign(config)
    assert history.status == "complete" and history.stages == [0, 1]
    assert history.final.n_hf == 10 and history.final.acquisition.q == 5
    assert not (tmp_path / "campaign" / PROPOSALS_FILE).exists()


@pytest.mark.slow
def test_replicates_share_seeds_across_policies(tmp_path):
    config = parse_campaign_config(campaign_text(tmp_path / "reps", budget=6))
    table = run_replicates(config, replicates=2, policies=["ei_max", "random"])
    assert set(table["policy"]) == {"ei_max", "random"}
    assert table["complete"].all()
    status = read_table(tmp_path / "reps" / "replicate_status.csv")
    assert (status["status"] == "ok").all()
    seeds = status.pivot(index="replicate", columns="policy", values="seed")
    assert (seeds["ei_max"] == seeds["random"]).all()


PULSE_REPRODUCTION = """
problem = {problem}
budget = 65
batch_size = 1
seed = 1
pilot.n_lf = 200
pilot.n_delta = 5
cv.folds = 5
oracle.rule = grid
oracle.grid_points = 200
output_dir = {out}
"""


def _final_means(table):
    final = table.loc[table.groupby("policy")["stage"].idxmax()]
    return dict(zip(final["policy"], final["mean"]))


@pytest.mark.slow
def test_c2_policy_ordering(tmp_path):
    config = parse_campaign_config(PULSE_REPRODUCTION.format(problem="pulse_c2", out=tmp_path / "c2"))
    table = run_replicates(config, replicates=10, policies=["ei_max", "random", "ei_min"])
    assert table["complete"].all()
    means = _final_means(table)
    assert means["ei_min"] >= means["random"]
    assert means["ei_max"] <= 1.05 * means["random"]


@pytest.mark.slow
def test_c1_error_decreases_over_the_campaign(tmp_path):
    config = parse_campaign_config(PULSE_REPRODUCTION.format(problem="pulse_c1", out=tmp_path / "c1"))
    run_replicates(config, replicates=10, policies=["ei_max"])
    improved = 0
    for metrics in sorted((tmp_path / "c1" / "ei_max").glob("replicate_*/metrics.csv")):
        mu = read_table(metrics).sort_values("stage")["mu_eps"].to_numpy()
        improved += int(mu[-1] < mu[0])
    assert improved >= 8


@pytest.mark.slow
def test_reduced_convdiff_policy_ordering(tmp_path):
    text = (f"problem = convdiff\nbudget = 50\nbatch_size = 1\nseed = 3\npilot.n_lf = 300\npilot.n_delta = 10\n"
            f"cv.folds = 10\nconvdiff.hf_n = 64\nconvdiff.lf_n = 16\noracle.rule = monte_carlo\n"
            f"oracle.samples = 1000\noutput_dir = {tmp_path / 'cd'}\n")
    table = run_replicates(parse_campaign_config(text), replicates=5, policies=["ei_max", "random"])
    assert table["complete"].all()
    means = _final_means(table)
    assert means["ei_max"] <= means["random"]
