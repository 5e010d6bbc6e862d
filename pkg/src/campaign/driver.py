"""Active-learning campaigns: pilot build, CV errors, GP-guided acquisition, rebuild, repeat."""

import time
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..config.campaign import CampaignConfig, parse_campaign_config
from ..core.exceptions import (
    BifikleError,
    DataError,
    IncompatibleGridsError,
    InsufficientDataError,
    InvalidConfigurationError,
    ModelEvaluationError,
)
from ..core.logging_config import get_logger
from ..core.utils import derive_seed, log_operation, make_rng, relative_error
from ..numerics.acquisition import AcquisitionResult, acquire, random_batch
from ..numerics.design import latin_hypercube, maximin_subset
from ..numerics.gpr import GpSettings, fit_gp
from ..numerics.pce import TauPolicy
from ..problems.registry import Problem, get_problem
from ..surrogates.bifidelity import BifidelitySurrogate, BuildSettings, build_bifidelity
from ..surrogates.crossval import (
    CvErrors,
    GridRule,
    MonteCarloRule,
    OracleError,
    ReferenceSet,
    build_reference,
    integrated_relative_error,
    multi_qoi_errors,
)
from .history import (
    AlHistory,
    StageRecord,
    acquisition_frame,
    acquisition_from_frame,
    gp_entries,
    load_history,
    write_metrics,
    write_stage_record,
)
from .ingest import Bundle, bundle_digest, load_bundle
from .state import CampaignData, load_campaign_data, read_problem, write_problem, write_stage_data
from .store import CampaignStore, RunManifest, read_table, write_table

logger = get_logger(__name__)

PathLike = Union[str, Path]
BUILTIN_QOI = "field"
PROPOSALS_FILE = "proposals.csv"
PROPOSALS_GP_FILE = "proposals_gp.csv"


def build_settings(config: CampaignConfig) -> BuildSettings:
    pce = config.pce
    tau = TauPolicy(fixed=pce.tau, tau_min=pce.tau_min, tau_max=pce.tau_max, count=pce.tau_count,
                    folds=pce.tau_folds, seed=derive_seed(config.seed, "tau"))
    return BuildSettings(rho=config.kle.rho, degree=pce.degree, tau=tau, eigen_cutoff=config.kle.eigen_cutoff)


def gp_settings(config: CampaignConfig, seed: int) -> GpSettings:
    gp = config.gp
    return GpSettings(starts=gp.starts, length_scale_bounds=gp.length_scale_bounds,
                      signal_variance_bounds=gp.signal_variance_bounds, nugget_bounds=gp.nugget_bounds,
                      log_targets=gp.log_targets, seed=seed)


def oracle_rule(config: CampaignConfig, problem: Problem):
    """Quadrature rule for the integrated error, or None when no truth model exists."""
    rule = problem.default_oracle if config.oracle.rule == "auto" else config.oracle.rule
    if not problem.has_models or rule == "none":
        return None
    if rule == "grid":
        return GridRule(points_per_dim=config.oracle.grid_points)
    return MonteCarloRule(samples=config.oracle.samples, seed=config.oracle.seed)


def build_oracle_reference(problem: Problem, config: CampaignConfig) -> Optional[ReferenceSet]:
    rule = oracle_rule(config, problem)
    if rule is None:
        return None
    logger.info(f"Evaluating the {problem.name} HF oracle on a {rule.name} rule")
    return build_reference(lambda thetas: problem.evaluate_tolerant("hf", thetas), problem.space,
                           problem.grid.weights, rule)


def may_continue(n_hf: int, q: int, budget: int, guard: str = "strict") -> bool:
    """
    Loop guard.

    ``strict`` acquires only full batches that fit the budget; ``overshoot``
    keeps acquiring while fewer than ``budget`` HF runs exist and may end
    up to q - 1 runs over it.
    """
    if guard == "overshoot":
        return n_hf < budget
    return n_hf + q <= budget


def build_surrogates(data: CampaignData, settings: BuildSettings) -> Dict[str, BifidelitySurrogate]:
    surrogates = {}
    for qoi in data.qois:
        paired_hf, paired_lf = data.paired(qoi)
        surrogates[qoi] = build_bifidelity(data.lf_snaps(qoi), paired_hf, paired_lf, data.space, settings)
    return surrogates


def stage_cv(data: CampaignData, config: CampaignConfig, settings: BuildSettings, stage: int,
             n_jobs: int = 1) -> CvErrors:
    """QoI-averaged CV errors of every paired sample with a stage-specific partition."""
    if data.n_hf < 2:
        raise InsufficientDataError(f"Cross-validation needs at least 2 HF runs, have {data.n_hf}")
    k = data.n_hf if config.cv.mode == "loo" else min(config.cv.folds, data.n_hf)
    return multi_qoi_errors(data.qoi_data(), data.space, k, derive_seed(config.seed, "cv", stage), settings,
                            exclude_heldout_lf=config.cv.exclude_heldout_lf, n_pilot_lf=data.n_pilot_lf,
                            n_jobs=n_jobs)


def oracle_error(surrogates: Mapping[str, BifidelitySurrogate],
                 reference: Optional[ReferenceSet]) -> Optional[OracleError]:
    if reference is None or len(surrogates) != 1:
        return None
    return integrated_relative_error(next(iter(surrogates.values())), reference)


def pre_incorporation_errors(surrogates: Mapping[str, BifidelitySurrogate], xi: np.ndarray,
                             hf_values: Mapping[str, np.ndarray]) -> np.ndarray:
    """QoI-averaged error of the not-yet-rebuilt surrogates at newly run HF points."""
    if xi.shape[0] == 0:
        return np.zeros(0)
    errors = [np.atleast_1d(relative_error(hf_values[q], s.predict_unit_many(xi), s.grid.weights))
              for q, s in surrogates.items()]
    return np.mean(np.vstack(errors), axis=0)


def select_batch(config: CampaignConfig, data: CampaignData, cv: CvErrors,
                 stage: int) -> Tuple[AcquisitionResult, Optional[Dict[str, float]]]:
    """
    Choose the points of ``stage`` from the previous stage's CV errors.

    EI policies fall back to random picks (flagged) when fewer than two CV
    errors are finite.
    """
    policy = config.acquisition.policy
    q = config.batch_size
    n_s = data.space.dim
    valid = cv.valid
    if policy == "random" or int(np.sum(valid)) < 2:
        if policy != "random":
            logger.warning(f"Stage {stage}: only {int(np.sum(valid))} finite CV errors, acquiring at random")
        result = random_batch(q, n_s, make_rng(config.seed, "random", stage), exclude=data.hf_design)
        if policy != "random":
            result.fallback = np.ones(q, dtype=bool)
            result.policy = policy
        return result, None
    model = fit_gp(cv.design[valid], cv.errors[valid], gp_settings(config, derive_seed(config.seed, "gp", stage)))
    result = acquire(policy, q, n_s, model=model, eps_star=cv.max(),
                     n_candidates=config.acquisition.candidates, n_refine=config.acquisition.refine,
                     seed=derive_seed(config.seed, "acquisition", stage))
    if np.any(result.fallback):
        logger.warning(f"Stage {stage}: {int(np.sum(result.fallback))} pick(s) fell back to maximum variance")
    return result, gp_entries(model)


def _commit_stage(store: CampaignStore, data: CampaignData, record: StageRecord, history: AlHistory,
                  surrogates: Mapping[str, BifidelitySurrogate], manifest: RunManifest) -> None:
    tmp = store.begin_stage(record.stage)
    write_stage_data(tmp, data, record.stage)
    write_stage_record(tmp, record, data.space)
    store.commit_stage(record.stage, tmp)
    history.append(record)
    write_metrics(store, history)
    for qoi, surrogate in surrogates.items():
        store.save_surrogate(surrogate, qoi)
    store.write_state({"status": "running", "last_stage": record.stage})
    store.write_manifest(manifest)
    mu = f", mu_eps={record.oracle.mean:.4e}" if record.oracle else ""
    logger.info(f"Stage {record.stage}: N_HF={record.n_hf}, N_LF={record.n_lf}, "
                f"CV mean={record.cv.mean():.4e}, max={record.cv.max():.4e}{mu}")


def _finish(store: CampaignStore, history: AlHistory, status: str = "complete") -> AlHistory:
    store.write_state({"status": status, "last_stage": history.final.stage})
    history.status = status
    return history


def _open_store(store: CampaignStore, config: CampaignConfig, manifest: RunManifest,
                resume: bool) -> Optional[int]:
    """
    Prepare the campaign directory.

    Returns:
        The last committed stage when resuming, else None
    """
    if not store.exists():
        store.ensure()
        store.write_config(config.to_flat_text())
        store.write_manifest(manifest)
        return None
    if not resume:
        raise InvalidConfigurationError(
            f"{store.root} already holds a campaign; pass --resume or choose another output directory",
            key="output_dir")
    stored = store.read_manifest()
    stored.verify(manifest)
    last = int(store.read_state().get("last_stage", -1))
    store.discard_after(last)
    manifest.created = stored.created
    return last


def _pilot(problem: Problem, config: CampaignConfig) -> CampaignData:
    n_s = problem.space.dim
    parent = latin_hypercube(config.pilot.n_lf, n_s, make_rng(config.seed, "lhs"))
    paired = maximin_subset(parent, config.pilot.n_delta)
    lf_xi = np.array(parent.points)
    hf_xi = lf_xi[paired]
    logger.info(f"Pilot: {lf_xi.shape[0]} LF runs, {hf_xi.shape[0]} paired HF runs")
    lf_values = problem.lf(problem.space.from_unit(lf_xi))
    hf_values = problem.hf(problem.space.from_unit(hf_xi))
    data = CampaignData.empty(problem.grid, problem.space, (BUILTIN_QOI,))
    return data.append(0, lf_xi, {BUILTIN_QOI: lf_values}, hf_xi, {BUILTIN_QOI: hf_values})


def run_campaign(config: CampaignConfig, resume: bool = False, n_jobs: int = 1,
                 reference: Optional[ReferenceSet] = None, out: Optional[PathLike] = None) -> AlHistory:
    """
    Run (or continue) one active-learning campaign.

    Stage 0 is an LHS pilot with maximin-paired HF runs. Each further stage
    fits a GP to the previous CV errors, acquires ``batch_size`` points by
    the configured policy, runs both fidelities there, rebuilds the
    surrogate and recomputes CV errors. Every stage is committed atomically.

    Args:
        config: Validated campaign configuration
        resume: Continue an existing campaign directory
        n_jobs: Concurrent model evaluations and CV folds
        reference: Precomputed oracle reference (shared across replicates)
        out: Campaign directory (defaults to ``config.output_dir``)

    Returns:
        AlHistory of every committed stage

    Raises:
        ModelEvaluationError: A forward model failed; committed stages stay resumable
    """
    log_operation(logger, "run_campaign", {"problem": config.problem, "policy": config.acquisition.policy,
                                           "budget": config.budget, "q": config.batch_size, "seed": config.seed})
    store = CampaignStore(out or config.output_dir)
    if config.problem == "external":
        return _run_external(config, store, n_jobs)

    problem = get_problem(config, n_jobs=n_jobs)
    manifest = RunManifest(config_hash=config.config_hash())
    last = _open_store(store, config, manifest, resume)
    settings = build_settings(config)
    policy = config.acquisition.policy

    if last is None or last < 0:
        write_problem(store, config.problem, problem.grid, problem.space, (BUILTIN_QOI,))
        history = AlHistory(problem=problem.name, policy=policy, seed=config.seed)
        if reference is None:
            reference = build_oracle_reference(problem, config)
        started = time.perf_counter()
        try:
            data = _pilot(problem, config)
        except ModelEvaluationError:
            store.write_state({"status": "failed", "last_stage": -1})
            raise
        surrogates = build_surrogates(data, settings)
        cv = stage_cv(data, config, settings, 0, n_jobs)
        record = StageRecord(stage=0, n_lf=data.n_lf, n_hf=data.n_hf, cv=cv,
                             oracle=oracle_error(surrogates, reference),
                             wall_clock=time.perf_counter() - started)
        _commit_stage(store, data, record, history, surrogates, manifest)
    else:
        history, _ = load_history(store, problem.space, problem.name, policy, config.seed)
        if store.read_state().get("status") == "complete":
            logger.info(f"Campaign in {store.root} is already complete")
            history.status = "complete"
            return history
        logger.info(f"Resuming {store.root} after stage {last}")
        data = load_campaign_data(store)
        surrogates = build_surrogates(data, settings)
        if reference is None:
            reference = build_oracle_reference(problem, config)

    q = config.batch_size
    while may_continue(data.n_hf, q, config.budget, config.loop_guard):
        stage = history.final.stage + 1
        started = time.perf_counter()
        result, gp = select_batch(config, data, history.final.cv, stage)
        theta = problem.space.from_unit(result.points)
        try:
            hf_new = problem.hf(theta)
            lf_new = problem.lf(theta)
        except ModelEvaluationError:
            logger.error(f"Stage {stage} aborted; rerun with --resume to retry it")
            store.write_state({"status": "failed", "last_stage": stage - 1})
            raise
        pre = pre_incorporation_errors(surrogates, result.points, {BUILTIN_QOI: hf_new})
        data = data.append(stage, result.points, {BUILTIN_QOI: lf_new}, result.points, {BUILTIN_QOI: hf_new})
        surrogates = build_surrogates(data, settings)
        cv = stage_cv(data, config, settings, stage, n_jobs)
        record = StageRecord(stage=stage, n_lf=data.n_lf, n_hf=data.n_hf, cv=cv, gp=gp, acquisition=result,
                             pre_errors=pre, oracle=oracle_error(surrogates, reference),
                             wall_clock=time.perf_counter() - started)
        _commit_stage(store, data, record, history, surrogates, manifest)

    logger.info(f"Campaign finished after stage {history.final.stage} with {data.n_hf} HF runs")
    return _finish(store, history)


def _bundle_prefix_matches(bundle: Bundle, data: CampaignData) -> bool:
    lf, hf = bundle.lf_xi, bundle.hf_xi
    return (lf.shape[0] >= data.n_lf and hf.shape[0] >= data.n_hf
            and np.array_equal(lf[:data.n_lf], data.lf_design) and np.array_equal(hf[:data.n_hf], data.hf_design))


def _pending_acquisition(store: CampaignStore, data: CampaignData) -> Tuple[Optional[AcquisitionResult],
                                                                           Optional[Dict[str, float]]]:
    path = store.root / PROPOSALS_FILE
    if not path.is_file():
        return None, None
    result, _ = acquisition_from_frame(read_table(path), data.space)
    gp = None
    if (store.root / PROPOSALS_GP_FILE).is_file():
        table = read_table(store.root / PROPOSALS_GP_FILE)
        gp = dict(zip(table["key"].astype(str), table["value"].astype(float)))
    return result, gp


def _propose(store: CampaignStore, config: CampaignConfig, data: CampaignData, cv: CvErrors, stage: int) -> None:
    result, gp = select_batch(config, data, cv, stage)
    write_table(store.root / PROPOSALS_FILE, acquisition_frame(stage, result, data.space, np.zeros(0)))
    if gp is not None:
        write_table(store.root / PROPOSALS_GP_FILE, pd.DataFrame({"key": list(gp), "value": list(gp.values())}))
    else:
        (store.root / PROPOSALS_GP_FILE).unlink(missing_ok=True)
    logger.info(f"Proposed {result.q} point(s) for stage {stage} in {store.root / PROPOSALS_FILE}")


def _run_external(config: CampaignConfig, store: CampaignStore, n_jobs: int) -> AlHistory:
    """
    Ask/tell loop over an ingested bundle.

    Each call absorbs bundle runs not yet in the campaign as the next stage,
    then writes the next batch of proposals or marks the campaign complete.
    """
    bundle = load_bundle(config.bundle)
    manifest = RunManifest(config_hash=config.config_hash())
    settings = build_settings(config)
    policy = config.acquisition.policy
    if store.exists():
        stored = store.read_manifest()
        stored.verify(RunManifest(config_hash=manifest.config_hash))
        manifest.created = stored.created
        store.discard_after(int(store.read_state().get("last_stage", -1)))
    else:
        store.ensure()
        store.write_config(config.to_flat_text())
        write_problem(store, "external", bundle.grid, bundle.space, bundle.qois)
    _, grid, space, qois = read_problem(store)
    if not grid.matches(bundle.grid) or space != bundle.space or qois != bundle.qois:
        raise IncompatibleGridsError("The bundle no longer matches the campaign's grid, parameters or QoIs")

    history, _ = load_history(store, space, "external", policy, config.seed)
    data = load_campaign_data(store) if history.records else CampaignData.empty(grid, space, qois)
    if not _bundle_prefix_matches(bundle, data):
        raise DataError("The bundle's existing runs differ from those already in the campaign")

    lf_new, hf_new = bundle.lf_xi[data.n_lf:], bundle.hf_xi[data.n_hf:]
    if lf_new.shape[0] == 0 and hf_new.shape[0] == 0:
        if not history.records:
            raise InsufficientDataError("The bundle holds no runs")
        logger.info("No new runs in the bundle; proposals are still pending")
        return history

    started = time.perf_counter()
    stage = history.final.stage + 1 if history.records else 0
    acquisition, gp, pre = None, None, np.zeros(0)
    if stage > 0:
        surrogates = build_surrogates(data, settings)
        pre = pre_incorporation_errors(surrogates, hf_new,
                                       {q: bundle.hf_values[q][:, data.n_hf:] for q in qois})
        acquisition, gp = _pending_acquisition(store, data)
    data = data.append(stage, lf_new, {q: bundle.lf_values[q][:, data.n_lf:] for q in qois},
                       hf_new, {q: bundle.hf_values[q][:, data.n_hf:] for q in qois})
    surrogates = build_surrogates(data, settings)
    cv = stage_cv(data, config, settings, stage, n_jobs)
    record = StageRecord(stage=stage, n_lf=data.n_lf, n_hf=data.n_hf, cv=cv, gp=gp, acquisition=acquisition,
                         pre_errors=pre, wall_clock=time.perf_counter() - started)
    manifest.input_digests["bundle"] = bundle_digest(config.bundle)
    _commit_stage(store, data, record, history, surrogates, manifest)

    if may_continue(data.n_hf, config.batch_size, config.budget, config.loop_guard):
        _propose(store, config, data, cv, stage + 1)
        return _finish(store, history, status="awaiting_evaluations")
    (store.root / PROPOSALS_FILE).unlink(missing_ok=True)
    (store.root / PROPOSALS_GP_FILE).unlink(missing_ok=True)
    return _finish(store, history)


def _replicate(config: CampaignConfig, policy: str, index: int, root: Path,
               reference: Optional[ReferenceSet]) -> Tuple[str, int, int, Optional[pd.DataFrame], str]:
    seed = derive_seed(config.seed, "replicate", index)
    out = root / policy / f"replicate_{index:03d}"
    run_config = config.with_updates(**{"seed": seed, "output_dir": str(out), "replicates": 1,
                                        "acquisition.policy": policy})
    try:
        history = run_campaign(run_config, resume=True, n_jobs=1, reference=reference, out=out)
    except BifikleError as e:
        logger.error(f"Replicate {index} ({policy}) failed: {e}")
        return policy, index, seed, None, str(e)
    return policy, index, seed, history.metrics_frame(), ""


def aggregate_replicates(frames: Sequence[Tuple[str, int, Optional[pd.DataFrame]]], replicates: int,
                         metric: str = "mu_eps") -> pd.DataFrame:
    """
    Per policy and stage: mean, spread and range of ``metric`` over completed replicates.

    ``complete`` is true when every replicate contributed to the stage.
    """
    rows = []
    tables = [(policy, frame) for policy, _, frame in frames if frame is not None]
    policies = list(dict.fromkeys(policy for policy, _, _ in frames))
    for policy in policies:
        stacked = [frame for p, frame in tables if p == policy]
        if not stacked:
            continue
        combined = pd.concat(stacked, ignore_index=True)
        for stage, group in combined.groupby("stage", sort=True):
            values = group[metric].to_numpy(dtype=float)
            values = values[np.isfinite(values)]
            n = int(values.size)
            rows.append({
                "policy": policy,
                "stage": int(stage),
                "n_completed": n,
                "mean": float(np.mean(values)) if n else float("nan"),
                "std": float(np.std(values, ddof=1)) if n > 1 else (0.0 if n else float("nan")),
                "min": float(np.min(values)) if n else float("nan"),
                "max": float(np.max(values)) if n else float("nan"),
                "complete": n == replicates,
            })
    return pd.DataFrame(rows, columns=["policy", "stage", "n_completed", "mean", "std", "min", "max", "complete"])


def run_replicates(config: CampaignConfig, replicates: Optional[int] = None,
                   policies: Optional[Sequence[str]] = None, n_jobs: int = 1,
                   out: Optional[PathLike] = None) -> pd.DataFrame:
    """
    Run ``replicates`` campaigns per policy with derived seeds and aggregate their integrated errors.

    Replicate r uses the same derived seed under every policy. Results go to
    ``replicates.csv`` and ``replicate_status.csv`` under the output root.
    """
    count = replicates or config.replicates
    policies = list(policies or [config.acquisition.policy])
    root = Path(out or config.output_dir)
    log_operation(logger, "run_replicates", {"replicates": count, "policies": policies, "root": str(root)})
    if config.problem == "external":
        raise InvalidConfigurationError("Replicates need a built-in problem", key="problem")
    reference = build_oracle_reference(get_problem(config, n_jobs=n_jobs), config)
    jobs = [(policy, r) for policy in policies for r in range(count)]
    results = Parallel(n_jobs=max(1, min(n_jobs, len(jobs))))(
        delayed(_replicate)(config, policy, r, root, reference) for policy, r in jobs
    )
    status = pd.DataFrame([{"policy": p, "replicate": r, "seed": s, "status": "ok" if frame is not None else "failed",
                            "stages": 0 if frame is None else len(frame), "error": error}
                           for p, r, s, frame, error in results])
    aggregated = aggregate_replicates([(p, r, frame) for p, r, _, frame, _ in results], count)
    write_table(root / "replicates.csv", aggregated)
    write_table(root / "replicate_status.csv", status)
    failed = int((status["status"] == "failed").sum())
    if failed:
        logger.warning(f"{failed} of {len(jobs)} replicate campaigns failed; aggregates cover the rest")
    return aggregated


def _campaign_label(store: CampaignStore, fallback: str) -> str:
    try:
        return parse_campaign_config(store.read_config_text()).acquisition.policy
    except BifikleError:
        return fallback


def _load_surrogates(store: CampaignStore, data: CampaignData) -> Dict[str, BifidelitySurrogate]:
    try:
        return {q: store.load_surrogate(q) for q in data.qois}
    except BifikleError as e:
        logger.warning(f"Rebuilding the surrogate of {store.root}: {e}")
        config = parse_campaign_config(store.read_config_text())
        return build_surrogates(data, build_settings(config))


def _overlaps(points: np.ndarray, others: np.ndarray, atol: float = 1e-12) -> np.ndarray:
    if others.shape[0] == 0 or points.shape[0] == 0:
        return np.zeros(points.shape[0], dtype=bool)
    return np.array([np.any(np.all(np.abs(others - p) <= atol, axis=1)) for p in points])


def cross_policy_test(dir_a: PathLike, dir_b: PathLike, out: Optional[PathLike] = None,
                      labels: Optional[Tuple[str, str]] = None) -> Tuple[pd.DataFrame, Dict[str, int]]:
    """
    Evaluate each campaign's final surrogate at the other campaign's acquired HF points.

    Points present in the evaluated campaign's own HF design are excluded and counted.

    Returns:
        (per-point error table, excluded count per evaluated surrogate)
    """
    store_a, store_b = CampaignStore(dir_a), CampaignStore(dir_b)
    data_a, data_b = load_campaign_data(store_a), load_campaign_data(store_b)
    if not data_a.grid.matches(data_b.grid) or data_a.space != data_b.space or data_a.qois != data_b.qois:
        raise IncompatibleGridsError("Cross-policy tests need campaigns on the same problem and bounds")
    if labels is None:
        labels = (_campaign_label(store_a, "A"), _campaign_label(store_b, "B"))
        if labels[0] == labels[1]:
            labels = ("A", "B")
    sides = [(labels[0], store_a, data_a, labels[1], data_b), (labels[1], store_b, data_b, labels[0], data_a)]
    frames, excluded = [], {}
    for name, store, own, source, test in sides:
        surrogates = _load_surrogates(store, own)
        acquired = test.hf_stage > 0
        xi = test.hf_design[acquired]
        overlap = _overlaps(xi, own.hf_design)
        excluded[name] = int(np.sum(overlap))
        keep = ~overlap
        xi = xi[keep]
        if xi.shape[0] == 0:
            continue
        errors = np.mean(np.vstack([
            np.atleast_1d(relative_error(test.hf_values[q][:, acquired][:, keep],
                                         surrogates[q].predict_unit_many(xi), own.grid.weights))
            for q in own.qois
        ]), axis=0)
        frame = pd.DataFrame({"surrogate": name, "test_source": source,
                              "point": np.flatnonzero(acquired)[keep]})
        theta = own.space.from_unit(xi)
        for i, param in enumerate(own.space.names):
            frame[param] = theta[:, i]
        frame["error"] = errors
        frames.append(frame)
    columns = ["surrogate", "test_source", "point", *data_a.space.names, "error"]
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    target = Path(out) if out is not None else store_a.root / "cross_policy.csv"
    write_table(target, table[columns])
    logger.info(f"Cross-policy test: {len(table)} points evaluated, excluded {excluded}")
    return table[columns], excluded
