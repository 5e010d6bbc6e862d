"""Plot-ready data files for a campaign directory."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from ..config.campaign import CampaignConfig, parse_campaign_config
from ..core.exceptions import BifikleError, InsufficientDataError
from ..core.logging_config import get_logger
from ..core.utils import log_operation, make_rng
from ..numerics.grid import Field, Grid
from ..problems.registry import get_problem
from ..surrogates.bifidelity import build_single_fidelity, correlation_field, propagate_uq
from .driver import build_settings, build_surrogates
from .history import AlHistory, load_history
from .state import CampaignData, load_campaign_data, read_problem
from .store import CampaignStore, read_table, write_table

logger = get_logger(__name__)

PathLike = Union[str, Path]
HISTOGRAM_BINS = 20


@dataclass
class ReportFiles:
    """Paths written by :func:`write_report` and the stages that could not be read."""
    files: Dict[str, Path] = field(default_factory=dict)
    corrupt_stages: List[int] = field(default_factory=list)


def _coordinate_frame(grid: Grid) -> pd.DataFrame:
    names = ["x", "y", "z"][:grid.dim]
    frame = pd.DataFrame({"point": np.arange(grid.n_points)})
    for i, name in enumerate(names):
        frame[name] = grid.coordinates[:, i]
    return frame


def error_vs_stage(history: AlHistory, corrupt: List[int]) -> pd.DataFrame:
    frame = history.metrics_frame()
    frame["status"] = "ok"
    if corrupt:
        missing = pd.DataFrame({"stage": corrupt, "status": "corrupt"})
        frame = pd.concat([frame, missing], ignore_index=True).sort_values("stage", kind="stable")
    return frame.reset_index(drop=True)


def cv_heatmap(history: AlHistory, data: CampaignData) -> pd.DataFrame:
    """
    One row per paired point in acquisition order, one column per stage.

    Cells hold that stage's stored CV error of the point and stay blank
    before the point was acquired. ``pre_error`` is the error of the
    surrogate that had not yet seen the point.
    """
    frame = pd.DataFrame({"point": np.arange(data.n_hf), "stage_acquired": data.hf_stage})
    theta = data.space.from_unit(data.hf_design) if data.n_hf else np.zeros((0, data.space.dim))
    for i, name in enumerate(data.space.names):
        frame[name] = theta[:, i]
    pre = np.full(data.n_hf, np.nan)
    for record in history.records:
        column = np.full(data.n_hf, np.nan)
        n = min(record.cv.errors.size, data.n_hf)
        column[:n] = record.cv.errors[:n]
        frame[f"stage_{record.stage:03d}"] = column
        if record.acquisition is not None and record.pre_errors.size:
            rows = np.flatnonzero(data.hf_stage == record.stage)
            count = min(rows.size, record.pre_errors.size)
            pre[rows[:count]] = record.pre_errors[:count]
    frame["pre_error"] = pre
    return frame


def _histogram(source: str, values: np.ndarray, bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    values = values[np.isfinite(values)]
    if values.size == 0:
        return pd.DataFrame(columns=["source", "bin_lo", "bin_hi", "count"])
    counts, edges = np.histogram(values, bins=bins)
    return pd.DataFrame({"source": source, "bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})


def histogram_table(history: AlHistory, root: Path) -> pd.DataFrame:
    """Histograms of the final CV errors and of any cross-policy test errors."""
    parts = [_histogram("cv_final", history.final.cv.errors)]
    cross = root / "cross_policy.csv"
    if cross.is_file():
        table = read_table(cross)
        for name, group in table.groupby("surrogate", sort=True):
            parts.append(_histogram(f"cross_{name}", group["error"].to_numpy(dtype=float)))
    return pd.concat(parts, ignore_index=True)


def _band_rows(qoi: str, name: str, mean: Field, std: Field, coordinates: pd.DataFrame) -> pd.DataFrame:
    frame = coordinates.copy()
    frame.insert(0, "surrogate", name)
    frame.insert(0, "qoi", qoi)
    frame["mean"] = mean.values
    frame["std"] = std.values
    frame["lower"] = mean.values - std.values
    frame["upper"] = mean.values + std.values
    return frame


def uq_bands(config: CampaignConfig, data: CampaignData, surrogates, problem_name: str) -> pd.DataFrame:
    """
    Monte-Carlo mean and mean +/- std per grid point for each surrogate.

    Surrogates: ``bf`` (bifidelity), ``lf_kle`` (its LF component),
    ``hf_kle`` (single-fidelity on the paired HF runs) and, for the pulse
    problems, ``hf_mc`` (the HF model itself at the same draws).
    """
    m, seed = config.uq.samples, config.uq.seed
    settings = build_settings(config)
    coordinates = _coordinate_frame(data.grid)
    parts = []
    for qoi in data.qois:
        surrogate = surrogates[qoi]
        candidates = {"bf": surrogate, "lf_kle": surrogate.lf}
        paired_hf, _ = data.paired(qoi)
        try:
            candidates["hf_kle"] = build_single_fidelity(paired_hf, data.space, settings)
        except BifikleError as e:
            logger.warning(f"No HF-only KLE band for {qoi}: {e}")
        for name, model in candidates.items():
            mean, std = propagate_uq(model, m, seed)
            parts.append(_band_rows(qoi, name, mean, std, coordinates))
        if problem_name in ("pulse_c1", "pulse_c2"):
            problem = get_problem(config)
            xi = make_rng(seed, "uq").uniform(-1.0, 1.0, size=(m, data.space.dim))
            values = problem.hf(problem.space.from_unit(xi))
            mean = Field(data.grid, values.mean(axis=1))
            std = Field(data.grid, values.std(axis=1, ddof=1))
            parts.append(_band_rows(qoi, "hf_mc", mean, std, coordinates))
    return pd.concat(parts, ignore_index=True)


def correlation_table(data: CampaignData) -> pd.DataFrame:
    """Pointwise LF/HF correlation over the paired runs."""
    coordinates = _coordinate_frame(data.grid)
    parts = []
    for qoi in data.qois:
        paired_hf, paired_lf = data.paired(qoi)
        frame = coordinates.copy()
        frame.insert(0, "qoi", qoi)
        frame["correlation"] = correlation_field(paired_lf, paired_hf)
        parts.append(frame)
    return pd.concat(parts, ignore_index=True)


def _surrogates(store: CampaignStore, config: CampaignConfig, data: CampaignData):
    try:
        return {q: store.load_surrogate(q) for q in data.qois}
    except BifikleError as e:
        logger.warning(f"Stored surrogate unusable ({e}); rebuilding from the campaign data")
        return build_surrogates(data, build_settings(config))


def write_report(campaign_dir: PathLike, out: Optional[PathLike] = None) -> ReportFiles:
    """
    Write error_vs_stage.csv, cv_heatmap.csv, test_histogram.csv, uq_bands.csv and correlation.csv.

    Unreadable stages are skipped and listed as ``corrupt`` in error_vs_stage.csv.
    """
    store = CampaignStore(campaign_dir)
    target = Path(out) if out is not None else store.root / "report"
    log_operation(logger, "write_report", {"campaign": str(store.root), "out": str(target)})
    config = parse_campaign_config(store.read_config_text())
    problem_name, _, space, _ = read_problem(store)
    history, corrupt = load_history(store, space, problem_name, config.acquisition.policy, config.seed,
                                    skip_corrupt=True)
    if not history.records:
        raise InsufficientDataError(f"{store.root} has no readable stages")
    try:
        data = load_campaign_data(store, up_to=history.final.stage)
    except BifikleError as e:
        if not corrupt:
            raise
        logger.warning(f"Campaign data unreadable past stage {min(corrupt) - 1}: {e}")
        data = load_campaign_data(store, up_to=min(corrupt) - 1)
    report = ReportFiles(corrupt_stages=corrupt)

    report.files["error_vs_stage"] = write_table(target / "error_vs_stage.csv", error_vs_stage(history, corrupt))
    report.files["cv_heatmap"] = write_table(target / "cv_heatmap.csv", cv_heatmap(history, data))
    report.files["test_histogram"] = write_table(target / "test_histogram.csv", histogram_table(history, store.root))
    surrogates = _surrogates(store, config, data)
    report.files["uq_bands"] = write_table(target / "uq_bands.csv", uq_bands(config, data, surrogates, problem_name))
    if data.n_hf >= 3:
        report.files["correlation"] = write_table(target / "correlation.csv", correlation_table(data))
    else:
        logger.warning("Fewer than 3 paired runs; correlation.csv not written")
    if corrupt:
        logger.warning(f"Report skipped corrupt stages {corrupt}")
    logger.info(f"Report written to {target}")
    return report
