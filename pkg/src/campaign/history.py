"""Per-stage records of an active-learning campaign and their on-disk form."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..core.exceptions import BifikleError, DataError
from ..core.logging_config import get_logger
from ..numerics.acquisition import AcquisitionResult
from ..numerics.design import ParameterSpace
from ..numerics.gpr import GpModel
from ..surrogates.crossval import CvErrors, OracleError
from .store import CampaignStore, design_frame, read_meta, read_table, write_meta, write_table

logger = get_logger(__name__)

METRIC_COLUMNS = ["stage", "n_hf", "n_lf", "n_acquired", "mu_eps", "std_error", "oracle_skipped",
                  "oracle_flagged", "cv_mean", "cv_max", "cv_skipped", "fallbacks", "wall_clock"]


@dataclass
class StageRecord:
    """
    What happened at one stage.

    ``cv`` holds the post-rebuild CV errors of every paired sample;
    ``acquisition`` and ``gp`` describe how this stage's new points were chosen
    (absent at the pilot stage) and ``pre_errors`` the errors of the previous
    surrogate at those points.
    """
    stage: int
    n_lf: int
    n_hf: int
    cv: CvErrors
    gp: Optional[Dict[str, float]] = None
    acquisition: Optional[AcquisitionResult] = None
    pre_errors: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    oracle: Optional[OracleError] = None
    wall_clock: float = 0.0

    @property
    def n_acquired(self) -> int:
        return 0 if self.acquisition is None else self.acquisition.q

    def metrics(self) -> Dict[str, Any]:
        oracle = self.oracle
        return {
            "stage": self.stage,
            "n_hf": self.n_hf,
            "n_lf": self.n_lf,
            "n_acquired": self.n_acquired,
            "mu_eps": oracle.mean if oracle else float("nan"),
            "std_error": oracle.std_error if oracle else float("nan"),
            "oracle_skipped": oracle.n_skipped if oracle else 0,
            "oracle_flagged": bool(oracle.flagged) if oracle else False,
            "cv_mean": self.cv.mean(),
            "cv_max": self.cv.max(),
            "cv_skipped": self.cv.n_skipped,
            "fallbacks": int(np.sum(self.acquisition.fallback)) if self.acquisition is not None else 0,
            "wall_clock": self.wall_clock,
        }


@dataclass
class AlHistory:
    """Ordered stage records of one campaign."""
    problem: str
    policy: str
    seed: int
    records: List[StageRecord] = field(default_factory=list)
    status: str = "running"

    def append(self, record: StageRecord) -> None:
        if self.records and record.stage != self.records[-1].stage + 1:
            raise DataError(f"Stage {record.stage} does not follow stage {self.records[-1].stage}")
        if self.records and record.n_hf < self.records[-1].n_hf:
            raise DataError(f"HF count decreased at stage {record.stage}")
        self.records.append(record)

    @property
    def stages(self) -> List[int]:
        return [r.stage for r in self.records]

    @property
    def final(self) -> StageRecord:
        if not self.records:
            raise DataError("Campaign history is empty")
        return self.records[-1]

    def metrics_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.metrics() for r in self.records], columns=METRIC_COLUMNS)


def gp_entries(model: GpModel) -> Dict[str, float]:
    entries = {"signal_variance": model.hyper.signal_variance, "nugget": model.hyper.nugget,
               "log_likelihood": model.log_likelihood, "shift": model.shift, "scale": model.scale,
               "log_targets": float(model.log_targets), "n_train": float(model.inputs.shape[0])}
    for i, length in enumerate(np.atleast_1d(model.hyper.length_scales)):
        entries[f"length_scale_{i + 1}"] = float(length)
    return entries


def cv_frame(cv: CvErrors, space: ParameterSpace) -> pd.DataFrame:
    frame = design_frame(cv.design, space, extra={"pair": np.arange(cv.errors.size), "fold": cv.folds})
    frame["error"] = cv.errors
    return frame


def acquisition_frame(stage: int, result: AcquisitionResult, space: ParameterSpace,
                      pre_errors: np.ndarray) -> pd.DataFrame:
    frame = design_frame(result.points, space, extra={"stage": np.full(result.q, stage),
                                                      "pick": np.arange(1, result.q + 1)})
    frame["policy"] = result.policy
    frame["ei"] = result.ei
    frame["eps_star"] = result.eps_star
    frame["believed"] = result.believed
    frame["fallback"] = np.asarray(result.fallback, dtype=bool)
    pre = np.full(result.q, np.nan)
    pre[:min(result.q, np.size(pre_errors))] = np.asarray(pre_errors, dtype=float)[:result.q]
    frame["pre_error"] = pre
    return frame


def write_stage_record(directory: Path, record: StageRecord, space: ParameterSpace) -> None:
    """cv_errors.csv, gp.csv, acquisition.csv and metrics.cfg of one stage."""
    write_table(directory / "cv_errors.csv", cv_frame(record.cv, space))
    if record.gp is not None:
        write_table(directory / "gp.csv", pd.DataFrame({"key": list(record.gp.keys()),
                                                        "value": list(record.gp.values())}))
    if record.acquisition is not None:
        write_table(directory / "acquisition.csv",
                    acquisition_frame(record.stage, record.acquisition, space, record.pre_errors))
    entries = record.metrics()
    entries["cv_seed"] = record.cv.seed
    entries["cv_folds"] = record.cv.k
    write_meta(directory / "metrics.cfg", entries)


def acquisition_from_frame(table: pd.DataFrame, space: ParameterSpace) -> Tuple[AcquisitionResult, np.ndarray]:
    """Inverse of :func:`acquisition_frame`; returns the batch and its pre-incorporation errors."""
    xi_columns = [f"xi_{name}" for name in space.names]
    result = AcquisitionResult(points=table[xi_columns].to_numpy(dtype=float).reshape(-1, space.dim),
                               ei=table["ei"].to_numpy(dtype=float),
                               eps_star=table["eps_star"].to_numpy(dtype=float),
                               believed=table["believed"].to_numpy(dtype=float),
                               fallback=table["fallback"].astype(bool).to_numpy(),
                               policy=str(table["policy"].iloc[0]) if len(table) else "")
    return result, table["pre_error"].to_numpy(dtype=float)


def _float(value: str) -> float:
    return float(value) if value not in ("", "nan") else float("nan")


def read_stage_record(directory: Path, space: ParameterSpace) -> StageRecord:
    """Inverse of :func:`write_stage_record` (acquisition kept as its table)."""
    meta = read_meta(directory / "metrics.cfg")
    cv_table = read_table(directory / "cv_errors.csv")
    xi_columns = [f"xi_{name}" for name in space.names]
    cv = CvErrors(errors=cv_table["error"].to_numpy(dtype=float), folds=cv_table["fold"].to_numpy(dtype=int),
                  design=cv_table[xi_columns].to_numpy(dtype=float).reshape(-1, space.dim),
                  seed=int(meta.get("cv_seed", 0)), k=int(meta.get("cv_folds", 0)))
    gp = None
    if (directory / "gp.csv").is_file():
        table = read_table(directory / "gp.csv")
        gp = dict(zip(table["key"].astype(str), table["value"].astype(float)))
    acquisition, pre_errors = None, np.zeros(0)
    if (directory / "acquisition.csv").is_file():
        acquisition, pre_errors = acquisition_from_frame(read_table(directory / "acquisition.csv"), space)
    oracle = None
    if meta.get("mu_eps", "nan") != "nan":
        oracle = OracleError(mean=_float(meta["mu_eps"]), std_error=_float(meta["std_error"]),
                             n_nodes=0, n_skipped=int(meta.get("oracle_skipped", 0)),
                             flagged=meta.get("oracle_flagged", "false") == "true")
    return StageRecord(stage=int(meta["stage"]), n_lf=int(meta["n_lf"]), n_hf=int(meta["n_hf"]), cv=cv,
                       gp=gp, acquisition=acquisition, pre_errors=pre_errors, oracle=oracle,
                       wall_clock=_float(meta.get("wall_clock", "0")))


def load_history(store: CampaignStore, space: ParameterSpace, problem: str = "", policy: str = "",
                 seed: int = 0, skip_corrupt: bool = False) -> Tuple[AlHistory, List[int]]:
    """
    Read every committed stage.

    With ``skip_corrupt`` unreadable stages are logged and listed instead of raising.

    Returns:
        (history, corrupt stage numbers)
    """
    history = AlHistory(problem=problem, policy=policy, seed=seed)
    corrupt: List[int] = []
    for stage in store.stage_numbers():
        try:
            record = read_stage_record(store.stage_dir(stage), space)
            if corrupt:
                # gaps left by corrupt stages
                history.records.append(record)
            else:
                history.append(record)
        except (BifikleError, KeyError, ValueError) as e:
            if not skip_corrupt:
                raise DataError(f"Stage {stage} of {store.root} is unreadable: {e}")
            logger.warning(f"Skipping corrupt stage {stage}: {e}")
            corrupt.append(stage)
    if store.exists():
        try:
            history.status = store.read_state().get("status", "running")
        except BifikleError:
            pass
    return history, corrupt


def write_metrics(store: CampaignStore, history: AlHistory) -> Path:
    return write_table(store.root / "metrics.csv", history.metrics_frame())
