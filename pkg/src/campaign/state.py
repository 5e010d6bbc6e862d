"""Accumulated designs and snapshots of a campaign, rebuilt from its stage directories."""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core.exceptions import PairingError, StorageError
from ..core.logging_config import get_logger
from ..numerics.design import ParameterSpace
from ..numerics.grid import Grid
from ..numerics.kle import SnapshotSet
from ..surrogates.crossval import QoiData
from .store import (
    CampaignStore,
    grid_from_meta,
    grid_meta,
    load_design,
    load_matrix,
    read_meta,
    save_design,
    save_matrix,
    space_from_meta,
    space_meta,
    write_meta,
)

logger = get_logger(__name__)

PROBLEM_FILE = "problem.cfg"


def pair_indices(lf_design: np.ndarray, hf_design: np.ndarray) -> np.ndarray:
    """
    Index of the LF run paired with each HF row.

    The latest LF row with identical coordinates wins.

    Raises:
        PairingError: If an HF row has no LF twin
    """
    pairs = np.empty(hf_design.shape[0], dtype=int)
    for i, row in enumerate(hf_design):
        matches = np.flatnonzero(np.all(lf_design == row, axis=1))
        if matches.size == 0:
            raise PairingError(f"HF design row {i} ({row.tolist()}) has no LF run at the same parameters")
        pairs[i] = matches[-1]
    return pairs


@dataclass
class CampaignData:
    """
    Every design row and snapshot gathered so far.

    Designs are normalized; ``lf_values[qoi]`` is ``n_g x N_LF`` and
    ``hf_values[qoi]`` is ``n_g x N_HF`` on the common grid.
    """
    grid: Grid
    space: ParameterSpace
    qois: Tuple[str, ...]
    lf_design: np.ndarray = field(repr=False)
    hf_design: np.ndarray = field(repr=False)
    lf_values: Dict[str, np.ndarray] = field(repr=False)
    hf_values: Dict[str, np.ndarray] = field(repr=False)
    lf_stage: np.ndarray = field(repr=False)
    hf_stage: np.ndarray = field(repr=False)
    n_pilot_lf: int = 0

    @classmethod
    def empty(cls, grid: Grid, space: ParameterSpace, qois: Sequence[str]) -> "CampaignData":
        n_g = grid.n_points
        return cls(grid=grid, space=space, qois=tuple(qois),
                   lf_design=np.zeros((0, space.dim)), hf_design=np.zeros((0, space.dim)),
                   lf_values={q: np.zeros((n_g, 0)) for q in qois},
                   hf_values={q: np.zeros((n_g, 0)) for q in qois},
                   lf_stage=np.zeros(0, dtype=int), hf_stage=np.zeros(0, dtype=int))

    @property
    def n_lf(self) -> int:
        return int(self.lf_design.shape[0])

    @property
    def n_hf(self) -> int:
        return int(self.hf_design.shape[0])

    @property
    def pairing(self) -> np.ndarray:
        return pair_indices(self.lf_design, self.hf_design)

    def lf_snaps(self, qoi: str) -> SnapshotSet:
        return SnapshotSet(self.grid, self.lf_values[qoi], self.lf_design)

    def paired(self, qoi: str) -> Tuple[SnapshotSet, SnapshotSet]:
        """(HF, LF) snapshots at the HF design rows."""
        pairs = self.pairing
        hf = SnapshotSet(self.grid, self.hf_values[qoi], self.hf_design)
        lf = SnapshotSet(self.grid, self.lf_values[qoi][:, pairs], self.lf_design[pairs])
        return hf, lf

    def qoi_data(self) -> List[QoiData]:
        data = []
        for qoi in self.qois:
            hf, lf = self.paired(qoi)
            data.append((self.lf_snaps(qoi), hf, lf))
        return data

    def append(self, stage: int, lf_design: np.ndarray, lf_values: Mapping[str, np.ndarray],
               hf_design: np.ndarray, hf_values: Mapping[str, np.ndarray]) -> "CampaignData":
        """New data object with one stage's runs appended (LF first, so new HF rows may pair with them)."""
        lf_design = np.asarray(lf_design, dtype=float).reshape(-1, self.space.dim)
        hf_design = np.asarray(hf_design, dtype=float).reshape(-1, self.space.dim)
        merged = CampaignData(
            grid=self.grid, space=self.space, qois=self.qois,
            lf_design=np.vstack([self.lf_design, lf_design]),
            hf_design=np.vstack([self.hf_design, hf_design]),
            lf_values={q: np.hstack([self.lf_values[q], np.asarray(lf_values[q]).reshape(self.grid.n_points, -1)])
                       for q in self.qois},
            hf_values={q: np.hstack([self.hf_values[q], np.asarray(hf_values[q]).reshape(self.grid.n_points, -1)])
                       for q in self.qois},
            lf_stage=np.concatenate([self.lf_stage, np.full(lf_design.shape[0], stage, dtype=int)]),
            hf_stage=np.concatenate([self.hf_stage, np.full(hf_design.shape[0], stage, dtype=int)]),
            n_pilot_lf=self.n_pilot_lf if stage > 0 else self.n_lf + lf_design.shape[0],
        )
        pair_indices(merged.lf_design, merged.hf_design)
        return merged

    def stage_slice(self, stage: int) -> "CampaignData":
        """Only the runs added at ``stage``."""
        lf = self.lf_stage == stage
        hf = self.hf_stage == stage
        return CampaignData(grid=self.grid, space=self.space, qois=self.qois,
                            lf_design=self.lf_design[lf], hf_design=self.hf_design[hf],
                            lf_values={q: v[:, lf] for q, v in self.lf_values.items()},
                            hf_values={q: v[:, hf] for q, v in self.hf_values.items()},
                            lf_stage=self.lf_stage[lf], hf_stage=self.hf_stage[hf])


def _run_columns(prefix: str, start: int, count: int) -> List[str]:
    return [f"{prefix}_{i:05d}" for i in range(start, start + count)]


def write_problem(store: CampaignStore, problem: str, grid: Grid, space: ParameterSpace,
                  qois: Sequence[str]) -> None:
    entries = {"problem": problem, "qois": list(qois)}
    entries.update(grid_meta(grid))
    entries.update(space_meta(space))
    write_meta(store.root / PROBLEM_FILE, entries)


def read_problem(store: CampaignStore) -> Tuple[str, Grid, ParameterSpace, Tuple[str, ...]]:
    meta = read_meta(store.root / PROBLEM_FILE)
    qois = tuple(q.strip() for q in meta.get("qois", "").split(",") if q.strip())
    if not qois:
        raise StorageError(f"{store.root / PROBLEM_FILE} lists no quantities of interest")
    return meta.get("problem", ""), grid_from_meta(meta), space_from_meta(meta), qois


def write_stage_data(directory, data: CampaignData, stage: int) -> None:
    """New runs of ``stage`` as design and snapshot CSVs inside a stage directory."""
    new = data.stage_slice(stage)
    lf_start = int(np.sum(data.lf_stage < stage))
    hf_start = int(np.sum(data.hf_stage < stage))
    save_design(directory / "lf_design.csv", new.lf_design, data.space,
                extra={"run": _run_columns("lf", lf_start, new.n_lf)})
    save_design(directory / "hf_design.csv", new.hf_design, data.space,
                extra={"run": _run_columns("hf", hf_start, new.n_hf)})
    for qoi in data.qois:
        if new.n_lf:
            save_matrix(directory / f"lf_snapshots_{qoi}.csv", new.lf_values[qoi],
                        _run_columns("lf", lf_start, new.n_lf))
        if new.n_hf:
            save_matrix(directory / f"hf_snapshots_{qoi}.csv", new.hf_values[qoi],
                        _run_columns("hf", hf_start, new.n_hf))


def _stage_values(directory, name: str, qoi: str, count: int, n_g: int) -> np.ndarray:
    if count == 0:
        return np.zeros((n_g, 0))
    values = load_matrix(directory / f"{name}_snapshots_{qoi}.csv").to_numpy(dtype=float)
    if values.shape != (n_g, count):
        raise StorageError(f"{directory / f'{name}_snapshots_{qoi}.csv'} holds {values.shape}, "
                           f"expected {(n_g, count)}")
    return values


def load_campaign_data(store: CampaignStore, up_to: Optional[int] = None) -> CampaignData:
    """Concatenate every committed stage (through ``up_to``) in order."""
    _, grid, space, qois = read_problem(store)
    data = CampaignData.empty(grid, space, qois)
    for stage in store.stage_numbers():
        if up_to is not None and stage > up_to:
            break
        directory = store.stage_dir(stage)
        lf_design = load_design(directory / "lf_design.csv", space)
        hf_design = load_design(directory / "hf_design.csv", space)
        lf_values = {q: _stage_values(directory, "lf", q, lf_design.shape[0], grid.n_points) for q in qois}
        hf_values = {q: _stage_values(directory, "hf", q, hf_design.shape[0], grid.n_points) for q in qois}
        data = data.append(stage, lf_design, lf_values, hf_design, hf_values)
    logger.debug(f"Loaded {data.n_lf} LF and {data.n_hf} HF runs from {store.root}")
    return data
