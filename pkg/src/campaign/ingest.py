"""Validation of externally produced snapshots into normalized campaign bundles."""

import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..core.exceptions import BifikleError, IngestionError
from ..core.logging_config import get_logger
from ..core.utils import log_operation
from ..numerics.design import ParameterSpace
from ..numerics.grid import Grid
from ..problems.registry import Fidelity, Problem
from .store import (
    directory_digest,
    grid_from_meta,
    grid_meta,
    read_meta,
    read_table,
    save_matrix,
    space_from_meta,
    space_meta,
    write_meta,
    write_table,
)

logger = get_logger(__name__)

PathLike = Union[str, Path]
BUNDLE_FILE = "bundle.cfg"
BUNDLE_FORMAT_VERSION = 1
DEFAULT_QOI = "field"
# Header is line 1 of every CSV
_FIRST_DATA_LINE = 2


@dataclass
class Bundle:
    """
    Validated runs of an external problem.

    ``lf_theta``/``hf_theta`` are physical rows; every HF row has an LF twin.
    """
    grid: Grid
    space: ParameterSpace
    qois: Tuple[str, ...]
    lf_theta: np.ndarray = field(repr=False)
    hf_theta: np.ndarray = field(repr=False)
    lf_values: Dict[str, np.ndarray] = field(repr=False)
    hf_values: Dict[str, np.ndarray] = field(repr=False)

    @property
    def n_lf(self) -> int:
        return int(self.lf_theta.shape[0])

    @property
    def n_hf(self) -> int:
        return int(self.hf_theta.shape[0])

    @property
    def lf_xi(self) -> np.ndarray:
        return self.space.to_unit(self.lf_theta) if self.n_lf else np.zeros((0, self.space.dim))

    @property
    def hf_xi(self) -> np.ndarray:
        return self.space.to_unit(self.hf_theta) if self.n_hf else np.zeros((0, self.space.dim))

    def extend(self, other: "Bundle") -> "Bundle":
        if not self.grid.matches(other.grid) or self.space != other.space or self.qois != other.qois:
            raise IngestionError("New runs do not share the bundle's grid, parameters or quantities of interest")
        return Bundle(grid=self.grid, space=self.space, qois=self.qois,
                      lf_theta=np.vstack([self.lf_theta, other.lf_theta]),
                      hf_theta=np.vstack([self.hf_theta, other.hf_theta]),
                      lf_values={q: np.hstack([self.lf_values[q], other.lf_values[q]]) for q in self.qois},
                      hf_values={q: np.hstack([self.hf_values[q], other.hf_values[q]]) for q in self.qois})


def _file_columns(columns: Sequence[str]) -> Dict[str, str]:
    qoi_columns = {c[len("qoi_"):]: c for c in columns if c.startswith("qoi_")}
    if qoi_columns:
        return dict(sorted(qoi_columns.items()))
    if "file" in columns:
        return {DEFAULT_QOI: "file"}
    return {}


def read_snapshot(path: Path, n_g: int) -> np.ndarray:
    """
    Read one snapshot CSV with a ``value`` column.

    Raises:
        IngestionError: On a missing file, wrong row count or non-finite entry
    """
    if not path.is_file():
        raise IngestionError("Snapshot file not found", path=str(path))
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise IngestionError(f"Unreadable snapshot: {e}", path=str(path))
    if "value" not in frame.columns:
        raise IngestionError("Snapshot has no 'value' column", path=str(path))
    values = pd.to_numeric(frame["value"], errors="coerce").to_numpy(dtype=float)
    if values.size != n_g:
        raise IngestionError(f"Snapshot has {values.size} rows but the grid has {n_g} points", path=str(path))
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise IngestionError("Non-finite snapshot value", path=str(path), row=int(bad[0]) + _FIRST_DATA_LINE)
    return values


def _same_row(rows: np.ndarray, row: np.ndarray) -> np.ndarray:
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return np.all(rows == row, axis=1)


def read_runs(design_csv: PathLike, grid: Grid, space: ParameterSpace,
              existing: Optional[Bundle] = None, base_dir: Optional[PathLike] = None) -> Bundle:
    """
    Read a run table and its snapshot files.

    The table has a ``fidelity`` column (``lf`` or ``hf``), one column per
    parameter name, and either a ``file`` column or one ``qoi_<name>`` column
    per quantity of interest. File paths are relative to ``base_dir``
    (default: the table's directory). Rows are checked against ``existing``
    runs for duplicates and HF/LF pairing.

    Raises:
        IngestionError: Naming the file and line of the first problem
    """
    design_csv = Path(design_csv)
    base = Path(base_dir) if base_dir is not None else design_csv.parent
    try:
        table = pd.read_csv(design_csv, float_precision="round_trip", dtype={"fidelity": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise IngestionError(f"Unreadable design table: {e}", path=str(design_csv))
    missing = [c for c in ("fidelity",) + tuple(space.names) if c not in table.columns]
    if missing:
        raise IngestionError(f"Design table lacks columns {missing}", path=str(design_csv))
    files = _file_columns(list(table.columns))
    if not files:
        raise IngestionError("Design table needs a 'file' column or 'qoi_<name>' columns", path=str(design_csv))
    qois = tuple(files.keys())
    if existing is not None and existing.qois != qois:
        raise IngestionError(f"Quantities {list(qois)} differ from the bundle's {list(existing.qois)}",
                             path=str(design_csv))

    lf_rows: List[np.ndarray] = []
    hf_rows: List[np.ndarray] = []
    lf_values: Dict[str, List[np.ndarray]] = {q: [] for q in qois}
    hf_values: Dict[str, List[np.ndarray]] = {q: [] for q in qois}
    known_lf = existing.lf_theta if existing is not None else np.zeros((0, space.dim))
    known_hf = existing.hf_theta if existing is not None else np.zeros((0, space.dim))
    pending_hf: List[Tuple[int, np.ndarray]] = []

    for i in range(len(table)):
        line = i + _FIRST_DATA_LINE
        row = table.iloc[i]
        fidelity = str(row["fidelity"]).strip().lower()
        if fidelity not in ("lf", "hf"):
            raise IngestionError(f"Unknown fidelity '{row['fidelity']}'", path=str(design_csv), row=line)
        theta = pd.to_numeric(row[list(space.names)], errors="coerce").to_numpy(dtype=float)
        try:
            space.check_physical(theta)
        except BifikleError as e:
            raise IngestionError(f"Invalid parameters: {e}", path=str(design_csv), row=line)
        same = known_lf if fidelity == "lf" else known_hf
        batch = np.array(lf_rows if fidelity == "lf" else hf_rows).reshape(-1, space.dim)
        if np.any(_same_row(same, theta)) or np.any(_same_row(batch, theta)):
            raise IngestionError(f"Duplicate {fidelity.upper()} design row", path=str(design_csv), row=line)
        for qoi, column in files.items():
            values = read_snapshot(base / str(row[column]), grid.n_points)
            (lf_values if fidelity == "lf" else hf_values)[qoi].append(values)
        if fidelity == "lf":
            lf_rows.append(theta)
        else:
            hf_rows.append(theta)
            pending_hf.append((line, theta))

    all_lf = np.vstack([known_lf] + [r[None, :] for r in lf_rows])
    for line, theta in pending_hf:
        if not np.any(_same_row(all_lf, theta)):
            raise IngestionError("HF run has no LF run at the same parameters", path=str(design_csv), row=line)

    def _matrix(columns: List[np.ndarray]) -> np.ndarray:
        return np.column_stack(columns) if columns else np.zeros((grid.n_points, 0))

    return Bundle(grid=grid, space=space, qois=qois,
                  lf_theta=np.array(lf_rows).reshape(-1, space.dim),
                  hf_theta=np.array(hf_rows).reshape(-1, space.dim),
                  lf_values={q: _matrix(v) for q, v in lf_values.items()},
                  hf_values={q: _matrix(v) for q, v in hf_values.items()})


def read_grid_meta(meta_path: PathLike) -> Tuple[Grid, ParameterSpace]:
    """Grid (``grid.*``) and parameter bounds (``params.*``) from a flat metadata file."""
    meta_path = Path(meta_path)
    try:
        meta = read_meta(meta_path)
        return grid_from_meta(meta), space_from_meta(meta)
    except BifikleError as e:
        raise IngestionError(f"Invalid grid metadata: {e}", path=str(meta_path))


def _theta_frame(theta: np.ndarray, space: ParameterSpace, prefix: str) -> pd.DataFrame:
    xi = space.to_unit(theta) if theta.shape[0] else np.zeros((0, space.dim))
    data: Dict[str, object] = {"run": [f"{prefix}_{i:05d}" for i in range(theta.shape[0])]}
    for i, name in enumerate(space.names):
        data[name] = theta[:, i]
    for i, name in enumerate(space.names):
        data[f"xi_{name}"] = xi[:, i]
    return pd.DataFrame(data)


def write_bundle(bundle: Bundle, out_dir: PathLike) -> Path:
    """
    Write ``bundle.cfg``, both design tables and one matrix per QoI and fidelity.

    The directory is replaced as a whole once every file is written.
    """
    out_dir = Path(out_dir)
    tmp = out_dir.with_name(f".{out_dir.name}.tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    entries: Dict[str, object] = {"format_version": BUNDLE_FORMAT_VERSION, "qois": list(bundle.qois),
                                  "n_lf": bundle.n_lf, "n_hf": bundle.n_hf}
    entries.update(grid_meta(bundle.grid))
    entries.update(space_meta(bundle.space))
    write_meta(tmp / BUNDLE_FILE, entries)
    write_table(tmp / "lf_design.csv", _theta_frame(bundle.lf_theta, bundle.space, "lf"))
    write_table(tmp / "hf_design.csv", _theta_frame(bundle.hf_theta, bundle.space, "hf"))
    for qoi in bundle.qois:
        for name, values, count in (("lf", bundle.lf_values[qoi], bundle.n_lf),
                                    ("hf", bundle.hf_values[qoi], bundle.n_hf)):
            if count:
                save_matrix(tmp / f"qoi_{qoi}_{name}.csv", values, [f"{name}_{i:05d}" for i in range(count)])
    if out_dir.exists():
        backup = out_dir.with_name(f".{out_dir.name}.old")
        shutil.rmtree(backup, ignore_errors=True)
        out_dir.rename(backup)
        tmp.rename(out_dir)
        shutil.rmtree(backup, ignore_errors=True)
    else:
        tmp.rename(out_dir)
    logger.info(f"Bundle with {bundle.n_lf} LF and {bundle.n_hf} HF runs written to {out_dir}")
    return out_dir


def load_bundle(directory: PathLike) -> Bundle:
    """Read a bundle written by :func:`write_bundle`."""
    directory = Path(directory)
    if not (directory / BUNDLE_FILE).is_file():
        raise IngestionError("Not a bundle directory", path=str(directory))
    meta = read_meta(directory / BUNDLE_FILE)
    grid, space = grid_from_meta(meta), space_from_meta(meta)
    qois = tuple(q.strip() for q in meta.get("qois", "").split(",") if q.strip())
    designs = {}
    for name in ("lf", "hf"):
        frame = read_table(directory / f"{name}_design.csv")
        designs[name] = frame[list(space.names)].to_numpy(dtype=float).reshape(-1, space.dim)
        if designs[name].shape[0] != int(meta[f"n_{name}"]):
            raise IngestionError(f"{name.upper()} design length disagrees with {BUNDLE_FILE}",
                                 path=str(directory / f"{name}_design.csv"))
    values: Dict[str, Dict[str, np.ndarray]] = {"lf": {}, "hf": {}}
    for qoi in qois:
        for name in ("lf", "hf"):
            count = designs[name].shape[0]
            if count == 0:
                values[name][qoi] = np.zeros((grid.n_points, 0))
                continue
            path = directory / f"qoi_{qoi}_{name}.csv"
            matrix = read_table(path).to_numpy(dtype=float)
            if matrix.shape != (grid.n_points, count):
                raise IngestionError(f"Matrix shape {matrix.shape}, expected {(grid.n_points, count)}", path=str(path))
            if not np.all(np.isfinite(matrix)):
                bad = int(np.flatnonzero(~np.all(np.isfinite(matrix), axis=1))[0])
                raise IngestionError("Non-finite snapshot value", path=str(path), row=bad + _FIRST_DATA_LINE)
            values[name][qoi] = matrix
    return Bundle(grid=grid, space=space, qois=qois, lf_theta=designs["lf"], hf_theta=designs["hf"],
                  lf_values=values["lf"], hf_values=values["hf"])


def ingest(design_csv: PathLike, meta_path: PathLike, out_dir: PathLike,
           base_dir: Optional[PathLike] = None) -> Bundle:
    """Validate a run table plus its snapshots and write a fresh bundle."""
    log_operation(logger, "ingest", {"design_csv": str(design_csv), "meta": str(meta_path), "out": str(out_dir)})
    grid, space = read_grid_meta(meta_path)
    bundle = read_runs(design_csv, grid, space, base_dir=base_dir)
    if bundle.n_lf == 0:
        raise IngestionError("No LF runs found", path=str(design_csv))
    write_bundle(bundle, out_dir)
    return bundle


def reingest(bundle_dir: PathLike, out_dir: PathLike) -> Bundle:
    """Re-validate an existing bundle and write it again (byte-identical)."""
    bundle = load_bundle(bundle_dir)
    write_bundle(bundle, out_dir)
    return bundle


def append_runs(bundle_dir: PathLike, design_csv: PathLike, base_dir: Optional[PathLike] = None) -> Bundle:
    """Validate new runs against a bundle and append them in place."""
    log_operation(logger, "append_runs", {"bundle": str(bundle_dir), "design_csv": str(design_csv)})
    existing = load_bundle(bundle_dir)
    new = read_runs(design_csv, existing.grid, existing.space, existing=existing, base_dir=base_dir)
    merged = existing.extend(new)
    write_bundle(merged, bundle_dir)
    logger.info(f"Appended {new.n_lf} LF and {new.n_hf} HF runs to {bundle_dir}")
    return merged


def write_model_runs(problem: Problem, design_csv: PathLike, out_dir: PathLike,
                     fidelity: Fidelity = "hf") -> Path:
    """
    Evaluate a built-in model over a design table and write ingestible runs.

    The table holds one column per parameter name, optionally a
    ``fidelity`` column (rows without one use ``fidelity``) and a
    ``design_id`` column. Writes ``snapshots/<design_id>_<fidelity>.csv``
    with a ``value`` column, a ``runs.csv`` manifest in the layout
    :func:`read_runs` consumes and a ``grid.meta`` for :func:`ingest`.

    Returns:
        Path of the manifest

    Raises:
        IngestionError: On missing columns, unknown fidelities or repeated ids
    """
    design_csv, out_dir = Path(design_csv), Path(out_dir)
    table = read_table(design_csv)
    names = list(problem.space.names)
    missing = [c for c in names if c not in table.columns]
    if missing:
        raise IngestionError(f"Design table lacks columns {missing}", path=str(design_csv))
    if "fidelity" in table.columns:
        fidelities = table["fidelity"].fillna(fidelity).astype(str).str.strip().str.lower()
    else:
        fidelities = pd.Series([fidelity] * len(table))
    bad = np.flatnonzero(~fidelities.isin(["lf", "hf"]).to_numpy())
    if bad.size:
        raise IngestionError(f"Unknown fidelity '{fidelities.iloc[bad[0]]}'", path=str(design_csv),
                             row=int(bad[0]) + _FIRST_DATA_LINE)
    if "design_id" in table.columns:
        ids = table["design_id"].astype(str).str.strip()
    else:
        ids = pd.Series([f"run_{i:05d}" for i in range(len(table))])
    repeated = np.flatnonzero(pd.DataFrame({"id": ids, "fidelity": fidelities}).duplicated().to_numpy())
    if repeated.size:
        raise IngestionError(f"Repeated design_id '{ids.iloc[repeated[0]]}'", path=str(design_csv),
                             row=int(repeated[0]) + _FIRST_DATA_LINE)

    thetas = pd.DataFrame({n: pd.to_numeric(table[n], errors="coerce") for n in names}).to_numpy(dtype=float)
    files = np.empty(len(table), dtype=object)
    for name in ("lf", "hf"):
        rows = np.flatnonzero((fidelities == name).to_numpy())
        if rows.size == 0:
            continue
        values = problem.evaluate(name, thetas[rows])
        for column, row in enumerate(rows):
            relative = f"snapshots/{ids.iloc[row]}_{name}.csv"
            write_table(out_dir / relative, pd.DataFrame({"value": values[:, column]}))
            files[row] = relative

    manifest = pd.DataFrame({"design_id": ids.to_numpy(), "fidelity": fidelities.to_numpy()})
    for i, name in enumerate(names):
        manifest[name] = thetas[:, i]
    manifest["file"] = files
    write_table(out_dir / "runs.csv", manifest)
    entries: Dict[str, object] = {}
    entries.update(grid_meta(problem.grid))
    entries.update(space_meta(problem.space))
    write_meta(out_dir / "grid.meta", entries)
    logger.info(f"{problem.name}: {len(table)} run(s) written to {out_dir}")
    return out_dir / "runs.csv"


def bundle_digest(directory: PathLike) -> str:
    return directory_digest(directory)
