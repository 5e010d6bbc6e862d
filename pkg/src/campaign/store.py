"""On-disk layout of campaigns and persisted fields, designs, bases and surrogates."""

import os
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .. import __version__
from ..config.flat_format import dump_flat, parse_flat, split_list
from ..core.exceptions import DataError, InvalidConfigurationError, StorageError
from ..core.logging_config import get_logger
from ..core.utils import RNG_NAME, file_digest, text_digest
from ..numerics.design import ParameterSpace
from ..numerics.grid import Field, Grid, grid_from_metadata
from ..numerics.kle import KleBasis
from ..numerics.pce import INDEX_ORDERING_VERSION, MultiIndexSet, PceModel, total_order_index_set
from ..surrogates.bifidelity import BifidelitySurrogate, KlePceComponent

logger = get_logger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def _meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta")


def write_table(path: PathLike, frame: pd.DataFrame) -> Path:
    """Write a CSV with full float precision."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise StorageError(f"Failed to write {path}: {e}", path=str(path), cause=e)
    return path


def read_table(path: PathLike) -> pd.DataFrame:
    """Read a CSV written by :func:`write_table` without precision loss."""
    path = Path(path)
    try:
        return pd.read_csv(path, float_precision="round_trip", keep_default_na=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        logger.error(f"Failed to read {path}: {e}")
        raise StorageError(f"Failed to read {path}: {e}", path=str(path), cause=e)


def write_meta(path: PathLike, entries: Mapping[str, Any], header: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_flat(entries, header=header), encoding="utf-8")
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise StorageError(f"Failed to write {path}: {e}", path=str(path), cause=e)
    return path


def read_meta(path: PathLike) -> Dict[str, str]:
    path = Path(path)
    try:
        return parse_flat(path.read_text(encoding="utf-8"), source=str(path))
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"Failed to read {path}: {e}")
        raise StorageError(f"Failed to read {path}: {e}", path=str(path), cause=e)
    except InvalidConfigurationError as e:
        raise StorageError(f"Malformed metadata in {path}: {e}", path=str(path), cause=e)


def _floats(value: str) -> List[float]:
    return [float(v) for v in split_list(value)]


def grid_meta(grid: Grid, prefix: str = "grid.") -> Dict[str, Any]:
    return {f"{prefix}{k}": v for k, v in grid.metadata().items()}


def grid_from_meta(meta: Mapping[str, str], prefix: str = "grid.") -> Grid:
    try:
        return grid_from_metadata({k[len(prefix):]: v for k, v in meta.items() if k.startswith(prefix)})
    except (KeyError, ValueError) as e:
        raise StorageError(f"Incomplete grid metadata: {e}", cause=e)


def space_meta(space: ParameterSpace, prefix: str = "params.") -> Dict[str, Any]:
    return {f"{prefix}names": list(space.names), f"{prefix}lower": list(space.lower),
            f"{prefix}upper": list(space.upper)}


def space_from_meta(meta: Mapping[str, str], prefix: str = "params.") -> ParameterSpace:
    try:
        return ParameterSpace(names=tuple(split_list(meta[f"{prefix}names"])),
                              lower=tuple(_floats(meta[f"{prefix}lower"])),
                              upper=tuple(_floats(meta[f"{prefix}upper"])))
    except (KeyError, ValueError) as e:
        raise StorageError(f"Incomplete parameter metadata: {e}", cause=e)


def save_field(path: PathLike, values: Union[Field, np.ndarray], grid: Optional[Grid] = None) -> Path:
    """One row per grid point, column ``value``, grid metadata in a sidecar."""
    if isinstance(values, Field):
        grid, values = values.grid, values.values
    path = write_table(path, pd.DataFrame({"value": np.asarray(values, dtype=float)}))
    if grid is not None:
        write_meta(_meta_path(path), grid_meta(grid))
    return path


def load_field(path: PathLike, grid: Optional[Grid] = None) -> Field:
    path = Path(path)
    if grid is None:
        grid = grid_from_meta(read_meta(_meta_path(path)))
    frame = read_table(path)
    if "value" not in frame.columns:
        raise StorageError(f"{path} has no 'value' column", path=str(path))
    return Field(grid, frame["value"].to_numpy(dtype=float))


def save_matrix(path: PathLike, matrix: np.ndarray, columns: Sequence[str]) -> Path:
    matrix = np.asarray(matrix, dtype=float).reshape(np.shape(matrix)[0], -1)
    return write_table(path, pd.DataFrame(matrix, columns=list(columns)))


def load_matrix(path: PathLike) -> pd.DataFrame:
    return read_table(path)


def design_frame(xi: np.ndarray, space: ParameterSpace, extra: Optional[Mapping[str, Sequence]] = None) -> pd.DataFrame:
    """Physical columns (parameter names) followed by ``xi_<name>`` normalized columns."""
    xi = np.asarray(xi, dtype=float).reshape(-1, space.dim)
    data: Dict[str, Any] = dict(extra or {})
    theta = space.from_unit(xi) if xi.shape[0] else np.zeros((0, space.dim))
    for i, name in enumerate(space.names):
        data[name] = theta[:, i]
    for i, name in enumerate(space.names):
        data[f"xi_{name}"] = xi[:, i]
    return pd.DataFrame(data)


def save_design(path: PathLike, xi: np.ndarray, space: ParameterSpace,
                extra: Optional[Mapping[str, Sequence]] = None) -> Path:
    path = write_table(path, design_frame(xi, space, extra))
    write_meta(_meta_path(path), space_meta(space))
    return path


def load_design(path: PathLike, space: ParameterSpace) -> np.ndarray:
    """Normalized design rows from a design CSV."""
    frame = read_table(path)
    columns = [f"xi_{name}" for name in space.names]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise StorageError(f"{path} lacks columns {missing}", path=str(path))
    return frame[columns].to_numpy(dtype=float).reshape(-1, space.dim)


def save_kle(directory: PathLike, basis: KleBasis) -> Path:
    """mean.csv, eigenvalues.csv, modes.csv and meta.cfg."""
    directory = Path(directory)
    save_field(directory / "mean.csv", basis.mean.values)
    write_table(directory / "eigenvalues.csv", pd.DataFrame({"k": np.arange(1, basis.k_t + 1),
                                                             "eigenvalue": basis.eigenvalues}))
    write_table(directory / "spectrum.csv", pd.DataFrame({"eigenvalue": basis.spectrum}))
    save_matrix(directory / "modes.csv", basis.modes, [f"q_{k}" for k in range(1, basis.k_t + 1)])
    meta = {"k_t": basis.k_t, "rho": basis.variance_fraction, "total_variance": basis.total_variance}
    meta.update(grid_meta(basis.grid))
    write_meta(directory / "meta.cfg", meta)
    return directory


def load_kle(directory: PathLike) -> KleBasis:
    directory = Path(directory)
    meta = read_meta(directory / "meta.cfg")
    grid = grid_from_meta(meta)
    k_t = int(meta["k_t"])
    eigenvalues = read_table(directory / "eigenvalues.csv")["eigenvalue"].to_numpy(dtype=float) if k_t else np.zeros(0)
    spectrum_frame = read_table(directory / "spectrum.csv") if k_t else None
    spectrum = spectrum_frame["eigenvalue"].to_numpy(dtype=float) if spectrum_frame is not None else np.zeros(0)
    modes = read_table(directory / "modes.csv").to_numpy(dtype=float) if k_t else np.zeros((grid.n_points, 0))
    return KleBasis(mean=load_field(directory / "mean.csv", grid), eigenvalues=eigenvalues, modes=modes,
                    variance_fraction=float(meta["rho"]), spectrum=spectrum,
                    total_variance=float(meta["total_variance"]))


def save_pce(directory: PathLike, model: PceModel) -> Path:
    """coefficients.csv (index columns then one column per mode) and meta.cfg."""
    directory = Path(directory)
    idx = model.index_set
    data: Dict[str, Any] = {f"beta_{i + 1}": idx.indices[:, i] for i in range(idx.n_s)}
    for k in range(model.n_modes):
        data[f"b_{k + 1}"] = model.coefficients[:, k]
    write_table(directory / "coefficients.csv", pd.DataFrame(data))
    write_meta(directory / "meta.cfg", {"n_s": idx.n_s, "p": idx.p, "tau": float(model.tau),
                                        "n_modes": model.n_modes, "ordering_version": INDEX_ORDERING_VERSION})
    return directory


def load_pce(directory: PathLike) -> PceModel:
    directory = Path(directory)
    meta = read_meta(directory / "meta.cfg")
    if int(meta.get("ordering_version", INDEX_ORDERING_VERSION)) != INDEX_ORDERING_VERSION:
        raise StorageError(f"{directory}: unsupported multi-index ordering version {meta['ordering_version']}")
    index_set: MultiIndexSet = total_order_index_set(int(meta["n_s"]), int(meta["p"]))
    frame = read_table(directory / "coefficients.csv")
    stored = frame[[f"beta_{i + 1}" for i in range(index_set.n_s)]].to_numpy(dtype=int)
    if not np.array_equal(stored, index_set.indices):
        raise StorageError(f"{directory}: stored multi-indices do not match the total-order set")
    n_modes = int(meta["n_modes"])
    coefficients = frame[[f"b_{k + 1}" for k in range(n_modes)]].to_numpy(dtype=float)
    return PceModel(index_set, coefficients.reshape(index_set.n_terms, n_modes), tau=float(meta["tau"]))


def directory_digest(directory: PathLike) -> str:
    """Digest over every file below ``directory`` (relative names included)."""
    directory = Path(directory)
    parts = [f"{p.relative_to(directory).as_posix()}:{file_digest(p)}"
             for p in sorted(directory.rglob("*")) if p.is_file()]
    return text_digest("\n".join(parts))


def save_component(directory: PathLike, component: KlePceComponent) -> Path:
    directory = Path(directory)
    save_kle(directory / "kle", component.basis)
    save_pce(directory / "pce", component.pce)
    meta = {"n_train": component.n_train}
    meta.update(space_meta(component.space))
    write_meta(directory / "component.cfg", meta)
    return directory


def load_component(directory: PathLike) -> KlePceComponent:
    directory = Path(directory)
    meta = read_meta(directory / "component.cfg")
    return KlePceComponent(basis=load_kle(directory / "kle"), pce=load_pce(directory / "pce"),
                           space=space_from_meta(meta), n_train=int(meta["n_train"]))


def save_surrogate(directory: PathLike, surrogate: BifidelitySurrogate) -> Path:
    """Both components plus a manifest with their digests and build counts."""
    directory = Path(directory)
    save_component(directory / "lf", surrogate.lf)
    save_component(directory / "delta", surrogate.delta)
    manifest = {
        "lf_digest": directory_digest(directory / "lf"),
        "delta_digest": directory_digest(directory / "delta"),
        "rho": surrogate.lf.basis.variance_fraction,
        "degree": surrogate.lf.pce.index_set.p,
        "tau_lf": surrogate.lf.pce.tau,
        "tau_delta": surrogate.delta.pce.tau,
        "n_lf": surrogate.n_lf,
        "n_hf": surrogate.n_hf,
    }
    manifest.update(space_meta(surrogate.space))
    write_meta(directory / "manifest.cfg", manifest)
    return directory


def load_surrogate(directory: PathLike, verify: bool = True) -> BifidelitySurrogate:
    directory = Path(directory)
    manifest = read_meta(directory / "manifest.cfg")
    if verify:
        for part in ("lf", "delta"):
            if directory_digest(directory / part) != manifest.get(f"{part}_digest"):
                raise StorageError(f"Surrogate component '{part}' in {directory} fails its digest check",
                                   path=str(directory / part))
    return BifidelitySurrogate(lf=load_component(directory / "lf"), delta=load_component(directory / "delta"),
                               n_lf=int(manifest["n_lf"]), n_hf=int(manifest["n_hf"]))


@dataclass
class RunManifest:
    """Provenance of one campaign directory."""
    config_hash: str
    tool_version: str = __version__
    rng: str = RNG_NAME
    input_digests: Dict[str, str] = field(default_factory=dict)
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    updated: str = ""

    def to_entries(self) -> Dict[str, Any]:
        entries: Dict[str, Any] = {"tool_version": self.tool_version, "config_hash": self.config_hash,
                                   "rng": self.rng, "created": self.created, "updated": self.updated}
        for name, digest in sorted(self.input_digests.items()):
            entries[f"input.{name}"] = digest
        return entries

    @classmethod
    def from_entries(cls, entries: Mapping[str, str]) -> "RunManifest":
        digests = {k[len("input."):]: v for k, v in entries.items() if k.startswith("input.")}
        return cls(config_hash=entries["config_hash"], tool_version=entries.get("tool_version", ""),
                   rng=entries.get("rng", RNG_NAME), input_digests=digests,
                   created=entries.get("created", ""), updated=entries.get("updated", ""))

    def verify(self, other: "RunManifest") -> None:
        """Raise if ``other`` (freshly computed) disagrees with this stored manifest."""
        if self.config_hash != other.config_hash:
            raise InvalidConfigurationError("Configuration changed since the campaign started; refusing to resume")
        if self.rng != other.rng:
            raise DataError(f"Campaign used RNG '{self.rng}', this build uses '{other.rng}'")
        for name, digest in self.input_digests.items():
            if other.input_digests.get(name) not in (None, digest):
                raise DataError(f"Input '{name}' changed since the campaign started")


class CampaignStore:
    """
    Campaign directory wrapper.

    Layout: ``config.cfg``, ``manifest.cfg``, ``state.cfg``, ``metrics.csv``,
    ``stages/stage_NNN/`` and ``surrogate/``.
    """

    def __init__(self, root: PathLike):
        self.root = Path(root)
        self.logger = get_logger(f"{__name__}.CampaignStore")

    @property
    def stages_dir(self) -> Path:
        return self.root / "stages"

    def stage_dir(self, stage: int) -> Path:
        return self.stages_dir / f"stage_{stage:03d}"

    def exists(self) -> bool:
        return (self.root / "state.cfg").is_file()

    def ensure(self) -> None:
        try:
            self.stages_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            self.logger.error(f"Failed to create campaign directory {self.root}: {e}")
            raise StorageError(f"Failed to create {self.root}: {e}", path=str(self.root), cause=e)

    def stage_numbers(self) -> List[int]:
        if not self.stages_dir.is_dir():
            return []
        numbers = []
        for entry in self.stages_dir.iterdir():
            if entry.is_dir() and entry.name.startswith("stage_") and not entry.name.endswith(".tmp"):
                try:
                    numbers.append(int(entry.name[len("stage_"):]))
                except ValueError:
                    self.logger.warning(f"Ignoring unexpected stage directory {entry}")
        return sorted(numbers)

    def begin_stage(self, stage: int) -> Path:
        """Fresh temporary directory for a stage; :meth:`commit_stage` publishes it."""
        tmp = self.stages_dir / f".stage_{stage:03d}.tmp"
        try:
            if tmp.exists():
                shutil.rmtree(tmp)
            tmp.mkdir(parents=True)
        except OSError as e:
            self.logger.error(f"Failed to prepare stage {stage}: {e}")
            raise StorageError(f"Failed to prepare stage {stage}: {e}", path=str(tmp), cause=e)
        return tmp

    def commit_stage(self, stage: int, tmp: Path) -> Path:
        final = self.stage_dir(stage)
        try:
            if final.exists():
                shutil.rmtree(final)
            os.replace(tmp, final)
        except OSError as e:
            self.logger.error(f"Failed to commit stage {stage}: {e}")
            raise StorageError(f"Failed to commit stage {stage}: {e}", path=str(final), cause=e)
        self.logger.info(f"Stage {stage} written to {final}")
        return final

    def discard_after(self, stage: int) -> None:
        """Remove stage directories newer than ``stage`` (left by an interrupted run)."""
        for number in self.stage_numbers():
            if number > stage:
                self.logger.warning(f"Discarding incomplete stage {number}")
                shutil.rmtree(self.stage_dir(number), ignore_errors=True)

    def write_config(self, text: str) -> Path:
        path = self.root / "config.cfg"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise StorageError(f"Failed to write {path}: {e}", path=str(path), cause=e)
        return path

    def read_config_text(self) -> str:
        path = self.root / "config.cfg"
        try:
            return path.read_text(encoding="utf-8")
        except OSError as e:
            raise StorageError(f"Failed to read {path}: {e}", path=str(path), cause=e)

    def write_manifest(self, manifest: RunManifest) -> Path:
        manifest.updated = datetime.now(timezone.utc).isoformat()
        return write_meta(self.root / "manifest.cfg", manifest.to_entries())

    def read_manifest(self) -> RunManifest:
        entries = read_meta(self.root / "manifest.cfg")
        try:
            return RunManifest.from_entries(entries)
        except KeyError as e:
            raise StorageError(f"Manifest lacks {e}", path=str(self.root / "manifest.cfg"), cause=e)

    def write_state(self, entries: Mapping[str, Any]) -> Path:
        tmp = self.root / ".state.cfg.tmp"
        write_meta(tmp, entries)
        try:
            os.replace(tmp, self.root / "state.cfg")
        except OSError as e:
            raise StorageError(f"Failed to update campaign state: {e}", path=str(self.root), cause=e)
        return self.root / "state.cfg"

    def read_state(self) -> Dict[str, str]:
        return read_meta(self.root / "state.cfg")

    def save_surrogate(self, surrogate: BifidelitySurrogate, qoi: str, name: str = "surrogate") -> Path:
        target = self.root / name / qoi
        if target.exists():
            shutil.rmtree(target, ignore_errors=True)
        return save_surrogate(target, surrogate)

    def load_surrogate(self, qoi: str, name: str = "surrogate") -> BifidelitySurrogate:
        return load_surrogate(self.root / name / qoi)

    def surrogate_qois(self, name: str = "surrogate") -> List[str]:
        base = self.root / name
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if (p / "manifest.cfg").is_file())
