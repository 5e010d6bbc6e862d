"""Campaign configuration: flat key-value files validated by pydantic models."""

from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.exceptions import InvalidConfigurationError
from ..core.utils import text_digest
from .flat_format import dump_flat, nest, parse_flat, split_list

ProblemId = Literal["pulse_c1", "pulse_c2", "convdiff", "external"]
PolicyId = Literal["ei_max", "ei_min", "random"]


def _pair(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(float(v) for v in split_list(value))
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PilotConfig(_Section):
    """Pilot sizes (N_LF^P, N_Δ^P)."""
    n_lf: int = Field(ge=2)
    n_delta: int = Field(ge=2)


class CrossValidationConfig(_Section):
    mode: Literal["kfold", "loo"] = "kfold"
    folds: int = Field(5, ge=2)
    exclude_heldout_lf: bool = False


class KleConfig(_Section):
    rho: float = Field(0.99, gt=0.0, le=1.0)
    eigen_cutoff: float = Field(1e-12, ge=0.0, lt=1.0)


class PceConfig(_Section):
    degree: int = Field(3, ge=0)
    tau: Optional[float] = Field(None, ge=0.0)
    tau_min: float = Field(1e-8, gt=0.0)
    tau_max: float = Field(1e2, gt=0.0)
    tau_count: int = Field(25, ge=1)
    tau_folds: int = Field(5, ge=2)

    @model_validator(mode="after")
    def _check_grid(self):
        if self.tau_min > self.tau_max:
            raise ValueError("pce.tau_min must not exceed pce.tau_max")
        return self


class GpConfig(_Section):
    starts: int = Field(8, ge=1)
    length_scale_bounds: Tuple[float, float] = (1e-2, 1e1)
    signal_variance_bounds: Tuple[float, float] = (1e-3, 1e1)
    nugget_bounds: Tuple[float, float] = (1e-8, 1e-1)
    log_targets: bool = False

    @field_validator("length_scale_bounds", "signal_variance_bounds", "nugget_bounds", mode="before")
    @classmethod
    def _split_pairs(cls, value: Any) -> Any:
        return _pair(value)

    @field_validator("length_scale_bounds", "signal_variance_bounds", "nugget_bounds")
    @classmethod
    def _check_bounds(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if not (0.0 < value[0] <= value[1]):
            raise ValueError(f"bounds must satisfy 0 < lo <= hi, got {value}")
        return value


class AcquisitionConfig(_Section):
    policy: PolicyId = "ei_max"
    candidates: int = Field(4096, ge=16)
    refine: int = Field(10, ge=0)


class PulseConfig(_Section):
    n_points: int = Field(256, ge=2)
    lower: float = 0.0
    upper: float = 0.1
    c1_replace_sine: bool = False


class ConvDiffConfig(_Section):
    hf_n: int = Field(128, ge=2)
    lf_n: int = Field(32, ge=2)
    hf_dt: Optional[float] = Field(None, gt=0.0)
    lf_dt: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _check_ratio(self):
        if self.hf_n % self.lf_n != 0:
            raise ValueError("convdiff.hf_n must be an integer multiple of convdiff.lf_n")
        return self


class OracleConfig(_Section):
    rule: Literal["auto", "grid", "monte_carlo", "none"] = "auto"
    grid_points: int = Field(200, ge=2)
    samples: int = Field(1000, ge=2)
    seed: int = 12345


class UqConfig(_Section):
    samples: int = Field(2000, ge=2)
    seed: int = 2024


class CampaignConfig(_Section):
    """Inputs of one active-learning campaign."""
    problem: ProblemId
    pilot: Optional[PilotConfig] = None
    budget: int = Field(ge=2)
    batch_size: int = Field(1, ge=1)
    cv: CrossValidationConfig = CrossValidationConfig()
    kle: KleConfig = KleConfig()
    pce: PceConfig = PceConfig()
    gp: GpConfig = GpConfig()
    acquisition: AcquisitionConfig = AcquisitionConfig()
    pulse: PulseConfig = PulseConfig()
    convdiff: ConvDiffConfig = ConvDiffConfig()
    oracle: OracleConfig = OracleConfig()
    uq: UqConfig = UqConfig()
    replicates: int = Field(1, ge=1)
    seed: int = 0
    output_dir: str = "campaigns/run"
    loop_guard: Literal["strict", "overshoot"] = "strict"
    bundle: Optional[str] = None

    @model_validator(mode="after")
    def _check_campaign(self):
        if self.problem == "external":
            if not self.bundle:
                raise ValueError("bundle is required when problem = external")
        elif self.pilot is None:
            raise ValueError("pilot.n_lf and pilot.n_delta are required for built-in problems")
        if self.pilot is not None:
            if self.pilot.n_delta > self.budget:
                raise ValueError(f"pilot.n_delta ({self.pilot.n_delta}) exceeds budget ({self.budget})")
            if self.pilot.n_delta > self.pilot.n_lf:
                raise ValueError("pilot.n_delta must not exceed pilot.n_lf")
            if self.cv.mode == "kfold" and self.cv.folds > self.pilot.n_delta:
                raise ValueError(f"cv.folds ({self.cv.folds}) exceeds pilot.n_delta ({self.pilot.n_delta})")
        return self

    def with_updates(self, **updates: Any) -> "CampaignConfig":
        """Copy with top-level or dotted-key updates, re-validated."""
        data = self.model_dump()
        for key, value in updates.items():
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                if node.get(part) is None:
                    node[part] = {}
                node = node[part]
            node[parts[-1]] = value
        return validate_campaign(data)

    def to_flat_text(self) -> str:
        """Canonical flat rendering used for snapshots and hashing."""
        return dump_flat(self.model_dump(mode="json", exclude_none=True))

    def config_hash(self) -> str:
        return text_digest(self.to_flat_text())


def _error_key(error: Mapping[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def validate_campaign(data: Mapping[str, Any]) -> CampaignConfig:
    """
    Validate nested configuration data.

    Raises:
        InvalidConfigurationError: Naming the first offending dotted key
    """
    try:
        return CampaignConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = _error_key(first)
        if first.get("type") == "missing":
            message = f"Missing required key '{key}'"
        else:
            message = f"Invalid value for '{key}': {first.get('msg')}"
        raise InvalidConfigurationError(message, key=key)


def parse_campaign_config(text: str, overrides: Optional[Mapping[str, Any]] = None,
                          source: Optional[str] = None) -> CampaignConfig:
    """Parse flat config text, apply dotted-key overrides and validate."""
    entries: Dict[str, Any] = dict(parse_flat(text, source=source))
    for key, value in (overrides or {}).items():
        if value is not None:
            entries[key] = value
    # Empty values mean "unset"
    entries = {k: v for k, v in entries.items() if not (isinstance(v, str) and v == "")}
    return validate_campaign(nest(entries))


def load_campaign_config(path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None) -> CampaignConfig:
    """Read and validate a campaign config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidConfigurationError(f"Cannot read config {path}: {e}")
    return parse_campaign_config(text, overrides=overrides, source=str(path))


def model_only_config(problem: str, **sections: Any) -> CampaignConfig:
    """Config for running a built-in model outside a campaign (placeholder pilot and budget)."""
    data: Dict[str, Any] = {"problem": problem, "budget": 2, "pilot": {"n_lf": 2, "n_delta": 2}, "cv": {"folds": 2}}
    data.update(sections)
    return validate_campaign(data)
