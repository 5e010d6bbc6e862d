"""Read-only campaign tools for the tool server."""

import json
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from mcp.types import TextContent

from ..campaign.history import load_history
from ..campaign.state import read_problem
from ..campaign.store import CampaignStore
from ..core.exceptions import BifikleError
from ..core.logging_config import get_logger
from ..core.utils import log_operation
from ..surrogates.bifidelity import propagate_uq

logger = get_logger(__name__)

_PREVIEW_POINTS = 16


def _text(payload: Dict[str, Any]) -> List[TextContent]:
    return [TextContent(type="text", text=json.dumps(payload, indent=2, default=float))]


def _finite(value: float):
    return float(value) if np.isfinite(value) else None


def resolve_campaign(root: Path, name: str) -> CampaignStore:
    """Campaign directory by absolute path or by name under the output root."""
    path = Path(name)
    return CampaignStore(path if path.is_absolute() else root / path)


def _field_summary(values: np.ndarray) -> Dict[str, Any]:
    step = max(1, values.size // _PREVIEW_POINTS)
    return {"n_points": int(values.size), "min": float(np.min(values)), "max": float(np.max(values)),
            "preview": [float(v) for v in values[::step][:_PREVIEW_POINTS]]}


async def handle_ping(root: Path, arguments: Dict[str, Any]) -> List[TextContent]:
    """Handle ping tool execution."""
    log_operation(logger, "ping", arguments)
    return _text({"status": "ok", "output_root": str(root)})


async def handle_campaign_summary(root: Path, arguments: Dict[str, Any]) -> List[TextContent]:
    """Handle campaign_summary tool execution."""
    log_operation(logger, "campaign_summary", arguments)
    campaign = arguments.get("campaign", "")
    try:
        store = resolve_campaign(root, campaign)
        problem, grid, space, qois = read_problem(store)
        history, corrupt = load_history(store, space, problem, skip_corrupt=True)
        result = {
            "campaign": str(store.root),
            "problem": problem,
            "status": history.status,
            "parameters": list(space.names),
            "grid_points": grid.n_points,
            "qois": list(qois),
            "corrupt_stages": corrupt,
            "stages": [
                {"stage": r.stage, "n_hf": r.n_hf, "n_lf": r.n_lf,
                 "mu_eps": _finite(r.oracle.mean) if r.oracle else None,
                 "cv_mean": _finite(r.cv.mean()), "cv_max": _finite(r.cv.max())}
                for r in history.records
            ],
        }
        logger.info(f"Summarized {store.root}: {len(history.records)} stages")
        return _text(result)
    except BifikleError as e:
        logger.error(f"Cannot summarize campaign '{campaign}': {e}")
        return [TextContent(type="text", text=f"Error reading campaign '{campaign}': {e}")]


async def handle_predict_field(root: Path, arguments: Dict[str, Any]) -> List[TextContent]:
    """Handle predict_field tool execution."""
    log_operation(logger, "predict_field", arguments)
    campaign = arguments.get("campaign", "")
    try:
        store = resolve_campaign(root, campaign)
        qois = store.surrogate_qois()
        qoi = arguments.get("qoi") or (qois[0] if qois else "")
        surrogate = store.load_surrogate(qoi)
        theta = np.asarray(arguments["theta"], dtype=float)
        field = surrogate.predict(theta)
        result = {"campaign": str(store.root), "qoi": qoi, "theta": theta.tolist(),
                  "integral": field.integral(), "norm": field.norm()}
        result.update(_field_summary(field.values))
        return _text(result)
    except BifikleError as e:
        logger.error(f"Prediction failed for '{campaign}': {e}")
        return [TextContent(type="text", text=f"Error predicting with '{campaign}': {e}")]


async def handle_propagate_uncertainty(root: Path, arguments: Dict[str, Any]) -> List[TextContent]:
    """Handle propagate_uncertainty tool execution."""
    log_operation(logger, "propagate_uncertainty", arguments)
    campaign = arguments.get("campaign", "")
    try:
        store = resolve_campaign(root, campaign)
        qois = store.surrogate_qois()
        qoi = arguments.get("qoi") or (qois[0] if qois else "")
        surrogate = store.load_surrogate(qoi)
        samples = int(arguments.get("samples", 2000))
        seed = int(arguments.get("seed", 2024))
        mean, std = propagate_uq(surrogate, samples, seed)
        return _text({"campaign": str(store.root), "qoi": qoi, "samples": samples, "seed": seed,
                      "mean": _field_summary(mean.values), "std": _field_summary(std.values)})
    except BifikleError as e:
        logger.error(f"Propagation failed for '{campaign}': {e}")
        return [TextContent(type="text", text=f"Error propagating uncertainty for '{campaign}': {e}")]
