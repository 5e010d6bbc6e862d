"""Forward-model tool for the tool server."""

import json
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
from mcp.types import TextContent

from ..config.campaign import model_only_config
from ..core.exceptions import BifikleError
from ..core.logging_config import get_logger
from ..core.utils import log_operation
from ..problems.registry import get_problem

logger = get_logger(__name__)


async def handle_evaluate_model(root: Path, arguments: Dict[str, Any]) -> List[TextContent]:
    """Handle evaluate_model tool execution."""
    log_operation(logger, "evaluate_model", arguments)
    problem_id = arguments.get("problem", "")
    fidelity = str(arguments.get("fidelity", "hf")).lower()
    try:
        if fidelity not in ("hf", "lf"):
            raise ValueError(f"Fidelity must be 'hf' or 'lf', got '{fidelity}'")
        config = model_only_config(problem_id)
        problem = get_problem(config)
        theta = np.atleast_2d(np.asarray(arguments["theta"], dtype=float))
        values = problem.evaluate(fidelity, theta)[:, 0]
        result = {
            "problem": problem.name,
            "fidelity": fidelity,
            "theta": theta[0].tolist(),
            "parameters": list(problem.space.names),
            "n_points": int(values.size),
            "integral": float(problem.grid.integrate(values)),
            "min": float(np.min(values)),
            "max": float(np.max(values)),
        }
        logger.info(f"Evaluated {problem.name} {fidelity.upper()} at {theta[0].tolist()}")
        return [TextContent(type="text", text=json.dumps(result, indent=2))]
    except (BifikleError, ValueError, KeyError) as e:
        logger.error(f"Model evaluation failed: {e}")
        return [TextContent(type="text", text=f"Error evaluating {problem_id} {fidelity.upper()}: {e}")]
