"""
bifikle tool server - FastMCP v2

Read-only tools over campaign directories (summaries, surrogate
predictions, uncertainty propagation) plus direct forward-model runs.
"""

from pathlib import Path
from typing import List, Optional

from fastmcp import Context, FastMCP

from src.config.settings import load_runtime_config
from src.core.logging_config import setup_logging
from src.tools.campaigns import (
    handle_campaign_summary,
    handle_ping,
    handle_predict_field,
    handle_propagate_uncertainty,
)
from src.tools.models import handle_evaluate_model

mcp = FastMCP(
    name="bifikle",
    dependencies=["numpy", "scipy", "scikit-learn", "pandas", "pydantic", "python-dotenv", "joblib"]
)

TOOLS = ["ping", "campaign_summary", "predict_field", "propagate_uncertainty", "evaluate_model"]

_root: Optional[Path] = None
_logger = None


def get_output_root() -> Path:
    """Get or initialize the campaign output root."""
    global _root, _logger
    if _root is None:
        config = load_runtime_config()
        if _logger is None:
            _logger = setup_logging(level=config.log_level)
        _root = Path(config.output_dir)
        _logger.info(f"Serving campaigns under {_root}")
    return _root


# ==============================================================================
# Health & Status Tools
# ==============================================================================

@mcp.tool()
async def ping(*, ctx: Context) -> str:
    """Test if the server is responding."""
    await ctx.info("Pinging server...")
    result = await handle_ping(get_output_root(), {})
    return result[0].text


# ==============================================================================
# Campaign Tools
# ==============================================================================

@mcp.tool()
async def campaign_summary(campaign: str, *, ctx: Context) -> str:
    """
    Summarize a campaign's stages and errors.

    Args:
        campaign: Campaign directory (absolute, or relative to the output root)
    """
    await ctx.info(f"Reading campaign {campaign}...")
    result = await handle_campaign_summary(get_output_root(), {"campaign": campaign})
    return result[0].text


@mcp.tool()
async def predict_field(campaign: str, theta: List[float], qoi: str = "", *, ctx: Context) -> str:
    """
    Predict a field with a campaign's latest bifidelity surrogate.

    Args:
        campaign: Campaign directory (absolute, or relative to the output root)
        theta: Physical parameter values in the campaign's parameter order
        qoi: Quantity of interest (default: the first one)
    """
    await ctx.info(f"Predicting with {campaign} at {theta}...")
    result = await handle_predict_field(get_output_root(), {"campaign": campaign, "theta": theta, "qoi": qoi})
    return result[0].text


@mcp.tool()
async def propagate_uncertainty(campaign: str, samples: int = 2000, seed: int = 2024, qoi: str = "",
                                *, ctx: Context) -> str:
    """
    Monte-Carlo mean and standard deviation fields through a campaign's surrogate.

    Args:
        campaign: Campaign directory (absolute, or relative to the output root)
        samples: Number of uniform parameter draws (default: 2000)
        seed: Sampling seed (default: 2024)
        qoi: Quantity of interest (default: the first one)
    """
    await ctx.info(f"Propagating {samples} samples through {campaign}...")
    result = await handle_propagate_uncertainty(get_output_root(), {
        "campaign": campaign, "samples": samples, "seed": seed, "qoi": qoi
    })
    return result[0].text


# ==============================================================================
# Model Tools
# ==============================================================================

@mcp.tool()
async def evaluate_model(problem: str, theta: List[float], fidelity: str = "hf", *, ctx: Context) -> str:
    """
    Run a built-in forward model once.

    Args:
        problem: pulse_c1, pulse_c2 or convdiff
        theta: Physical parameter values
        fidelity: hf or lf (default: hf)
    """
    await ctx.info(f"Evaluating {problem} {fidelity} at {theta}...")
    result = await handle_evaluate_model(get_output_root(), {
        "problem": problem, "theta": theta, "fidelity": fidelity
    })
    return result[0].text


def serve() -> None:
    """Start the tool server (blocks)."""
    get_output_root()
    _logger.info(f"Loaded {len(TOOLS)} tools: {TOOLS}")
    _logger.info("Tool server is ready and waiting for connections...")
    mcp.run()
