#!/usr/bin/env python3
"""
MCP Dev Adapter - exposes the bifikle tools to `mcp dev`

The inspector expects an official-SDK FastMCP object; this wraps the same
handlers the FastMCP 2 server in src/server.py uses.
"""

import os
import sys
from typing import List

# Add the project root to Python path
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from mcp.server.fastmcp import Context
from mcp.server.fastmcp.server import FastMCP as MCPFastMCP

from src.server import get_output_root
from src.tools.campaigns import (
    handle_campaign_summary,
    handle_ping,
    handle_predict_field,
    handle_propagate_uncertainty,
)
from src.tools.models import handle_evaluate_model


class BifikleDevServer(MCPFastMCP):
    """Official-SDK server carrying the bifikle tool set."""

    def __init__(self):
        super().__init__(name="bifikle")
        self._register_tools()

    def _register_tools(self):
        @self.tool()
        async def ping(ctx: Context) -> str:
            """Test if the server is responding."""
            result = await handle_ping(get_output_root(), {})
            return result[0].text

        @self.tool()
        async def campaign_summary(campaign: str, ctx: Context) -> str:
            """Summarize a campaign's stages and errors."""
            result = await handle_campaign_summary(get_output_root(), {"campaign": campaign})
            return result[0].text

        @self.tool()
        async def predict_field(campaign: str, theta: List[float], ctx: Context, qoi: str = "") -> str:
            """Predict a field with a campaign's latest surrogate."""
            result = await handle_predict_field(get_output_root(), {"campaign": campaign, "theta": theta, "qoi": qoi})
            return result[0].text

        @self.tool()
        async def propagate_uncertainty(campaign: str, ctx: Context, samples: int = 2000, seed: int = 2024,
                                        qoi: str = "") -> str:
            """Monte-Carlo mean and standard deviation fields through a campaign's surrogate."""
            result = await handle_propagate_uncertainty(get_output_root(), {
                "campaign": campaign, "samples": samples, "seed": seed, "qoi": qoi
            })
            return result[0].text

        @self.tool()
        async def evaluate_model(problem: str, theta: List[float], ctx: Context, fidelity: str = "hf") -> str:
            """Run a built-in forward model once."""
            result = await handle_evaluate_model(get_output_root(), {
                "problem": problem, "theta": theta, "fidelity": fidelity
            })
            return result[0].text


# Names mcp dev looks for
mcp = BifikleDevServer()
server = mcp
app = mcp

if __name__ == "__main__":
    print("Starting bifikle tools via MCP Dev Adapter...")
    mcp.run()
