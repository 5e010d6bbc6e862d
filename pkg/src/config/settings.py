"""Runtime settings for bifikle, loaded from the environment."""

import os
from dataclasses import dataclass
from typing import Optional

from ..core.exceptions import InvalidConfigurationError

# Try to load .env file automatically
try:
    from dotenv import load_dotenv
    load_dotenv()  # This will load .env file if it exists
except ImportError:
    # dotenv not installed, continue without it
    pass


@dataclass
class RuntimeConfig:
    """Process-wide settings shared by the CLI and the tool server."""
    log_level: str = "INFO"
    threads: int = 1
    output_dir: str = "campaigns"

    def __post_init__(self):
        """Validate configuration after initialization."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if self.log_level.upper() not in valid_levels:
            raise InvalidConfigurationError(f"Invalid log level: {self.log_level}", key="LOG_LEVEL")
        if self.threads < 1:
            raise InvalidConfigurationError(
                f"Worker count must be at least 1, got {self.threads}", key="BIFIKLE_THREADS"
            )


def load_runtime_config(log_level: Optional[str] = None) -> RuntimeConfig:
    """
    Load runtime configuration from environment variables.

    Reads ``LOG_LEVEL``, ``BIFIKLE_THREADS`` (caps worker count) and
    ``BIFIKLE_OUTPUT_DIR``.

    Args:
        log_level: Explicit override (e.g. from ``--log-level``)

    Returns:
        RuntimeConfig instance

    Raises:
        InvalidConfigurationError: If a variable is malformed
    """
    level = log_level or os.getenv("LOG_LEVEL", "INFO")

    threads_env = os.getenv("BIFIKLE_THREADS")
    if threads_env is None or threads_env.strip() == "":
        threads = os.cpu_count() or 1
    else:
        try:
            threads = int(threads_env)
        except ValueError:
            raise InvalidConfigurationError(
                f"BIFIKLE_THREADS must be an integer, got '{threads_env}'", key="BIFIKLE_THREADS"
            )

    output_dir = os.getenv("BIFIKLE_OUTPUT_DIR", "campaigns")

    return RuntimeConfig(log_level=level, threads=threads, output_dir=output_dir)
