"""Shared utility functions for bifikle."""

import hashlib
import logging
import zlib
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

RNG_NAME = "philox"


def log_operation(logger: logging.Logger, operation: str, params: Dict[str, Any]) -> None:
    """
    Standard logging for operation execution.

    Args:
        logger: Logger instance
        operation: Name of the operation being executed
        params: Parameters passed to the operation
    """
    # Arrays are summarized by shape; the values would flood the log
    safe_params = {}
    for key, value in params.items():
        if isinstance(value, np.ndarray):
            safe_params[key] = f"array{value.shape}"
        elif hasattr(value, "values") and isinstance(getattr(value, "values"), np.ndarray):
            safe_params[key] = f"{type(value).__name__}{value.values.shape}"
        else:
            safe_params[key] = value
    logger.info(f"Executing {operation} with params: {safe_params}")


def _stream_key(key: Union[int, str]) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key)


def make_rng(seed: int, *keys: Union[int, str]) -> np.random.Generator:
    """
    Build a counter-based generator for a named substream.

    Args:
        seed: Master seed
        keys: Stream path, e.g. ("design", 0) or ("cv", stage)

    Returns:
        numpy Generator backed by Philox
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_stream_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: Union[int, str]) -> int:
    """Derive a 31-bit integer seed for libraries that take ``random_state`` ints."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_stream_key(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0] >> 1)


def weighted_norm(values: np.ndarray, weights: np.ndarray) -> Union[float, np.ndarray]:
    """
    Grid-weighted L2 norm.

    Args:
        values: (n_g,) field or (n_g, M) matrix of fields
        weights: (n_g,) quadrature weights

    Returns:
        Norm (scalar, or one per column)
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return float(np.sqrt(np.dot(weights, values * values)))
    return np.sqrt(weights @ (values * values))


def relative_error(truth: np.ndarray, predicted: np.ndarray, weights: np.ndarray,
                   floor: float = 1e-12) -> Union[float, np.ndarray]:
    """
    Relative weighted L2 error ``||truth - predicted||_w / ||truth||_w``.

    The denominator is floored at ``floor * max|truth|``; an identically zero
    truth falls back to the absolute error.

    Args:
        truth: (n_g,) or (n_g, M) reference fields
        predicted: same shape as truth
        weights: (n_g,) quadrature weights
        floor: relative floor on the denominator

    Returns:
        Error (scalar, or one per column)
    """
    truth = np.asarray(truth, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    numerator = weighted_norm(truth - predicted, weights)
    denominator = weighted_norm(truth, weights)
    scale = np.max(np.abs(truth), axis=0) * np.sqrt(np.sum(weights))
    denominator = np.maximum(denominator, floor * scale)
    denominator = np.where(denominator > 0.0, denominator, 1.0)
    result = numerator / denominator
    if np.ndim(result) == 0:
        return float(result)
    return result


def file_digest(path: Union[str, Path]) -> str:
    """SHA-256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def text_digest(text: str) -> str:
    """SHA-256 hex digest of a text blob."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()

