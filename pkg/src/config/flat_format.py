"""Flat ``key = value`` text format used for configs, manifests and metadata sidecars."""

from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

import numpy as np

from ..core.exceptions import InvalidConfigurationError


def parse_flat(text: str, source: Optional[str] = None) -> Dict[str, str]:
    """
    Parse flat key-value text.

    Blank lines and lines starting with ``#`` are ignored; sections are
    expressed by dotted keys (``pilot.n_lf = 200``).

    Args:
        text: File contents
        source: Name used in error messages

    Returns:
        Ordered mapping of dotted key to raw string value

    Raises:
        InvalidConfigurationError: On malformed lines or duplicate keys
    """
    where = f" in {source}" if source else ""
    entries: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfigurationError(f"Line {lineno}{where}: expected 'key = value', got '{line}'")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise InvalidConfigurationError(f"Line {lineno}{where}: empty key")
        if key in entries:
            raise InvalidConfigurationError(f"Line {lineno}{where}: duplicate key '{key}'", key=key)
        entries[key] = value.strip()
    return entries


def read_flat(path: Union[str, Path]) -> Dict[str, str]:
    """Read and parse a flat key-value file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InvalidConfigurationError(f"Cannot read {path}: {e}")
    return parse_flat(text, source=str(path))


def nest(entries: Mapping[str, Any]) -> Dict[str, Any]:
    """Turn dotted keys into nested dictionaries."""
    nested: Dict[str, Any] = {}
    for dotted, value in entries.items():
        parts = dotted.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise InvalidConfigurationError(f"Key '{dotted}' conflicts with scalar key '{part}'", key=dotted)
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise InvalidConfigurationError(f"Key '{dotted}' conflicts with section '{dotted}.*'", key=dotted)
        node[parts[-1]] = value
    return nested


def flatten(nested: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Inverse of :func:`nest`."""
    flat: Dict[str, Any] = {}
    for key, value in nested.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, prefix=f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def format_value(value: Any) -> str:
    """Render a python value in the flat format."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if isinstance(value, np.ndarray):
        return format_value(value.tolist())
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    if value is None:
        return ""
    return str(value)


def dump_flat(entries: Mapping[str, Any], header: Optional[Iterable[str]] = None) -> str:
    """Render a mapping (nested or dotted) as flat key-value text."""
    lines = [f"# {line}" for line in (header or [])]
    for key, value in flatten(entries).items():
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def write_flat(path: Union[str, Path], entries: Mapping[str, Any], header: Optional[Iterable[str]] = None) -> Path:
    """Write a flat key-value file."""
    path = Path(path)
    path.write_text(dump_flat(entries, header=header), encoding="utf-8")
    return path


def split_list(value: str) -> list:
    """Split a comma-separated flat value."""
    return [item.strip() for item in value.split(",") if item.strip()]
