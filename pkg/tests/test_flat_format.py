import numpy as np
import pytest

from src.config.flat_format import dump_flat, flatten, format_value, nest, parse_flat, read_flat, split_list
from src.core.exceptions import InvalidConfigurationError


def test_parse_skips_comments_and_blank_lines():
    text = "# header\n\nproblem = pulse_c1\n  pilot.n_lf = 200  \nnote = a = b\n"
    assert parse_flat(text) == {"problem": "pulse_c1", "pilot.n_lf": "200", "note": "a = b"}


def test_parse_reports_the_offending_line():
    with pytest.raises(InvalidConfigurationError, match="Line 2"):
        parse_flat("a = 1\nno separator here\n")
    with pytest.raises(InvalidConfigurationError) as info:
        parse_flat("a = 1\na = 2\n")
    assert info.value.key == "a"


def test_nest_and_flatten_are_inverse():
    flat = {"problem": "convdiff", "pilot.n_lf": "40", "pilot.n_delta": "10", "gp.starts": "4"}
    nested = nest(flat)
    assert nested == {"problem": "convdiff", "pilot": {"n_lf": "40", "n_delta": "10"}, "gp": {"starts": "4"}}
    assert flatten(nested) == flat


def test_nest_rejects_scalar_section_clashes():
    with pytest.raises(InvalidConfigurationError):
        nest({"pilot": "3", "pilot.n_lf": "4"})
    with pytest.raises(InvalidConfigurationError):
        nest({"pilot.n_lf": "4", "pilot": "3"})


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(np.float64(0.1)) == "0.1"
    assert format_value(np.int64(3)) == "3"
    assert format_value((1e-2, 10.0)) == "0.01, 10.0"
    assert format_value(None) == ""


def test_dump_and_read_back(tmp_path):
    path = tmp_path / "meta.txt"
    path.write_text(dump_flat({"grid": {"n_points": 64}, "kind": "lhs"}, header=["sidecar"]), encoding="utf-8")
    assert path.read_text(encoding="utf-8").startswith("# sidecar\n")
    assert read_flat(path) == {"grid.n_points": "64", "kind": "lhs"}
    with pytest.raises(InvalidConfigurationError):
        read_flat(tmp_path / "missing.txt")


def test_split_list():
    assert split_list(" ei_max, random ,,") == ["ei_max", "random"]
