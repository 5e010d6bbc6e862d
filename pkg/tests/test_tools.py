import asyncio
import json

import numpy as np
import pytest

from src.campaign.driver import run_campaign
from src.config.campaign import parse_campaign_config
from src.problems.pulse import pulse_hf_values
from src.problems.registry import PulseProblem
from src.tools.campaigns import (
    handle_campaign_summary,
    handle_ping,
    handle_predict_field,
    handle_propagate_uncertainty,
)
from src.tools.models import handle_evaluate_model
from tests.conftest import campaign_text


@pytest.fixture(scope="module")
def output_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("tools")
    run_campaign(parse_campaign_config(campaign_text(root / "demo", budget=6)))
    return root


def _call(handler, root, arguments):
    return asyncio.run(handler(root, arguments))[0].text


def test_ping(tmp_path):
    assert json.loads(_call(handle_ping, tmp_path, {}))["status"] == "ok"


def test_campaign_summary_by_name(output_root):
    summary = json.loads(_call(handle_campaign_summary, output_root, {"campaign": "demo"}))
    assert summary["problem"] == "pulse_c2"
    assert summary["status"] == "complete"
    assert summary["parameters"] == ["a", "b"]
    assert [s["n_hf"] for s in summary["stages"]] == [5, 6]


def test_predict_field_uses_the_stored_surrogate(output_root):
    result = json.loads(_call(handle_predict_field, output_root, {"campaign": "demo", "theta": [50.0, 40.0]}))
    assert result["qoi"] == "field"
    assert result["n_points"] == 64
    assert len(result["preview"]) == 16


def test_propagate_uncertainty(output_root):
    result = json.loads(_call(handle_propagate_uncertainty, output_root,
                              {"campaign": "demo", "samples": 32, "seed": 1}))
    assert result["samples"] == 32
    assert result["std"]["min"] >= 0.0


def test_unknown_campaign_reports_an_error(output_root):
    assert _call(handle_campaign_summary, output_root, {"campaign": "missing"}).startswith("Error")
    assert _call(handle_predict_field, output_root, {"campaign": "missing", "theta": [50.0, 40.0]}).startswith("Error")


def test_evaluate_model_matches_the_closed_form(tmp_path):
    result = json.loads(_call(handle_evaluate_model, tmp_path,
                              {"problem": "pulse_c2", "theta": [50.0, 40.0], "fidelity": "hf"}))
    grid = PulseProblem("C2").grid
    values = pulse_hf_values(grid.axes()[0], 50.0, 40.0)[:, 0]
    assert result["n_points"] == 256
    assert result["integral"] == pytest.approx(grid.integrate(values))
    assert result["max"] == pytest.approx(float(np.max(values)))


def test_evaluate_model_rejects_bad_input(tmp_path):
    assert _call(handle_evaluate_model, tmp_path,
                 {"problem": "pulse_c2", "theta": [50.0, 40.0], "fidelity": "mf"}).startswith("Error")
    assert _call(handle_evaluate_model, tmp_path,
                 {"problem": "pulse_c2", "theta": [90.0, 40.0]}).startswith("Error")
