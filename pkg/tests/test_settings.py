import pytest

from src.config.settings import RuntimeConfig, load_runtime_config
from src.core.exceptions import InvalidConfigurationError


def test_environment_variables_are_read(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("BIFIKLE_THREADS", "3")
    monkeypatch.setenv("BIFIKLE_OUTPUT_DIR", "/tmp/runs")
    config = load_runtime_config()
    assert config.log_level == "DEBUG"
    assert config.threads == 3
    assert config.output_dir == "/tmp/runs"


def test_explicit_log_level_wins(monkeypatch):
    monkeypatch.setenv("LOG_LEVEL", "DEBUG")
    monkeypatch.delenv("BIFIKLE_THREADS", raising=False)
    config = load_runtime_config(log_level="WARNING")
    assert config.log_level == "WARNING"
    assert config.threads >= 1


def test_malformed_thread_count(monkeypatch):
    monkeypatch.setenv("BIFIKLE_THREADS", "many")
    with pytest.raises(InvalidConfigurationError) as info:
        load_runtime_config()
    assert info.value.key == "BIFIKLE_THREADS"


def test_invalid_values_are_rejected():
    with pytest.raises(InvalidConfigurationError):
        RuntimeConfig(log_level="LOUD")
    with pytest.raises(InvalidConfigurationError):
        RuntimeConfig(threads=0)
