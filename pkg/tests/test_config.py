import json

import pytest

from .context import HarnessConfig
from forecast_harness.errors import ConfigError


def test_defaults():
    config = HarnessConfig.load()
    assert config == HarnessConfig()
    assert config.to_dict()["max_rounds"] == 8
    assert config.to_dict()["ses_alpha"] == 0.3


def test_load_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"max_rounds": 3, "submission_label": "team"}))
    config = HarnessConfig.load(path)
    assert (config.max_rounds, config.submission_label) == (3, "team")
    assert config.lag_steps == 7


@pytest.mark.parametrize("content", ['{"max_round": 3}', "[1, 2]", "{broken", '{"ses_alpha": 0}'])
def test_load_rejects(tmp_path, content):
    path = tmp_path / "config.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        HarnessConfig.load(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        HarnessConfig.load(tmp_path / "absent.json")


@pytest.mark.parametrize("changes", [
    {"time_budget": 0}, {"max_rounds": 0}, {"ses_alpha": 1.5}, {"lag_steps": 0}, {"submission_label": ""},
])
def test_value_ranges(changes):
    with pytest.raises(ConfigError):
        HarnessConfig(**changes)
