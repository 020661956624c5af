import logging

import pytest

from midend import config
from midend.logging_utils import get_logger


def test_settings_load_from_env(monkeypatch):
    monkeypatch.setenv("MIDEND_STEP_BUDGET", "5000")
    monkeypatch.setenv("MIDEND_HOT_THRESHOLD", "0.25")
    monkeypatch.setenv("MIDEND_SEED", "7")
    monkeypatch.setenv("MIDEND_TASKS", "3")
    monkeypatch.setenv("MIDEND_VERBOSE", "yes")
    monkeypatch.setenv("MIDEND_MAX_OFFSETS", "2")

    config.get_settings.cache_clear()
    settings = config.get_settings()

    assert settings.step_budget == 5000
    assert settings.hot_threshold == 0.25
    assert settings.seed == 7
    assert settings.tasks == 3
    assert settings.verbose is True
    assert settings.max_offsets == 2

    config.get_settings.cache_clear()


def test_unparseable_values_fall_back_to_defaults(monkeypatch):
    monkeypatch.setenv("MIDEND_STEP_BUDGET", "lots")
    monkeypatch.setenv("MIDEND_HOT_THRESHOLD", "")
    monkeypatch.setenv("MIDEND_VERBOSE", "maybe")

    config.get_settings.cache_clear()
    settings = config.get_settings()

    assert settings.step_budget == 10_000_000
    assert settings.hot_threshold == 0.0
    assert settings.verbose is False


def test_out_of_range_value_is_rejected(monkeypatch):
    monkeypatch.setenv("MIDEND_TASKS", "0")

    config.get_settings.cache_clear()
    with pytest.raises(RuntimeError, match="Invalid configuration"):
        config.get_settings()


def test_logger_follows_the_latest_verbosity():
    logger = get_logger("midend.test", verbose=True)
    assert logger.level == logging.DEBUG
    again = get_logger("midend.test", verbose=False)
    assert again is logger
    assert len(logger.handlers) == 1
    assert logger.handlers[0].level == logging.INFO
