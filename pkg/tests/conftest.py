import pytest

from midend.config import get_settings

_ENV_NAMES = (
    "MIDEND_STEP_BUDGET",
    "MIDEND_HOT_THRESHOLD",
    "MIDEND_SEED",
    "MIDEND_TASKS",
    "MIDEND_VERBOSE",
    "MIDEND_MAX_OFFSETS",
)


@pytest.fixture(autouse=True)
def _fresh_settings(monkeypatch):
    for name in _ENV_NAMES:
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
