import functools
import logging

import pytest

from floodbed.scenario import preset
from floodbed.sim import run_sim


@functools.lru_cache(maxsize=None)
def cached_run(name: str, seed: int = 1):
    """Sim runs are deterministic, so one result per (preset, seed) is shared."""
    return run_sim(preset(name, seed=seed))


@pytest.fixture
def run_preset():
    return cached_run


@pytest.fixture(autouse=True)
def _quiet_training_warning(caplog):
    # benign telemetry has a constant length, so the flat-feature warning is expected
    caplog.set_level(logging.ERROR, logger="floodbed.ids")


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
