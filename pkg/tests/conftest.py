import json
import logging
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def logged():
    """Prompts, decodings and judge scores logged for one optimization iteration."""
    with open(DATA / "logged_iteration1.json", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture
def quiet():
    logging.disable(logging.WARNING)
    yield
    logging.disable(logging.NOTSET)


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, summary)`` before the checks run."""
    entry = {}

    def declare(number, summary, label=None):
        entry.update(number=number, label=label or str(number), summary=summary, note="")
        _CRITERIA[request.node.nodeid] = entry
        return entry

    return declare


def pytest_runtest_logreport(report):
    entry = _CRITERIA.get(report.nodeid)
    if entry is not None and report.when == "call":
        entry["outcome"] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(_CRITERIA.values(), key=lambda e: e["number"]):
        line = f"[{entry.get('outcome', 'FAIL')}] {entry['label']:>3}. {entry['summary']}"
        if entry["note"]:
            line += f" ({entry['note']})"
        terminalreporter.write_line(line)
