import json
from pathlib import Path

import pytest

from ddssec.crypto.provider import CryptoProvider
from ddssec.harness import generate_fixtures

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[int, dict] = {}


@pytest.fixture(scope="session")
def kat():
    return json.loads((FIXTURES / "kat.json").read_text())


@pytest.fixture(scope="session")
def provider():
    return CryptoProvider()


@pytest.fixture(scope="session")
def shared_tree(tmp_path_factory):
    """Read-only fixture tree. Tests that edit files must use ``fresh_tree``."""
    return generate_fixtures(tmp_path_factory.mktemp("fixtures"), seed=0)


@pytest.fixture
def fresh_tree(tmp_path):
    return generate_fixtures(tmp_path / "fx", seed=0)


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    entry = _criteria.setdefault(marker, {"outcome": "passed", "name": report.nodeid})
    if report.failed:
        entry["outcome"] = "failed"
    elif report.skipped and report.when == "setup":
        entry["outcome"] = "skipped"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        rep.criterion = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = {"passed": "PASS", "failed": "FAIL"}.get(e["outcome"], "SKIP")
        terminalreporter.write_line(f"criterion {n}: {status}  {e['name']}")
