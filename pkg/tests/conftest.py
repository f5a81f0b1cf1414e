from __future__ import annotations

import pytest

from ghostedit.fixtures import canned_fixtures, fixture_bytes, fixture_spec

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker:
            number, title = marker.args
            _criteria.setdefault(number, {"title": title, "nodes": {}})["nodes"][item.nodeid] = None


def pytest_runtest_logreport(report):
    for entry in _criteria.values():
        if report.nodeid not in entry["nodes"]:
            continue
        previous = entry["nodes"][report.nodeid]
        if report.failed:
            entry["nodes"][report.nodeid] = "FAIL"
        elif report.when == "call" and previous is None:
            entry["nodes"][report.nodeid] = "SKIP" if report.skipped else "PASS"
        elif report.skipped and previous is None:
            entry["nodes"][report.nodeid] = "SKIP"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        results = list(entry["nodes"].values())
        if any(r == "FAIL" for r in results):
            status = "FAIL"
        elif results and all(r == "PASS" for r in results):
            status = "PASS"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {number:>2}: {status:<7} {entry['title']}")


@pytest.fixture(scope="session")
def fixtures():
    return canned_fixtures()


@pytest.fixture(scope="session")
def fixture_archives():
    from ghostedit.fixtures import fixture_names
    return {name: fixture_bytes(fixture_spec(name)) for name in fixture_names()}


@pytest.fixture(scope="session")
def python_like(fixtures):
    return fixtures["python-like"]
