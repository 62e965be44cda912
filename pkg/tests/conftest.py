import pytest

from photorack.config import build_plan, load_config

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    marker = _CRITERIA.get(report.nodeid)
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        number, title, results = marker
        results.append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = (m.args[0], m.args[1], [])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    by_number = {}
    for number, title, results in _CRITERIA.values():
        entry = by_number.setdefault(number, [title, []])
        entry[1].extend(results)
    terminalreporter.section("acceptance criteria")
    for number in sorted(by_number):
        title, results = by_number[number]
        if not results:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status:7} {title}")


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def case_a(cfg):
    return build_plan(cfg, "awgr")


@pytest.fixture(scope="session")
def case_b(cfg):
    return build_plan(cfg, "wss")
