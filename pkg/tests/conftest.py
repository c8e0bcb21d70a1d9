import numpy as np
import pytest

# acceptance criterion number -> (title, outcome, detail)
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        notes = [v for k, v in item.user_properties if k == "note"]
        if report.failed and call.excinfo is not None:
            lines = str(call.excinfo.value).strip().splitlines()
            notes.append(lines[0] if lines else call.excinfo.typename)
        _ACCEPTANCE[number] = (title, report.outcome, "; ".join(notes))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, detail = _ACCEPTANCE[number]
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        line = f"[{status}] criterion {number:2d}: {title}"
        if detail:
            line += f" -- {detail}"
        tr.write_line(line)
    passed = sum(1 for _, o, _ in _ACCEPTANCE.values() if o == "passed")
    tr.write_line(f"{passed}/{len(_ACCEPTANCE)} acceptance criteria passed")


@pytest.fixture
def note(request):
    """Attach a short measured-value note to the acceptance summary line."""

    def add(text):
        request.node.user_properties.append(("note", text))

    return add


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def threads_env(monkeypatch):
    """Set SMERF_THREADS for the duration of a test."""

    def set_threads(k):
        monkeypatch.setenv("SMERF_THREADS", str(k))

    return set_threads

