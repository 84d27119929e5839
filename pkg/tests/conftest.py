import pytest

_results: dict[int, tuple[str, bool]] = {}
_notes: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): acceptance criterion the test gates")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    n, name = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _results.get(n, (name, True))[1]
    if call.when == "call" or failed:
        _results[n] = (name, prev and not failed)


@pytest.fixture
def acceptance_note():
    """Record an informational (non-gating) line for the terminal summary."""
    return _notes.append


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance")
    for n in sorted(_results):
        name, ok = _results[n]
        terminalreporter.write_line(f"ACCEPTANCE C{n} {name}: {'PASS' if ok else 'FAIL'}")
    for line in _notes:
        terminalreporter.write_line(line)
