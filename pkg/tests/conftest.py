import time

import pytest

_ACCEPTANCE_RESULTS = []
_SUITE_START = time.time()


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion, then assert it."""

    def _record(name: str, passed, detail: str = ""):
        _ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return _record


def suite_elapsed() -> float:
    return time.time() - _SUITE_START


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, passed, detail in _ACCEPTANCE_RESULTS:
            status = "PASS" if passed else "FAIL"
            suffix = f" ({detail})" if detail else ""
            terminalreporter.write_line(f"[{status}] {name}{suffix}")
        terminalreporter.write_line(f"suite wall time: {suite_elapsed():.1f} s")
