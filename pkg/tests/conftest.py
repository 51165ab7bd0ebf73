import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record an acceptance outcome; the test itself still asserts."""
    def record(key, ok, detail=""):
        _RESULTS[key] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = _RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
