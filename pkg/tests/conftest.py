import time

import pytest

_RESULTS = {}


class Criterion:
    """Collects named checks and the wall time for one acceptance criterion."""

    def __init__(self, number, title, limit=None):
        self.number, self.title, self.limit = number, title, limit
        self.failures, self.notes = [], []
        self.elapsed = None

    def check(self, ok, detail):
        (self.notes if ok else self.failures).append(detail)
        return ok

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.elapsed = time.perf_counter() - self._start
        if exc is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        if self.limit is not None and self.elapsed > self.limit:
            self.failures.append(f"runtime {self.elapsed:.1f}s exceeds {self.limit}s")
        passed = not self.failures
        budget = f"{self.elapsed:.1f}s" + (f"/{self.limit}s" if self.limit is not None else "")
        detail = "; ".join(self.failures + [f"ok: {n}" for n in self.notes] if self.failures else self.notes)
        _RESULTS[self.number] = f"{'PASS' if passed else 'FAIL'} {self.number}. {self.title} [{budget}] {detail}"
        print(_RESULTS[self.number])
        if exc is None:
            assert passed, detail
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_RESULTS):
            terminalreporter.write_line(_RESULTS[number])
