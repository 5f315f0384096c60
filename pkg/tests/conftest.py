import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = {}


class Criterion:
    """Collects the outcome of one acceptance criterion for the summary."""

    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.start = time.perf_counter()
        self.notes = []
        _RESULTS[number] = [title, "FAIL", None, self.notes]

    def note(self, text):
        self.notes.append(text)

    def elapsed(self):
        return time.perf_counter() - self.start

    def passed(self):
        _RESULTS[self.number][1] = "PASS"


@pytest.fixture
def criterion(request):
    made = []

    def factory(number, title, budget):
        c = Criterion(number, title, budget)
        made.append(c)
        return c

    yield factory
    for c in made:
        _RESULTS[c.number][2] = c.elapsed()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status, secs, notes = _RESULTS[number]
        t = "" if secs is None else f" ({secs:.1f} s)"
        extra = f" [{'; '.join(notes)}]" if notes else ""
        terminalreporter.write_line(f"{status} criterion {number}: {title}{t}{extra}")
