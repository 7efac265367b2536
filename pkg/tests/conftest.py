import time

import pytest

_RESULTS_KEY = pytest.StashKey[list]()


class Criterion:
    """Collects named checks for one acceptance criterion and times the run."""

    def __init__(self, number, title, budget=None):
        self.number = number
        self.title = title
        self.budget = budget
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    finished = False

    def finish(self):
        if self.budget is not None:
            self.check("runtime", self.elapsed < self.budget,
                       f"{self.elapsed:.1f} s, budget {self.budget:g} s")
        self.finished = True
        self._record(self)
        bad = [n for n, o, _ in self.checks if not o]
        assert not bad, f"criterion {self.number} failed: {', '.join(bad)}"

    @property
    def elapsed(self):
        return time.perf_counter() - self.start

    def line(self):
        ok = all(c[1] for c in self.checks)
        failed = [f"{n} ({d})" if d else n for n, o, d in self.checks if not o]
        tail = f"  failed: {'; '.join(failed)}" if failed else ""
        return f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'} {self.elapsed:8.1f} s  {self.title}{tail}"


@pytest.fixture
def criterion(request):
    """Factory for :class:`Criterion`; call ``finish()`` on it at the end of the test."""
    made = []

    def record(c):
        line = c.line()
        request.config.stash.setdefault(_RESULTS_KEY, []).append((c.number, line))
        print(line)
        for name, ok, detail in c.checks:
            print(f"    {'ok ' if ok else 'BAD'} {name}: {detail}")

    def factory(number, title, budget=None):
        c = Criterion(number, title, budget)
        c._record = record
        made.append(c)
        return c

    yield factory
    for c in made:
        if not c.finished:
            # the test raised before finishing
            c.check("completed", False, "raised before all checks ran")
            record(c)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_RESULTS_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(rows):
        terminalreporter.write_line(line)
