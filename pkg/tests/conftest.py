import pytest

_KEY = pytest.StashKey[dict]()


class CriterionLog:
    """Collects PASS/FAIL per acceptance criterion; a criterion fails if any part fails."""

    def __init__(self, store: dict):
        self.store = store

    def record(self, number: int, part: str, ok: bool, detail: str = "") -> None:
        self.store.setdefault(number, []).append((part, ok, detail))
        print(f"criterion {number} [{part}]: {'PASS' if ok else 'FAIL'} {detail}".rstrip())


def pytest_configure(config):
    config.stash[_KEY] = {}


@pytest.fixture
def criteria(request):
    return CriterionLog(request.config.stash[_KEY])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        parts = store[number]
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}")
        for part, part_ok, detail in parts:
            terminalreporter.write_line(f"    [{'ok' if part_ok else 'FAIL'}] {part}: {detail}")
