import pytest

from arithwaves.lattice import enumerate_lambda


@pytest.fixture(scope="session")
def levels():
    cache = {}

    def get(n):
        if n not in cache:
            cache[n] = enumerate_lambda(n)
        return cache[n]

    return get


ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def acceptance():
    """Recorder for acceptance outcomes: acceptance(criterion, part, passed, detail)."""

    def record(criterion, part, passed, detail=""):
        ACCEPTANCE.setdefault(str(criterion), []).append((part, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=int):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for part, passed, detail in parts:
            tr.write_line(f"    {part}: {'pass' if passed else 'FAIL'}  {detail}")
