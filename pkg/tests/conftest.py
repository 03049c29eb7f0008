import pytest

ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def acceptance():
    """Record one line per acceptance criterion: ``acceptance(n, passed, title, detail)``."""

    def record(n: int, passed: bool, title: str, detail: str = ""):
        ACCEPTANCE[n] = (bool(passed), title, detail)
        print(f"ACCEPTANCE {n:2d} {'PASS' if passed else 'FAIL'}  {title}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{n:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
