import pytest

# criterion number -> (passed, detail) for each recorded part
_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; it is printed in the terminal summary.

    Parametrized criteria record one part per case and pass only if every
    part passes.
    """

    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA.setdefault(number, []).append((bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        passed = all(p for p, _ in parts)
        detail = " | ".join(d for _, d in parts)
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {detail}")
