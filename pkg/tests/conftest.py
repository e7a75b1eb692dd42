import pytest

ACCEPTANCE: dict[int, str] = {}


class Criterion:
    """Records one acceptance line, then asserts."""

    def __call__(self, number: int, title: str, passed: bool, detail: str = "") -> None:
        ACCEPTANCE[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  {detail}".rstrip()
        print(ACCEPTANCE[number])
        assert passed, ACCEPTANCE[number]


@pytest.fixture
def criterion() -> Criterion:
    return Criterion()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
