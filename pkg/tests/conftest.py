import pytest

from kshomog.random_fields import FieldSpec

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def coin_spec():
    """Checkerboard D in {1, 4} with p = 1/2, chi = 1."""
    return FieldSpec.checkerboard([1.0, 4.0], [0.5, 0.5], [1.0])


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
