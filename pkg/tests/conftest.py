from pathlib import Path

import pytest

MODELS = Path(__file__).resolve().parent.parent / "models"


@pytest.fixture
def models():
    return MODELS


@pytest.fixture
def write_model(tmp_path):
    def write(text, name="model.toml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; ``ok`` is the verdict the test then asserts."""
    def record(number, name, ok, detail):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'} {name}: {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
