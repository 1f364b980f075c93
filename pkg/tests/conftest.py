from pathlib import Path

import pytest
from hypothesis import settings

from mom.kernel import MemoryGraph
from mom.story import load_episodes

DATA = Path(__file__).resolve().parents[1] / "src" / "mom" / "data"

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def graph():
    return MemoryGraph()


@pytest.fixture
def david(graph):
    (ep,) = load_episodes([DATA / "david.story"], graph)
    return graph, ep


@pytest.fixture
def data_dir():
    return DATA


# acceptance criteria append (number, passed, detail) here
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
