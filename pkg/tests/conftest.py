import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from besovns import TorusGrid  # noqa: E402

ACCEPTANCE: dict = {}


def record_acceptance(number: int, name: str, passed: bool, detail: str = ""):
    ACCEPTANCE[number] = (name, passed, detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {name}: {detail}")


@pytest.fixture
def acceptance():
    return record_acceptance


@pytest.fixture(params=[(16, 16), (32, 32)], ids=lambda s: "x".join(map(str, s)))
def small_grid(request):
    return TorusGrid(request.param)


@pytest.fixture
def grid64():
    return TorusGrid((64, 64))


@pytest.fixture
def rng():
    return np.random.default_rng(20241018)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:2d}  {name}  {detail}")
