import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lagmhd.fourier_core import Field, Grid

settings.register_profile(
    "lagmhd", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True,
)
settings.load_profile("lagmhd")


@pytest.fixture
def grid32():
    return Grid.square(2, 32)


def mode_field(grid: Grid, k, kind: str = "cos") -> Field:
    """cos or sin of the integer wave vector k, sampled on ``grid``."""
    x = grid.coordinates()
    arg = sum(kk * xx for kk, xx in zip(k, x))
    return Field(grid, np.cos(arg) if kind == "cos" else np.sin(arg))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
