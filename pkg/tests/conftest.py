import numpy as np
import pytest

from stability_lab.numerics import Grid1D


@pytest.fixture
def grid_8():
    """[-8, 8] at dx = 0.01."""
    return Grid1D(-8.0, 8.0, 1601)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ------------------------------------------------------
# test_acceptance.py records one entry per sub-check; the terminal summary
# folds them into one PASS/FAIL line per criterion.

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def criterion():
    def record(number: int, name: str, passed: bool, detail: str = ""):
        ACCEPTANCE.setdefault(number, []).append((name, bool(passed), detail))
        print(f"criterion {number:2d} [{name}]: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p for _, p, _ in parts)
        detail = "; ".join(f"{n}={'ok' if p else 'FAIL'} ({d})" for n, p, d in parts)
        tr.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
