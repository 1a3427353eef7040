import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def within_sigma(observed: float, expected: float, trials: int, k: float = 5.0) -> bool:
    """Is a Monte Carlo rate within k binomial standard errors of ``expected``?"""
    se = np.sqrt(expected * (1 - expected) / trials)
    return abs(observed - expected) <= k * se + 1e-12


# One verdict line per acceptance criterion, printed in the terminal summary.
CRITERIA: dict[int, list[tuple[bool, str]]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    CRITERIA.setdefault(number, []).append((bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        parts = CRITERIA[number]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        failing = [d for ok, d in parts if not ok]
        shown = failing if failing else [d for _, d in parts]
        terminalreporter.write_line(f"criterion {number}: {verdict} | " + "; ".join(shown))
