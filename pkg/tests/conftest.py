import pytest

from mtmpfe import EvalMode, make_config
from mtmpfe import twice_mtm

PAPER = EvalMode.PAPER_FACTORIZED
EXACT = EvalMode.EXACT_CONDITIONAL


@pytest.fixture(scope="session")
def bench():
    return make_config()


@pytest.fixture(scope="session")
def short_cfg():
    """One-year contract with 10% monthly volatility used for the twice-MTM comparisons."""
    return make_config(sigma=0.1, maturity=12)


@pytest.fixture(scope="session")
def simultaneous_paper(short_cfg):
    return twice_mtm.optimize_simultaneous(short_cfg, PAPER)


@pytest.fixture(scope="session")
def sequential_paper(short_cfg):
    return twice_mtm.optimize_sequential(short_cfg, PAPER)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion; printed in the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
