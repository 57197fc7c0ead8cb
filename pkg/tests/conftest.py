import numpy as np
import pytest

from vstreamdrls import model
from vstreamdrls.numkit import segment_sum

ATTENTION_LOG = {"passes": 0, "worst_sum_error": 0.0, "min_alpha": np.inf}


def _check_simplex(alpha, dst, n):
    ATTENTION_LOG["passes"] += 1
    if alpha.size == 0:
        return
    sums = segment_sum(alpha, dst, n)[np.unique(dst)]
    err = float(np.max(np.abs(sums - 1.0)))
    ATTENTION_LOG["worst_sum_error"] = max(ATTENTION_LOG["worst_sum_error"], err)
    ATTENTION_LOG["min_alpha"] = min(ATTENTION_LOG["min_alpha"], float(alpha.min()))
    assert np.all(alpha > 0), "attention weight not positive"
    assert err <= 1e-12, f"attention row sums off by {err}"


@pytest.fixture(autouse=True, scope="session")
def attention_simplex_guard():
    """Every attention pass run by the suite is checked for the simplex property."""
    model.attention_observers.append(_check_simplex)
    yield ATTENTION_LOG
    model.attention_observers.remove(_check_simplex)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    log = ATTENTION_LOG
    if log["passes"]:
        terminalreporter.write_line(
            f"attention simplex guard: {log['passes']} passes, worst |sum-1| "
            f"{log['worst_sum_error']:.3g}, min alpha {log['min_alpha']:.3g}")
