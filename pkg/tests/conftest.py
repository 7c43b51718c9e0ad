import numpy as np
import pytest

from paneldiag.panel import PanelDataset

INF = np.inf


def make_panel(outcome, adoption, units=None, periods=None):
    outcome = np.asarray(outcome, dtype=float)
    n, t = outcome.shape
    return PanelDataset(
        units=tuple(units or range(1, n + 1)),
        periods=tuple(periods or range(1, t + 1)),
        outcome=outcome,
        adoption=np.asarray(adoption, dtype=float),
    )


def random_panel(rng, n_units=None, n_periods=None, n_cohorts=None, never=True):
    """Small random staggered panel with at least one pre-period per cohort."""
    T = n_periods or int(rng.integers(4, 9))
    N = n_units or int(rng.integers(8, 21))
    k = n_cohorts or int(rng.integers(1, min(4, T - 1) + 1))
    cohorts = sorted(rng.choice(np.arange(2, T + 1), size=k, replace=False).tolist())
    groups = cohorts + ([INF] if never else [])
    # every group gets at least one unit
    adoption = np.array(groups + list(rng.choice(groups, size=N - len(groups))), dtype=float)
    rng.shuffle(adoption)
    y = rng.normal(size=(N, T)) + rng.normal(size=(N, 1)) + rng.normal(size=(1, T))
    y += (np.arange(1, T + 1)[None, :] >= adoption[:, None]) * rng.normal(1.0, 0.5, size=(N, T))
    return make_panel(y, adoption)


@pytest.fixture
def did_2x2():
    # unit A never treated y=(0,1); unit B adopts at t=2 y=(1,5)
    return make_panel([[0.0, 1.0], [1.0, 5.0]], [INF, 2], units=["A", "B"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
