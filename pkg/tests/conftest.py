import numpy as np
import pytest

from rcfusion.data import Dataset
from rcfusion.fusion import BeliefDistribution, Evidence

GROUP_1 = ((0.8, 0.2), (0.7, 0.3), (0.6, 0.4))
GROUP_2 = ((0.8, 0.2), (0.3, 0.7), (0.4, 0.6))


def random_belief(rng, H):
    return BeliefDistribution.from_array(rng.dirichlet(np.ones(H)))


def random_evidences(rng, N, H, w_low=0.05):
    """Evidence with w in [w_low, 1] and r in [0, 1]."""
    return [
        Evidence(random_belief(rng, H), float(rng.uniform(w_low, 1.0)), float(rng.uniform(0.0, 1.0)))
        for _ in range(N)
    ]


def synthetic_dataset(n=200, informative=(1.5, 1.0), noise=4, seed=0, groups=None):
    """Binary problem whose first columns shift with the label; the rest is noise."""
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], [n // 2, n - n // 2])
    cols = [rng.normal(size=n) + shift * y for shift in informative]
    cols += [rng.normal(size=n) for _ in range(noise)]
    X = np.column_stack(cols)
    names = tuple(f"x{i}" for i in range(X.shape[1]))
    return Dataset(X, y, names, groups=groups or {})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance[report.nodeid.split("::")[-1]] = report.outcome
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.outcome != "passed":
        _acceptance[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")
