import numpy as np
import pytest

from fusion_dml.core import Dataset
from fusion_dml.crossfit import NuisanceEstimates

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_dataset(y, t, s, x=None, **kw) -> Dataset:
    y = np.asarray(y, dtype=float)
    if x is None:
        x = np.zeros((y.size, 1))
    return Dataset(
        y=y,
        t=np.asarray(t, dtype=np.int8),
        s=np.asarray(s, dtype=np.int8),
        x=np.asarray(x, dtype=float).reshape(y.size, -1),
        **kw,
    )


def make_nuisances(n, mu1_0, mu1_1, e1_0, e1_1, p, mu0_0=None, mu0_1=None) -> NuisanceEstimates:
    """Nuisances from per-level arrays (or scalars broadcast to n units)."""
    full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    mu = np.empty((n, 2, 2))
    mu[:, 1, 0], mu[:, 1, 1] = full(mu1_0), full(mu1_1)
    mu[:, 0, 0] = full(mu1_0 if mu0_0 is None else mu0_0)
    mu[:, 0, 1] = full(mu1_1 if mu0_1 is None else mu0_1)
    e = np.empty((n, 2, 2))
    e[:, 1, 0], e[:, 1, 1] = full(e1_0), full(e1_1)
    e[:, 0, :] = 1 - e[:, 1, :]
    return NuisanceEstimates(mu, e, full(p))


def oracle_nuisances(oracle) -> NuisanceEstimates:
    return NuisanceEstimates(oracle.mu.copy(), oracle.e.copy(), oracle.p.copy(), clip_epsilon=1e-12)


@pytest.fixture
def small_balanced():
    rng = np.random.default_rng(3)
    t = np.array([0, 1] * 20)
    s = np.repeat([0, 1], 20)
    x = rng.normal(size=(40, 2))
    y = x @ [1.0, -0.5] + t + rng.normal(scale=0.1, size=40)
    return make_dataset(y, t, s, x)
