from pathlib import Path

import numpy as np
import pytest

from flightbp.data_pipeline import Dataset
from flightbp.nn_core import init_network

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance outcomes, filled by tests/test_acceptance.py and echoed at the end of the run
ACCEPTANCE_RESULTS = {}


def random_network(seed, output_activation=None):
    """Seeded random architecture: 1-3 hidden layers, widths 2..8."""
    rng = np.random.default_rng(seed)
    n_hidden = int(rng.integers(1, 4))
    dims = [int(rng.integers(2, 9)) for _ in range(n_hidden + 2)]
    if output_activation is None:
        output_activation = ["tanh", "identity"][int(rng.integers(2))]
    net = init_network(dims, "tanh", output_activation, seed=seed)
    x = rng.normal(size=dims[0])
    t = rng.uniform(-1.0, 1.0, size=dims[-1])
    return net, x, t


def toy_dataset(features, targets):
    x = np.asarray(features, float)
    y = np.asarray(targets, float)
    if y.ndim == 1:
        y = y[:, None]
    return Dataset(x, y, tuple(range(1, len(x) + 1)))


def two_gaussians(n=200, seed=0, sep=3.0):
    """Balanced, linearly separable 2-D set with +/-1 targets."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    centers = np.where(labels[:, None] == 1, sep / 2, -sep / 2)
    x = centers + rng.normal(size=(n, 2)) * 0.5
    y = np.where(labels == 1, 1.0, -1.0)[:, None]
    return toy_dataset(x, y)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
