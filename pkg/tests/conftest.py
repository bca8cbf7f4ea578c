import warnings

import numpy as np
import pytest

from netreg.network import sbm_probability
from netreg.simulation import default_block_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_instance(rng, n, p, K, r):
    """Random design and symmetric matrix whose leading K-dimensional
    eigenspace contains r directions of col(X)."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, p + K)))
    shared = Q[:, :r]
    own_x = Q[:, r:p]
    own_w = Q[:, p:p + K - r]
    mix = rng.uniform(0.1, 0.6, size=min(p, K) - r)
    m = min(own_x.shape[1], own_w.shape[1])
    # tilt part of the network subspace toward col(X) so angles are interior
    tilted = own_w.copy()
    tilted[:, :m] = np.sqrt(1 - mix[:m] ** 2) * own_w[:, :m] + mix[:m] * own_x[:, :m]
    W = np.linalg.qr(np.hstack([shared, tilted]))[0]
    X = np.hstack([shared, own_x]) @ rng.standard_normal((p, p))
    vals = np.concatenate([np.linspace(10, 5, K), rng.uniform(-1, 1, n - K)])
    V = np.linalg.qr(np.hstack([W, rng.standard_normal((n, n - K))]))[0]
    S = (V * vals) @ V.T
    return X, 0.5 * (S + S.T), W


@pytest.fixture
def sbm_small():
    n, k = 120, 4
    g = np.arange(n) * k // n
    P = sbm_probability(g, 0.3 * default_block_matrix(k))
    return g, P


@pytest.fixture(autouse=True)
def _quiet_user_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        yield


ACCEPTANCE_LINES = []


@pytest.fixture
def report_criterion():
    """Record a one-line PASS/FAIL verdict shown in the terminal summary."""

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
