import numpy as np
import pytest

from optsignal.core import Moments

ACCEPTANCE_LINES = []


def random_moments(rng, dim, tau=500, cond_max=1e4):
    """Random positive definite sigma with a bounded condition number."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = np.exp(rng.uniform(0, np.log(cond_max) / 2, dim))
    sigma = (q * eig) @ q.T
    sigma = (sigma + sigma.T) / 2
    mu = rng.standard_normal(dim)
    return Moments(mu, sigma, tau)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
