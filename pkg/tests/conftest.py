import numpy as np
import pytest
from hypothesis import settings

from pfsa_delchan.pfsa import Alphabet, from_gamma, m2

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

FOUR_STATE_GAMMA = np.array(
    [
        [[0.3, 0, 0, 0], [0, 0, 0.6, 0], [0.8, 0, 0, 0], [0, 0, 0.5, 0]],
        [[0, 0.7, 0, 0], [0, 0, 0, 0.4], [0, 0.2, 0, 0], [0, 0, 0, 0.5]],
    ]
)


@pytest.fixture
def four_state():
    return from_gamma(FOUR_STATE_GAMMA)


@pytest.fixture
def m2_36():
    return m2(0.3, 0.6)


def random_m2_params(rng, n, lo=0.05, hi=0.95):
    return rng.uniform(lo, hi, size=(n, 2))


def random_deterministic(rng, m, k=2):
    """Random strongly connected deterministic machine on ``m`` states.

    Symbol 0 walks a cycle so the graph is always strongly connected; the
    other symbols jump to random states.
    """
    gamma = np.zeros((k, m, m))
    emit = rng.dirichlet(np.ones(k), size=m)
    for s in range(m):
        gamma[0, s, (s + 1) % m] = emit[s, 0]
        for x in range(1, k):
            gamma[x, s, rng.integers(m)] = emit[s, x]
    return from_gamma(gamma, Alphabet(tuple(str(i) for i in range(k))))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
