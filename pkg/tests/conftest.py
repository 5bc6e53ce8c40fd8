import numpy as np
import pytest

from ttwopt.tt import new_tt


def random_tt(rng, shape, ranks):
    return new_tt([rng.standard_normal((ranks[k], d, ranks[k + 1])) for k, d in enumerate(shape)])


def random_instance(seed, max_dim=4, max_rank=3, orders=(3, 4)):
    """Seeded random (shape, rank chain, cores) with small dims and ranks."""
    rng = np.random.default_rng(seed)
    N = int(rng.choice(orders))
    shape = tuple(int(d) for d in rng.integers(2, max_dim + 1, N))
    ranks = (1,) + tuple(int(r) for r in rng.integers(1, max_rank + 1, N - 1)) + (1,)
    return rng, shape, ranks, random_tt(rng, shape, ranks)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
