import numpy as np
import pytest
from hypothesis import settings

from e2cp import Dataset, build_knn_graph, compute_kernel, normalized_affinity

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_graph(n, k=5, seed=0, dim=2):
    pts = np.random.default_rng(seed).normal(size=(n, dim))
    return build_knn_graph(compute_kernel(Dataset(pts)), min(k, n - 1))


def random_lbar(n, k=5, seed=0):
    return normalized_affinity(random_graph(n, k, seed))


def random_z(n, m=None, density=0.1, seed=0, soft=False):
    """Sparse +-1 (or soft) constraint matrix; symmetric with zero diagonal when m is None."""
    rng = np.random.default_rng(seed)
    shape = (n, n if m is None else m)
    mask = rng.random(shape) < density
    vals = rng.uniform(-1, 1, shape) if soft else rng.choice([-1.0, 1.0], size=shape)
    z = np.where(mask, vals, 0.0)
    if m is None:
        z = np.triu(z, 1)
        z = z + z.T
    return z


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines collected by test_acceptance.py, printed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: (len(s), s)):
        for line in ACCEPTANCE[key]:
            terminalreporter.write_line(line)
