import numpy as np
import pytest
from hypothesis import settings

from metriclab import FiniteMetricSpace, validate_metric

settings.register_profile("ci", deadline=None, derandomize=True, max_examples=40)
settings.load_profile("ci")


def random_metric(rng: np.random.Generator, size: int, style: str = "geodesic") -> FiniteMetricSpace:
    """Deterministic random metric space.

    ``geodesic``: shortest-path closure of a random weighted complete
    graph (diverse triangle structure).  ``band``: entries in [1, 2],
    where the triangle inequality holds automatically.
    """
    if style == "band":
        w = rng.uniform(1.0, 2.0, size=(size, size))
        d = (w + w.T) / 2.0
        np.fill_diagonal(d, 0.0)
        return validate_metric(d)
    w = rng.uniform(0.2, 1.0, size=(size, size))
    d = (w + w.T) / 2.0
    np.fill_diagonal(d, 0.0)
    for k in range(size):  # Floyd-Warshall closure
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    np.fill_diagonal(d, 0.0)
    return validate_metric(d)


def metric_suite(seed: int, count: int, sizes) -> list[FiniteMetricSpace]:
    """Fixed-seed family of random hosts cycling through the given sizes."""
    rng = np.random.default_rng(seed)
    sizes = list(sizes)
    out = []
    for i in range(count):
        style = "geodesic" if i % 2 == 0 else "band"
        out.append(random_metric(rng, sizes[i % len(sizes)], style))
    return out


@pytest.fixture(scope="session")
def small_hosts():
    """Fifty fixed-seed hosts with at most 8 points."""
    return metric_suite(seed=7101, count=50, sizes=[4, 5, 6, 7, 8])
