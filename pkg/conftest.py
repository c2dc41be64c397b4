"""
Shared fixtures for the test suite
"""
import itertools

import numpy as np
import pytest

from src.graph_core import connectivity_report, erdos_renyi


def connected_aperiodic_graphs(count: int, max_n: int = 12, seed: int = 0):
    """Random connected non-bipartite ER graphs with 3 <= n <= max_n"""
    rng = np.random.default_rng(seed)
    graphs = []
    for graph_seed in itertools.count():
        if len(graphs) == count:
            return graphs
        n = int(rng.integers(3, max_n + 1))
        g = erdos_renyi(n, float(rng.uniform(0.3, 0.9)), graph_seed)
        if connectivity_report(g).spectral_ready:
            graphs.append(g)


@pytest.fixture(scope="session")
def random_graphs():
    return connected_aperiodic_graphs(200)
