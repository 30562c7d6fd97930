"""Small builders shared by the test modules."""

import numpy as np

from sagin_match.channel import RateMatrix
from sagin_match.scenario import Node, Scenario


def chain_scenario(counts, quotas=None, spacing=10.0):
    """A valid scenario with the given layer sizes; geometry is irrelevant when
    the tests pass their own rate matrices."""
    K = len(counts)
    quotas = quotas or [None] + [1] * (K - 1)
    layers = []
    for k, n in enumerate(counts):
        z = 0.0 if k == 0 else 100.0 * 10 ** k
        q = quotas[k]
        nodes = []
        for idx in range(n):
            qq = 0 if k == 0 else (q[idx] if isinstance(q, (list, tuple)) else q)
            tx = 0.0 if k == K - 1 else 1.0
            nodes.append(Node(idx, k, (spacing * idx, 0.0, z), tx, 0.0, qq))
        layers.append(tuple(nodes))
    return Scenario(tuple(layers), (1e7,) * (K - 1), (2e9,) * (K - 1))


def matrices(scenario, mats):
    return [
        RateMatrix(scenario.ids(k), scenario.ids(k + 1), np.asarray(m, float), (k, k + 1))
        for k, m in enumerate(mats)
    ]


def random_chain(rng, counts, max_quota=2):
    quotas = [None] + [[int(rng.integers(1, max_quota + 1)) for _ in range(n)] for n in counts[1:]]
    sc = chain_scenario(counts, quotas)
    mats = [rng.uniform(0.0, 1.0, size=(counts[k], counts[k + 1])) for k in range(len(counts) - 1)]
    return sc, matrices(sc, mats)
