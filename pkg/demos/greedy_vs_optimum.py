"""Two small markets where local choices go wrong.

First a single layer pair where greedy grabs the biggest entry and loses
the better pairing; then a chain where the best user->UAV assignment on its
own starves the network one layer up.
"""

import numpy as np

from sagin_match.baselines import greedy_pair
from sagin_match.channel import RateMatrix
from sagin_match.msa import MsaConfig, run_msa, run_pair
from sagin_match.oracle import optimal_chain_assignment, optimal_pair_assignment
from sagin_match.scenario import Node, Scenario
from sagin_match.valuation import total_value

values = np.array([[5.0, 4.0], [4.0, 1.0]])
rm = RateMatrix((0, 1), (0, 1), values)
g = greedy_pair(rm, [1, 1])
print("greedy:", g, "value", sum(values[i, j] for i, j in g.items()))
print("optimum:", optimal_pair_assignment(values, [1, 1]))
# Under the default eviction rule a newcomer must beat the weakest partner's
# pair value.  User 0 would have to move to UAV 1, but once its own level
# exceeds 4 - 2*epsilon it never drops again while matched, so the dynamic
# settles on the greedy pairing too.
for seed in range(3):
    run = run_pair(values, [1, 1], MsaConfig(), seed=seed)
    print(f"  value rule, seed {seed}: {run.assignment} after {run.iterations} encounters")
# The payoff rule treats quota slots as copies that keep what they were paid;
# here it finds the better pairing.
for seed in range(3):
    run = run_pair(values, [1, 1], MsaConfig(eviction="payoff"), seed=seed)
    print(f"  payoff rule, seed {seed}: {run.assignment} after {run.iterations} encounters")

# A chain: 2 users, 2 UAVs (quota 2), one HAP that takes a single UAV, one
# satellite.  UAV 0 is slightly better for users but its HAP link is thin.
layers = (
    (Node(0, 0, (0, 0, 0), 1.0), Node(1, 0, (10, 0, 0), 1.0)),
    (Node(0, 1, (0, 0, 100), 1.0, 0, 2), Node(1, 1, (10, 0, 100), 1.0, 0, 2)),
    (Node(0, 2, (0, 0, 1e4), 1.0, 0, 1),),
    (Node(0, 3, (0, 0, 1e5), 0.0, 0, 1),),
)
sc = Scenario(layers, (1e7,) * 3, (2e9,) * 3)
mats = [[[1.0, 0.9], [1.0, 0.9]], [[1.0], [10.0]], [[10.0]]]
rates = [RateMatrix(sc.ids(k), sc.ids(k + 1), np.array(m), (k, k + 1)) for k, m in enumerate(mats)]
best, value = optimal_chain_assignment(sc, rates)
print("chain optimum", value, best.edges())
res = run_msa(sc, MsaConfig(seed=1), rates)
print("layer-by-layer matching", res.total, res.matching.edges())
print("value of that matching re-checked:", total_value(res.matching, sc, rates))
