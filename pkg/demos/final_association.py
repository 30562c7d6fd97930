"""Who ends up connected to whom.

After the dynamic settles every user should sit in a complete chain and no
UAV, HAP or satellite should serve more nodes than its quota allows.
"""

from collections import Counter

from sagin_match import MsaConfig, generate_scenario, default_config, per_user_end_to_end, run_msa
from sagin_match.valuation import chain_values, users_in_complete_chains, write_association_csv

scenario = generate_scenario(default_config(), seed=4)
result = run_msa(scenario, MsaConfig(seed=4))
matching = result.matching
matching.check(scenario)  # raises if a quota were exceeded

names = scenario.layer_names
cv = chain_values(matching, scenario)
for k in range(scenario.n_pairs):
    load = Counter(matching.pairs[k].values())
    print(f"{names[k]} -> {names[k + 1]}:")
    for j in scenario.ids(k + 1):
        served = matching.partners(k, j)
        quota = scenario.node(k + 1, j).quota
        print(f"  {names[k + 1][:-1]} {j}: {load.get(j, 0)}/{quota} {served}  relays {cv.supply[k + 1][j] / 1e6:.2f} Mb/s")

connected = users_in_complete_chains(matching, scenario)
print(f"{len(connected)}/{len(scenario.ids(0))} users in complete chains")

# The objective is the total, but a per-user split helps when plotting.
shares = per_user_end_to_end(matching, scenario)
best = max(shares, key=shares.get)
print(f"largest share: user {best} with {shares[best] / 1e6:.2f} Mb/s")

write_association_csv("final_association.csv", matching, scenario)
print("wrote final_association.csv")
