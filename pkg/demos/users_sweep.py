"""Total rate against the number of users.

Adding users helps until the UAV quotas (8 x 6 = 48 slots) fill up.  In the
default network the three HAP-satellite links are the real bottleneck, so
every scheme that keeps all three HAPs connected reaches the same ceiling
long before the quotas bind.
"""

import numpy as np

from sagin_match.cli import compare, mean_rows
from sagin_match.scenario import default_config

users = [5, 15, 30, 48, 50]
rows = compare(default_config(), users, seeds=range(3), workers=1)

print(f"{'users':>5} {'algo':>9} {'mean Mb/s':>10} {'all connected':>14}")
for n, _, algo, mean, _, frac, _, _ in mean_rows(rows):
    print(f"{n:>5} {algo:>9} {float(mean) / 1e6:10.3f} {float(frac):14.2f}")

# With 50 users nobody can connect everyone: only 48 UAV slots exist.
over = [r for r in rows if r.n_users == 50]
print("any run at 50 users with everyone connected?", any(r.all_users_connected for r in over))

# The bottleneck shows up in the spread: the top links cap the total.
msa = np.array([r.total_value for r in rows if r.algo == "msa" and r.n_users >= 15])
print(f"msa totals from 15 users up span {msa.min() / 1e6:.3f} .. {msa.max() / 1e6:.3f} Mb/s")
