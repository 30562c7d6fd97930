"""Reference association schemes: centralized greedy and nearest-node requests.

Both proceed bottom-up; once a pair is settled the next pair's values are
rebuilt from what the new downstream layer gathered.  Ties go to the lowest id.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .channel import RateMatrix, rate_matrices
from .scenario import Scenario
from .valuation import Matching, effective_values

__all__ = [
    "distance_association",
    "distance_pair",
    "greedy_association",
    "greedy_pair",
]


def greedy_pair(values: RateMatrix, quotas: Sequence[int]) -> dict[int, int]:
    """Repeatedly associate the largest remaining entry until users or quotas run out.

    Non-positive entries are never associated.
    """
    m = values.rates
    down, up = values.downstream_ids, values.upstream_ids
    left = list(quotas)
    entries = sorted(
        ((-m[i, j], down[i], up[j], i, j) for i in range(m.shape[0]) for j in range(m.shape[1]) if m[i, j] > 0)
    )
    out: dict[int, int] = {}
    for _, i_id, j_id, _, j in entries:
        if len(out) == len(down) or not any(left):
            break
        if i_id in out or left[j] == 0:
            continue
        out[i_id] = j_id
        left[j] -= 1
    return out


def distance_pair(
    values: RateMatrix,
    quotas: Sequence[int],
    down_pos: np.ndarray,
    up_pos: np.ndarray,
    active: Sequence[bool] | None = None,
) -> dict[int, int]:
    """Single request round: every node asks its nearest upstream node, which keeps
    its best requesters up to quota.  Rejected nodes stay unmatched."""
    m = values.rates
    down, up = values.downstream_ids, values.upstream_ids
    d = np.linalg.norm(down_pos[:, None, :] - up_pos[None, :, :], axis=2)
    up_rank = np.argsort(np.argsort(np.array(up), kind="stable"))
    requests: dict[int, list[int]] = {}
    for i in range(len(down)):
        if active is not None and not active[i]:
            continue
        nearest = min(range(len(up)), key=lambda j: (d[i, j], up_rank[j]))
        requests.setdefault(nearest, []).append(i)
    out: dict[int, int] = {}
    for j, reqs in requests.items():
        keep = sorted(reqs, key=lambda i: (-m[i, j], down[i]))[: quotas[j]]
        for i in keep:
            out[down[i]] = up[j]
    return out


def greedy_association(scenario: Scenario, rates: Sequence[RateMatrix] | None = None) -> Matching:
    rates = rates if rates is not None else rate_matrices(scenario)
    matching = Matching.empty(scenario.n_pairs)
    for k in range(scenario.n_pairs):
        values = effective_values(k, matching, scenario, rates)
        matching.pairs[k] = greedy_pair(values, scenario.quotas(k + 1))
    return matching


def distance_association(scenario: Scenario, rates: Sequence[RateMatrix] | None = None) -> Matching:
    """Nearest-node requests per pair; relays with nothing to forward stay silent."""
    rates = rates if rates is not None else rate_matrices(scenario)
    matching = Matching.empty(scenario.n_pairs)
    for k in range(scenario.n_pairs):
        values = effective_values(k, matching, scenario, rates)
        active = None if k == 0 else [bool(row.max() > 0) for row in values.rates]
        matching.pairs[k] = distance_pair(
            values, scenario.quotas(k + 1), scenario.positions(k), scenario.positions(k + 1), active
        )
    return matching
