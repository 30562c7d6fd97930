"""Chain-structured values of multi-layer matchings.

A user-UAV pair is worth the user's rate.  Every higher pair (i, j) is worth
``min(supply of i, rate(i, j))`` where the supply of i is the summed value of
the pairs i currently serves one layer down.  The top layer aggregates.  Only
complete chains accrue value: a subtree whose root has no upstream partner
contributes nothing to the total.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import RateMatrix, rate_matrices
from .scenario import Scenario

__all__ = [
    "ChainValues",
    "ConsistencyError",
    "Matching",
    "chain_values",
    "effective_values",
    "pair_value",
    "per_user_end_to_end",
    "total_value",
    "total_value_top_down",
    "users_in_complete_chains",
    "write_association_csv",
]


class ConsistencyError(ValueError):
    """A matching assigns a downstream node twice or exceeds an upstream quota."""


@dataclass
class Matching:
    """One partial map downstream-id -> upstream-id per adjacent layer pair."""

    pairs: list[dict[int, int]] = field(default_factory=list)

    @classmethod
    def empty(cls, n_pairs: int) -> "Matching":
        return cls([{} for _ in range(n_pairs)])

    @classmethod
    def from_edges(cls, n_pairs: int, edges: Sequence[tuple[int, int, int]]) -> "Matching":
        """Build from ``(k, downstream_id, upstream_id)`` triples; duplicates are rejected."""
        m = cls.empty(n_pairs)
        for k, i, j in edges:
            if i in m.pairs[k]:
                raise ConsistencyError(f"pair {k}: downstream {i} assigned twice")
            m.pairs[k][i] = j
        return m

    def copy(self) -> "Matching":
        return Matching([dict(p) for p in self.pairs])

    def edges(self) -> list[tuple[int, int, int]]:
        return [(k, i, j) for k, p in enumerate(self.pairs) for i, j in sorted(p.items())]

    def partners(self, k: int, j: int) -> list[int]:
        return sorted(i for i, jj in self.pairs[k].items() if jj == j)

    def load(self, k: int) -> dict[int, int]:
        out: dict[int, int] = {}
        for j in self.pairs[k].values():
            out[j] = out.get(j, 0) + 1
        return out

    def check(self, scenario: Scenario) -> None:
        """Raise :class:`ConsistencyError` naming the first violated constraint."""
        if len(self.pairs) != scenario.n_pairs:
            raise ConsistencyError(f"matching has {len(self.pairs)} layer pairs, scenario has {scenario.n_pairs}")
        for k, p in enumerate(self.pairs):
            down = set(scenario.ids(k))
            quota = dict(zip(scenario.ids(k + 1), scenario.quotas(k + 1)))
            for i, j in p.items():
                if i not in down:
                    raise ConsistencyError(f"pair {k}: unknown downstream id {i}")
                if j not in quota:
                    raise ConsistencyError(f"pair {k}: unknown upstream id {j}")
            for j, n in self.load(k).items():
                if n > quota[j]:
                    raise ConsistencyError(f"pair {k}: quota of upstream {j} exceeded ({n} > {quota[j]})")

    def is_consistent(self, scenario: Scenario) -> bool:
        try:
            self.check(scenario)
        except ConsistencyError:
            return False
        return True


def pair_value(level: int, i: int, j: int, rates: RateMatrix, lower_value: float = 0.0) -> float:
    """Value of the pair (i, j) on layer pair ``level``.

    At level 0 this is the user's link rate.  Higher up the link rate clips the
    aggregated value ``lower_value`` that i relays from below.
    """
    r = rates(i, j)
    if level == 0:
        return r
    return min(lower_value, r)


@dataclass
class ChainValues:
    """Bottom-up fold of a matching.

    ``supply[k][id]`` is what node ``id`` of layer k relays upward (0 for users),
    ``edge_value[k][i]`` the value of the edge from downstream i on pair k.
    """

    supply: list[dict[int, float]]
    edge_value: list[dict[int, float]]
    total: float


def chain_values(matching: Matching, scenario: Scenario, rates: Sequence[RateMatrix] | None = None) -> ChainValues:
    rates = rates if rates is not None else rate_matrices(scenario)
    matching.check(scenario)
    K = scenario.n_layers
    supply: list[dict[int, float]] = [dict.fromkeys(scenario.ids(k), 0.0) for k in range(K)]
    edge_value: list[dict[int, float]] = []
    for k in range(K - 1):
        rm = rates[k]
        vals = {}
        for i, j in matching.pairs[k].items():
            r = float(rm.rates[rm.row(i), rm.col(j)])
            v = r if k == 0 else min(supply[k][i], r)
            vals[i] = v
            supply[k + 1][j] += v
        edge_value.append(vals)
    total = float(sum(supply[K - 1].values()))
    return ChainValues(supply, edge_value, total)


def total_value(matching: Matching, scenario: Scenario, rates: Sequence[RateMatrix] | None = None) -> float:
    """Sum of end-to-end values (bits/s) of all complete chains."""
    return chain_values(matching, scenario, rates).total


def total_value_top_down(matching: Matching, scenario: Scenario, rates: Sequence[RateMatrix] | None = None) -> float:
    """Recursive per-top-node evaluation; used to cross-check :func:`total_value`."""
    rates = rates if rates is not None else rate_matrices(scenario)
    matching.check(scenario)

    def relayed(k: int, node: int) -> float:
        # value node of layer k can push upward, before its own uplink clip
        if k == 0:
            return np.inf
        rm = rates[k - 1]
        out = 0.0
        for i in matching.partners(k - 1, node):
            r = float(rm.rates[rm.row(i), rm.col(node)])
            out += min(relayed(k - 1, i), r)
        return out

    top = scenario.n_layers - 1
    return float(sum(relayed(top, s) for s in scenario.ids(top)))


def users_in_complete_chains(matching: Matching, scenario: Scenario) -> list[int]:
    """Users whose uplink path reaches the top layer, sorted by id."""
    out = []
    for u in scenario.ids(0):
        node = u
        for k in range(scenario.n_pairs):
            node = matching.pairs[k].get(node)
            if node is None:
                break
        else:
            out.append(u)
    return out


def effective_values(k: int, matching: Matching, scenario: Scenario, rates: Sequence[RateMatrix] | None = None) -> RateMatrix:
    """Value matrix a pair-level game on (k, k+1) plays over, given lower pairs."""
    rates = rates if rates is not None else rate_matrices(scenario)
    rm = rates[k]
    if k == 0:
        return rm
    supply = chain_values(matching, scenario, rates).supply[k]
    s = np.array([supply[i] for i in rm.downstream_ids])
    return rm.with_rates(np.minimum(s[:, None], rm.rates))


def per_user_end_to_end(matching: Matching, scenario: Scenario, rates: Sequence[RateMatrix] | None = None) -> dict[int, float]:
    """Share of the total attributed to each user.

    Each clipped edge value is split over the subtree below it in proportion to
    the values that fed it, so the shares add up to :func:`total_value`.
    """
    rates = rates if rates is not None else rate_matrices(scenario)
    cv = chain_values(matching, scenario, rates)
    K = scenario.n_layers
    # scale[k][id]: fraction of node's relayed supply that survives to the top
    scale: dict[int, float] = dict.fromkeys(scenario.ids(K - 1), 1.0)
    for k in range(K - 2, -1, -1):
        below: dict[int, float] = {}
        for i in scenario.ids(k):
            j = matching.pairs[k].get(i)
            if j is None:
                below[i] = 0.0
                continue
            v = cv.edge_value[k][i]
            if k == 0:
                below[i] = scale[j] * v
            else:
                s = cv.supply[k][i]
                below[i] = scale[j] * v / s if s > 0 else 0.0
        scale = below
    return {u: scale[u] for u in scenario.ids(0)}


def write_association_csv(
    path: str | os.PathLike,
    matching: Matching,
    scenario: Scenario,
    rates: Sequence[RateMatrix] | None = None,
    header: str | None = None,
) -> None:
    """Edge list ``layer_pair, downstream_id, upstream_id, pair_value``."""
    cv = chain_values(matching, scenario, rates)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh)
        w.writerow(["layer_pair", "downstream_id", "upstream_id", "pair_value"])
        for k, i, j in matching.edges():
            w.writerow([f"{k}-{k + 1}", i, j, repr(cv.edge_value[k][i])])
