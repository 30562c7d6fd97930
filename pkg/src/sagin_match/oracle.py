"""Exact references for testing: optimal pair and chain assignments by search,
and an independent epsilon-stability scan."""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .channel import RateMatrix, rate_matrices
from .scenario import Scenario
from .valuation import Matching

__all__ = [
    "InstanceTooLarge",
    "brute_force_violations",
    "count_pair_assignments",
    "enumerate_pair_assignments",
    "optimal_chain_assignment",
    "optimal_pair_assignment",
]

PAIR_NODE_BUDGET = 5_000_000
CHAIN_BUDGET = 10_000_000


class InstanceTooLarge(RuntimeError):
    pass


def _matrix(values):
    if isinstance(values, RateMatrix):
        return np.asarray(values.rates, float), values.downstream_ids, values.upstream_ids
    m = np.asarray(values, float)
    return m, tuple(range(m.shape[0])), tuple(range(m.shape[1]))


def optimal_pair_assignment(values, quotas: Sequence[int], node_budget: int = PAIR_NODE_BUDGET):
    """Maximum-value quota-respecting assignment of one layer pair.

    Depth-first search over downstream nodes (options: unmatched, then each
    upstream node in order) with the sum of remaining row maxima as bound.  Among
    optimal assignments the lexicographically smallest is returned, as
    ``({downstream_id: upstream_id}, value)``.
    """
    m, down, up = _matrix(values)
    n_i, n_j = m.shape
    if n_i == 0 or n_j == 0:
        return {}, 0.0
    rows = m.tolist()
    row_max = [max(0.0, max(r)) for r in rows]
    tail = [0.0] * (n_i + 1)
    for i in range(n_i - 1, -1, -1):
        tail[i] = tail[i + 1] + row_max[i]
    left = list(quotas)
    choice = [-1] * n_i
    best = [-math.inf, None]
    visited = 0

    def dfs(i: int, acc: float) -> None:
        nonlocal visited
        visited += 1
        if visited > node_budget:
            raise InstanceTooLarge(f"pair search exceeded {node_budget} nodes ({n_i}x{n_j})")
        if i == n_i:
            if acc > best[0]:
                best[0], best[1] = acc, list(choice)
            return
        if acc + tail[i] <= best[0]:
            return
        choice[i] = -1
        dfs(i + 1, acc)
        r = rows[i]
        for j in range(n_j):
            if left[j] > 0:
                left[j] -= 1
                choice[i] = j
                dfs(i + 1, acc + r[j])
                left[j] += 1
        choice[i] = -1

    dfs(0, 0.0)
    assign = {down[i]: up[j] for i, j in enumerate(best[1]) if j >= 0}
    return assign, float(best[0])


def enumerate_pair_assignments(n_down: int, quotas: Sequence[int]):
    """All quota-respecting maps as tuples (upstream position or -1 per downstream node)."""
    for combo in itertools.product(range(-1, len(quotas)), repeat=n_down):
        load = [0] * len(quotas)
        ok = True
        for j in combo:
            if j >= 0:
                load[j] += 1
                if load[j] > quotas[j]:
                    ok = False
                    break
        if ok:
            yield combo


def count_pair_assignments(n_down: int, quotas: Sequence[int]) -> int:
    """Number of quota-respecting maps, by dynamic programming over upstream nodes."""
    # ways[r] = number of ways to place assignments when r downstream nodes remain unassigned
    ways = {n_down: 1}
    for q in quotas:
        nxt: dict[int, int] = {}
        for r, w in ways.items():
            for t in range(0, min(q, r) + 1):
                nxt[r - t] = nxt.get(r - t, 0) + w * math.comb(r, t)
        ways = nxt
    return sum(ways.values())


def optimal_chain_assignment(scenario: Scenario, rates: Sequence[RateMatrix] | None = None, budget: int = CHAIN_BUDGET):
    """Exhaustive search over joint assignments of every layer pair.

    Scores each joint assignment with the clipped chain fold, so cross-layer
    coupling is captured exactly.  Returns ``(Matching, value)``.
    """
    rates = rates if rates is not None else rate_matrices(scenario)
    K1 = scenario.n_pairs
    counts = [count_pair_assignments(len(scenario.layers[k]), scenario.quotas(k + 1)) for k in range(K1)]
    if math.prod(counts) > budget:
        raise InstanceTooLarge(f"{math.prod(counts)} joint assignments exceed the budget of {budget}")
    options = [list(enumerate_pair_assignments(len(scenario.layers[k]), scenario.quotas(k + 1))) for k in range(K1)]
    mats = [r.rates.tolist() for r in rates]

    best_val, best = -math.inf, None
    for joint in itertools.product(*options):
        supply = None
        for k, combo in enumerate(joint):
            nxt = [0.0] * len(scenario.layers[k + 1])
            mk = mats[k]
            for i, j in enumerate(combo):
                if j >= 0:
                    r = mk[i][j]
                    nxt[j] += r if supply is None else min(supply[i], r)
            supply = nxt
        val = sum(supply)
        if val > best_val:
            best_val, best = val, joint

    matching = Matching.empty(K1)
    for k, combo in enumerate(best):
        down, up = scenario.ids(k), scenario.ids(k + 1)
        matching.pairs[k] = {down[i]: up[j] for i, j in enumerate(combo) if j >= 0}
    return matching, float(best_val)


def brute_force_violations(values, assignment: dict[int, int], downstream, upstream, quotas, epsilon, tol=1e-9,
                           eviction: str = "value"):
    """Vectorized epsilon-stability scan (positions), independent of the game engine.

    ``downstream`` is the vector of downstream levels, ``upstream`` the
    (n_up, n_down) matrix of upstream levels.  Returns the sorted list of
    violating ``(i, j)`` positions.
    """
    m, _, _ = _matrix(values)
    a_d = np.asarray(downstream, float)
    a_u = np.asarray(upstream, float)
    matched = np.zeros(m.shape, bool)
    for i, j in assignment.items():
        matched[i, j] = True
    spare = matched.sum(axis=0) < np.asarray(quotas)
    agreeable = m >= a_d[:, None] + a_u.T + 2 * epsilon
    if eviction == "payoff":
        cheapest = np.where(matched, a_u.T, np.inf).min(axis=0)
        displaces = m >= a_d[:, None] + cheapest[None, :] + 2 * epsilon
        blocking = ~matched & ((spare[None, :] & agreeable) | (~spare[None, :] & displaces))
    else:
        weakest = np.where(matched, m, np.inf).min(axis=0)
        blocking = ~matched & agreeable & (spare[None, :] | (m > weakest[None, :]))
    unbalanced = matched & (np.abs(a_d[:, None] + a_u.T - m) > tol * np.maximum(1.0, np.abs(m)))
    bad = np.argwhere(blocking | unbalanced)
    return sorted((int(i), int(j)) for i, j in bad)
