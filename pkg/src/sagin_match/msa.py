"""Randomized blind matching between adjacent layers, swept up the chain.

Each layer pair plays a many-to-one assignment game.  Downstream nodes carry a
scalar aspiration level, upstream nodes one level per downstream node (an
upstream node with quota q behaves like copies of itself).  At every step one
random downstream node meets one random upstream node:

* if the upstream node has spare quota and the pair's value covers both
  aspirations plus ``2 * epsilon``, they are *agreeable* and match;
* if its quota is full, the newcomer has to beat a current partner, which is
  then evicted.  Under the default ``"value"`` rule the pair must be
  agreeable and its value strictly above that of the partner with the
  smallest pair value.  The ``"payoff"`` rule instead displaces the partner
  leaving the upstream node the least, whenever the pair value covers the
  newcomer's level, that partner's level and ``2 * epsilon``;
* after a match the surplus is split so both levels add up to the pair value;
* otherwise the upstream node lowers its level for that downstream node by
  ``delta``, and so does the downstream node if it is single.

Randomness comes from numpy's PCG64 generator seeded through ``SeedSequence``,
so runs are reproducible across platforms for a given seed.
"""

from __future__ import annotations

import csv
import math
import os
from array import array
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .channel import RateMatrix, rate_matrices
from .scenario import Scenario
from .valuation import Matching, chain_values, effective_values, total_value

__all__ = [
    "EVENTS",
    "AspirationState",
    "MsaConfig",
    "MsaResult",
    "PairMarket",
    "PairRun",
    "RunTrace",
    "check_epsilon_stability",
    "init_aspirations",
    "is_agreeable",
    "run_msa",
    "run_pair",
]

MATCH, EVICT, DECREMENT, NOOP = "match", "evict-match", "decrement", "no-op"
EVENTS = (MATCH, EVICT, DECREMENT, NOOP)
_EVENT_CODE = {e: n for n, e in enumerate(EVENTS)}

SPLIT_RULES = ("equal", "random")
EVICTION_RULES = ("payoff", "value")
_CHUNK = 4096


@dataclass(frozen=True)
class MsaConfig:
    """Parameters of the matching dynamic.

    ``epsilon`` and ``delta`` are absolute (bits/s).  When left as ``None``
    each layer pair uses ``rel_epsilon`` times the mean positive entry of its
    value matrix, and half of that for ``delta``.  ``stall_window`` defaults
    to ``50 * n_down * n_up``.  For the first ``settle_budget`` encounters
    (default ``1000 * n_down * n_up``) a pair only stops once no further match
    can ever occur; afterwards the plain aspiration-based check suffices.
    """

    epsilon: float | None = None
    delta: float | None = None
    max_iters_per_pair: int = 1_000_000
    stall_window: int | None = None
    sweep_repeats: int = 3
    split_rule: str = "equal"
    seed: int = 0
    rel_epsilon: float = 1e-2
    eviction: str = "value"
    settle_budget: int | None = None

    def __post_init__(self):
        if self.split_rule not in SPLIT_RULES:
            raise ValueError(f"split_rule must be one of {SPLIT_RULES}, got {self.split_rule!r}")
        if self.eviction not in EVICTION_RULES:
            raise ValueError(f"eviction must be one of {EVICTION_RULES}, got {self.eviction!r}")
        if self.max_iters_per_pair < 1:
            raise ValueError("max_iters_per_pair must be >= 1")
        if self.sweep_repeats < 1:
            raise ValueError("sweep_repeats must be >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.delta is not None:
            if not self.delta > 0:
                raise ValueError("delta must be positive")
            if self.epsilon is not None and not self.delta < self.epsilon:
                raise ValueError("need 0 < delta < epsilon")
        if self.stall_window is not None and self.stall_window < 1:
            raise ValueError("stall_window must be >= 1")
        if not self.rel_epsilon > 0:
            raise ValueError("rel_epsilon must be positive")
        if self.settle_budget is not None and self.settle_budget < 0:
            raise ValueError("settle_budget must be >= 0")

    def resolve(self, values: np.ndarray) -> tuple[float, float, int]:
        """Concrete ``(epsilon, delta, stall_window)`` for one value matrix."""
        values = np.asarray(values, dtype=float)
        eps = self.epsilon
        if eps is None:
            pos = values[values > 0]
            eps = self.rel_epsilon * float(pos.mean()) if pos.size else self.rel_epsilon
        delta = self.delta if self.delta is not None else eps / 2.0
        if not 0 < delta < eps:
            raise ValueError(f"need 0 < delta < epsilon, got delta={delta}, epsilon={eps}")
        stall = self.stall_window if self.stall_window is not None else max(1, 50 * values.size)
        return eps, delta, stall


@dataclass
class AspirationState:
    """Aspiration levels for one layer pair, indexed by position in the id tuples.

    ``downstream[i]`` is node i's level, ``upstream[j, i]`` upstream node j's
    level towards downstream node i.
    """

    downstream: np.ndarray
    upstream: np.ndarray
    downstream_ids: tuple[int, ...] = ()
    upstream_ids: tuple[int, ...] = ()

    def copy(self) -> "AspirationState":
        return replace(self, downstream=self.downstream.copy(), upstream=self.upstream.copy())

    def scaled(self, c: float) -> "AspirationState":
        return replace(self, downstream=self.downstream * c, upstream=self.upstream * c)


def _as_matrix(values) -> tuple[np.ndarray, tuple[int, ...], tuple[int, ...]]:
    if isinstance(values, RateMatrix):
        return np.asarray(values.rates, dtype=float), values.downstream_ids, values.upstream_ids
    m = np.asarray(values, dtype=float)
    if m.ndim != 2:
        raise ValueError("value matrix must be 2-D")
    return m, tuple(range(m.shape[0])), tuple(range(m.shape[1]))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def init_aspirations(values, seed=0) -> AspirationState:
    """Random starting levels: ``U[0, best value of i]`` downstream, ``U[0, v_ij]`` upstream."""
    m, down, up = _as_matrix(values)
    rng = _rng(seed)
    n_i, n_j = m.shape
    row_max = m.max(axis=1) if n_j else np.zeros(n_i)
    a_down = rng.random(n_i) * row_max
    a_up = rng.random((n_j, n_i)) * m.T
    return AspirationState(a_down, a_up, down, up)


def is_agreeable(i: int, j: int, state: AspirationState, values, epsilon: float) -> bool:
    """True when ``v_ij >= a_i + a_ji + 2 epsilon`` (positions, not ids)."""
    m, _, _ = _as_matrix(values)
    return bool(m[i, j] >= state.downstream[i] + state.upstream[j, i] + 2.0 * epsilon)


class PairMarket:
    """Mutable state of one layer-pair game: partners, loads and aspirations.

    Everything is addressed by row/column position of the value matrix.
    """

    def __init__(
        self,
        values,
        quotas: Sequence[int],
        epsilon: float,
        delta: float,
        state: AspirationState | None = None,
        assignment: dict[int, int] | None = None,
        split_rule: str = "equal",
        rng=None,
        eviction: str = "value",
    ):
        m, down, up = _as_matrix(values)
        self.values = m
        self.downstream_ids, self.upstream_ids = down, up
        self.n_down, self.n_up = m.shape
        if len(quotas) != self.n_up:
            raise ValueError(f"got {len(quotas)} quotas for {self.n_up} upstream nodes")
        if not 0 < delta < epsilon:
            raise ValueError(f"need 0 < delta < epsilon, got delta={delta}, epsilon={epsilon}")
        if split_rule not in SPLIT_RULES:
            raise ValueError(f"unknown split rule {split_rule!r}")
        if eviction not in EVICTION_RULES:
            raise ValueError(f"unknown eviction rule {eviction!r}")
        self.eviction = eviction
        self.quotas = [int(q) for q in quotas]
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.split_rule = split_rule
        self.rng = _rng(rng) if rng is not None else None
        self._v = m.tolist()
        # lowest id wins ties
        self._rank = list(np.argsort(np.argsort(np.array(down, dtype=np.int64), kind="stable")))
        if state is None:
            state = AspirationState(np.zeros(self.n_down), np.zeros((self.n_up, self.n_down)), down, up)
        if state.downstream.shape != (self.n_down,) or state.upstream.shape != (self.n_up, self.n_down):
            raise ValueError("aspiration state does not match the value matrix")
        self.a_down = [float(x) for x in state.downstream]
        self.a_up = state.upstream.astype(float).tolist()
        self.partner = [-1] * self.n_down
        self.members: list[list[int]] = [[] for _ in range(self.n_up)]
        for i, j in (assignment or {}).items():
            if self.partner[i] != -1:
                raise ValueError(f"downstream {i} assigned twice")
            if len(self.members[j]) >= self.quotas[j]:
                raise ValueError(f"quota of upstream {j} exceeded")
            self.partner[i] = j
            self.members[j].append(i)

    # -- queries ----------------------------------------------------------------

    def state(self) -> AspirationState:
        return AspirationState(
            np.array(self.a_down, dtype=float),
            np.array(self.a_up, dtype=float).reshape(self.n_up, self.n_down),
            self.downstream_ids,
            self.upstream_ids,
        )

    def assignment(self) -> dict[int, int]:
        return {i: j for i, j in enumerate(self.partner) if j >= 0}

    def assignment_ids(self) -> dict[int, int]:
        return {self.downstream_ids[i]: self.upstream_ids[j] for i, j in enumerate(self.partner) if j >= 0}

    def value(self) -> float:
        return float(sum(self._v[i][j] for i, j in enumerate(self.partner) if j >= 0))

    def all_matched(self) -> bool:
        return all(j >= 0 for j in self.partner)

    def quotas_full(self) -> bool:
        return all(len(mem) >= q for mem, q in zip(self.members, self.quotas))

    def _weakest(self, j: int) -> int:
        """Partner that goes first when ``j`` is full: least level (payoff rule) or least value."""
        rank = self._rank
        if self.eviction == "payoff":
            up = self.a_up[j]
            return min(self.members[j], key=lambda p: (up[p], rank[p]))
        v = self._v
        return min(self.members[j], key=lambda p: (v[p][j], rank[p]))

    def blocking_pairs(self, settled: bool = False) -> list[tuple[int, int]]:
        """Unmatched pairs that are agreeable and could be realized now.

        With ``settled=True`` levels that are still decaying are replaced by what
        the agents actually hold: zero for single downstream nodes and for
        unused upstream levels.  A state without settled blocking pairs can
        never produce another match.
        """
        v, a_down, a_up, two_eps = self._v, self.a_down, self.a_up, 2.0 * self.epsilon
        partner = self.partner
        payoff_rule = self.eviction == "payoff"
        out = []
        for j in range(self.n_up):
            mem = self.members[j]
            spare = len(mem) < self.quotas[j]
            if not spare:
                worst = self._weakest(j)
                floor_level = a_up[j][worst]
                floor_value = v[worst][j]
            up = a_up[j]
            for i in range(self.n_down):
                pi = partner[i]
                if pi == j:
                    continue
                vij = v[i][j]
                a_i = a_down[i] if (pi >= 0 or not settled) else 0.0
                if spare:
                    a_j = 0.0 if settled else up[i]
                    ok = vij >= a_i + a_j + two_eps
                elif payoff_rule:
                    ok = vij >= a_i + floor_level + two_eps
                else:
                    a_j = 0.0 if settled else up[i]
                    ok = vij >= a_i + a_j + two_eps and vij > floor_value
                if ok:
                    out.append((i, j))
        return out

    def unbalanced_pairs(self, tol: float = 1e-9) -> list[tuple[int, int]]:
        out = []
        for i, j in enumerate(self.partner):
            if j >= 0:
                vij = self._v[i][j]
                if abs(self.a_down[i] + self.a_up[j][i] - vij) > tol * max(1.0, abs(vij)):
                    out.append((i, j))
        return out

    def is_stable(self, settled: bool = False) -> bool:
        return not self.unbalanced_pairs() and not self.blocking_pairs(settled)

    # -- dynamic ----------------------------------------------------------------

    def encounter(self, i: int, j: int) -> str:
        """Apply one meeting of downstream ``i`` and upstream ``j``; returns the event name."""
        partner = self.partner
        if partner[i] == j:
            return NOOP
        v = self._v[i][j]
        a_i = self.a_down[i]
        up = self.a_up[j]
        a_ji = up[i]
        eps = self.epsilon
        mem = self.members[j]
        event = None
        if len(mem) < self.quotas[j]:
            if v >= a_i + a_ji + 2.0 * eps:
                event = MATCH
                base = a_ji
        else:
            worst = self._weakest(j)
            if self.eviction == "payoff":
                base = up[worst]
                ok = v >= a_i + base + 2.0 * eps
            else:
                base = a_ji
                ok = v >= a_i + a_ji + 2.0 * eps and v > self._v[worst][j]
            if ok:
                mem.remove(worst)
                partner[worst] = -1
                event = EVICT
        if event is not None:
            old = partner[i]
            if old >= 0:
                self.members[old].remove(i)
            partner[i] = j
            mem.append(i)
            surplus = v - a_i - base
            if self.split_rule == "equal":
                s_i = 0.5 * surplus
            else:
                s_i = eps + self.rng.random() * (surplus - 2.0 * eps)
            a_i = a_i + s_i
            self.a_down[i] = a_i
            up[i] = v - a_i
            return event
        if partner[i] < 0:
            self.a_down[i] = a_i - self.delta if a_i > self.delta else 0.0
        up[i] = a_ji - self.delta if a_ji > self.delta else 0.0
        return DECREMENT


def check_epsilon_stability(
    values,
    assignment: dict[int, int],
    state: AspirationState,
    quotas: Sequence[int],
    epsilon: float,
    eviction: str = "value",
) -> tuple[bool, list[tuple[int, int]]]:
    """Check a pair-level outcome for epsilon-stability.

    ``assignment`` maps downstream positions to upstream positions.  Returns
    ``(stable, violators)``: matched pairs whose levels do not add up to their
    value, then agreeable pairs that could match (spare quota or a profitable
    eviction under ``eviction``), all as ``(i, j)`` positions.
    """
    market = PairMarket(values, quotas, epsilon, epsilon / 2.0, state=state, assignment=assignment,
                        eviction=eviction)
    bad = market.unbalanced_pairs() + market.blocking_pairs()
    return not bad, bad


@dataclass
class RunTrace:
    """Per-encounter log: global iteration, layer pair, event, total value after it."""

    iteration: array = field(default_factory=lambda: array("q"))
    pair: array = field(default_factory=lambda: array("h"))
    event: array = field(default_factory=lambda: array("b"))
    total: array = field(default_factory=lambda: array("d"))

    def __len__(self) -> int:
        return len(self.iteration)

    def append(self, it: int, pair: int, event: str, total: float) -> None:
        self.iteration.append(it)
        self.pair.append(pair)
        self.event.append(_EVENT_CODE[event])
        self.total.append(total)

    def extend(self, other: "RunTrace") -> None:
        self.iteration.extend(other.iteration)
        self.pair.extend(other.pair)
        self.event.extend(other.event)
        self.total.extend(other.total)

    def events(self) -> list[str]:
        return [EVENTS[c] for c in self.event]

    def rows(self):
        for it, k, e, t in zip(self.iteration, self.pair, self.event, self.total):
            yield it, k, EVENTS[e], t

    def counts(self) -> dict[str, int]:
        codes = np.frombuffer(self.event, dtype=np.int8) if len(self.event) else np.zeros(0, np.int8)
        return {e: int(np.count_nonzero(codes == n)) for n, e in enumerate(EVENTS)}

    def to_csv(self, path: str | os.PathLike, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["iter", "pair", "event", "total_value"])
            for it, k, e, t in self.rows():
                w.writerow([it, f"{k}-{k + 1}", e, repr(t)])


@dataclass
class PairRun:
    assignment: dict[int, int]  # downstream id -> upstream id
    state: AspirationState
    trace: RunTrace
    converged: bool
    reason: str  # all-matched, quotas-full, stable or max-iters
    iterations: int
    epsilon: float
    delta: float
    market: PairMarket


def run_pair(
    values,
    quotas: Sequence[int],
    config: MsaConfig = MsaConfig(),
    seed=None,
    assignment: dict[int, int] | None = None,
    state: AspirationState | None = None,
    layer_pair: int = 0,
    iter_offset: int = 0,
    on_accept: Callable[[dict[int, int]], float] | None = None,
) -> PairRun:
    """Run the dynamic on one layer pair until it settles or hits the iteration cap.

    ``assignment`` (downstream id -> upstream id) and ``state`` warm-start the
    game; otherwise it starts empty with random aspirations.  ``on_accept``
    maps the current pair assignment (ids) to the total value recorded in the
    trace; the default records the pair's own matched value.

    The run stops once no further match can ever happen (settled
    epsilon-stability, which implies the plain aspiration-based check).  This
    is tested whenever every downstream node is matched or every quota is
    full after an accepted match, and after ``stall_window`` encounters in a
    row without one.  Past ``settle_budget`` encounters the aspiration-based
    check alone is enough, which cuts off the rare long eviction cycles.
    """
    m, down, up = _as_matrix(values)
    rng = _rng(config.seed if seed is None else seed)
    eps, delta, stall = config.resolve(m)
    warm = state is not None
    if state is None:
        state = init_aspirations(values, rng)
    idx_down = {d: n for n, d in enumerate(down)}
    idx_up = {u: n for n, u in enumerate(up)}
    start = {idx_down[i]: idx_up[j] for i, j in (assignment or {}).items()}
    market = PairMarket(m, quotas, eps, delta, state=state, assignment=start,
                        split_rule=config.split_rule, rng=rng, eviction=config.eviction)
    trace = RunTrace()
    n_i, n_j = m.shape

    def record_total() -> float:
        if on_accept is None:
            return market.value()
        return on_accept(market.assignment_ids())

    def finish(converged, reason, iters):
        return PairRun(market.assignment_ids(), market.state(), trace, converged, reason,
                       iters, eps, delta, market)

    if n_i == 0 or n_j == 0 or (m.size and m.max() < 2.0 * eps):
        return finish(True, "stable", 0)
    if warm and market.is_stable(settled=True):
        return finish(True, "stable", 0)

    total = record_total()
    encounter = market.encounter
    idle = 0
    it = 0
    cap = config.max_iters_per_pair
    budget = config.settle_budget if config.settle_budget is not None else 1000 * m.size
    strict = True
    while it < cap:
        n = min(_CHUNK, cap - it)
        draws_i = rng.integers(0, n_i, size=n).tolist()
        draws_j = rng.integers(0, n_j, size=n).tolist()
        for i, j in zip(draws_i, draws_j):
            event = encounter(i, j)
            it += 1
            check = False
            if event is MATCH or event is EVICT:
                idle = 0
                total = record_total()
                check = market.all_matched() or market.quotas_full()
            else:
                idle += 1
                if idle >= stall:
                    idle = 0
                    check = True
            if strict and it >= budget:
                strict = False
                check = True
            trace.append(iter_offset + it, layer_pair, event, total)
            if check and market.is_stable(settled=strict):
                if market.all_matched():
                    reason = "all-matched"
                elif market.quotas_full():
                    reason = "quotas-full"
                else:
                    reason = "stable"
                return finish(True, reason, it)
    return finish(False, "max-iters", it)


@dataclass
class MsaResult:
    matching: Matching
    total: float
    trace: RunTrace
    runs: list[PairRun]  # in execution order, sweeps concatenated
    converged: bool
    sweeps: int

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.runs)


def _revalue(state: AspirationState, assignment: dict[int, int], values: RateMatrix) -> AspirationState:
    """Re-balance levels of matched pairs after their pair values changed."""
    state = state.copy()
    m = values.rates
    idx_down = {d: n for n, d in enumerate(values.downstream_ids)}
    idx_up = {u: n for n, u in enumerate(values.upstream_ids)}
    for i_id, j_id in assignment.items():
        i, j = idx_down[i_id], idx_up[j_id]
        v = float(m[i, j])
        s = state.downstream[i] + state.upstream[j, i]
        a_i = state.downstream[i] * v / s if s > 0 else 0.5 * v
        state.downstream[i] = a_i
        state.upstream[j, i] = v - a_i
    return state


def run_msa(scenario: Scenario, config: MsaConfig = MsaConfig(), rates: Sequence[RateMatrix] | None = None) -> MsaResult:
    """Sweep the pair game bottom-up over all adjacent layers.

    Pair 0 plays on raw user rates; every higher pair on values clipped by the
    supply its downstream nodes gathered below.  Sweeps repeat up to
    ``config.sweep_repeats`` times, stopping early once the total moves by less
    than epsilon.  Pair states carry over between sweeps.
    """
    rates = list(rates) if rates is not None else rate_matrices(scenario)
    K1 = scenario.n_pairs
    matching = Matching.empty(K1)
    states: list[AspirationState | None] = [None] * K1
    root = np.random.SeedSequence(config.seed)
    seeds = iter(root.spawn(config.sweep_repeats * K1))
    trace = RunTrace()
    runs: list[PairRun] = []
    converged = True
    prev_total = None
    eps_min = math.inf
    total = 0.0
    sweeps = 0
    for sweep in range(config.sweep_repeats):
        sweeps += 1
        for k in range(K1):
            values = effective_values(k, matching, scenario, rates)
            state = states[k]
            if state is not None:
                state = _revalue(state, matching.pairs[k], values)

            def on_accept(pair_assignment, k=k):
                trial = Matching([dict(p) for p in matching.pairs])
                trial.pairs[k] = pair_assignment
                return chain_values(trial, scenario, rates).total

            run = run_pair(
                values,
                scenario.quotas(k + 1),
                config,
                seed=next(seeds),
                assignment=matching.pairs[k],
                state=state,
                layer_pair=k,
                iter_offset=len(trace),
                on_accept=on_accept,
            )
            matching.pairs[k] = run.assignment
            states[k] = run.state
            runs.append(run)
            trace.extend(run.trace)
            converged = converged and run.converged
            eps_min = min(eps_min, run.epsilon)
        total = total_value(matching, scenario, rates)
        if prev_total is not None and abs(total - prev_total) < eps_min:
            break
        prev_total = total
    return MsaResult(matching, total, trace, runs, converged, sweeps)
