import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import chain_scenario, matrices
from sagin_match.channel import build_rate_matrix
from sagin_match.msa import (
    DECREMENT,
    EVICT,
    MATCH,
    NOOP,
    AspirationState,
    MsaConfig,
    PairMarket,
    RunTrace,
    check_epsilon_stability,
    init_aspirations,
    is_agreeable,
    run_msa,
    run_pair,
)
from sagin_match.scenario import generate_scenario, default_config
from sagin_match.valuation import Matching, total_value, users_in_complete_chains


def market(values, quotas, a_down, a_up, assignment=None, eps=1.0, delta=0.5, **kw):
    state = AspirationState(np.array(a_down, float), np.array(a_up, float))
    return PairMarket(np.array(values, float), quotas, eps, delta, state=state, assignment=assignment, **kw)


# -- configuration ------------------------------------------------------------------


def test_config_defaults_and_validation():
    eps, delta, stall = MsaConfig().resolve(np.array([[2.0, 0.0], [4.0, 6.0]]))
    assert eps == pytest.approx(0.04) and delta == pytest.approx(0.02) and stall == 200
    assert MsaConfig(epsilon=3.0).resolve(np.ones((1, 1)))[:2] == (3.0, 1.5)
    with pytest.raises(ValueError):
        MsaConfig(epsilon=1.0, delta=1.0)
    with pytest.raises(ValueError):
        MsaConfig(max_iters_per_pair=0)
    with pytest.raises(ValueError):
        MsaConfig(split_rule="nash")
    with pytest.raises(ValueError):
        MsaConfig(delta=5.0).resolve(np.ones((2, 2)))


# -- aspirations and agreeability ------------------------------------------------------


def test_init_aspirations():
    zero = init_aspirations(np.zeros((3, 2)), seed=1)
    assert not zero.downstream.any() and not zero.upstream.any()
    a, b = init_aspirations(np.eye(3) + 1, seed=9), init_aspirations(np.eye(3) + 1, seed=9)
    assert np.array_equal(a.downstream, b.downstream) and np.array_equal(a.upstream, b.upstream)
    values = np.array([[5.0, 1.0], [2.0, 7.0]])
    draws = np.array([init_aspirations(values, seed=s).downstream for s in range(1000)])
    assert draws[:, 0].max() <= 5.0 and draws[:, 1].max() <= 7.0
    assert draws[:, 0].max() > 4.9 and draws[:, 1].max() > 6.9
    ups = np.array([init_aspirations(values, seed=s).upstream for s in range(200)])
    assert np.all(ups <= values.T)


@pytest.mark.parametrize("a_i, a_j, expected", [(3.0, 3.0, True), (5.0, 4.0, False), (4.5, 3.5, True)])
def test_is_agreeable(a_i, a_j, expected):
    state = AspirationState(np.array([a_i]), np.array([[a_j]]))
    assert is_agreeable(0, 0, state, np.array([[10.0]]), 1.0) is expected


# -- encounter --------------------------------------------------------------------------


def test_spare_quota_match_splits_the_surplus():
    m = market([[10.0]], [1], [3.0], [[3.0]])
    assert m.encounter(0, 0) == MATCH
    assert m.a_down == [5.0] and m.a_up == [[5.0]]
    assert m.encounter(0, 0) == NOOP


def test_value_rule_requires_beating_the_weakest_partner():
    # upstream 0 (quota 1) serves downstream 1 with value 6; newcomer 0 has value 5
    m = market([[5.0], [6.0]], [1], [1.0, 3.0], [[1.0, 3.0]], assignment={1: 0}, eviction="value")
    assert m.encounter(0, 0) == DECREMENT
    assert m.partner == [-1, 0]
    assert m.a_down[0] == 0.5 and m.a_up[0][0] == 0.5
    m2 = market([[7.0], [6.0]], [1], [1.0, 3.0], [[1.0, 3.0]], assignment={1: 0}, eviction="value")
    assert m2.encounter(0, 0) == EVICT
    assert m2.partner == [0, -1]
    assert m2.a_down[1] == 3.0  # the evicted node keeps its level


def test_payoff_rule_displaces_the_cheapest_partner():
    # partners 1 and 2 leave 0.5 and 4.0 to the upstream node; newcomer 0 needs 1 + 0.5 + 2 <= 5
    m = market([[5.0], [6.0], [6.0]], [2], [1.0, 5.5, 2.0], [[1.0, 0.5, 4.0]], assignment={1: 0, 2: 0},
               eviction="payoff")
    assert m.encounter(0, 0) == EVICT
    assert m.partner == [0, -1, 0]
    assert m.a_down[0] == pytest.approx(2.75)
    assert m.a_up[0][0] == pytest.approx(2.25)  # the slot now pays more than the 0.5 it replaced


def test_payoff_rule_disagreement():
    m = market([[3.0], [6.0]], [1], [1.0, 5.5], [[0.0, 0.5]], assignment={1: 0}, eviction="payoff")
    assert m.encounter(0, 0) == DECREMENT
    assert m.partner == [-1, 0]


def test_decrements_floor_at_zero_and_spare_matched_nodes():
    m = market([[1.0, 9.0]], [1, 1], [0.3], [[0.2], [0.0]], delta=0.5)
    assert m.encounter(0, 0) == DECREMENT
    assert m.a_down == [0.0] and m.a_up[0] == [0.0]
    # a matched node keeps its level on disagreement; the upstream level still drops
    m = market([[1.0, 9.0]], [1, 1], [6.0], [[0.8], [3.0]], assignment={0: 1}, delta=0.5)
    assert m.encounter(0, 0) == DECREMENT
    assert m.a_down == [6.0] and m.a_up[0] == [pytest.approx(0.3)]
    assert m.partner == [1]


def test_rematching_detaches_from_the_old_partner():
    m = market([[4.0, 9.0]], [1, 1], [1.0], [[3.0], [0.0]], assignment={0: 0})
    assert m.encounter(0, 1) == MATCH
    assert m.partner == [1] and m.members == [[], [0]]
    assert m.a_up[0] == [3.0]  # the old partner's level is untouched


def test_random_split_gives_each_side_at_least_epsilon():
    for seed in range(200):
        m = market([[10.0]], [1], [3.0], [[3.0]], split_rule="random", rng=seed)
        m.encounter(0, 0)
        assert m.a_down[0] >= 4.0 - 1e-12 and m.a_up[0][0] >= 4.0 - 1e-12
        assert m.a_down[0] + m.a_up[0][0] == pytest.approx(10.0)


@given(st.integers(0, 10**9))
def test_encounter_invariants(seed):
    rng = np.random.default_rng(seed)
    n_i, n_j = int(rng.integers(1, 7)), int(rng.integers(1, 4))
    values = rng.uniform(0, 1, (n_i, n_j))
    quotas = rng.integers(1, 4, n_j).tolist()
    eps = 0.02
    rule = ["payoff", "value"][seed % 2]
    m = PairMarket(values, quotas, eps, eps / 2, state=init_aspirations(values, rng), eviction=rule)
    for _ in range(400):
        i, j = int(rng.integers(n_i)), int(rng.integers(n_j))
        before_i = m.a_down[i]
        was_single = m.partner[i] < 0
        full = len(m.members[j]) >= quotas[j] and m.partner[i] != j
        weakest = m._weakest(j) if full and rule == "payoff" else None
        before_slot = m.a_up[j][weakest] if weakest is not None else m.a_up[j][i]
        event = m.encounter(i, j)
        if event in (MATCH, EVICT):
            assert m.a_down[i] >= before_i + eps - 1e-12
            # the upstream side gains at least epsilon on the level (or slot) it gives up
            assert m.a_up[j][i] >= before_slot + eps - 1e-12
            assert m.a_down[i] + m.a_up[j][i] == pytest.approx(values[i, j], abs=1e-12)
        elif event == DECREMENT and was_single:
            assert m.a_down[i] <= before_i
        assert min(m.a_down) >= 0 and min(min(r) for r in m.a_up) >= 0
        assert all(len(mem) <= q for mem, q in zip(m.members, quotas))
        assert sorted(i for mem in m.members for i in mem) == sorted(i for i, p in enumerate(m.partner) if p >= 0)
        assert not m.unbalanced_pairs()


# -- stability check ---------------------------------------------------------------------


def test_stability_check_examples():
    values = np.array([[10.0, 1.0], [2.0, 2.0]])
    state = AspirationState(np.array([5.0, 0.0]), np.array([[5.0, 0.0], [0.0, 0.0]]))
    ok, bad = check_epsilon_stability(values, {0: 0}, state, [1, 1], 0.5)
    assert not ok and bad == [(1, 1)]
    state.upstream[1, 1] = 1.5
    ok, bad = check_epsilon_stability(values, {0: 0}, state, [1, 1], 0.5)
    assert ok and bad == []
    state.downstream[0] = 4.0
    assert check_epsilon_stability(values, {0: 0}, state, [1, 1], 0.5)[1] == [(0, 0)]
    empty = AspirationState(np.zeros(0), np.zeros((2, 0)))
    assert check_epsilon_stability(np.zeros((0, 2)), {}, empty, [1, 1], 0.1) == (True, [])


# -- run_pair ------------------------------------------------------------------------------


def test_one_by_one_matches_fast():
    state = AspirationState(np.array([1.0]), np.array([[2.0]]))
    run = run_pair(np.array([[10.0]]), [1], MsaConfig(epsilon=1.0, delta=0.5), seed=0, state=state)
    assert run.converged and run.reason == "all-matched" and run.iterations == 1
    assert run.assignment == {0: 0}
    assert run.state.downstream[0] + run.state.upstream[0, 0] == 10.0


def test_zero_rates_terminate_empty():
    run = run_pair(np.zeros((3, 2)), [1, 1], MsaConfig(epsilon=0.1, delta=0.05), seed=4)
    assert run.converged and run.reason == "stable"
    assert run.assignment == {}
    assert not run.state.downstream.any() and not run.state.upstream.any()


def test_full_scale_pair_matches_everyone():
    sc = generate_scenario(default_config(), 1)
    run = run_pair(build_rate_matrix(sc, 0), sc.quotas(1), MsaConfig(), seed=1)
    assert run.converged and run.reason == "all-matched"
    assert sorted(run.assignment) == list(sc.ids(0))
    ok, bad = check_epsilon_stability(run.market.values, run.market.assignment(), run.state, sc.quotas(1),
                                      run.epsilon)
    assert ok, bad


def test_random_small_pairs_terminate_before_the_cap():
    rng = np.random.default_rng(2024)
    for n in range(100):
        values = rng.uniform(0, 1, (6, 3))
        quotas = rng.integers(1, 4, 3).tolist()
        run = run_pair(values, quotas, MsaConfig(stall_window=50 * 18, max_iters_per_pair=200_000), seed=n)
        assert run.converged, n


def test_scaling_leaves_the_event_sequence_unchanged():
    rng = np.random.default_rng(5)
    values = rng.uniform(0, 1, (6, 3))
    state = init_aspirations(values, 8)
    cfg = MsaConfig(epsilon=0.01, delta=0.004, stall_window=900)
    a = run_pair(values, [2, 2, 1], cfg, seed=3, state=state.copy())
    b = run_pair(values * 2, [2, 2, 1], MsaConfig(epsilon=0.02, delta=0.008, stall_window=900), seed=3,
                 state=state.scaled(2.0))
    assert a.trace.events() == b.trace.events()
    assert a.assignment == b.assignment
    assert np.array_equal(a.state.downstream * 2, b.state.downstream)


def test_warm_start_on_a_settled_pair_is_a_no_op():
    sc = generate_scenario(default_config(12), 3)
    rm = build_rate_matrix(sc, 0)
    first = run_pair(rm, sc.quotas(1), MsaConfig(), seed=2)
    again = run_pair(rm, sc.quotas(1), MsaConfig(), seed=9, assignment=first.assignment, state=first.state)
    assert again.iterations == 0 and again.assignment == first.assignment


def test_trace_and_determinism(tmp_path):
    values = np.random.default_rng(0).uniform(0, 1, (5, 2))
    a = run_pair(values, [2, 2], MsaConfig(seed=7))
    b = run_pair(values, [2, 2], MsaConfig(seed=7))
    assert a.trace.events() == b.trace.events()
    assert list(a.trace.total) == list(b.trace.total)
    assert len(a.trace) == a.iterations
    assert a.trace.total[-1] == pytest.approx(sum(values[i, j] for i, j in a.market.assignment().items()))
    counts = a.trace.counts()
    assert sum(counts.values()) == a.iterations and counts[MATCH] >= 1
    a.trace.to_csv(tmp_path / "t.csv", header="# x\n")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[1] == "iter,pair,event,total_value" and lines[2].startswith("1,0-1,")


# -- run_msa --------------------------------------------------------------------------------


def test_minimal_chain_total_is_the_bottleneck():
    sc = chain_scenario([1, 1, 1, 1])
    rates = matrices(sc, [[[5.0]], [[4.0]], [[10.0]]])
    res = run_msa(sc, MsaConfig(seed=1), rates)
    assert res.converged
    assert res.total == 4.0
    assert res.matching.edges() == [(0, 0, 0), (1, 0, 0), (2, 0, 0)]


def test_default_network_run():
    sc = generate_scenario(default_config(), 0)
    res = run_msa(sc, MsaConfig(seed=0))
    assert res.converged
    res.matching.check(sc)
    assert users_in_complete_chains(res.matching, sc) == list(sc.ids(0))
    assert res.total == total_value(res.matching, sc)
    assert res.trace.total[-1] == pytest.approx(res.total)
    # the trace records the valuation of the evolving matching; spot-check a replay of pair 0
    assert list(res.trace.iteration) == list(range(1, len(res.trace) + 1))


def test_second_sweep_is_a_no_op_when_upper_links_never_bind():
    rng = np.random.default_rng(3)
    sc = chain_scenario([5, 2, 2, 1], [None, 3, 2, 2])
    rates = matrices(sc, [rng.uniform(0.5, 1, (5, 2)), np.full((2, 2), 50.0), np.full((2, 1), 99.0)])
    one = run_msa(sc, MsaConfig(seed=4, sweep_repeats=1), rates)
    two = run_msa(sc, MsaConfig(seed=4, sweep_repeats=2), rates)
    assert one.total == two.total
    assert two.matching == one.matching


def test_msa_is_deterministic():
    sc = generate_scenario(default_config(10), 6)
    a, b = run_msa(sc, MsaConfig(seed=3)), run_msa(sc, MsaConfig(seed=3))
    assert a.matching == b.matching and list(a.trace.event) == list(b.trace.event)


def test_iteration_cap_reports_non_convergence():
    values = np.random.default_rng(1).uniform(0, 1, (6, 3))
    run = run_pair(values, [2, 2, 2], MsaConfig(max_iters_per_pair=5, seed=0))
    assert not run.converged and run.reason == "max-iters" and run.iterations == 5


def test_run_trace_extend():
    t = RunTrace()
    t.append(1, 0, MATCH, 2.0)
    u = RunTrace()
    u.append(2, 1, NOOP, 2.0)
    t.extend(u)
    assert list(t.rows()) == [(1, 0, MATCH, 2.0), (2, 1, NOOP, 2.0)]
    assert Matching.empty(1) == Matching([{}])
