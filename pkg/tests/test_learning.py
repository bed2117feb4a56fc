import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iotwm.errors import ParameterError
from iotwm.game import GameConfig, msne, random_instance
from iotwm.learning import (AttackBelief, Belief, DRLConfig, Experience, FPAttacker, FPGateway, QState,
                            TabularQ, baseline_policy, belief_update, br_attacker, br_gateway, drl_train,
                            evaluate, fp_run, impute_state, play, policy_utility, q_update)
from iotwm.learning.drl import DeviceQNetwork, epsilon_schedule, observation_row, policy_entropy

TABLE = GameConfig((1000, 2000, 3000), 5000, 1)


def brute_attacker(delta, values, K):
    """Oracle: best K-subset, ties to the lexicographically smallest."""
    best, arg = -1.0, None
    for A in itertools.combinations(range(len(values)), K):
        u = sum((1 - delta[i]) * values[i] for i in A)
        if u > best + 1e-12:
            best, arg = u, A
    return best


def brute_knapsack(profit, freqs, cap):
    best = 0.0
    for r in range(len(freqs) + 1):
        for S in itertools.combinations(range(len(freqs)), r):
            if sum(freqs[i] for i in S) <= cap:
                best = max(best, sum(profit[i] for i in S))
    return best


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.data())
def test_br_attacker_matches_brute_force(N, data):
    K = data.draw(st.integers(1, N))
    rng = np.random.default_rng(data.draw(st.integers(0, 10 ** 6)))
    delta = rng.random(N) * (rng.random(N) < 0.7)
    values = rng.random(N)
    A = br_attacker(delta, values, K)
    assert len(A) == K
    assert sum((1 - delta[i]) * values[i] for i in A) == pytest.approx(brute_attacker(delta, values, K))


def test_br_attacker_edges():
    v = np.array([0.1, 0.5, 0.4])
    assert br_attacker(np.zeros(3), v, 2) == {1, 2}
    assert 1 not in br_attacker(np.array([0, 1, 0]), v, 2)
    assert br_attacker(np.zeros(3), [1, 1, 1], 1) == {0}
    with pytest.raises(ParameterError):
        br_attacker(np.zeros(3), v, 4)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.data())
def test_br_gateway_matches_brute_force(N, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 10 ** 6)))
    freqs = [int(f) * 100 for f in rng.integers(1, 30, N)]
    cap = int(data.draw(st.floats(0, 1.1)) * sum(freqs))
    delta = rng.random(N)
    values = np.asarray(freqs) / sum(freqs)
    S = br_gateway(delta, values, freqs, cap)
    assert sum(freqs[i] for i in S) <= cap
    profit = delta * values
    assert sum(profit[i] for i in S) == pytest.approx(brute_knapsack(profit, freqs, cap), abs=1e-12)
    assert all(sum(freqs[i] for i in S) + freqs[e] > cap for e in range(N) if e not in S)


def test_br_gateway_edges():
    freqs = [1000, 2000, 3000]
    v = np.array(freqs) / 6000
    assert br_gateway(np.ones(3), v, freqs, 6000) == {0, 1, 2}
    S = br_gateway(np.full(3, 0.5), v, freqs, 5000)
    assert sum(freqs[i] for i in S) == 5000


def test_belief_update():
    b = belief_update(Belief.empty(2), {0})
    assert list(b.delta) == [1.0, 0.0]
    for _ in range(99):
        b = belief_update(b, set())
    assert list(b.delta) == [0.01, 0.0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sets(st.integers(0, 4)), min_size=1, max_size=40))
def test_belief_is_exact_empirical_frequency(observed):
    b = Belief.empty(5)
    running = np.zeros(5)
    for t, H in enumerate(observed):
        b = belief_update(b, H)
        # the running-average form agrees with the count form
        running = t / (t + 1) * running + np.isin(np.arange(5), list(H)) / (t + 1)
        for i in range(5):
            assert Fraction(int(b.counts[i]), b.t) == Fraction(sum(i in h for h in observed[:t + 1]), t + 1)
        np.testing.assert_allclose(b.delta, running, atol=1e-12)


def test_fp_table_value():
    res = fp_run(TABLE, eps=1e-3)
    assert res.converged
    assert res.value_a == pytest.approx(1 / 11, abs=1e-2)
    assert res.alloc_a.sum() == pytest.approx(1.0, abs=1e-12)
    mix = dict(res.gateway_mix())
    assert sum(mix.values()) == pytest.approx(1.0)


def test_fp_full_budget_is_immediate():
    res = fp_run(GameConfig((1000, 2000), 3000, 1), eps=1e-3)
    # the value is 1 from the first round; the stopping rule on belief
    # movement needs the attacker's frequencies to settle as well
    assert res.converged
    assert np.all(res.value_trace == 0.0) and res.value_g == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_fp_matches_lp_on_random_games(seed):
    rng = np.random.default_rng(seed)
    cfg = random_instance(int(rng.integers(3, 11)), int(rng.integers(1, 4)), float(rng.uniform(0.2, 0.8)), seed)
    res = fp_run(cfg, eps=1e-5, max_iter=100_000, min_iter=2000)
    assert res.value_a == pytest.approx(float(msne(cfg).value_a), abs=1e-2)


def test_fp_value_trace_settles():
    res = fp_run(TABLE, eps=1e-3, max_iter=20_000, min_iter=20_000)
    tail = res.value_trace[-len(res.value_trace) // 10:]
    assert tail.max() - tail.min() < 2 * 1e-3


def test_fp_rejects_bad_eps():
    with pytest.raises(ParameterError):
        fp_run(TABLE, eps=0)


def inclusion_frequencies(kind, cfg, steps, seed=0):
    sampler = baseline_policy(kind, cfg, seed)
    counts = np.zeros(cfg.N)
    for _ in range(steps):
        S = sampler()
        assert cfg.feasible(S)
        counts[list(S)] += 1
    return counts / steps


def test_equal_baseline_frequencies():
    f = inclusion_frequencies("equal", TABLE, 100_000)
    assert f.max() - f.min() < 0.02


def test_proportional_baseline_ordered_by_value():
    cfg = GameConfig((1000, 2000, 3000, 4000), 5000, 1)
    f = inclusion_frequencies("proportional", cfg, 20_000)
    w = inclusion_frequencies("equal", cfg, 20_000)
    # larger devices are drawn earlier, so they are covered more than under equal
    assert f[3] > w[3] and f[0] < w[0]


def test_baseline_singleton_budget():
    cfg = GameConfig((1000, 1000, 1000), 1500, 1)
    sampler = baseline_policy("equal", cfg, 0)
    assert all(len(sampler()) == 1 for _ in range(100))
    with pytest.raises(ParameterError):
        baseline_policy("greedy", cfg, 0)


def test_impute_state():
    row = np.array([2, 0, 1, 2, 2])
    assert list(impute_state(row, np.zeros(5), 0)) == [0, 0, 1, 0, 0]
    assert list(impute_state(row, np.ones(5), 0)) == [1, 0, 1, 1, 1]
    rng = np.random.default_rng(0)
    ones = np.mean([impute_state(np.array([2]), np.array([0.3]), rng)[0] for _ in range(10_000)])
    assert ones == pytest.approx(0.3, abs=0.02)


def test_qstate_validation():
    with pytest.raises(ParameterError):
        QState(np.array([[0, 3]]))
    s = QState.empty(4, 3)
    assert s.q == 4 and s.N == 3 and (s.history == 2).all()
    s2 = s.push([0, 1, 2], [0, 1, 1])
    assert list(s2.history[-1]) == [0, 1, 2] and list(s2.imputed[-1]) == [0, 1, 1]
    assert list(observation_row({0, 1}, {1}, 3)) == [0, 1, 2]


def toy_states():
    return [QState(np.array([[h]])) for h in (0, 1)]


def test_q_update_gamma_zero_is_reward():
    s0, s1 = toy_states()
    q = TabularQ([frozenset(), frozenset({0})])
    q.update(s0, frozenset({0}), 5.0)
    exp = Experience(s0, frozenset({0}), 0.7, s1)
    assert q_update(q, exp, 1.0, 0.0) == pytest.approx(0.7, abs=1e-15)
    assert q_update(TabularQ([frozenset()]), Experience(s0, frozenset(), 0.2, s1, True), 1.0, 0.9) == 0.2


def test_q_update_leaves_fixed_point_alone():
    states = toy_states()
    actions = [frozenset(), frozenset({0})]
    reward = {(0, 0): 0.2, (0, 1): 1.0, (1, 0): 0.5, (1, 1): 0.1}
    nxt = {(0, 0): 1, (0, 1): 0, (1, 0): 0, (1, 1): 1}
    gamma = 0.8
    Q = np.zeros((2, 2))
    for _ in range(2000):
        Q = np.array([[reward[s, a] + gamma * Q[nxt[s, a]].max() for a in range(2)] for s in range(2)])
    q = TabularQ(actions)
    for s in range(2):
        for a in range(2):
            q.update(states[s], actions[a], Q[s, a])
    for s in range(2):
        for a in range(2):
            exp = Experience(states[s], actions[a], reward[s, a], states[nxt[s, a]])
            assert q_update(q, exp, 0.5, gamma) == pytest.approx(Q[s, a], abs=1e-12)
            assert q.value(states[s], actions[a]) == pytest.approx(Q[s, a], abs=1e-12)


def test_q_update_parameter_ranges():
    s0, s1 = toy_states()
    exp = Experience(s0, frozenset(), 0.0, s1)
    with pytest.raises(ParameterError):
        q_update(TabularQ([frozenset()]), exp, 0.0, 0.5)
    with pytest.raises(ParameterError):
        q_update(TabularQ([frozenset()]), exp, 0.5, 1.0)


def test_tabular_q_matches_value_iteration():
    # Table I game against a fixed random attacker; the state is the last
    # observation row, which depends on the action and the attack.
    cfg = TABLE
    v = cfg.value_array
    attack_p = np.array([0.2, 0.3, 0.5])
    actions = [frozenset({0, 1}), frozenset({0, 2}), frozenset({1, 2})]
    gamma = 0.5
    rows = sorted({tuple(observation_row(S, {a} & S, 3)) for S in actions for a in range(3)})
    index = {r: k for k, r in enumerate(rows)}

    def outcomes(S):
        for a in range(3):
            yield attack_p[a], 1.0 - (v[a] if a not in S else 0.0), index[tuple(observation_row(S, {a} & S, 3))]

    V = np.zeros(len(rows))
    for _ in range(200):
        Qvi = np.array([[sum(p * (r + gamma * V[n]) for p, r, n in outcomes(S)) for S in actions]
                        for _ in rows])
        V = Qvi.max(axis=1)
    greedy_vi = [actions[int(k)] for k in Qvi.argmax(axis=1)]

    rng = np.random.default_rng(0)
    q = TabularQ(actions)
    state = QState(np.array([rows[0]]))
    for t in range(30_000):
        S = actions[int(rng.integers(3))]
        a = int(rng.choice(3, p=attack_p))
        reward = 1.0 - (v[a] if a not in S else 0.0)
        nxt = QState(np.array([observation_row(S, {a} & S, 3)]))
        q_update(q, Experience(state, S, reward, nxt), 0.02, gamma)
        state = nxt
    for k, row in enumerate(rows):
        assert q.best(QState(np.array([row])))[0] == greedy_vi[k]


def test_attack_belief_explores_unchecked_devices():
    b = AttackBelief(3)
    for _ in range(50):
        b.update({0}, set())
    assert b.delta[1] > b.delta[0]
    b.update({1}, {1})
    assert b.hits[1] == 1 and b.covered[1] == 1


def test_epsilon_schedule_and_entropy():
    assert epsilon_schedule(0, 100, 1.0) == 1.0
    assert epsilon_schedule(20, 100, 1.0) == pytest.approx(0.05)
    assert epsilon_schedule(90, 100, 1.0, end=1.0) == 1.0
    assert policy_entropy(1.0, 4) == pytest.approx(np.log(4))
    assert policy_entropy(0.0, 4) == 0.0


def test_epsilon_one_acts_uniformly():
    res = drl_train(TABLE, DRLConfig(train_steps=20, seed=0))
    g = res.gateway
    g.epsilon = 1.0
    counts = Counter(g.act() for _ in range(9000))
    assert set(counts) == {frozenset({0, 1}), frozenset({0, 2}), frozenset({1, 2})}
    assert all(abs(c / 9000 - 1 / 3) < 0.02 for c in counts.values())


def test_drl_is_deterministic():
    cfg = random_instance(8, 2, 0.5, 3)
    a = drl_train(cfg, DRLConfig(train_steps=150, seed=4))
    b = drl_train(cfg, DRLConfig(train_steps=150, seed=4))
    assert np.array_equal(a.trace.u_g, b.trace.u_g)
    assert np.array_equal(a.losses, b.losses)
    assert np.array_equal(evaluate(a, 50).u_g, evaluate(b, 50).u_g)


def test_drl_actions_are_feasible():
    cfg = random_instance(10, 2, 0.3, 1)
    res = drl_train(cfg, DRLConfig(train_steps=100, seed=0))
    g = res.gateway.frozen()
    for _ in range(50):
        S = g.act()
        assert cfg.feasible(S)
        g.observe(S, frozenset(), frozenset())


def test_q_network_is_additive():
    cfg = random_instance(6, 1, 0.5, 0)
    net = DeviceQNetwork(cfg, hidden=4, seed=0)
    s = QState.empty(3, 6)
    sc = net.scores([s])[0]
    assert net.value(s, {1, 3}) == pytest.approx(net.c + sc[1] + sc[3])
    S, val = net.best(s)
    assert cfg.feasible(S)
    assert net.best_values([s])[0] == pytest.approx(net.c + sum(max(sc[i], 0) for i in S))


def test_drl_checkpoint_blob():
    res = drl_train(TABLE, DRLConfig(train_steps=30, seed=0))
    blob = res.checkpoint()
    assert blob["format"] == "iotwm-lstm" and "bias" in blob


def test_drl_config_validation():
    with pytest.raises(ParameterError):
        DRLConfig(capacity=4, batch=16)
    with pytest.raises(ParameterError):
        DRLConfig(q=0)


def test_fp_gateway_beats_equal_baseline():
    cfg = random_instance(12, 2, 0.5, 0)
    fp = play(cfg, FPGateway(cfg), 3000).mean_u_g(1000)
    eq = policy_utility(cfg, "equal", 0, train_steps=1000, eval_steps=2000)
    assert fp > eq


def test_fp_attacker_best_responds_to_history():
    att = FPAttacker(TABLE)
    assert att.act() == {2}
    for _ in range(5):
        att.observe({1, 2})
    assert att.act() == {0}


def test_play_trace_csv():
    tr = play(TABLE, FPGateway(TABLE), 5)
    lines = list(tr.csv_lines())
    assert lines[0] == "step,U_g,U_a,policy_entropy" and len(lines) == 6
    np.testing.assert_allclose(tr.u_g + tr.u_a, 1.0)


def test_unknown_policy_rejected():
    with pytest.raises(ParameterError):
        policy_utility(TABLE, "oracle", 0)


@pytest.mark.slow
def test_drl_beats_equal_baseline_n20():
    cfg = random_instance(20, 2, 0.5, 0)
    drl = policy_utility(cfg, "drl", 0, eval_steps=10_000)
    equal = policy_utility(cfg, "equal", 0, eval_steps=10_000)
    assert drl >= equal + 0.02
