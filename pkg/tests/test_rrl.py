import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlrrl.assets import load_asset
from dnlrrl.deduction import compile_index_plan, forward_chain, initial_store
from dnlrrl.envs.boxworld import BoxWorld
from dnlrrl.envs.gridworld import GridWorld
from dnlrrl.program import parse_program
from dnlrrl.rrl import (PolicyConfig, PolicyGraph, SchemaMismatch, action_distribution, check_schema,
                        discounted_returns, episode_gradient, evaluate_policy, rollout, softmax,
                        train_policy)


@pytest.fixture(scope="module")
def rrl3():
    p = load_asset("boxworld_rrl3")
    return p, compile_index_plan(p)


def test_softmax_examples():
    np.testing.assert_allclose(softmax(np.zeros(5)), np.full(5, 0.2))
    z = np.zeros(25)
    z[3] = 1.0
    pr = softmax(10 * z)
    assert pr[3] == pytest.approx(math.exp(10) / (math.exp(10) + 24), rel=1e-12)
    assert pr[3] == pytest.approx(0.99891, abs=1e-5)
    np.testing.assert_allclose(softmax(1e-12 * np.arange(7)), np.full(7, 1 / 7))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30))
def test_softmax_sums_to_one(z):
    assert abs(softmax(np.array(z)).sum() - 1) < 1e-6


def test_action_distribution_on_store(cnt_plan):
    from conftest import closure_units
    out = forward_chain(initial_store(cnt_plan), cnt_plan, closure_units(cnt_plan), t_max=4)
    pr = action_distribution(out, "cnt", 10)
    assert pr.shape == (16,) and abs(pr.sum() - 1) < 1e-12
    assert pr[0] == pytest.approx(1 / (12 * math.exp(10) + 4))
    with pytest.raises(KeyError):
        action_distribution(out, "nope", 10)


def test_discounted_returns_examples():
    np.testing.assert_allclose(discounted_returns([0, 0, 1], 0.7), [0.49, 0.7, 1.0])
    assert discounted_returns([0, 0, 0], 0.9).tolist() == [0, 0, 0]
    assert discounted_returns([1, 2, 3], 0).tolist() == [1, 2, 3]
    with pytest.raises(ValueError):
        discounted_returns([1], 1.0)


@given(st.lists(st.floats(-5, 5), max_size=20), st.floats(0, 0.99))
def test_discounted_returns_match_closed_form(rewards, gamma):
    want = [sum(gamma ** (k - t) * rewards[k] for k in range(t, len(rewards))) for t in range(len(rewards))]
    np.testing.assert_allclose(discounted_returns(rewards, gamma), want, atol=1e-9)


def test_schema_checks():
    check_schema(load_asset("boxworld_rrl1"), BoxWorld(4))
    check_schema(load_asset("gridworld"), GridWorld())
    with pytest.raises(SchemaMismatch):
        check_schema(load_asset("boxworld_rrl1"), GridWorld())
    with pytest.raises(SchemaMismatch):
        check_schema(load_asset("boxworld_rrl1"), BoxWorld(3))
    with pytest.raises(SchemaMismatch):
        check_schema(load_asset("graph_cnt"), BoxWorld(4), "cnt")
    with pytest.raises(SchemaMismatch):
        train_policy(load_asset("gridworld"), BoxWorld(4), PolicyConfig(episodes=1))


def test_resized_asset_matches_smaller_world():
    check_schema(load_asset("boxworld_rrl2", 3), BoxWorld(3))


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig(gamma=1.0)
    with pytest.raises(ValueError):
        PolicyConfig(c=0)
    with pytest.raises(ValueError):
        PolicyConfig(success_threshold=1.5)


def test_probabilities_sum_to_one_at_every_step(rrl3):
    p, plan = rrl3
    pg = PolicyGraph(plan, "move", 10)
    params = pg.engine.flatten(pg.engine.init_units(np.random.default_rng(0)))
    sums = []
    rollout(pg, params, BoxWorld(4), np.random.default_rng(1), 20,
            on_step=lambda s, ev, pr, a: sums.append(pr.sum()))
    assert len(sums) > 0 and all(abs(x - 1) < 1e-6 for x in sums)


def test_nll_gradient_matches_finite_differences(rrl3):
    p, plan = rrl3
    pg = PolicyGraph(plan, "move", 10)
    rng = np.random.default_rng(2)
    units = pg.engine.init_units(rng)
    params = pg.engine.flatten(units)
    env = BoxWorld(4)
    s = env.reset(rng)
    store = initial_store(plan, env.groundings(s))
    action = env.encode("b", "a")
    idx = rng.choice(params.size, 40, replace=False)
    sub = params.copy()

    def loss_at(vals):
        q = sub.copy()
        q[idx] = vals
        ev = pg.engine.run(q, store, {pg.action_in: np.int64(action)})
        return ev.values[pg.nll]

    ev = pg.engine.run(params, store, {pg.action_in: np.int64(action)})
    g = pg.nll_grad(ev)[idx]
    eps = 1e-5
    for j in range(len(idx)):
        hi, lo = params[idx].copy(), params[idx].copy()
        hi[j] += eps
        lo[j] -= eps
        num = (loss_at(hi) - loss_at(lo)) / (2 * eps)
        assert abs(num - g[j]) <= 1e-4 * max(abs(num), abs(g[j]), 1e-6)


def test_reward_scaling_keeps_gradient_direction(rrl3):
    p, plan = rrl3
    pg = PolicyGraph(plan, "move", 10)
    params = pg.engine.flatten(pg.engine.init_units(np.random.default_rng(0)))
    traj, evs, _ = rollout(pg, params, BoxWorld(4), np.random.default_rng(4), 6)
    rewards = np.random.default_rng(5).random(len(traj))
    base = episode_gradient(pg, evs, discounted_returns(rewards, 0.7))
    for k in (0.1, 3.0, 250.0):
        scaled = episode_gradient(pg, evs, discounted_returns(k * rewards, 0.7))
        assert np.argmax(scaled) == np.argmax(base)
        np.testing.assert_allclose(scaled, k * base, rtol=1e-9, atol=1e-300)


def test_forced_literal_bound_holds_during_rollouts(rrl3):
    p, plan = rrl3
    pg = PolicyGraph(plan, "move", 10)
    rng = np.random.default_rng(9)
    units = {"move": pg.engine.init_units(rng)["move"].with_flat(rng.normal(0, 4, 6 * 104 + 6))}
    worst = []

    def check(state, ev, probs, action):
        move = pg.engine.values(ev, "move")
        moveable = pg.engine.values(ev, "moveable")
        worst.append(float(np.max(move - moveable)))

    evaluate_policy(p, BoxWorld(4), units, 10, PolicyConfig(), plan, on_step=check)
    assert worst and max(worst) <= 1e-9


def test_training_is_deterministic_and_logged():
    p = load_asset("boxworld_rrl2", 3)
    cfg = PolicyConfig(episodes=15, seed=4, max_steps=10)
    a = train_policy(p, BoxWorld(3, 10), cfg)
    b = train_policy(p, BoxWorld(3, 10), cfg)
    assert [r.__dict__ for r in a.history] == [r.__dict__ for r in b.history]
    np.testing.assert_array_equal(a.units["move"].flat(), b.units["move"].flat())
    assert len(a.history) == 15
    assert all(r.steps <= 10 and r.success in (0, 1) for r in a.history)
    assert all(r.entropy <= math.log(16) + 1e-9 for r in a.history)


def test_callback_can_stop_training():
    p = load_asset("boxworld_rrl2", 3)
    seen = []
    res = train_policy(p, BoxWorld(3, 5), PolicyConfig(episodes=50, max_steps=5),
                       callback=lambda rec, units: seen.append(rec.episode) or rec.episode == 2)
    assert seen == [0, 1, 2] and len(res.history) == 3


def test_policy_learns_a_one_step_task():
    # two actions, the first always wins: the policy must come to prefer it
    p = parse_program("""
type s { x y }
pred cur/1 (s) state
pred good/1 (s) extensional
fact good(x).
target move(X:s) rules(1) exclude(move)
""")

    class Bandit:
        kind = "bandit"
        action_count = 2
        types = {"s": ("x", "y")}
        schema = {"cur": ("s",)}

        def reset(self, rng):
            return 0

        def groundings(self, state):
            return {"cur": np.array([1.0, 0.0])}

        def step(self, state, action):
            return state, float(action == 0), True

    res = train_policy(p, Bandit(), PolicyConfig(episodes=400, lr=0.05, c=10, window=100, seed=1))
    assert res.episodes_to_threshold is not None
    rep = evaluate_policy(p, Bandit(), res.units, 200, PolicyConfig(seed=2))
    assert rep.success_rate >= 0.9
