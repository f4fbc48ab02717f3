import io

import numpy as np
import pytest

from tlmt.agent import (
    METRIC_FIELDS, MODES, QFunction, TileCoder, TileGroup, TrainSpec, act, build_qfunction,
    evaluate, evaluate_policy, final_success, td_update, train,
)
from tlmt.augment import GoalSpec, ReplayBuffer
from tlmt.envs import PARKING_VARIABLES, ParkingEnv
from tlmt.product import ACCEPTED, TIMEOUT, ProductState, ProductTransition, compile_task, rollout
from tlmt.tasks import CORPUS, PARKING_FEATURES, corpus_config

from conftest import waypoint_policy

V = PARKING_VARIABLES
SPEC = GoalSpec({"a": "x", "b": "y"})


def phi1():
    e = CORPUS["parking_1"]
    return compile_task(e.formula, e.constants, V)


def xy(x, y):
    return np.array([x, y, 0.0, 0.0, 1.0, 0.0])


def simple_qf(alpha=0.1, num_q=3):
    coder = TileCoder([TileGroup(["x", "y"])], V, tilings=8)
    return QFunction(coder, num_q, 9, alpha, 0.99)


def test_tile_coder_shape_and_range(rng):
    coder = TileCoder([TileGroup(["x", "y"], tiles=4), TileGroup(["x-a"], tiles=6)], V, ["a", "b"], 3)
    states = rng.uniform(-2, 2, size=(50, len(V)))
    feats = coder(states, rng.uniform(-1, 1, size=(50, 2)))
    assert feats.shape == (50, coder.active) == (50, 6)
    assert feats.min() >= 0 and feats.max() < coder.num_features
    # each tiling owns a disjoint index block
    assert all(len(set(row)) == coder.active for row in feats)


def test_tile_coder_goal_relative():
    coder = TileCoder([TileGroup(["x-a", "y-b"])], V, ["a", "b"])
    a = coder(xy(0.3, 0.1), np.array([[0.2, 0.0]]))
    b = coder(xy(0.1, 0.1), np.array([[0.0, 0.0]]))
    assert np.array_equal(a, b)


def test_tile_coder_rejects_bad_inputs():
    with pytest.raises(ValueError):
        TileCoder([TileGroup(["zz"])], V)
    with pytest.raises(ValueError):
        TileCoder([TileGroup(["x-a"])], V, [])
    with pytest.raises(ValueError):
        TileCoder([TileGroup(["x"], low=1, high=1)], V)


def test_q_is_exact_in_automaton_state():
    qf = simple_qf()
    qf.weights[:, 1, :] = 0.5
    assert np.all(qf.value(xy(0, 0), 0) == 0)
    assert np.allclose(qf.value(xy(0, 0), 1), 0.5 * qf.coder.active)


def test_act_epsilon_validation_and_ties(rng):
    qf = simple_qf()
    ps = ProductState(xy(0, 0), 0)
    for eps in (-0.1, 1.5):
        with pytest.raises(ValueError):
            act(qf, ps, eps, rng)
    assert act(qf, ps, 0.0, rng) == 0
    feats = qf.coder(xy(0, 0))[0]
    qf.weights[feats, 0, 4] = 1.0
    assert act(qf, ps, 0.0, rng) == 4


def test_act_uniform_at_full_exploration(rng):
    qf = simple_qf()
    qf.weights[:, 0, 2] = 5.0
    ps = ProductState(xy(0, 0), 0)
    n = 100_000
    counts = np.bincount([act(qf, ps, 1.0, rng) for _ in range(n)], minlength=9)
    p = 1 / 9
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 3 * sigma)


def _batch(transitions):
    buf = ReplayBuffer(100, len(V))
    for tr in transitions:
        buf.push(tr)
    return buf.all()


def test_td_fixed_point():
    qf = simple_qf(alpha=0.1)
    tr = ProductTransition(xy(0.1, 0.1), 0, np.zeros(2), 1.0, xy(0.2, 0.2), 2, True, ACCEPTED,
                           action_index=3)
    batch = _batch([tr])
    for _ in range(200):
        td_update(qf, batch)
    assert qf.value(xy(0.1, 0.1), 0)[3] == pytest.approx(1.0, abs=1e-3)


def test_td_timeout_bootstraps():
    qf = simple_qf(alpha=0.5)
    feats = qf.coder(xy(0.5, 0.5))[0]
    qf.weights[feats, 1, 0] = 1.0 / qf.coder.active  # Q(next, q=1, a=0) = 1
    base = dict(s=xy(-0.5, -0.5), q=0, a=np.zeros(2), r=0.0, s2=xy(0.5, 0.5), q2=1)
    timeout = ProductTransition(base["s"], 0, base["a"], 0.0, base["s2"], 1, True, TIMEOUT,
                                action_index=0, time_limit=True)
    td_update(qf, _batch([timeout]))
    assert qf.value(base["s"], 0)[0] == pytest.approx(0.5 * 0.99)
    qf2 = simple_qf(alpha=0.5)
    qf2.weights[feats, 1, 0] = 1.0 / qf2.coder.active
    dead = ProductTransition(base["s"], 0, base["a"], 0.0, base["s2"], 1, True, "dead",
                             action_index=0)
    td_update(qf2, _batch([dead]))
    assert qf2.value(base["s"], 0)[0] == 0.0


def test_td_duplicates_do_not_overshoot():
    qf = simple_qf(alpha=1.0)
    tr = ProductTransition(xy(0, 0), 0, np.zeros(2), 1.0, xy(0, 0), 2, True, ACCEPTED,
                           action_index=0)
    td_update(qf, _batch([tr] * 64))
    assert qf.value(xy(0, 0), 0)[0] == pytest.approx(1.0)


def test_buffer_encoded_features_match_coder(rng):
    cfg = corpus_config("parking_1_lite")
    task, env = cfg.compile(), cfg.make_env(seed=4)
    qf = build_qfunction(task, env, cfg.train_spec(), cfg.goal_spec())
    qf.weights[:] = rng.normal(scale=0.01, size=qf.weights.shape)
    plain = ReplayBuffer(500, len(V), goal_dim=2)
    coded = ReplayBuffer(500, len(V), goal_dim=2, encoder=qf.coder, encoded_dim=qf.coder.active)
    for k in range(4):
        traj = rollout(task, env, waypoint_policy([(-0.2, -0.08), (0.1 * k, 0.0)]), 60)
        for buf in (plain, coded):
            buf.push_trajectory(traj, "real", (0.1 * k, 0.0))
    a, b = plain.sample(64, 9), coded.sample(64, 9)
    assert a.features is None
    assert np.array_equal(b.features, qf.coder(b.states, b.goals))
    assert np.array_equal(b.next_features, qf.coder(b.next_states, b.goals))
    w0 = qf.weights.copy()
    td_update(qf, a)
    via_coder, qf.weights[:] = qf.weights.copy(), w0
    td_update(qf, b)
    assert np.array_equal(qf.weights, via_coder)


def test_td_rejects_empty_batch():
    with pytest.raises(ValueError):
        td_update(simple_qf(), _batch([]))


def test_train_spec_validation_and_schedule():
    with pytest.raises(ValueError):
        TrainSpec(mode="ddpg")
    with pytest.raises(ValueError):
        TrainSpec(max_steps=0)
    s = TrainSpec(episodes=100)
    assert s.epsilon(0) == 1.0
    assert s.epsilon(30) == pytest.approx(1.0 - 0.95 * 0.5)
    assert s.epsilon(60) == pytest.approx(0.05) and s.epsilon(99) == pytest.approx(0.05)
    assert MODES == ("baseline", "crm", "her", "crm_her")
    assert s.learning_rate(99) == s.alpha == 0.1
    d = TrainSpec(episodes=101, alpha=0.1, alpha_end=0.01)
    assert d.learning_rate(0) == 0.1 and d.learning_rate(100) == pytest.approx(0.01)
    assert d.learning_rate(50) == pytest.approx(0.055)


def test_zero_episode_training():
    task = phi1()
    rows, qf, buf = train(task, ParkingEnv(), TrainSpec(episodes=0), SPEC)
    assert rows == [] and len(buf) == 0 and not qf.weights.any()


@pytest.mark.parametrize("mode,expected", [
    ("baseline", {"real": 3, "crm": 0, "her": 0, "crm_her": 0}),
    ("crm", {"real": 3, "crm": 9, "her": 0, "crm_her": 0}),
    ("her", {"real": 3, "crm": 0, "her": 3, "crm_her": 0}),
    ("crm_her", {"real": 3, "crm": 9, "her": 0, "crm_her": 9}),
])
def test_mode_push_counts(mode, expected):
    task = phi1()
    spec = TrainSpec(episodes=3, max_steps=10, mode=mode, features=PARKING_FEATURES)
    rows, _, buf = train(task, ParkingEnv(), spec, SPEC)
    assert {k: buf.trajectories[k] for k in expected} == expected
    assert rows[-1]["buffer_real"] == 30
    assert all(set(r) == set(METRIC_FIELDS) for r in rows)


def test_her_modes_need_goal_map():
    with pytest.raises(ValueError):
        train(phi1(), ParkingEnv(), TrainSpec(episodes=1, mode="her"), None)


def test_train_is_deterministic():
    task = phi1()
    spec = TrainSpec(episodes=6, max_steps=20, eval_period=3, eval_episodes=2,
                     features=PARKING_FEATURES)
    a = train(task, ParkingEnv(), spec, SPEC, eval_env=ParkingEnv())
    b = train(task, ParkingEnv(), spec, SPEC, eval_env=ParkingEnv())
    assert a[0] == b[0] and np.array_equal(a[1].weights, b[1].weights)
    assert [r["eval_success"] != "" for r in a[0]] == [False, False, True] * 2


def test_evaluate():
    task = phi1()
    qf = build_qfunction(task, ParkingEnv(), TrainSpec(), SPEC)
    # an untrained greedy car drives straight up from the start and never reaches A
    assert evaluate(task, ParkingEnv(seed=0), qf, 5, 50, SPEC) == 0.0
    assert np.isnan(evaluate(task, ParkingEnv(), qf, 0))


def test_scripted_policy_solves_lite_task():
    cfg = corpus_config("parking_1_lite")
    task = cfg.compile()
    env = cfg.make_env(seed=0)
    wins = []
    for _ in range(20):
        pol = waypoint_policy([(-0.2, -0.08), (0.2, 0.08)])
        wins.append(evaluate_policy(task, env, pol, 1, 150))
    assert np.mean(wins) == 1.0


def test_save_and_load_round_trip():
    qf = simple_qf()
    qf.weights[:] = np.random.default_rng(0).normal(size=qf.weights.shape)
    blob = io.BytesIO()
    qf.save(blob)
    blob.seek(0)
    other = simple_qf()
    other.load_weights(blob)
    assert np.array_equal(other.weights, qf.weights)
    blob.seek(0)
    with pytest.raises(ValueError):
        simple_qf(num_q=2).load_weights(blob)


def test_final_success_weights_last_episodes():
    rows = [{"eval_success": ""}] * 3 + [{"eval_success": v} for v in (0.0, 0.5, 1.0, 1.0)]
    # last 50 episodes at 20 per eval: 10 from the 0.5 eval plus two full evals
    assert final_success(rows, 50, 20) == pytest.approx((0.5 * 10 + 40) / 50)
    assert np.isnan(final_success([{"eval_success": ""}], 50, 20))
