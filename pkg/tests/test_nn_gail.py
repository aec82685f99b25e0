import copy
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vastream.expert import extract_demonstrations, plan_for_env
from vastream.gail import (
    LOG_FIELDS,
    AgentPolicy,
    Batch,
    PolicySnapshot,
    TrainConfig,
    backlog_feature,
    bce_loss_and_grads,
    demo_batch,
    discounted_returns,
    discriminator_forward,
    discriminator_update,
    encode_state,
    encoded_width,
    gail_reward,
    load_checkpoint,
    load_demonstrations,
    make_discriminator,
    make_policy,
    pool_map,
    policy_forward,
    ppo_loss_and_grads,
    ppo_update,
    save_demonstrations,
    train,
    validation_score,
)
from vastream.gradcheck import discriminator_check, policy_check, value_check
from vastream.motion import MotionFeatureMap
from vastream.nn import MLP, SGD, Adam, clip_grads, log_softmax, sigmoid, softmax
from vastream.scenarios import TOY_DEMO_SHIFTS, toy_trace

finite = st.floats(-50, 50, allow_nan=False)


# ---------------------------------------------------------------- nn


@given(st.lists(finite, min_size=1, max_size=20))
def test_softmax_normalises(z):
    p = softmax(np.array([z]))
    assert (p >= 0).all() and abs(p.sum() - 1) < 1e-9
    assert np.allclose(np.exp(log_softmax(np.array([z]))), p)


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=20))
def test_sigmoid_range(x):
    s = sigmoid(np.array(x))
    assert ((s >= 0) & (s <= 1)).all()
    assert np.all(np.isfinite(s))


def test_mlp_shapes_and_errors():
    net = MLP([4, 3, 2], side={1: 1})
    out = net(np.zeros((5, 4)), {1: np.ones(5)})
    assert out.shape == (5, 2)
    assert net.params["W1"].shape == (4, 2)
    with pytest.raises(ValueError):
        net(np.zeros((5, 3)), {1: np.ones(5)})
    with pytest.raises(ValueError):
        MLP([4])
    with pytest.raises(ValueError):
        MLP([4, 2], side={0: 1})


def test_mlp_descriptor_round_trip():
    net = MLP([4, 3, 2], side={1: 1}, rng=np.random.default_rng(2))
    clone = MLP.from_descriptor(net.descriptor(), net.params)
    x = np.random.default_rng(0).normal(size=(3, 4))
    assert np.array_equal(clone(x, {1: np.ones(3)}), net(x, {1: np.ones(3)}))
    with pytest.raises(ValueError):
        MLP.from_descriptor(net.descriptor(), {"W0": np.zeros((2, 2))})


def test_copy_is_deep():
    net = MLP([2, 2])
    clone = net.copy()
    clone.params["W0"] += 1
    assert not np.array_equal(clone.params["W0"], net.params["W0"])


def test_clip_grads():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grads(g, 1.0) == pytest.approx(5.0)
    assert g["a"][0] == pytest.approx(0.6) and g["b"][0] == pytest.approx(0.8)
    g = {"a": np.array([0.3])}
    clip_grads(g, 1.0)
    assert g["a"][0] == 0.3


def test_optimisers_descend():
    for opt in (SGD(0.1), Adam(0.1)):
        p = {"x": np.array([2.0])}
        for _ in range(50):
            opt.step(p, {"x": 2 * p["x"]})
        assert abs(p["x"][0]) < 1.0


# ---------------------------------------------------------------- gradients


@pytest.mark.parametrize("seed", range(4))
def test_gradients_match_finite_differences(seed):
    assert policy_check(seed) <= 1e-3
    assert value_check(seed) <= 1e-3
    assert discriminator_check(seed) <= 1e-3


@pytest.mark.parametrize("seed", range(3))
def test_policy_gradient_with_clipped_samples(seed):
    # old log-probs far enough away that some ratios are clipped
    assert policy_check(seed, spread=3.0) <= 1e-3


def test_discriminator_gradient_tight_on_small_net():
    assert discriminator_check(11, width=3, n_actions=2, hidden=4) <= 1e-4


# ---------------------------------------------------------------- encoding


def test_encoding_width_and_cold_start(toy):
    s = toy.env().reset()
    x = encode_state(s)
    assert encoded_width(8) == 313
    assert len(x) == encoded_width(s.k)
    # histories are zero-padded, knobs included, and the first map is blank
    assert not x.any()


def test_encoding_layout(small_profile, small_space):
    from vastream.domain import NetworkTrace
    from vastream.simulator import Env

    env = Env(small_profile, NetworkTrace.constant(40_000), small_space, k=3)
    env.reset()
    out, s = env.step(small_space.find(1.0, 30, 21).id)
    x = encode_state(s, L=2.0)
    k = 3
    assert x[k - 1] == pytest.approx(out.size / 1e6)
    assert x[2 * k - 1] == pytest.approx(s.n[-1] / 250_000)
    assert x[3 * k - 1] == pytest.approx(min(out.upload_delay / 10, 1.0))
    assert x[4 * k - 1] == 1.0 and x[5 * k - 1] == 1.0
    assert x[6 * k - 1] == pytest.approx(21 / 41)
    assert x[7 * k - 1] == pytest.approx(min(out.lag / 10, 1.0))
    assert x[7 * k] == pytest.approx(backlog_feature(out.lag, 2.0))


def test_pool_constant_map():
    fmap = MotionFeatureMap(np.full((270, 480), 255))
    pooled = pool_map(fmap)
    assert pooled.shape == (256,) and (pooled == 1.0).all()


def test_pool_small_map_repeats_cells():
    fmap = MotionFeatureMap(np.array([[0, 255]]))
    pooled = pool_map(fmap).reshape(16, 16)
    assert (pooled[:, :8] == 0).all() and (pooled[:, 8:] == 1).all()


def test_backlog_feature():
    assert backlog_feature(0.5, 1.0) == 0.5
    assert backlog_feature(0.5, 2.0) == 0.25
    assert backlog_feature(500.0, 1.0) == 10.0


# ---------------------------------------------------------------- forward passes


def test_policy_starts_uniform(rng):
    net = make_policy(10, 5, hidden=8, rng=rng)
    p = policy_forward(net, rng.normal(size=(3, 10)), np.ones(3))
    assert np.allclose(p, 0.2)


@given(st.integers(0, 2**32 - 1))
def test_policy_distribution(seed):
    r = np.random.default_rng(seed)
    net = MLP([6, 5, 4], side={1: 1}, rng=r, init_scale=1.0)
    X, B = r.normal(size=(4, 6)), r.uniform(size=4)
    p = policy_forward(net, X, B)
    assert (p >= 0).all() and np.allclose(p.sum(axis=1), 1, atol=1e-9)
    assert np.array_equal(p, policy_forward(net, X, B))


def test_discriminator_outputs(rng):
    disc = make_discriminator(6, 3, hidden=5, rng=rng)
    X, B, A = rng.normal(size=(4, 6)), rng.uniform(size=4), np.array([0, 1, 2, 1])
    d = discriminator_forward(disc, X, B, A)
    assert ((d > 0) & (d < 1)).all()
    single = [discriminator_forward(disc, X[i:i + 1], B[i:i + 1], A[i:i + 1])[0] for i in range(4)]
    assert np.allclose(d, single)
    disc.params["W2"][:] = 0
    disc.params["b2"][:] = 0
    assert np.allclose(discriminator_forward(disc, X, B, A), 0.5)
    with pytest.raises(ValueError):
        discriminator_forward(disc, X[:, :5], B, A, n_actions=3)


def test_gail_reward_examples():
    assert gail_reward(1.0) == 0.0
    assert gail_reward(0.5) == pytest.approx(-0.6931, abs=1e-4)
    assert gail_reward(0.0) == pytest.approx(math.log(1e-8))
    assert gail_reward(0.0) == pytest.approx(-18.42, abs=1e-2)


# ---------------------------------------------------------------- discriminator training


def _separable(rng, n=16, width=4, n_actions=2):
    ex = Batch(rng.normal(1.0, 0.3, (n, width)), np.zeros(n), np.zeros(n, dtype=np.int64))
    ag = Batch(rng.normal(-1.0, 0.3, (n, width)), np.zeros(n), np.ones(n, dtype=np.int64))
    return ex, ag


def test_bce_at_half_is_ln2(rng):
    disc = make_discriminator(4, 2, hidden=5, rng=rng)
    disc.params["W2"][:] = 0
    disc.params["b2"][:] = 0
    ex, ag = _separable(rng)
    assert bce_loss_and_grads(disc, ex, ag)[0] == pytest.approx(math.log(2))


def test_discriminator_step_decreases_loss(rng):
    disc = make_discriminator(4, 2, hidden=5, rng=rng)
    ex, ag = _separable(rng)
    before = bce_loss_and_grads(disc, ex, ag)[0]
    discriminator_update(disc, ex, ag, lr=0.1)
    assert bce_loss_and_grads(disc, ex, ag)[0] < before


def test_discriminator_rejects_empty_batch(rng):
    disc = make_discriminator(4, 2, hidden=5, rng=rng)
    ex, ag = _separable(rng)
    with pytest.raises(ValueError):
        discriminator_update(disc, ex, ag.take(np.array([], dtype=int)))


# ---------------------------------------------------------------- PPO


def _rollout_batch(rng, net, n=20, width=6, n_actions=3):
    X, B = rng.normal(size=(n, width)), rng.uniform(size=n)
    A = rng.integers(0, n_actions, n)
    logp = log_softmax(net(X, {1: B[:, None]}))[np.arange(n), A]
    adv = rng.normal(size=n)
    return Batch(X, B, A, logp, rng.normal(size=n), adv)


def test_ratio_is_one_before_update(rng):
    net = MLP([6, 5, 3], side={1: 1}, rng=rng, init_scale=0.5)
    batch = _rollout_batch(rng, net)
    loss, _, info = ppo_loss_and_grads(net, batch, 0.2, 0.0)
    assert np.allclose(info["ratio"], 1.0)
    assert loss == pytest.approx(-batch.advantages.mean())


def test_zero_clip_kills_gradient_after_favourable_move(rng):
    net = MLP([6, 5, 3], side={1: 1}, rng=rng, init_scale=0.5)
    batch = _rollout_batch(rng, net)
    # pretend the policy already moved each action's probability the way its advantage asks
    batch.logp = batch.logp - 0.1 * np.sign(batch.advantages)
    _, grads, info = ppo_loss_and_grads(net, batch, 0.0, 0.0)
    assert not np.allclose(info["ratio"], 1.0)
    assert all(np.allclose(g, 0.0) for g in grads.values())


def test_zero_clip_keeps_gradient_after_adverse_move(rng):
    # the pessimistic min keeps the unclipped term when the ratio moved against the advantage
    net = MLP([6, 5, 3], side={1: 1}, rng=rng, init_scale=0.5)
    batch = _rollout_batch(rng, net)
    batch.logp = batch.logp + 0.1 * np.sign(batch.advantages)
    _, grads, _ = ppo_loss_and_grads(net, batch, 0.0, 0.0)
    assert any(not np.allclose(g, 0.0) for g in grads.values())


def test_ppo_update_runs_and_rejects_empty(rng):
    cfg = TrainConfig(lr=1e-2, minibatch_size=8, ppo_epochs=2)
    net = MLP([6, 5, 3], side={1: 1}, rng=rng, init_scale=0.5)
    val = MLP([6, 5, 1], side={1: 1}, rng=rng)
    batch = _rollout_batch(rng, net)
    before = copy.deepcopy(net.params)
    _, _, info = ppo_update(net, val, batch, cfg, rng)
    assert set(info) == {"policy_loss", "value_loss"}
    assert any(not np.array_equal(before[k], net.params[k]) for k in before)
    with pytest.raises(ValueError):
        ppo_update(net, val, batch.take(np.array([], dtype=int)), cfg, rng)


@given(st.floats(-5, 5), st.integers(0, 60), st.floats(0.01, 1.0))
def test_discounted_returns_of_constant(r, n, gamma):
    out = discounted_returns(np.full(n, r), gamma)
    if n:
        expected = r * n if gamma == 1.0 else r * (1 - gamma**n) / (1 - gamma)
        assert out[0] == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_discounted_returns_small_case():
    assert discounted_returns(np.array([1.0, 2.0, 3.0]), 0.5).tolist() == [2.75, 3.5, 3.0]


@pytest.mark.parametrize(
    "kw", [dict(lr=0), dict(gamma=0), dict(gamma=1.5), dict(clip_eps=1.0), dict(reward="x"), dict(epochs=-1)]
)
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# ---------------------------------------------------------------- training loop


@pytest.fixture(scope="module")
def toy_demos(toy):
    demos = []
    for s in TOY_DEMO_SHIFTS[:2]:
        env = toy.env(toy_trace(s))
        demos.append(extract_demonstrations(plan_for_env(env), env))
    return demos


def _factory(toy):
    return lambda rng: toy.env(toy_trace(float(rng.choice(TOY_DEMO_SHIFTS))))


def test_zero_epochs_returns_initial_policy(toy, toy_demos):
    snap = train(_factory(toy), toy_demos, TrainConfig(epochs=0, hidden=16))
    agent = snap.agent(toy.space)
    p = agent.probs(toy.env().reset())
    assert np.allclose(p, 1 / len(toy.space))


def test_training_is_deterministic_and_leaves_demos_alone(toy, toy_demos, tmp_path):
    before = demo_batch(toy_demos)
    states_before = [s.v.copy() for s in toy_demos[0].states]
    cfg = TrainConfig(epochs=3, hidden=16, rollouts_per_epoch=2, val_every=1, seed=5)
    val = [toy.env(toy_trace(0.0))]
    a = train(_factory(toy), toy_demos, cfg, val, log_path=tmp_path / "a.csv")
    b = train(_factory(toy), toy_demos, cfg, val, log_path=tmp_path / "b.csv")
    assert a.digest() == b.digest()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    after = demo_batch(toy_demos)
    assert np.array_equal(before.X, after.X) and np.array_equal(before.actions, after.actions)
    assert all(np.array_equal(x, s.v) for x, s in zip(states_before, toy_demos[0].states))
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == ",".join(LOG_FIELDS)
    c = train(_factory(toy), toy_demos, TrainConfig(epochs=3, hidden=16, rollouts_per_epoch=2, seed=6), val)
    assert c.digest() != a.digest()


def test_fixed_reward_needs_no_demos(toy):
    snap = train(_factory(toy), [], TrainConfig(epochs=2, hidden=16, rollouts_per_epoch=1, reward="fixed"))
    assert snap.epoch == 2
    assert len(snap.history) == 2 and np.isnan(snap.history[0]["mean_disc_loss"])


def test_gail_needs_demos(toy):
    with pytest.raises(ValueError):
        train(_factory(toy), [], TrainConfig(epochs=1, hidden=16))


def test_checkpoint_round_trip(toy, toy_demos, tmp_path):
    snap = train(_factory(toy), toy_demos, TrainConfig(epochs=2, hidden=16, rollouts_per_epoch=1))
    path = tmp_path / "ckpt.json"
    snap.save(path)
    loaded = load_checkpoint(path)
    assert loaded.cfg == snap.cfg and loaded.epoch == snap.epoch
    for k, v in snap.policy.params.items():
        assert np.array_equal(loaded.policy.params[k], v)
    doc = path.read_text()
    assert '"train_config_digest"' in doc and '"seed"' in doc
    bad = tmp_path / "bad.json"
    bad.write_text(doc.replace('"format_version": 1', '"format_version": 99'))
    with pytest.raises(ValueError):
        load_checkpoint(bad)


def test_demonstrations_jsonl_round_trip(toy_demos, tmp_path):
    path = tmp_path / "demos.jsonl"
    save_demonstrations(toy_demos, path)
    loaded = load_demonstrations(path)
    ref = demo_batch(toy_demos)
    assert np.allclose(loaded.X, ref.X) and np.array_equal(loaded.actions, ref.actions)
    assert np.allclose(loaded.B, ref.B)


def test_agent_policy_greedy_and_sampled(toy):
    net = make_policy(encoded_width(8), len(toy.space), hidden=8, rng=np.random.default_rng(0))
    net.params["b2"][:] = [0.0, 3.0, 0.0, 0.0]
    s = toy.env().reset()
    assert AgentPolicy(net, toy.space)(s).id == 1
    sampled = AgentPolicy(net, toy.space, greedy=False, rng=np.random.default_rng(0))
    assert {sampled(s).id for _ in range(50)} > {1}


def test_validation_score():
    class M:
        mean_accuracy = 0.8
        mean_lag = 3.0

    assert validation_score(M, 1.0) == pytest.approx(-1.2)
    M.mean_lag = 0.5
    assert validation_score(M, 1.0) == pytest.approx(0.8)


def test_snapshot_digest_tracks_params(rng):
    net = make_policy(10, 3, hidden=4, rng=rng)
    a = PolicySnapshot(net, TrainConfig())
    b = PolicySnapshot(net.copy(), TrainConfig())
    assert a.digest() == b.digest()
    b.policy.params["b0"][0] += 1e-6
    assert a.digest() != b.digest()
