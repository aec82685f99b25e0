"""Adversarial imitation of the expert planner.

A discriminator learns to tell expert (state, action) pairs from the agent's;
``log D(s, a)`` then serves as the reward for PPO updates of the agent. The
same loop with a hand-written per-chunk reward gives the fixed-reward
ablation.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .domain import MAX_FPS, MAX_QP, ConfigSpace, Configuration
from .expert import Demonstration
from .motion import MotionFeatureMap
from .nn import MLP, Adam, clip_grads, log_softmax, sigmoid, softmax, softplus
from .simulator import Env, SessionMetrics, StateObservation, run_session

SIZE_SCALE = 1e6  # bytes
THROUGHPUT_SCALE = 250_000.0  # bytes/s
DELAY_SCALE = 10.0  # s
POOL = 16
REWARD_FLOOR = 1e-8
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------- state encoding


def pool_map(fmap: MotionFeatureMap, size: int = POOL) -> np.ndarray:
    """Average-pool a feature map onto a ``size x size`` grid, scaled to [0, 1]."""
    cache = fmap.__dict__.setdefault("_pooled", {})
    if size not in cache:
        v = fmap.values.astype(float) / 255.0
        rows = _bins(v.shape[0], size)
        cols = _bins(v.shape[1], size)
        out = np.empty((size, size))
        for i, (r0, r1) in enumerate(rows):
            band = v[r0:r1].mean(axis=0)
            for j, (c0, c1) in enumerate(cols):
                out[i, j] = band[c0:c1].mean()
        cache[size] = out.ravel()
    return cache[size]


def _bins(n: int, size: int) -> list[tuple[int, int]]:
    # adaptive pooling windows; windows repeat cells when n < size
    return [(i * n // size, max((i + 1) * n // size, i * n // size + 1)) for i in range(size)]


def backlog_feature(b, L: float = 1.0):
    """Backlog in units of ``L``, capped at the delay horizon so early runaway lags cannot saturate the nets."""
    return np.minimum(b, DELAY_SCALE) / L


def encoded_width(k: int, pool: int = POOL) -> int:
    return 7 * k + 1 + pool * pool


def encode_state(s: StateObservation, L: float = 1.0, pool: int = POOL) -> np.ndarray:
    lags = s.lags if s.lags is not None else np.zeros(s.k)
    parts = [
        s.v / SIZE_SCALE,
        s.n / THROUGHPUT_SCALE,
        np.clip(s.u / DELAY_SCALE, 0.0, 1.0),
        s.r,
        s.f / MAX_FPS,
        s.q / MAX_QP,
        np.clip(lags / DELAY_SCALE, 0.0, 1.0),
        [backlog_feature(s.b, L)],
        pool_map(s.M, pool),
    ]
    return np.concatenate(parts)


# ---------------------------------------------------------------- networks


def make_policy(in_width: int, n_actions: int, hidden: int = 128, rng=None) -> MLP:
    # zero output layer -> uniform initial distribution
    return MLP([in_width, hidden, hidden, n_actions], side={1: 1}, rng=rng, zero_output=True)


def make_value(in_width: int, hidden: int = 128, rng=None) -> MLP:
    return MLP([in_width, hidden, hidden, 1], side={1: 1}, rng=rng)


def make_discriminator(in_width: int, n_actions: int, hidden: int = 128, rng=None) -> MLP:
    return MLP([in_width + n_actions, hidden, hidden, 1], side={1: 1}, rng=rng)


def _onehot(actions: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((len(actions), n))
    out[np.arange(len(actions)), actions] = 1.0
    return out


def policy_forward(policy: MLP, X: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Action probabilities for encoded states ``X`` with backlog shortcut values ``B``."""
    return softmax(policy(X, {1: np.reshape(B, (-1, 1))}))


def _disc_logits(disc: MLP, X, B, actions, cache=False, n_actions=None):
    inferred = disc.sizes[0] - np.atleast_2d(X).shape[1]
    if n_actions is not None and inferred != n_actions:
        raise ValueError(f"state width {np.atleast_2d(X).shape[1]} + {n_actions} actions != {disc.sizes[0]}")
    n_actions = inferred
    if n_actions < 1 or np.any(np.asarray(actions) >= n_actions):
        raise ValueError("actions do not fit the discriminator input")
    inp = np.concatenate([np.atleast_2d(X), _onehot(np.asarray(actions), n_actions)], axis=1)
    out, c = disc.forward(inp, {1: np.reshape(B, (-1, 1))})
    return (out[:, 0], c) if cache else out[:, 0]


def discriminator_forward(disc: MLP, X, B, actions, n_actions: int | None = None) -> np.ndarray:
    """Probability that each (state, action) pair came from the expert."""
    return sigmoid(_disc_logits(disc, X, B, actions, n_actions=n_actions))


def gail_reward(d) -> np.ndarray:
    return np.log(np.maximum(d, REWARD_FLOOR))


def _gail_reward_from_logits(y: np.ndarray) -> np.ndarray:
    # log sigmoid(y) computed stably, floored like gail_reward
    return np.maximum(-softplus(-y), np.log(REWARD_FLOOR))


@dataclass
class Batch:
    """Encoded (state, action) samples with their backlog shortcut inputs.

    Learning-signal fields are filled for agent rollouts only.
    """

    X: np.ndarray
    B: np.ndarray
    actions: np.ndarray
    logp: np.ndarray | None = None
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.actions)

    def take(self, idx) -> Batch:
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return Batch(self.X[idx], self.B[idx], self.actions[idx], pick(self.logp),
                     pick(self.returns), pick(self.advantages))


def demo_batch(demos: Sequence[Demonstration], L: float = 1.0) -> Batch:
    X = np.array([encode_state(s, L) for d in demos for s in d.states])
    B = np.array([backlog_feature(s.b, L) for d in demos for s in d.states])
    A = np.array([a for d in demos for a in d.actions], dtype=np.int64)
    return Batch(X, B, A)


def bce_loss_and_grads(disc: MLP, expert: Batch, agent: Batch):
    """Mean binary cross-entropy (expert label 1, agent label 0) and its gradients."""
    X = np.concatenate([expert.X, agent.X])
    B = np.concatenate([expert.B, agent.B])
    A = np.concatenate([expert.actions, agent.actions])
    labels = np.concatenate([np.ones(len(expert)), np.zeros(len(agent))])
    y, cache = _disc_logits(disc, X, B, A, cache=True)
    n = len(labels)
    loss = float(np.mean(labels * softplus(-y) + (1 - labels) * softplus(y)))
    grad_y = (sigmoid(y) - labels) / n
    return loss, disc.backward(cache, grad_y[:, None])


def discriminator_update(disc: MLP, expert: Batch, agent: Batch, lr: float = 1e-4,
                         optimizer=None, max_grad_norm: float | None = None) -> MLP:
    """One gradient step on the mean BCE; plain SGD unless an optimizer is given."""
    if len(expert) == 0 or len(agent) == 0:
        raise ValueError("discriminator update needs non-empty expert and agent batches")
    _, grads = bce_loss_and_grads(disc, expert, agent)
    if max_grad_norm:
        clip_grads(grads, max_grad_norm)
    if optimizer is None:
        for k, g in grads.items():
            disc.params[k] -= lr * g
    else:
        optimizer.step(disc.params, grads)
    return disc


# ---------------------------------------------------------------- PPO


def discounted_returns(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def ppo_loss_and_grads(policy: MLP, batch: Batch, clip_eps: float = 0.2, entropy_coef: float = 0.02):
    """Clipped-surrogate policy loss (negated, entropy bonus included) and gradients.

    Returns ``(loss, grads, info)``; ``info`` carries the probability ratios.
    """
    logits, cache = policy.forward(batch.X, {1: batch.B[:, None]})
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    n = len(batch)
    rows = np.arange(n)
    logp = logp_all[rows, batch.actions]
    ratio = np.exp(logp - batch.logp)
    adv = batch.advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    surr = np.minimum(ratio * adv, clipped * adv)
    entropy = -np.sum(p * logp_all, axis=1)
    loss = float(-np.mean(surr) - entropy_coef * np.mean(entropy))

    # the unclipped term carries the gradient whenever it is the minimum
    active = (ratio * adv <= clipped * adv).astype(float)
    g_logp = -(adv * ratio * active) / n
    onehot = np.zeros_like(p)
    onehot[rows, batch.actions] = 1.0
    g_logits = g_logp[:, None] * (onehot - p)
    g_logits += (entropy_coef / n) * p * (logp_all + entropy[:, None])
    return loss, policy.backward(cache, g_logits), {"ratio": ratio, "entropy": float(entropy.mean())}


def value_loss_and_grads(value: MLP, batch: Batch):
    pred, cache = value.forward(batch.X, {1: batch.B[:, None]})
    err = pred[:, 0] - batch.returns
    loss = float(0.5 * np.mean(err**2))
    return loss, value.backward(cache, (err / len(batch))[:, None])


def ppo_update(policy: MLP, value: MLP, batch: Batch, cfg: TrainConfig, rng: np.random.Generator,
               opt_policy=None, opt_value=None) -> tuple[MLP, MLP, dict]:
    """Several epochs of minibatch PPO steps on one batch of rollouts."""
    if len(batch) == 0:
        raise ValueError("ppo_update needs at least one sample")
    opt_policy = opt_policy or Adam(cfg.lr)
    opt_value = opt_value or Adam(cfg.lr)
    p_losses, v_losses = [], []
    for _ in range(cfg.ppo_epochs):
        order = rng.permutation(len(batch))
        for start in range(0, len(batch), cfg.minibatch_size):
            mb = batch.take(order[start:start + cfg.minibatch_size])
            lp, gp, _ = ppo_loss_and_grads(policy, mb, cfg.clip_eps, cfg.entropy_coef)
            clip_grads(gp, cfg.max_grad_norm)
            opt_policy.step(policy.params, gp)
            lv, gv = value_loss_and_grads(value, mb)
            clip_grads(gv, cfg.max_grad_norm)
            opt_value.step(value.params, gv)
            p_losses.append(lp)
            v_losses.append(lv)
    return policy, value, {"policy_loss": float(np.mean(p_losses)), "value_loss": float(np.mean(v_losses))}


# ---------------------------------------------------------------- agent


class AgentPolicy:
    """Wraps a policy network as a simulator policy (greedy by default)."""

    def __init__(self, net: MLP, space: ConfigSpace, L: float = 1.0, greedy: bool = True,
                 rng: np.random.Generator | None = None):
        self.net = net
        self.space = space
        self.L = L
        self.greedy = greedy
        self.rng = rng or np.random.default_rng(0)

    def probs(self, state: StateObservation) -> np.ndarray:
        return policy_forward(self.net, encode_state(state, self.L)[None, :], np.array([backlog_feature(state.b, self.L)]))[0]

    def __call__(self, state: StateObservation) -> Configuration:
        p = self.probs(state)
        a = int(np.argmax(p)) if self.greedy else int(self.rng.choice(len(p), p=p))
        return self.space[a]


@dataclass
class TrainConfig:
    lr: float = 1e-4
    gamma: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.02
    epochs: int = 100
    rollouts_per_epoch: int = 4
    minibatch_size: int = 64
    ppo_epochs: int = 4
    disc_steps: int = 1  # full-batch discriminator steps per epoch
    hidden: int = 128
    max_grad_norm: float = 5.0
    L: float = 1.0
    val_every: int = 5
    reward: str = "gail"  # or "fixed"
    alpha: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.clip_eps < 1:
            raise ValueError("clip_eps must lie in [0, 1)")
        if self.reward not in ("gail", "fixed"):
            raise ValueError(f"unknown reward {self.reward!r}")
        if self.epochs < 0 or self.rollouts_per_epoch < 1 or self.minibatch_size < 1 or self.disc_steps < 1:
            raise ValueError("epochs, rollouts and minibatch size must be sensible")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class PolicySnapshot:
    policy: MLP
    cfg: TrainConfig
    epoch: int = 0
    val_score: float = float("-inf")
    history: list[dict] = field(default_factory=list)

    def agent(self, space: ConfigSpace, greedy: bool = True) -> AgentPolicy:
        return AgentPolicy(self.policy, space, self.cfg.L, greedy)

    def to_json(self) -> str:
        doc = {
            "format_version": CHECKPOINT_VERSION,
            "architecture": self.policy.descriptor(),
            "encoding": {"pool": POOL, "size_scale": SIZE_SCALE, "throughput_scale": THROUGHPUT_SCALE,
                         "delay_scale": DELAY_SCALE},
            "seed": self.cfg.seed,
            "train_config": asdict(self.cfg),
            "train_config_digest": self.cfg.digest(),
            "epoch": self.epoch,
            "val_score": self.val_score if np.isfinite(self.val_score) else None,
            "params": {k: v.tolist() for k, v in sorted(self.policy.params.items())},
        }
        return json.dumps(doc, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def load_checkpoint(path: str | Path) -> PolicySnapshot:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('format_version')}")
    params = {k: np.array(v, dtype=float) for k, v in doc["params"].items()}
    net = MLP.from_descriptor(doc["architecture"], params)
    cfg = TrainConfig(**doc["train_config"])
    score = doc["val_score"] if doc["val_score"] is not None else float("-inf")
    return PolicySnapshot(net, cfg, doc["epoch"], score)


def save_demonstrations(demos: Sequence[Demonstration], path: str | Path, L: float = 1.0) -> None:
    """JSON lines: one record per decision with the encoded state, backlog and action id."""
    with open(path, "w", encoding="utf-8") as fh:
        for d_idx, d in enumerate(demos):
            for t, (s, a) in enumerate(zip(d.states, d.actions)):
                rec = {"demo": d_idx, "t": t, "state": encode_state(s, L).tolist(), "b": float(backlog_feature(s.b, L)), "action": int(a)}
                fh.write(json.dumps(rec) + "\n")


def load_demonstrations(path: str | Path) -> Batch:
    X, B, A = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            X.append(rec["state"])
            B.append(rec["b"])
            A.append(rec["action"])
    return Batch(np.array(X), np.array(B, dtype=float), np.array(A, dtype=np.int64))


# ---------------------------------------------------------------- training loop


def validation_score(metrics: SessionMetrics, L: float) -> float:
    """Mean accuracy, minus the mean lag in excess of ``L``."""
    return metrics.mean_accuracy - max(0.0, metrics.mean_lag - L)


def _rollouts(policy: MLP, envs: list[Env], L: float, rng: np.random.Generator):
    """Run all envs in lockstep with sampled actions; return per-env trajectories."""
    states = [e.reset() for e in envs]
    trajs = [{"X": [], "B": [], "A": [], "logp": [], "acc": [], "lag": []} for _ in envs]
    while not envs[0].done:
        X = np.array([encode_state(s, L) for s in states])
        B = np.array([backlog_feature(s.b, L) for s in states])
        probs = policy_forward(policy, X, B)
        for i, env in enumerate(envs):
            p = probs[i]
            a = int(rng.choice(len(p), p=p))
            outcome, states[i] = env.step(a)
            tr = trajs[i]
            tr["X"].append(X[i])
            tr["B"].append(B[i])
            tr["A"].append(a)
            tr["logp"].append(np.log(max(p[a], 1e-300)))
            tr["acc"].append(outcome.accuracy)
            tr["lag"].append(outcome.lag)
    return [{k: np.array(v) for k, v in tr.items()} for tr in trajs]


def train(
    env_factory: Callable[[np.random.Generator], Env],
    expert_demos: Sequence[Demonstration] | Batch,
    cfg: TrainConfig,
    val_envs: Sequence[Env] = (),
    log_path: str | Path | None = None,
    verbose: bool = False,
) -> PolicySnapshot:
    """GAIL (or fixed-reward) training; returns the best-by-validation policy.

    ``env_factory`` receives the run's generator and returns a fresh env; all
    randomness flows from ``cfg.seed``. Without validation envs the final
    policy is returned.
    """
    rng = np.random.default_rng(cfg.seed)
    probe = env_factory(rng)
    width = encoded_width(probe.k)
    n_actions = len(probe.space)
    policy = make_policy(width, n_actions, cfg.hidden, rng)
    value = make_value(width, cfg.hidden, rng)
    disc = make_discriminator(width, n_actions, cfg.hidden, rng)
    snapshot = PolicySnapshot(policy.copy(), cfg, 0)
    if cfg.epochs == 0:
        return snapshot

    if cfg.reward == "gail":
        expert = expert_demos if isinstance(expert_demos, Batch) else demo_batch(expert_demos, cfg.L)
        if len(expert) == 0:
            raise ValueError("GAIL training needs at least one demonstration")
    opt_p, opt_v, opt_d = Adam(cfg.lr), Adam(cfg.lr), Adam(cfg.lr)

    log_rows = []
    for epoch in range(1, cfg.epochs + 1):
        envs = [probe] + [env_factory(rng) for _ in range(cfg.rollouts_per_epoch - 1)]
        trajs = _rollouts(policy, envs, cfg.L, rng)
        probe = env_factory(rng)
        agent = Batch(
            np.concatenate([t["X"] for t in trajs]),
            np.concatenate([t["B"] for t in trajs]),
            np.concatenate([t["A"] for t in trajs]).astype(np.int64),
            np.concatenate([t["logp"] for t in trajs]),
        )

        disc_losses = []
        if cfg.reward == "gail":
            for _ in range(cfg.disc_steps):
                ex = expert.take(rng.integers(0, len(expert), size=len(agent)))
                loss, grads = bce_loss_and_grads(disc, ex, agent)
                clip_grads(grads, cfg.max_grad_norm)
                opt_d.step(disc.params, grads)
                disc_losses.append(loss)
            bounds = np.cumsum([0] + [len(t["A"]) for t in trajs])
            rewards_all = _gail_reward_from_logits(_disc_logits(disc, agent.X, agent.B, agent.actions))
            rewards = [rewards_all[bounds[i]:bounds[i + 1]] for i in range(len(trajs))]
        else:
            rewards = [cfg.alpha * t["acc"] - (1 - cfg.alpha) * t["lag"] for t in trajs]

        agent.returns = np.concatenate([discounted_returns(r, cfg.gamma) for r in rewards])
        baseline = value(agent.X, {1: agent.B[:, None]})[:, 0]
        adv = agent.returns - baseline
        agent.advantages = (adv - adv.mean()) / (adv.std() + 1e-8)
        policy, value, info = ppo_update(policy, value, agent, cfg, rng, opt_p, opt_v)

        row = {
            "epoch": epoch,
            "mean_disc_loss": float(np.mean(disc_losses)) if disc_losses else float("nan"),
            "mean_policy_loss": info["policy_loss"],
            "mean_reward": float(np.mean(np.concatenate(rewards))),
            "val_mean_accuracy": float("nan"),
            "val_mean_lag": float("nan"),
        }
        if val_envs and (epoch % cfg.val_every == 0 or epoch == cfg.epochs):
            greedy = AgentPolicy(policy, probe.space, cfg.L)
            runs = [run_session(greedy, e) for e in val_envs]
            acc = float(np.mean([m.mean_accuracy for m in runs]))
            lag = float(np.mean([m.mean_lag for m in runs]))
            score = float(np.mean([validation_score(m, cfg.L) for m in runs]))
            row["val_mean_accuracy"], row["val_mean_lag"] = acc, lag
            if score > snapshot.val_score:
                snapshot = PolicySnapshot(policy.copy(), cfg, epoch, score)
        log_rows.append(row)
        if verbose:
            print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()),
                  flush=True)

    if not val_envs:
        snapshot = PolicySnapshot(policy.copy(), cfg, cfg.epochs)
    snapshot.history = log_rows
    if log_path is not None:
        write_training_log(log_rows, log_path)
    return snapshot


LOG_FIELDS = ["epoch", "mean_disc_loss", "mean_policy_loss", "mean_reward", "val_mean_accuracy", "val_mean_lag"]


def write_training_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r["epoch"]] + [repr(float(r[k])) for k in LOG_FIELDS[1:]])
