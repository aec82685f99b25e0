"""Finite-difference checks of the hand-written gradients on small random nets."""

from __future__ import annotations

import numpy as np

from .gail import Batch, bce_loss_and_grads, ppo_loss_and_grads, value_loss_and_grads
from .nn import MLP, log_softmax, numerical_grads, relative_error


def _toy_batch(rng: np.random.Generator, n_states: int, width: int, n_actions: int, n: int) -> Batch:
    # n samples drawn from a handful of distinct states, as in a tiny MDP
    states = rng.normal(size=(n_states, width))
    idx = rng.integers(0, n_states, n)
    return Batch(states[idx], rng.uniform(0, 1, n), rng.integers(0, n_actions, n))


def policy_check(seed: int, n_states: int = 4, n_actions: int = 3, width: int = 5, hidden: int = 6,
                 clip_eps: float = 0.2, entropy_coef: float = 0.02, spread: float = 0.3) -> float:
    """``spread`` sets how far old log-probs sit from the current ones, in units of ``clip_eps``."""
    rng = np.random.default_rng(seed)
    net = MLP([width, hidden, hidden, n_actions], side={1: 1}, rng=rng, init_scale=0.5)
    batch = _toy_batch(rng, n_states, width, n_actions, 12)
    logits = net(batch.X, {1: batch.B[:, None]})
    cur = log_softmax(logits)[np.arange(len(batch)), batch.actions]
    batch.logp = cur + rng.uniform(-spread, spread, len(batch)) * clip_eps
    batch.advantages = rng.normal(size=len(batch))
    _, grads, _ = ppo_loss_and_grads(net, batch, clip_eps, entropy_coef)
    numeric = numerical_grads(lambda: ppo_loss_and_grads(net, batch, clip_eps, entropy_coef)[0], net.params)
    return relative_error(grads, numeric)


def value_check(seed: int, width: int = 5, hidden: int = 6) -> float:
    rng = np.random.default_rng(seed)
    net = MLP([width, hidden, hidden, 1], side={1: 1}, rng=rng, init_scale=0.5)
    batch = _toy_batch(rng, 4, width, 3, 10)
    batch.returns = rng.normal(size=len(batch))
    _, grads = value_loss_and_grads(net, batch)
    numeric = numerical_grads(lambda: value_loss_and_grads(net, batch)[0], net.params)
    return relative_error(grads, numeric)


def discriminator_check(seed: int, width: int = 5, n_actions: int = 3, hidden: int = 6) -> float:
    rng = np.random.default_rng(seed)
    net = MLP([width + n_actions, hidden, hidden, 1], side={1: 1}, rng=rng, init_scale=0.5)
    expert = _toy_batch(rng, 4, width, n_actions, 7)
    agent = _toy_batch(rng, 4, width, n_actions, 9)
    _, grads = bce_loss_and_grads(net, expert, agent)
    numeric = numerical_grads(lambda: bce_loss_and_grads(net, expert, agent)[0], net.params)
    return relative_error(grads, numeric)


def check_all(seed: int) -> dict[str, float]:
    return {"policy": policy_check(seed), "value": value_check(seed), "discriminator": discriminator_check(seed)}
