"""Training and evaluation recipes shared by the CLI, scripts and tests.

Demonstrations come from the expert replayed on shifted copies of the
scenario trace; the unshifted trace is kept for evaluation.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .baselines import ProfilingSchedule, fixed_policy, profiling_policy
from .expert import Demonstration, LagGrid, extract_demonstrations, plan_for_env
from .gail import PolicySnapshot, TrainConfig, train
from .scenarios import Scenario
from .simulator import ReplayPolicy, SessionMetrics, run_session


def demo_shifts(duration: float, n: int = 5) -> list[float]:
    """``n`` evenly spaced offsets into a trace, excluding 0."""
    return [duration * (i + 1) / (n + 1) for i in range(n)]


def build_demonstrations(sc: Scenario, shifts, grid: LagGrid = LagGrid(rounding="up")) -> list[Demonstration]:
    demos = []
    for s in shifts:
        env = sc.env(sc.trace.shifted(s))
        demos.append(extract_demonstrations(plan_for_env(env, grid), env))
    return demos


def train_on_scenario(sc: Scenario, cfg: TrainConfig, shifts=None, demos=None, log_path=None,
                      verbose: bool = False) -> tuple[PolicySnapshot, list[Demonstration]]:
    """Train on randomly chosen demonstration shifts, validating on the first one."""
    shifts = list(shifts if shifts is not None else demo_shifts(sc.trace.duration))
    grid = LagGrid(rounding="up", L=cfg.L)
    if demos is None:
        demos = build_demonstrations(sc, shifts, grid) if cfg.reward == "gail" else []

    def factory(rng: np.random.Generator):
        return sc.env(sc.trace.shifted(float(shifts[rng.integers(len(shifts))])))

    val = [sc.env(sc.trace.shifted(shifts[0]))]
    snap = train(factory, demos, cfg, val, log_path=log_path, verbose=verbose)
    return snap, demos


def expert_metrics(sc: Scenario, grid: LagGrid = LagGrid(rounding="up")) -> SessionMetrics:
    env = sc.env()
    plan = plan_for_env(env, grid)
    return run_session(ReplayPolicy(sc.space, plan.config_ids), env)


def profiling_metrics(sc: Scenario, schedule: ProfilingSchedule = ProfilingSchedule()) -> SessionMetrics:
    return run_session(profiling_policy(schedule, sc.space, sc.profile, sc.T, sc.rtt), sc.env())


def fixed_metrics(sc: Scenario, config_id: int = 0) -> SessionMetrics:
    return run_session(fixed_policy(sc.space[config_id], sc.space), sc.env())


def agent_metrics(sc: Scenario, snap: PolicySnapshot) -> SessionMetrics:
    return run_session(snap.agent(sc.space), sc.env())


def demo_train_config(**overrides) -> TrainConfig:
    """Training settings used for the bundled 300-chunk scenario."""
    base = TrainConfig(epochs=300, rollouts_per_epoch=4, minibatch_size=128, ppo_epochs=4, val_every=10)
    return replace(base, **overrides)


def toy_train_config(**overrides) -> TrainConfig:
    """Settings for the 4-configuration toy scenario."""
    base = TrainConfig(epochs=500, val_every=10)
    return replace(base, **overrides)


def run_toy(cfg: TrainConfig | None = None, verbose: bool = False) -> dict:
    """Train on the toy demo shifts and score expert and agent on the held-out shift."""
    from .scenarios import TOY_DEMO_SHIFTS, TOY_HELDOUT_SHIFT, toy_scenario, toy_trace

    cfg = cfg or toy_train_config()
    sc = toy_scenario()
    grid = LagGrid(rounding="up", L=cfg.L)
    demos = []
    for s in TOY_DEMO_SHIFTS:
        env = sc.env(toy_trace(s))
        demos.append(extract_demonstrations(plan_for_env(env, grid), env))

    def factory(rng: np.random.Generator):
        return sc.env(toy_trace(float(TOY_DEMO_SHIFTS[rng.integers(len(TOY_DEMO_SHIFTS))])))

    val = [sc.env(toy_trace(s)) for s in TOY_DEMO_SHIFTS[:2]]
    snap = train(factory, demos, cfg, val, verbose=verbose)
    held = sc.env(toy_trace(TOY_HELDOUT_SHIFT))
    expert = run_session(ReplayPolicy(sc.space, plan_for_env(held, grid).config_ids), held)
    agent = run_session(snap.agent(sc.space), held)
    return {"snapshot": snap, "expert": expert, "agent": agent}
