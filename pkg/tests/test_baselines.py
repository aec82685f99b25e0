import numpy as np
import pytest
from hypothesis import given, strategies as st

from vastream.baselines import ProfilingSchedule, fixed_policy, profiling_policy
from vastream.domain import ContentModel, NetworkTrace, VideoProfile, build_config_space, generate_profile
from vastream.expert import ExpertInfeasible, brute_force_plan
from vastream.scenarios import generous_trace
from vastream.simulator import Env, delay_table, run_session


def test_fixed_golden_on_generous_trace(demo):
    m = run_session(fixed_policy(demo.space.golden, demo.space), demo.env(generous_trace()))
    assert m.mean_accuracy == 1.0


def test_fixed_cheapest_is_smallest(small_profile, small_space):
    cheapest = small_space[int(np.argmin(small_profile.size_bytes.sum(axis=0)))]
    m = run_session(fixed_policy(cheapest), Env(small_profile, NetworkTrace.constant(1e5), small_space))
    for o in m.outcomes:
        assert o.size == small_profile.size_bytes[o.chunk_idx].min()


def test_fixed_policy_is_stateless(small_space, small_profile):
    p = fixed_policy(small_space[3])
    env = Env(small_profile, NetworkTrace.constant(1e5), small_space)
    s0 = env.reset()
    _, s1 = env.step(0)
    assert p(s0) == p(s1) == small_space[3]


def test_fixed_policy_checks_space(small_space, space):
    with pytest.raises(ValueError):
        fixed_policy(space[200], small_space)


@pytest.mark.parametrize("kw", [dict(window=4, profile_segment=4), dict(profile_segment=0), dict(top_k=0)])
def test_schedule_validation(kw):
    with pytest.raises(ValueError):
        ProfilingSchedule(**kw)


def _flat_profile(space, n):
    # the same content in every chunk
    base = generate_profile(ContentModel(base_size_bytes=100_000, seed=0), 1, space)
    return VideoProfile(np.repeat(base.accuracy, n, axis=0), np.repeat(base.size_bytes, n, axis=0),
                        np.repeat(base.complexity, n))


def test_ample_bandwidth_selects_golden(small_space):
    prof = _flat_profile(small_space, 16)
    env = Env(prof, NetworkTrace.constant(1e9), small_space)
    policy = profiling_policy(ProfilingSchedule(window=8, profile_segment=2), small_space, prof)
    m = run_session(policy, env)
    assert m.config_ids == [0] * 16
    assert [s[1] for s in policy.selections] == [0, 0]
    assert m.lags.max() == 0.0


def test_thin_link_profiling_accrues_golden_lag(small_space):
    prof = _flat_profile(small_space, 8)
    bw = 40_000.0
    env = Env(prof, NetworkTrace.constant(bw), small_space, rtt=0.08)
    policy = profiling_policy(ProfilingSchedule(window=8, profile_segment=3), small_space, prof)
    m = run_session(policy, env)
    golden_u = prof.size_bytes[0, 0] / bw + 0.08
    assert golden_u > 1.0
    for i in range(3):
        assert m.lags[i] == pytest.approx((i + 1) * (golden_u - 1.0))
    # the selected config is predicted to fit, so lag stops growing as fast
    chunk, pick, pred = policy.selections[0]
    assert chunk == 3 and pred <= 1.0 and pick != 0


def test_near_continuous_profiling(small_space, small_profile):
    schedule = ProfilingSchedule(window=2, profile_segment=1)
    policy = profiling_policy(schedule, small_space, small_profile)
    m = run_session(policy, Env(small_profile, NetworkTrace.constant(2e5), small_space))
    assert m.config_ids[::2] == [0] * (small_profile.n_chunks // 2)
    assert len(policy.selections) == small_profile.n_chunks // 2


@given(st.integers(0, 2**32 - 1), st.floats(2e4, 4e5))
def test_selection_respects_prediction(seed, bw):
    space = build_config_space((1.0, 0.5), (30, 15), (21, 41))
    prof = generate_profile(ContentModel(base_size_bytes=200_000, seed=seed % 1000), 12, space)
    policy = profiling_policy(ProfilingSchedule(window=6, profile_segment=2, top_k=3), space, prof)
    run_session(policy, Env(prof, NetworkTrace.constant(bw), space))
    for chunk, pick, pred in policy.selections:
        seg = slice(chunk - 2, chunk)
        all_pred = policy.rtt + prof.size_bytes[seg].mean(axis=0) / bw
        if (all_pred <= policy.T + 1e-9).any():
            assert pred <= policy.T
        else:
            assert pick == int(np.argmin(all_pred))
    assert len(policy.candidates) <= 3


def test_profiling_resets_between_sessions(small_space, small_profile):
    policy = profiling_policy(ProfilingSchedule(window=4, profile_segment=1), small_space, small_profile)
    env = Env(small_profile, NetworkTrace.constant(1e5), small_space)
    a = run_session(policy, env)
    b = run_session(policy, env)
    assert a.config_ids == b.config_ids


@given(st.integers(0, 2**32 - 1), st.floats(3e4, 3e5))
def test_expert_beats_feasible_baselines(seed, bw):
    space = build_config_space((1.0, 0.5), (30,), (21, 41))
    rng = np.random.default_rng(seed)
    prof = generate_profile(ContentModel(base_size_bytes=150_000, seed=int(rng.integers(1000))), 6, space)
    env = Env(prof, NetworkTrace.constant(bw), space)
    table = delay_table(prof, env.trace)  # constant link: delays do not depend on start time
    try:
        best = brute_force_plan(prof, table, space, L=1.0)
    except ExpertInfeasible:
        return
    runs = [run_session(fixed_policy(c), env) for c in space]
    runs.append(run_session(profiling_policy(ProfilingSchedule(3, 1, 2), space, prof), env))
    for m in runs:
        if m.lags.max() <= 1.0:
            assert best.total_accuracy >= m.accuracies.sum() - 1e-9
