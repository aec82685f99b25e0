"""Offline-optimal configuration planner and its exhaustive-search oracle.

The planner maximises total accuracy over a chunk sequence subject to every
chunk's upload lag staying within ``L``. Lag is tracked on a grid of ``step``
seconds: ``acc_table[i, j]`` is the best accumulated accuracy of chunks
``0..i`` ending with lag ``j * step``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .domain import ConfigSpace, Configuration, VideoProfile
from .simulator import ChunkOutcome, Env, ReplayPolicy, StateObservation, delay_table, run_session, upload_delay

LAG_EPS = 1e-9
BRUTE_FORCE_LIMIT = 10**7


class ExpertInfeasible(RuntimeError):
    """No configuration sequence keeps every lag within the bound."""


@dataclass(frozen=True)
class LagGrid:
    """Lag discretisation.

    ``rounding="half_up"`` snaps a lag to the nearest cell. ``"up"`` takes the
    next cell at or above it; combined with lag-aware delays this makes every
    planned lag an upper bound on the lag the plan really produces, because a
    later upload start never finishes earlier on a fluid link.
    """

    step: float = 0.1
    L: float = 1.0
    rounding: str = "half_up"

    def __post_init__(self):
        if self.rounding not in ("half_up", "up"):
            raise ValueError(f"unknown rounding {self.rounding!r}")
        if not self.step > 0:
            raise ValueError("lag step must be positive")
        if self.L < 0:
            raise ValueError("max lag must be non-negative")
        cells = self.L / self.step
        if abs(cells - round(cells)) > 1e-6:
            raise ValueError(f"max lag {self.L} is not a multiple of the step {self.step}")

    @property
    def n_cells(self) -> int:
        return int(round(self.L / self.step)) + 1


@dataclass(frozen=True, eq=False)
class ExpertPlan:
    configs: tuple[Configuration, ...]
    total_accuracy: float
    lags: np.ndarray

    @property
    def config_ids(self) -> list[int]:
        return [c.id for c in self.configs]

    def __len__(self) -> int:
        return len(self.configs)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("chunk_idx,config_id\n")
            for i, c in enumerate(self.configs):
                fh.write(f"{i},{c.id}\n")


def load_plan_ids(path: str | Path) -> list[int]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for i, line in enumerate(fh):
            idx, cid = line.strip().split(",")
            if int(idx) != i:
                raise ValueError(f"{path}: chunk indices must be 0..N-1 in order")
            ids.append(int(cid))
    return ids


def _accuracy_table(profile) -> np.ndarray:
    return np.asarray(getattr(profile, "accuracy", profile), dtype=float)


@numba.njit(cache=True)
def _cell(lag, step, round_up):
    if round_up:
        return int(np.ceil(lag / step - 1e-9))
    return int(np.floor(lag / step + 0.5 + 1e-9))


@numba.njit(cache=True)
def _fill(acc, delays, T, step, L, n_cells, round_up):
    # delays: (N, D, C); D is 1 for lag-independent tables, n_cells otherwise
    N, C = acc.shape
    per_cell = delays.shape[1] > 1
    A = np.full((N, n_cells), -np.inf)
    S = np.full((N, n_cells), -1, dtype=np.int64)
    Q = np.full((N, n_cells), -1, dtype=np.int64)
    for c in range(C):
        lag = max(0.0, delays[0, 0, c] - T)
        if lag > L + 1e-9:
            continue
        l = _cell(lag, step, round_up)
        if l < n_cells and acc[0, c] > A[0, l]:
            A[0, l] = acc[0, c]
            S[0, l] = c
    for i in range(N - 1):
        for j in range(n_cells - 1, -1, -1):
            if S[i, j] < 0:
                continue
            base = A[i, j]
            prev_lag = j * step
            d = j if per_cell else 0
            for c in range(C):
                lag = max(0.0, prev_lag + delays[i + 1, d, c] - T)
                if lag > L + 1e-9:
                    continue
                l = _cell(lag, step, round_up)
                if l < n_cells and base + acc[i + 1, c] > A[i + 1, l]:
                    A[i + 1, l] = base + acc[i + 1, c]
                    S[i + 1, l] = c
                    Q[i + 1, l] = j
    return A, S, Q


def expert_plan(profile, delays: np.ndarray, space: ConfigSpace, grid: LagGrid = LagGrid(),
                T: float = 1.0) -> ExpertPlan:
    """Dynamic-programming plan over chunks x lag cells x configurations.

    ``delays[i, c]`` is the upload delay of chunk ``i`` under config ``c``.
    A 3-D table ``delays[i, j, c]`` instead gives the delay when chunk ``i``
    starts uploading with lag cell ``j`` behind schedule (see
    :func:`lagged_delay_table`); only ``j = 0`` is read for the first chunk.
    Ties keep the first writer (lag cells high to low, configs by id); the
    final cell is the lowest lag among the best totals.
    """
    acc = _accuracy_table(profile)
    delays = np.asarray(delays, dtype=float)
    if acc.shape[0] == 0:
        raise ValueError("empty profile")
    if delays.ndim == 2:
        delays = delays[:, None, :]
    if (delays.shape[0], delays.shape[2]) != acc.shape or acc.shape[1] != len(space) \
            or delays.shape[1] not in (1, grid.n_cells):
        raise ValueError(f"shape mismatch: accuracy {acc.shape}, delays {delays.shape}, space {len(space)}")
    A, S, Q = _fill(acc, np.ascontiguousarray(delays), float(T), float(grid.step), float(grid.L), grid.n_cells,
                    grid.rounding == "up")
    dead = np.flatnonzero((S < 0).all(axis=1))
    if len(dead):
        raise ExpertInfeasible(f"no configuration keeps chunk {dead[0]} within lag {grid.L}")
    N = acc.shape[0]
    j = int(np.argmax(A[N - 1]))
    total = float(A[N - 1, j])
    ids = [0] * N
    lags = np.zeros(N)
    for i in range(N - 1, -1, -1):
        ids[i] = int(S[i, j])
        lags[i] = j * grid.step
        j = int(Q[i, j])
    return ExpertPlan(tuple(space[c] for c in ids), total, lags)


def exact_lags(delays: np.ndarray, ids, T: float = 1.0) -> np.ndarray:
    """Continuous lag recursion for a fixed configuration sequence."""
    lags = np.zeros(len(ids))
    lag = 0.0
    for i, c in enumerate(ids):
        lag = max(lag + delays[i, c] - T, 0.0)
        lags[i] = lag
    return lags


def brute_force_plan(profile, delays: np.ndarray, space: ConfigSpace, L: float = 1.0,
                     T: float = 1.0) -> ExpertPlan:
    """Exhaustive search with the exact lag recursion.

    Ties go to the lexicographically smallest config-id sequence.
    """
    acc = _accuracy_table(profile)
    delays = np.asarray(delays, dtype=float)
    N, C = acc.shape
    if N == 0:
        raise ValueError("empty profile")
    if C**N > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{C}^{N} sequences exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")

    # prefixes enumerated in lexicographic order of their id sequences
    total = np.zeros(1)
    lag = np.zeros(1)
    ok = np.ones(1, dtype=bool)
    for i in range(N):
        total = np.repeat(total, C) + np.tile(acc[i], len(total))
        lag = np.maximum(np.repeat(lag, C) + np.tile(delays[i], len(lag)) - T, 0.0)
        ok = np.repeat(ok, C) & (lag <= L + LAG_EPS)
    if not ok.any():
        raise ExpertInfeasible(f"every sequence exceeds lag {L}")
    masked = np.where(ok, total, -np.inf)
    best = int(np.argmax(masked))
    ids = []
    for _ in range(N):
        best, c = divmod(best, C)
        ids.append(c)
    ids.reverse()
    return ExpertPlan(tuple(space[c] for c in ids), float(masked.max()), exact_lags(delays, ids, T))


@dataclass(frozen=True, eq=False)
class Demonstration:
    states: tuple[StateObservation, ...]
    actions: tuple[int, ...]
    outcomes: tuple[ChunkOutcome, ...]

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def lags(self) -> np.ndarray:
        return np.array([o.lag for o in self.outcomes])


def extract_demonstrations(plan: ExpertPlan | list[int], env: Env) -> Demonstration:
    """Replay a plan through the simulator, recording (state, action) at each decision."""
    ids = plan.config_ids if isinstance(plan, ExpertPlan) else [int(c) for c in plan]
    if len(ids) != env.n_chunks:
        raise ValueError(f"plan has {len(ids)} chunks, environment has {env.n_chunks}")
    states = []
    replay = ReplayPolicy(env.space, ids)

    def recorder(state):
        states.append(state)
        return replay(state)

    metrics = run_session(recorder, env)
    return Demonstration(tuple(states), tuple(ids), metrics.outcomes)


def lagged_delay_table(profile: VideoProfile, trace, grid: LagGrid, T: float = 1.0,
                       rtt: float = 0.08) -> np.ndarray:
    """Delays ``[i, j, c]`` for chunk ``i`` starting at ``i * T + j * step``."""
    starts = np.arange(profile.n_chunks)[:, None] * T + np.arange(grid.n_cells)[None, :] * grid.step
    return upload_delay(profile.size_bytes[:, None, :], trace, starts[:, :, None], rtt)


def plan_for_env(env: Env, grid: LagGrid = LagGrid(rounding="up"), lag_aware: bool = True) -> ExpertPlan:
    """Plan against the environment's own trace.

    With ``lag_aware`` the delay of each transition is evaluated at the start
    epoch implied by the lag cell; otherwise every chunk is assumed on time.
    """
    if lag_aware:
        delays = lagged_delay_table(env.profile, env.trace, grid, env.T, env.rtt)
    else:
        delays = delay_table(env.profile, env.trace, env.T, env.rtt)
    return expert_plan(env.profile, delays, env.space, grid, env.T)
