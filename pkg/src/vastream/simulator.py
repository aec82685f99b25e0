"""Chunk-by-chunk live upload simulator.

Chunk ``i`` (0-based) is ready at ``i * T``. Uploads are serialised, so chunk
``i`` starts at ``i * T + lag[i-1]`` and takes ``u_i`` seconds (fluid drain of
its bytes through the trace plus one RTT). This reproduces
``lag[i] = max(lag[i-1] + u_i - T, 0)`` exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .domain import ConfigSpace, Configuration, NetworkTrace, VideoProfile
from .motion import MotionFeatureMap, zero_map

DEFAULT_T = 1.0
DEFAULT_RTT = 0.08
DEFAULT_K = 8


def upload_delay(size, trace: NetworkTrace, start, rtt: float = DEFAULT_RTT):
    """Seconds from ``start`` until ``size`` bytes have drained, plus ``rtt``.

    Vectorises over ``size`` and ``start``.
    """
    start = np.asarray(start, dtype=float)
    done = trace.time_at_bytes(trace.bytes_until(start) + np.asarray(size, dtype=float))
    out = rtt + (done - start)
    return float(out) if np.ndim(out) == 0 else out


def lag_update(prev_lag: float, u: float, T: float = DEFAULT_T) -> float:
    return max(prev_lag + u - T, 0.0)


def delay_table(profile: VideoProfile, trace: NetworkTrace, T: float = DEFAULT_T,
                rtt: float = DEFAULT_RTT) -> np.ndarray:
    """Upload delay of every (chunk, config) assuming chunk ``i`` starts on time at ``i * T``."""
    starts = (np.arange(profile.n_chunks) * T)[:, None]
    return upload_delay(profile.size_bytes, trace, starts, rtt)


@dataclass(frozen=True, eq=False)
class StateObservation:
    """What a policy sees before choosing the configuration of chunk ``chunk_idx``.

    History vectors hold the last ``k`` chunks, oldest first, zero-padded on
    the left during cold start. ``b`` is the current upload backlog in seconds.
    """

    chunk_idx: int
    v: np.ndarray  # chunk sizes, bytes
    n: np.ndarray  # throughput measurements, bytes/s
    u: np.ndarray  # upload delays, s
    b: float
    r: np.ndarray
    f: np.ndarray
    q: np.ndarray
    M: MotionFeatureMap
    lags: np.ndarray | None = None  # lag after each of the last k chunks, s

    @property
    def k(self) -> int:
        return len(self.v)


@dataclass(frozen=True)
class ChunkOutcome:
    chunk_idx: int
    config: Configuration
    size: int
    upload_delay: float
    lag: float
    accuracy: float
    start: float = 0.0


def cdf_points(values: Sequence[float]) -> np.ndarray:
    """Empirical CDF as (value, cumulative fraction) rows at each distinct value."""
    vals = np.sort(np.asarray(values, dtype=float))
    if len(vals) == 0:
        return np.zeros((0, 2))
    uniq, idx = np.unique(vals, return_index=True)
    counts = np.append(idx[1:], len(vals))
    return np.column_stack([uniq, counts / len(vals)])


@dataclass(frozen=True, eq=False)
class SessionMetrics:
    outcomes: tuple[ChunkOutcome, ...]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([o.accuracy for o in self.outcomes])

    @property
    def lags(self) -> np.ndarray:
        return np.array([o.lag for o in self.outcomes])

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def mean_lag(self) -> float:
        return float(np.mean(self.lags))

    @property
    def accuracy_cdf(self) -> np.ndarray:
        return cdf_points(self.accuracies)

    @property
    def lag_cdf(self) -> np.ndarray:
        return cdf_points(self.lags)

    @property
    def config_ids(self) -> list[int]:
        return [o.config.id for o in self.outcomes]

    def summary(self) -> dict:
        return {
            "n_chunks": len(self.outcomes),
            "mean_accuracy": self.mean_accuracy,
            "mean_lag": self.mean_lag,
            "max_lag": float(self.lags.max()),
            "frac_lag_below_1s": float(np.mean(self.lags < 1.0)),
            "frac_accuracy_above_0.9": float(np.mean(self.accuracies > 0.9)),
            "total_bytes": int(sum(o.size for o in self.outcomes)),
        }

    def write(self, out_dir: str | Path, prefix: str = "") -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "summary": out / f"{prefix}summary.json",
            "chunks": out / f"{prefix}chunks.csv",
            "accuracy_cdf": out / f"{prefix}accuracy_cdf.csv",
            "lag_cdf": out / f"{prefix}lag_cdf.csv",
        }
        paths["summary"].write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        with open(paths["chunks"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chunk", "config_id", "size", "u", "lag", "accuracy"])
            for o in self.outcomes:
                w.writerow([o.chunk_idx, o.config.id, o.size, repr(o.upload_delay), repr(o.lag), repr(o.accuracy)])
        for key, pts in (("accuracy_cdf", self.accuracy_cdf), ("lag_cdf", self.lag_cdf)):
            with open(paths[key], "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["value", "cum_fraction"])
                for value, frac in pts:
                    w.writerow([repr(float(value)), repr(float(frac))])
        return paths


class Policy(Protocol):
    def __call__(self, state: StateObservation) -> Configuration: ...


class EnvExhausted(RuntimeError):
    pass


class Env:
    """Streaming session over one profile and one (cyclic) bandwidth trace."""

    def __init__(
        self,
        profile: VideoProfile,
        trace: NetworkTrace,
        space: ConfigSpace,
        T: float = DEFAULT_T,
        rtt: float = DEFAULT_RTT,
        k: int = DEFAULT_K,
        feature_maps: Sequence[MotionFeatureMap] | None = None,
    ):
        if profile.n_configs != len(space):
            raise ValueError(f"profile has {profile.n_configs} configs, space has {len(space)}")
        if feature_maps is not None and len(feature_maps) != profile.n_chunks:
            raise ValueError("need one feature map per chunk")
        if T <= 0 or rtt < 0 or k < 1:
            raise ValueError("need T > 0, rtt >= 0 and k >= 1")
        self.profile = profile
        self.trace = trace
        self.space = space
        self.T = T
        self.rtt = rtt
        self.k = k
        self.feature_maps = list(feature_maps) if feature_maps is not None else None
        shape = (feature_maps[0].height, feature_maps[0].width) if feature_maps else (16, 16)
        self._zero_map = zero_map(*shape)
        self.reset()

    @property
    def n_chunks(self) -> int:
        return self.profile.n_chunks

    @property
    def done(self) -> bool:
        return self.chunk >= self.n_chunks

    def reset(self) -> StateObservation:
        self.chunk = 0
        self.lag = 0.0
        self.clock = 0.0
        self._hist = np.zeros((7, self.k))  # v, n, u, r, f, q, lag
        self._state = self._observe()
        return self._state

    @property
    def state(self) -> StateObservation:
        return self._state

    def _observe(self) -> StateObservation:
        h = self._hist.copy()
        if self.chunk == 0 or self.feature_maps is None:
            fmap = self._zero_map
        else:
            fmap = self.feature_maps[self.chunk - 1]
        return StateObservation(self.chunk, h[0], h[1], h[2], self.lag, h[3], h[4], h[5], fmap, h[6])

    def step(self, action: Configuration | int) -> tuple[ChunkOutcome, StateObservation]:
        if self.done:
            raise EnvExhausted("all chunks of the profile have been streamed")
        c = self.space[action] if isinstance(action, (int, np.integer)) else action
        i = self.chunk
        size = int(self.profile.size_bytes[i, c.id])
        start = i * self.T + self.lag
        assert abs(start - self.clock) < 1e-9
        u = upload_delay(size, self.trace, start, self.rtt)
        new_lag = lag_update(self.lag, u, self.T)
        assert new_lag >= 0.0
        throughput = size / (u - self.rtt)
        outcome = ChunkOutcome(i, c, size, u, new_lag, float(self.profile.accuracy[i, c.id]), start)

        self._hist = np.roll(self._hist, -1, axis=1)
        self._hist[:, -1] = (size, throughput, u, c.resolution_scale, c.fps, c.qp, new_lag)
        self.lag = new_lag
        self.chunk += 1
        self.clock = self.chunk * self.T + self.lag
        self._state = self._observe()
        return outcome, self._state


def run_session(policy: Policy | Callable[[StateObservation], Configuration], env: Env) -> SessionMetrics:
    """Stream every chunk of ``env`` with ``policy`` and collect the outcomes."""
    state = env.reset()
    if hasattr(policy, "reset"):
        policy.reset()
    observe = getattr(policy, "observe", None)
    outcomes = []
    while not env.done:
        action = policy(state)
        outcome, state = env.step(action)
        if observe is not None:
            observe(outcome)
        outcomes.append(outcome)
    return SessionMetrics(tuple(outcomes))


@dataclass
class ReplayPolicy:
    """Plays a fixed per-chunk sequence of configuration ids."""

    space: ConfigSpace
    config_ids: Sequence[int]

    def __call__(self, state: StateObservation) -> Configuration:
        return self.space[int(self.config_ids[state.chunk_idx])]
