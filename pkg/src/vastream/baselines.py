"""Non-learned comparison policies."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .domain import ConfigSpace, Configuration, VideoProfile
from .simulator import DEFAULT_RTT, DEFAULT_T, ChunkOutcome, StateObservation


@dataclass(frozen=True)
class FixedPolicy:
    config: Configuration

    def __call__(self, state: StateObservation) -> Configuration:
        return self.config


def fixed_policy(c: Configuration, space: ConfigSpace | None = None) -> FixedPolicy:
    if space is not None and (c.id >= len(space) or space[c.id] != c):
        raise ValueError(f"{c} is not in the configuration space")
    return FixedPolicy(c)


@dataclass(frozen=True)
class ProfilingSchedule:
    window: int = 16
    profile_segment: int = 4
    top_k: int = 5

    def __post_init__(self):
        if not 1 <= self.profile_segment < self.window:
            raise ValueError("need 1 <= profile_segment < window")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


class ProfilingPolicy:
    """Periodic profiling in the style of Chameleon.

    The first ``profile_segment`` chunks of each window go out in the golden
    configuration. Their true accuracy rows then rank every configuration;
    the best-ranked one whose predicted upload delay fits in ``T`` is used
    for the rest of the window. Prediction divides the segment's mean chunk
    size by the mean of the last four measured throughputs.
    """

    def __init__(self, schedule: ProfilingSchedule, space: ConfigSpace, profile: VideoProfile,
                 T: float = DEFAULT_T, rtt: float = DEFAULT_RTT, history: int = 4):
        self.schedule = schedule
        self.space = space
        self.profile = profile
        self.T = T
        self.rtt = rtt
        self.history = history
        self.reset()

    def reset(self) -> None:
        self._throughput: deque[float] = deque(maxlen=self.history)
        self.current = self.space.golden
        self.candidates: list[int] = []
        self.selections: list[tuple[int, int, float]] = []  # (chunk, config id, predicted delay)

    def observe(self, outcome: ChunkOutcome) -> None:
        self._throughput.append(outcome.size / max(outcome.upload_delay - self.rtt, 1e-12))

    def predicted_delays(self, rows: slice) -> np.ndarray:
        sizes = self.profile.size_bytes[rows].mean(axis=0)
        bw = float(np.mean(self._throughput))
        return self.rtt + sizes / bw

    def _select(self, i: int) -> Configuration:
        seg = slice(i - self.schedule.profile_segment, i)
        acc = self.profile.accuracy[seg].mean(axis=0)
        pred = self.predicted_delays(seg)
        order = np.lexsort((np.arange(len(acc)), -acc))  # accuracy desc, id asc
        feasible = [int(c) for c in order if pred[c] <= self.T]
        self.candidates = feasible[: self.schedule.top_k]
        if self.candidates:
            pick = self.candidates[0]
        else:
            # nothing fits: fall back to the smallest configuration
            pick = int(np.argmin(pred))
        self.selections.append((i, pick, float(pred[pick])))
        return self.space[pick]

    def __call__(self, state: StateObservation) -> Configuration:
        i = state.chunk_idx
        pos = i % self.schedule.window
        if pos < self.schedule.profile_segment:
            return self.space.golden
        if pos == self.schedule.profile_segment:
            self.current = self._select(i)
        return self.current


def profiling_policy(schedule: ProfilingSchedule, space: ConfigSpace, profile: VideoProfile,
                     T: float = DEFAULT_T, rtt: float = DEFAULT_RTT) -> ProfilingPolicy:
    return ProfilingPolicy(schedule, space, profile, T, rtt)
