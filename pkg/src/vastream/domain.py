"""Configurations, video profiles, bandwidth traces and the synthetic content model.

The content model stands in for a real encoder + detector pair: it maps a
configuration and a per-chunk content complexity ``m`` in [0, 1] to an encoded
chunk size and a detection accuracy using fixed closed forms.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

RESOLUTIONS = (1.0, 0.8, 0.6, 0.5, 0.4, 0.3)
FPS_SET = (30, 15, 10, 5, 2, 1)
QP_SET = (21, 25, 29, 33, 37, 41)

MAX_FPS = 30
MIN_QP = 21
MAX_QP = 41


class DataError(ValueError):
    """Malformed input file or a value that breaks a type invariant."""


@dataclass(frozen=True)
class Configuration:
    resolution_scale: float
    fps: int
    qp: int
    id: int

    @property
    def knobs(self) -> tuple[float, int, int]:
        return (self.resolution_scale, self.fps, self.qp)

    def __str__(self) -> str:
        return f"#{self.id}(r={self.resolution_scale:g}, f={self.fps}, q={self.qp})"


@dataclass(frozen=True)
class ConfigSpace:
    configs: tuple[Configuration, ...]

    def __post_init__(self):
        if not self.configs:
            raise ValueError("empty configuration space")
        if [c.id for c in self.configs] != list(range(len(self.configs))):
            raise ValueError("configuration ids must be dense 0..n-1")
        if len({c.knobs for c in self.configs}) != len(self.configs):
            raise ValueError("duplicate configurations")

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def __getitem__(self, i: int) -> Configuration:
        return self.configs[i]

    @property
    def golden(self) -> Configuration:
        return self.configs[0]

    @property
    def resolutions(self) -> np.ndarray:
        return np.array([c.resolution_scale for c in self.configs])

    @property
    def fps(self) -> np.ndarray:
        return np.array([c.fps for c in self.configs], dtype=float)

    @property
    def qps(self) -> np.ndarray:
        return np.array([c.qp for c in self.configs], dtype=float)

    def find(self, resolution_scale: float, fps: int, qp: int) -> Configuration:
        for c in self.configs:
            if c.knobs == (resolution_scale, fps, qp):
                return c
        raise KeyError((resolution_scale, fps, qp))


def _check_knobs(name: str, values: Sequence, allowed: Sequence) -> None:
    if len(values) == 0:
        raise ValueError(f"empty {name} knob list")
    if len(set(values)) != len(values):
        raise ValueError(f"duplicate values in {name} knob list")
    bad = [v for v in values if v not in allowed]
    if bad:
        raise ValueError(f"{name} values {bad} outside {list(allowed)}")


def build_config_space(
    resolutions: Sequence[float] = RESOLUTIONS,
    fps_set: Sequence[int] = FPS_SET,
    qp_set: Sequence[int] = QP_SET,
) -> ConfigSpace:
    """Cartesian product ordered by resolution desc, fps desc, qp asc."""
    _check_knobs("resolution", list(resolutions), RESOLUTIONS)
    _check_knobs("fps", list(fps_set), FPS_SET)
    _check_knobs("qp", list(qp_set), QP_SET)
    configs = []
    for r in sorted(resolutions, reverse=True):
        for f in sorted(fps_set, reverse=True):
            for q in sorted(qp_set):
                configs.append(Configuration(float(r), int(f), int(q), len(configs)))
    return ConfigSpace(tuple(configs))


@dataclass(frozen=True)
class ContentModel:
    base_size_bytes: int = 2_500_000
    alpha_r: float = 1.5
    alpha_f: float = 0.6
    qp_halving: float = 6.0
    res_offset: float = 0.3
    res_complexity: float = 0.5
    qp_slope: float = 0.015
    seed: int = 0

    def __post_init__(self):
        if self.base_size_bytes <= 0:
            raise ValueError("base_size_bytes must be positive")
        if not self.qp_halving > 0:
            raise ValueError("qp_halving must be positive")
        coeffs = (self.alpha_r, self.alpha_f, self.res_offset, self.res_complexity, self.qp_slope)
        if not all(math.isfinite(x) for x in coeffs):
            raise ValueError("content model coefficients must be finite")


def _check_complexity(m) -> None:
    arr = np.asarray(m, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"complexity must lie in [0, 1], got {m}")


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def _size_factor(model: ContentModel, r, f, q):
    return (
        np.power(r, model.alpha_r)
        * np.power(np.asarray(f, dtype=float) / MAX_FPS, model.alpha_f)
        * np.power(2.0, -(np.asarray(q, dtype=float) - MIN_QP) / model.qp_halving)
    )


def _accuracy(model: ContentModel, r, f, q, m):
    r = np.asarray(r, dtype=float)
    f = np.asarray(f, dtype=float)
    q = np.asarray(q, dtype=float)
    acc = (
        np.power(r, model.res_offset + model.res_complexity * m)
        * np.power(f / MAX_FPS, m)
        * (1.0 - model.qp_slope * (q - MIN_QP))
    )
    return np.clip(acc, 0.0, 1.0)


def encoded_size(model: ContentModel, c: Configuration, m: float) -> int:
    """Chunk size in bytes for configuration ``c`` at complexity ``m``."""
    _check_complexity(m)
    raw = model.base_size_bytes * _size_factor(model, c.resolution_scale, c.fps, c.qp) * (0.5 + m)
    return max(1, int(round_half_up(raw)))


def accuracy_of(model: ContentModel, c: Configuration, m: float) -> float:
    _check_complexity(m)
    return float(_accuracy(model, c.resolution_scale, c.fps, c.qp, m))


@dataclass(frozen=True, eq=False)
class VideoProfile:
    """Per-chunk x per-configuration accuracy and encoded size tables."""

    accuracy: np.ndarray  # (n_chunks, n_configs), in [0, 1]
    size_bytes: np.ndarray  # (n_chunks, n_configs), int64 > 0
    complexity: np.ndarray | None = None  # (n_chunks,), None when loaded without a complexity file

    def __post_init__(self):
        acc = np.array(self.accuracy, dtype=float)
        size = np.array(self.size_bytes, dtype=np.int64)
        if acc.ndim != 2 or acc.shape != size.shape or acc.shape[0] < 1:
            raise DataError(f"accuracy/size tables must share a (chunks, configs) shape, got {acc.shape} and {size.shape}")
        bad = np.argwhere(~((acc >= 0.0) & (acc <= 1.0)))
        if len(bad):
            i, c = bad[0]
            raise DataError(f"accuracy[{i}][{c}] = {acc[i, c]} outside [0, 1]")
        bad = np.argwhere(size <= 0)
        if len(bad):
            i, c = bad[0]
            raise DataError(f"size_bytes[{i}][{c}] = {size[i, c]} is not positive")
        acc.setflags(write=False)
        size.setflags(write=False)
        object.__setattr__(self, "accuracy", acc)
        object.__setattr__(self, "size_bytes", size)
        if self.complexity is not None:
            cx = np.array(self.complexity, dtype=float)
            if cx.shape != (acc.shape[0],):
                raise DataError("complexity length must equal the chunk count")
            _check_complexity(cx)
            cx.setflags(write=False)
            object.__setattr__(self, "complexity", cx)

    @property
    def n_chunks(self) -> int:
        return self.accuracy.shape[0]

    @property
    def n_configs(self) -> int:
        return self.accuracy.shape[1]

    def slice(self, start: int, stop: int) -> VideoProfile:
        cx = None if self.complexity is None else self.complexity[start:stop]
        return VideoProfile(self.accuracy[start:stop], self.size_bytes[start:stop], cx)


def random_walk_complexity(n_chunks: int, seed: int, step: float = 0.1) -> np.ndarray:
    """Bounded random walk on [0, 1] with per-chunk moves of at most ``step``."""
    rng = np.random.default_rng(seed)
    out = np.empty(n_chunks)
    m = rng.uniform(0.0, 1.0)
    for i in range(n_chunks):
        out[i] = m
        m = m + rng.uniform(-step, step)
        # reflect at the walls so the walk does not stick to a bound
        if m < 0.0:
            m = -m
        elif m > 1.0:
            m = 2.0 - m
    return out


def generate_profile(
    model: ContentModel,
    n_chunks: int,
    space: ConfigSpace,
    complexity: Sequence[float] | np.ndarray | None = None,
) -> VideoProfile:
    """Fill a profile from the content model.

    ``complexity`` is an explicit per-chunk sequence (e.g. from a complexity
    file); when omitted a random walk seeded by ``model.seed`` is used.
    """
    if n_chunks < 1:
        raise ValueError("n_chunks must be >= 1")
    if complexity is None:
        cx = random_walk_complexity(n_chunks, model.seed)
    else:
        cx = np.asarray(complexity, dtype=float)
        if cx.shape != (n_chunks,):
            raise ValueError(f"expected {n_chunks} complexity values, got {cx.shape}")
        _check_complexity(cx)
    r, f, q = space.resolutions, space.fps, space.qps
    m = cx[:, None]
    size = round_half_up(model.base_size_bytes * _size_factor(model, r, f, q)[None, :] * (0.5 + m))
    size = np.maximum(size, 1).astype(np.int64)
    acc = _accuracy(model, r[None, :], f[None, :], q[None, :], m)
    return VideoProfile(acc, size, cx)


@dataclass(frozen=True, eq=False)
class NetworkTrace:
    """Piecewise-constant bandwidth replayed cyclically.

    Sample ``k`` holds from ``times[k]`` until ``times[k + 1]`` (or until
    ``duration`` for the last sample); the trace then repeats.
    """

    times: np.ndarray
    bandwidth: np.ndarray  # bytes/s
    duration: float
    _cum: np.ndarray = field(init=False, repr=False)
    _knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        bw = np.array(self.bandwidth, dtype=float)
        if t.ndim != 1 or t.shape != bw.shape or len(t) == 0:
            raise DataError("trace needs matching, non-empty time and bandwidth arrays")
        if t[0] != 0.0:
            raise DataError("trace timestamps must start at 0")
        if np.any(np.diff(t) <= 0):
            raise DataError("trace timestamps must be strictly increasing")
        if np.any(~np.isfinite(bw)) or np.any(bw <= 0):
            raise DataError("trace bandwidth must be positive")
        if not self.duration > t[-1]:
            raise DataError("trace duration must exceed the last timestamp")
        knots = np.append(t, float(self.duration))
        cum = np.concatenate([[0.0], np.cumsum(bw * np.diff(knots))])
        for arr in (t, bw, knots, cum):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "bandwidth", bw)
        object.__setattr__(self, "duration", float(self.duration))
        object.__setattr__(self, "_knots", knots)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_samples(cls, times: Sequence[float], bandwidth: Sequence[float], duration: float | None = None):
        t = np.asarray(times, dtype=float)
        if duration is None:
            step = t[-1] - t[-2] if len(t) > 1 else 1.0
            duration = t[-1] + step
        return cls(t, np.asarray(bandwidth, dtype=float), duration)

    @classmethod
    def constant(cls, bandwidth: float, duration: float = 1.0):
        return cls(np.array([0.0]), np.array([float(bandwidth)]), duration)

    @property
    def period_bytes(self) -> float:
        return float(self._cum[-1])

    def bytes_until(self, t):
        """Cumulative bytes the link can carry over [0, t)."""
        t = np.asarray(t, dtype=float)
        cycles, rem = np.divmod(t, self.duration)
        return cycles * self.period_bytes + np.interp(rem, self._knots, self._cum)

    def time_at_bytes(self, b):
        """Inverse of :meth:`bytes_until`."""
        b = np.asarray(b, dtype=float)
        cycles, rem = np.divmod(b, self.period_bytes)
        return cycles * self.duration + np.interp(rem, self._cum, self._knots)

    def shifted(self, offset: float) -> NetworkTrace:
        """The same cyclic trace started ``offset`` seconds later."""
        offset = offset % self.duration
        if offset == 0:
            return self
        bounds = np.unique(np.concatenate([self._knots, [offset]]))
        starts = bounds[:-1]
        bw = self.bandwidth[np.searchsorted(self._knots, starts, side="right") - 1]
        mask = starts >= offset
        new_t = np.concatenate([starts[mask] - offset, starts[~mask] + self.duration - offset])
        new_bw = np.concatenate([bw[mask], bw[~mask]])
        return NetworkTrace(new_t, new_bw, self.duration)

    def mean_bandwidth(self) -> float:
        return self.period_bytes / self.duration


def scale_trace(trace: NetworkTrace, lo: float, hi: float) -> NetworkTrace:
    """Affine min-max map of the bandwidth values onto [lo, hi]."""
    if not lo < hi:
        raise ValueError(f"scale_trace needs lo < hi, got ({lo}, {hi})")
    bw = trace.bandwidth
    bmin, bmax = bw.min(), bw.max()
    if bmax == bmin:
        scaled = np.full_like(bw, (lo + hi) / 2.0)
    else:
        scaled = lo + (bw - bmin) * (hi - lo) / (bmax - bmin)
        scaled[bw == bmin] = lo
        scaled[bw == bmax] = hi
    return NetworkTrace(trace.times.copy(), scaled, trace.duration)


def mbps(x: float) -> float:
    """Megabits per second to bytes per second."""
    return x * 1e6 / 8.0


# ---------------------------------------------------------------- file formats


def _data_lines(path: str | Path) -> Iterable[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def load_trace(path: str | Path) -> NetworkTrace:
    times, bws = [], []
    for lineno, line in _data_lines(path):
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            t, bw = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected 't_seconds,bandwidth_bytes_per_sec', got {line!r}") from None
        if times and t <= times[-1]:
            raise DataError(f"{path}:{lineno}: timestamp {t} does not increase")
        if not bw > 0:
            raise DataError(f"{path}:{lineno}: bandwidth must be positive, got {bw}")
        times.append(t)
        bws.append(bw)
    if not times:
        raise DataError(f"{path}: no trace samples")
    if times[0] != 0.0:
        raise DataError(f"{path}: first timestamp must be 0")
    duration = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            m = re.match(r"\s*#\s*duration\s*=\s*([0-9.eE+-]+)", raw)
            if m:
                duration = float(m.group(1))
                break
    if duration is not None and duration <= times[-1]:
        raise DataError(f"{path}: duration {duration} does not exceed the last timestamp")
    return NetworkTrace.from_samples(times, bws, duration)


def save_trace(trace: NetworkTrace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# duration={trace.duration!r}\n")
        for t, bw in zip(trace.times, trace.bandwidth):
            fh.write(f"{float(t)!r},{float(bw)!r}\n")


def load_complexity(path: str | Path) -> np.ndarray:
    vals = []
    for lineno, line in _data_lines(path):
        try:
            v = float(line)
        except ValueError:
            raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not 0.0 <= v <= 1.0:
            raise DataError(f"{path}:{lineno}: complexity {v} outside [0, 1]")
        vals.append(v)
    if not vals:
        raise DataError(f"{path}: empty complexity file")
    return np.array(vals)


def save_complexity(values: Sequence[float], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{float(v)!r}\n" for v in values)


def load_profile(path: str | Path, complexity_path: str | Path | None = None) -> VideoProfile:
    lines = iter(_data_lines(path))
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise DataError(f"{path}: empty profile file") from None
    try:
        fields = dict(kv.split("=") for kv in header.split(","))
        n, m = int(fields["chunks"]), int(fields["configs"])
    except (ValueError, KeyError):
        raise DataError(f"{path}:{lineno}: expected header 'chunks=N,configs=M', got {header!r}") from None
    if n < 1 or m < 1:
        raise DataError(f"{path}:{lineno}: chunk and config counts must be positive")
    acc = np.full((n, m), np.nan)
    size = np.zeros((n, m), dtype=np.int64)
    for lineno, line in lines:
        parts = line.split(",")
        try:
            if len(parts) != 4:
                raise ValueError
            i, c, a, s = int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
        except ValueError:
            raise DataError(f"{path}:{lineno}: expected 'chunk_idx,config_id,accuracy,size_bytes', got {line!r}") from None
        if not (0 <= i < n and 0 <= c < m):
            raise DataError(f"{path}:{lineno}: cell ({i}, {c}) outside {n}x{m} table")
        if not 0.0 <= a <= 1.0:
            raise DataError(f"{path}:{lineno}: accuracy[{i}][{c}] = {a} outside [0, 1]")
        if s <= 0:
            raise DataError(f"{path}:{lineno}: size_bytes[{i}][{c}] = {s} is not positive")
        acc[i, c] = a
        size[i, c] = s
    missing = np.argwhere(np.isnan(acc))
    if len(missing):
        i, c = missing[0]
        raise DataError(f"{path}: missing cell ({i}, {c}) ({len(missing)} cells missing)")
    cx = load_complexity(complexity_path) if complexity_path is not None else None
    return VideoProfile(acc, size, cx)


def save_profile(profile: VideoProfile, path: str | Path, complexity_path: str | Path | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"chunks={profile.n_chunks},configs={profile.n_configs}\n")
        for i in range(profile.n_chunks):
            for c in range(profile.n_configs):
                fh.write(f"{i},{c},{float(profile.accuracy[i, c])!r},{profile.size_bytes[i, c]}\n")
    if complexity_path is not None:
        if profile.complexity is None:
            raise ValueError("profile carries no complexity to save")
        save_complexity(profile.complexity, complexity_path)
