"""Deterministic scenario builders and the bundled demo assets.

``demo`` is the 300-chunk scenario used for comparisons; ``toy`` is the
4-configuration scenario used to check that imitation training converges.
The files under ``assets/`` are the ``demo`` inputs written to disk by
:func:`write_demo_assets`.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .domain import (
    ConfigSpace,
    ContentModel,
    NetworkTrace,
    VideoProfile,
    build_config_space,
    generate_profile,
    load_profile,
    load_trace,
    mbps,
    save_complexity,
    save_profile,
    save_trace,
    scale_trace,
)
from .motion import MotionFeatureMap, chunk_maps, load_mv_log, save_mv_log, synthetic_mv_log
from .simulator import Env

DEMO_CHUNKS = 300
DEMO_SEED = 7
DEMO_FRAME = (480, 270)
DEMO_MV_FPS = 10
DEMO_TRACE_RANGE = (mbps(0.2), mbps(2.0))
GENEROUS_BANDWIDTH = 50e6  # bytes/s, carries any golden chunk well within T

ASSET_FILES = {
    "profile": "demo_profile.csv",
    "complexity": "demo_complexity.csv",
    "trace": "demo_trace.csv",
    "generous_trace": "generous_trace.csv",
    "mv_log": "demo_mv.csv",
    "trajectories": "three_camera_trajectories.csv",
}


def raw_trace(n_seconds: int = 600, seed: int = DEMO_SEED) -> NetworkTrace:
    """Unscaled bandwidth with slow regime changes and per-second jitter.

    A two-state Markov chain (good/poor link) sets the level; log-normal
    noise sits on top.
    """
    rng = np.random.default_rng(seed)
    levels = (4.0e6, 1.0e6)
    state = 0
    bw = np.empty(n_seconds)
    for t in range(n_seconds):
        if rng.random() < 0.05:
            state = 1 - state
        bw[t] = levels[state] * rng.lognormal(0.0, 0.35)
    return NetworkTrace.from_samples(np.arange(n_seconds, dtype=float), bw)


def demo_trace() -> NetworkTrace:
    return scale_trace(raw_trace(), *DEMO_TRACE_RANGE)


def generous_trace() -> NetworkTrace:
    return NetworkTrace.constant(GENEROUS_BANDWIDTH, 1.0)


def demo_profile() -> VideoProfile:
    return generate_profile(ContentModel(seed=DEMO_SEED), DEMO_CHUNKS, build_config_space())


def demo_mv_log(profile: VideoProfile | None = None) -> np.ndarray:
    profile = profile or demo_profile()
    return synthetic_mv_log(profile.complexity, *DEMO_FRAME, DEMO_MV_FPS, seed=DEMO_SEED)


def demo_maps(log: np.ndarray | None = None, n_chunks: int = DEMO_CHUNKS) -> list[MotionFeatureMap]:
    log = demo_mv_log() if log is None else log
    return chunk_maps(log, *DEMO_FRAME, DEMO_MV_FPS, n_chunks)


def asset_path(name: str) -> Path:
    return Path(str(resources.files("vastream") / "assets" / ASSET_FILES[name]))


def write_demo_assets(out_dir: str | Path) -> dict[str, Path]:
    from .cross_camera import save_trajectory_log, three_camera_log

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in ASSET_FILES.items()}
    profile = demo_profile()
    save_profile(profile, paths["profile"])
    save_complexity(profile.complexity, paths["complexity"])
    save_trace(demo_trace(), paths["trace"])
    save_trace(generous_trace(), paths["generous_trace"])
    save_mv_log(demo_mv_log(profile), paths["mv_log"])
    save_trajectory_log(three_camera_log(), paths["trajectories"])
    return paths


@dataclass
class Scenario:
    name: str
    profile: VideoProfile
    trace: NetworkTrace
    space: ConfigSpace
    feature_maps: list[MotionFeatureMap] | None = None
    k: int = 8
    T: float = 1.0
    rtt: float = 0.08

    def env(self, trace: NetworkTrace | None = None) -> Env:
        return Env(self.profile, trace or self.trace, self.space, self.T, self.rtt, self.k, self.feature_maps)


def load_demo(with_maps: bool = True) -> Scenario:
    """The bundled demo scenario, read from the packaged asset files."""
    profile = load_profile(asset_path("profile"), asset_path("complexity"))
    maps = None
    if with_maps:
        maps = chunk_maps(load_mv_log(asset_path("mv_log")), *DEMO_FRAME, DEMO_MV_FPS, profile.n_chunks)
    return Scenario("demo", profile, load_trace(asset_path("trace")), build_config_space(), maps)


# ---------------------------------------------------------------- toy scenario

TOY_CHUNKS = 60
TOY_PERIOD = 16.0
TOY_LEVELS = (300_000.0, 60_000.0)  # bytes/s
TOY_DEMO_SHIFTS = (0.0, 3.0, 6.0, 9.0, 12.0)
TOY_HELDOUT_SHIFT = 5.0


def toy_space() -> ConfigSpace:
    return build_config_space((1.0, 0.5), (30,), (21, 41))


def toy_profile(seed: int = 3) -> VideoProfile:
    # golden chunks of 125-375 kB against a 300 kB/s / 60 kB/s link
    return generate_profile(ContentModel(base_size_bytes=250_000, seed=seed), TOY_CHUNKS, toy_space())


def toy_trace(shift: float = 0.0) -> NetworkTrace:
    half = TOY_PERIOD / 2
    base = NetworkTrace(np.array([0.0, half]), np.array(TOY_LEVELS), TOY_PERIOD)
    return base.shifted(shift)


def toy_scenario() -> Scenario:
    return Scenario("toy", toy_profile(), toy_trace(), toy_space())
