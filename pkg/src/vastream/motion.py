"""Motion feature maps from codec motion vectors.

Each macroblock's motion degree (Manhattan length of its vector) is spread
onto the 4x4-pixel microblocks it covers and summed over the chunk. The sum is
divided by the chunk frame rate, clipped to [0, 255] and linearly stretched so
that anything at or above ``sigma`` saturates to 255.

Directions use screen orientation: sector 0 points along +x (right), sectors
advance counter-clockwise as seen on screen (sector 2 is up, i.e. -y in pixel
coordinates), each spanning 45 degrees centred on its axis.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .domain import DataError

MICROBLOCK = 4
N_SECTORS = 8
DEFAULT_SIGMA = 20

# column layout of the vector arrays used throughout this module
FRAME, SRC_X, SRC_Y, DST_X, DST_Y, BLOCK_W, BLOCK_H = range(7)


@dataclass(frozen=True)
class MotionVector:
    src: tuple[int, int]
    dst: tuple[int, int]
    block_w: int = 16
    block_h: int = 16
    frame_idx: int = 0

    def __post_init__(self):
        if self.block_w % MICROBLOCK or self.block_h % MICROBLOCK or not (
            4 <= self.block_w <= 16 and 4 <= self.block_h <= 16
        ):
            raise ValueError(f"block dims must be multiples of 4 in [4, 16], got {self.block_w}x{self.block_h}")
        if min(*self.src, *self.dst) < 0:
            raise ValueError("motion vector coordinates must be non-negative")

    def as_row(self) -> list[int]:
        return [self.frame_idx, *self.src, *self.dst, self.block_w, self.block_h]


def motion_degree(mv: MotionVector) -> int:
    return abs(mv.dst[0] - mv.src[0]) + abs(mv.dst[1] - mv.src[1])


def direction_sector(dx, dy):
    """Sector index 0..7 of displacement (dx, dy) in pixel coordinates."""
    angle = np.degrees(np.arctan2(-np.asarray(dy, dtype=float), np.asarray(dx, dtype=float)))
    return (np.floor((angle + 22.5) / 45.0).astype(np.int64)) % N_SECTORS


def grid_shape(frame_w: int, frame_h: int) -> tuple[int, int]:
    """(rows, cols) of the microblock grid."""
    return math.ceil(frame_h / MICROBLOCK), math.ceil(frame_w / MICROBLOCK)


@dataclass(frozen=True, eq=False)
class DegreeGrid:
    per_direction: np.ndarray  # (8, rows, cols) int64

    @property
    def total(self) -> np.ndarray:
        return self.per_direction.sum(axis=0)

    @property
    def height(self) -> int:
        return self.per_direction.shape[1]

    @property
    def width(self) -> int:
        return self.per_direction.shape[2]

    @property
    def dominant_dir(self) -> np.ndarray:
        """Sector with the largest accumulated degree per cell, -1 where nothing moved."""
        dom = np.argmax(self.per_direction, axis=0)
        return np.where(self.total > 0, dom, -1)

    def __add__(self, other: DegreeGrid) -> DegreeGrid:
        return DegreeGrid(self.per_direction + other.per_direction)


def as_vector_array(mvs) -> np.ndarray:
    if isinstance(mvs, np.ndarray):
        arr = mvs.astype(np.int64, copy=False)
    else:
        arr = np.array([mv.as_row() for mv in mvs], dtype=np.int64)
    return arr.reshape(-1, 7)


def accumulate(mvs: Sequence[MotionVector] | np.ndarray, frame_w: int, frame_h: int) -> DegreeGrid:
    """Sum motion degrees of all vectors onto the microblock grid of one chunk.

    ``mvs`` is a list of :class:`MotionVector` or an ``(n, 7)`` integer array
    with columns ``frame, src_x, src_y, dst_x, dst_y, block_w, block_h``.
    """
    rows, cols = grid_shape(frame_w, frame_h)
    arr = as_vector_array(mvs)
    if len(arr) == 0:
        return DegreeGrid(np.zeros((N_SECTORS, rows, cols), dtype=np.int64))

    bw, bh = arr[:, BLOCK_W], arr[:, BLOCK_H]
    if np.any(bw % MICROBLOCK) or np.any(bh % MICROBLOCK) or np.any(bw <= 0) or np.any(bh <= 0):
        raise ValueError("block dims must be positive multiples of 4")
    xs = arr[:, [SRC_X, DST_X]]
    ys = arr[:, [SRC_Y, DST_Y]]
    if np.any(xs < 0) or np.any(ys < 0) or np.any(xs >= frame_w) or np.any(ys >= frame_h):
        raise ValueError(f"motion vector outside the {frame_w}x{frame_h} frame")

    dx = arr[:, DST_X] - arr[:, SRC_X]
    dy = arr[:, DST_Y] - arr[:, SRC_Y]
    degree = np.abs(dx) + np.abs(dy)
    moving = degree > 0
    dx, dy, degree = dx[moving], dy[moving], degree[moving]
    sector = direction_sector(dx, dy)

    # dst is the block centre; the block covers [x0, x0 + w) x [y0, y0 + h)
    x0 = arr[moving, DST_X] - bw[moving] // 2
    y0 = arr[moving, DST_Y] - bh[moving] // 2
    per = np.zeros((N_SECTORS, rows, cols), dtype=np.int64)
    _scatter(per, sector, degree, x0, y0, bw[moving], bh[moving])
    return DegreeGrid(per)


@njit(cache=True)
def _scatter(per, sector, degree, x0, y0, bw, bh):
    rows, cols = per.shape[1], per.shape[2]
    for i in range(len(degree)):
        r_lo = max(y0[i] // MICROBLOCK, 0)
        r_hi = min(-(-(y0[i] + bh[i]) // MICROBLOCK), rows)
        c_lo = max(x0[i] // MICROBLOCK, 0)
        c_hi = min(-(-(x0[i] + bw[i]) // MICROBLOCK), cols)
        s, d = sector[i], degree[i]
        for r in range(r_lo, r_hi):
            for c in range(c_lo, c_hi):
                per[s, r, c] += d


@dataclass(frozen=True, eq=False)
class MotionFeatureMap:
    values: np.ndarray  # (rows, cols) uint8
    fps_used: int = 30
    sigma: int = DEFAULT_SIGMA
    dominant_dir: np.ndarray | None = None  # (rows, cols) sector or -1

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError("feature map must be 2-D")
        if np.any(v < 0) or np.any(v > 255):
            raise ValueError("feature map values must lie in [0, 255]")
        v = v.astype(np.uint8)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MotionFeatureMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


def clip_scale(grid: DegreeGrid, fps: int, sigma: int = DEFAULT_SIGMA) -> MotionFeatureMap:
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    clipped = np.clip(grid.total / fps, 0.0, 255.0)
    scaled = np.floor(255.0 * clipped / sigma + 0.5)
    out = np.where(clipped >= sigma, 255.0, np.minimum(scaled, 255.0))
    return MotionFeatureMap(out.astype(np.uint8), fps, sigma, grid.dominant_dir)


def feature_map(mvs, frame_w: int, frame_h: int, fps: int, sigma: int = DEFAULT_SIGMA) -> MotionFeatureMap:
    return clip_scale(accumulate(mvs, frame_w, frame_h), fps, sigma)


def zero_map(rows: int = 16, cols: int = 16) -> MotionFeatureMap:
    return MotionFeatureMap(np.zeros((rows, cols), dtype=np.uint8))


# ---------------------------------------------------------------- PGM (P5)


def write_pgm(fmap: MotionFeatureMap) -> bytes:
    header = f"P5 {fmap.width} {fmap.height} 255\n".encode("ascii")
    return header + np.ascontiguousarray(fmap.values, dtype=np.uint8).tobytes()


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*([^\s#]+)")


def read_pgm(data: bytes) -> MotionFeatureMap:
    pos = 0
    tokens = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise ValueError("malformed PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ValueError("malformed PGM header") from None
    if width <= 0 or height <= 0 or maxval != 255:
        raise ValueError(f"unsupported PGM geometry {width}x{height} maxval {maxval}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ValueError("malformed PGM header")
    payload = data[pos + 1:]
    if len(payload) != width * height:
        raise ValueError(f"PGM payload has {len(payload)} bytes, expected {width * height}")
    values = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return MotionFeatureMap(values)


# ---------------------------------------------------------------- MV logs


def load_mv_log(path: str | Path) -> np.ndarray:
    """Read ``frame_idx,src_x,src_y,dst_x,dst_y,block_w,block_h`` lines."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                if len(parts) != 7:
                    raise ValueError
                rows.append([int(p) for p in parts])
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected 7 integer fields, got {line!r}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, 7)


def save_mv_log(arr: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# frame_idx,src_x,src_y,dst_x,dst_y,block_w,block_h\n")
        for row in np.asarray(arr, dtype=np.int64):
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def chunk_vectors(log: np.ndarray, start_frame: int, stop_frame: int) -> np.ndarray:
    frames = log[:, FRAME]
    return log[(frames >= start_frame) & (frames < stop_frame)]


def chunk_maps(log: np.ndarray, frame_w: int, frame_h: int, fps: int, n_chunks: int,
               frames_per_chunk: int | None = None, sigma: int = DEFAULT_SIGMA) -> list[MotionFeatureMap]:
    """One feature map per chunk, chunk ``i`` spanning frames ``[i*F, (i+1)*F)``."""
    fpc = frames_per_chunk or fps
    return [
        feature_map(chunk_vectors(log, i * fpc, (i + 1) * fpc), frame_w, frame_h, fps, sigma)
        for i in range(n_chunks)
    ]


def synthetic_mv_log(complexity: Sequence[float], frame_w: int, frame_h: int, fps: int,
                     seed: int = 0, max_objects: int = 12) -> np.ndarray:
    """Motion vectors for a scene whose activity follows ``complexity``.

    Chunk ``i`` holds ``round(m_i * max_objects)`` moving 16x16 objects, each
    travelling in a straight line with a speed that also grows with ``m_i``.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for i, m in enumerate(complexity):
        n_obj = int(round(float(m) * max_objects))
        for _ in range(n_obj):
            speed = 1 + rng.integers(0, 1 + int(6 * m))
            theta = rng.uniform(0, 2 * np.pi)
            vx, vy = speed * np.cos(theta), -speed * np.sin(theta)
            x = rng.uniform(16, frame_w - 16)
            y = rng.uniform(16, frame_h - 16)
            for k in range(fps):
                frame = i * fps + k
                nx, ny = x + vx, y + vy
                if not (8 <= nx < frame_w - 8 and 8 <= ny < frame_h - 8):
                    vx, vy = -vx, -vy
                    nx, ny = x + vx, y + vy
                sx, sy = int(round(x)), int(round(y))
                ex, ey = int(round(nx)), int(round(ny))
                # snap the destination block to the 4-pixel lattice, keep the displacement
                cx, cy = (ex // 4) * 4 + 8, (ey // 4) * 4 + 8
                cx, cy = min(cx, frame_w - 1), min(cy, frame_h - 1)
                sx2 = int(np.clip(cx - (ex - sx), 0, frame_w - 1))
                sy2 = int(np.clip(cy - (ey - sy), 0, frame_h - 1))
                rows.append([frame, sx2, sy2, cx, cy, 16, 16])
                x, y = nx, ny
    return np.array(rows, dtype=np.int64).reshape(-1, 7)
