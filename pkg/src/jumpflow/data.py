"""Toy datasets and their binary container format.

The length-modeling toy set holds 3x3 RGB videos whose length is one of
{15, 20, 25, 30}: the middle pixel jumps once between two random colors, and
the eight boundary pixels carry a hue-wheel gradient that rotates at constant
speed, completing an integer number of rotations over the clip so the final
frame's boundary matches the first.  Pixel values live in [-1, 1].

A second, fully deterministic mixture catalog of four tiny scalar-frame
videos (lengths 2..5) backs exact-coupling reconstruction tests.

Container layout (little-endian):

    magic   4 bytes b"FCDS"
    version u32
    count   u32
    per video: length u16, H u8, W u8, C u8,
               frame data as float32, frame-major
"""

from __future__ import annotations

import struct

import numpy as np

from .frames import FrameSeq

MAGIC = b"FCDS"
FORMAT_VERSION = 1

TOY_LENGTHS = (15, 20, 25, 30)
TOY_FRAME_SHAPE = (3, 3, 3)

# boundary ring of a 3x3 frame, walked contiguously
_RING = [(0, 0), (0, 1), (0, 2), (1, 2), (2, 2), (2, 1), (2, 0), (1, 0)]


class DataFileError(Exception):
    pass


class BadMagicError(DataFileError):
    pass


class VersionMismatchError(DataFileError):
    pass


class TruncatedFileError(DataFileError):
    pass


def _hue_to_rgb(h: np.ndarray) -> np.ndarray:
    """Vectorized hue -> RGB at full saturation/value; h in [0, 1)."""
    h = np.mod(h, 1.0)
    r = np.clip(np.abs(6 * h - 3) - 1, 0.0, 1.0)
    g = np.clip(2 - np.abs(6 * h - 2), 0.0, 1.0)
    b = np.clip(2 - np.abs(6 * h - 4), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def make_toy_video(
    length: int,
    rotations: int,
    phase0: float,
    jump_frame: int,
    color_a: np.ndarray,
    color_b: np.ndarray,
) -> FrameSeq:
    """Deterministic toy video from explicit parameters."""
    if length < 2:
        raise ValueError("toy videos need at least two frames")
    if not (1 <= jump_frame <= length - 1):
        raise ValueError("jump must happen at an interior frame")
    frames = np.zeros((length, *TOY_FRAME_SHAPE), dtype=np.float64)
    f = np.arange(length)[:, None]
    b = np.arange(8)[None, :]
    hue = phase0 + b / 8.0 + f * (rotations / (length - 1))
    rgb = 2.0 * _hue_to_rgb(hue) - 1.0  # (length, 8, 3)
    for k, (i, j) in enumerate(_RING):
        frames[:, i, j, :] = rgb[:, k, :]
    frames[:jump_frame, 1, 1, :] = color_a
    frames[jump_frame:, 1, 1, :] = color_b
    return FrameSeq(frames.astype(np.float32))


def gen_toy(
    count: int,
    rng: np.random.Generator,
    length_weights=None,
) -> list[FrameSeq]:
    """Random toy videos; lengths drawn from TOY_LENGTHS (uniform by default)."""
    if count < 1:
        raise ValueError("count must be positive")
    if length_weights is None:
        length_weights = np.full(len(TOY_LENGTHS), 1.0 / len(TOY_LENGTHS))
    length_weights = np.asarray(length_weights, dtype=np.float64)
    length_weights = length_weights / length_weights.sum()
    videos = []
    for _ in range(count):
        length = int(rng.choice(TOY_LENGTHS, p=length_weights))
        rotations = int(rng.integers(1, 3))
        phase0 = float(rng.uniform(0.0, 1.0))
        jump_frame = int(rng.integers(1, length))
        color_a = rng.uniform(-1.0, 1.0, size=3)
        color_b = rng.uniform(-1.0, 1.0, size=3)
        videos.append(make_toy_video(length, rotations, phase0, jump_frame, color_a, color_b))
    return videos


def mixture_catalog() -> list[FrameSeq]:
    """Fixed catalog of four scalar-frame videos with lengths 2, 3, 4, 5."""
    videos = []
    for k, length in enumerate((2, 3, 4, 5)):
        values = -1.0 + 0.45 * k + 0.08 * np.arange(length)
        videos.append(FrameSeq(values.reshape(length, 1, 1, 1).astype(np.float32)))
    return videos


def gen_mixture(count: int, rng: np.random.Generator) -> list[FrameSeq]:
    """Draw videos uniformly from the fixed mixture catalog."""
    if count < 1:
        raise ValueError("count must be positive")
    catalog = mixture_catalog()
    picks = rng.integers(0, len(catalog), size=count)
    return [catalog[int(i)] for i in picks]


def write_dataset(path, videos) -> None:
    videos = list(videos)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(videos)))
        for video in videos:
            n = len(video)
            h, w, c = video.frame_shape
            if n > 0xFFFF or max(h, w, c) > 0xFF:
                raise ValueError("video dimensions exceed the container limits")
            f.write(struct.pack("<HBBB", n, h, w, c))
            f.write(np.ascontiguousarray(video.frames, dtype="<f4").tobytes())


def read_dataset(path) -> list[FrameSeq]:
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFileError(f"dataset file ends early at offset {pos}")
        out = data[pos : pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise BadMagicError("not a dataset file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported dataset version {version}")
    (count,) = struct.unpack("<I", take(4))
    videos = []
    for _ in range(count):
        n, h, w, c = struct.unpack("<HBBB", take(5))
        raw = take(n * h * w * c * 4)
        frames = np.frombuffer(raw, dtype="<f4").reshape(n, h, w, c).copy()
        videos.append(FrameSeq(frames))
    if pos != len(data):
        raise DataFileError("trailing bytes after the declared videos")
    return videos
