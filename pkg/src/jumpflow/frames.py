"""Variable-length frame sequences, insertion/strip primitives, and time bookkeeping.

A frame is a float32 array of shape (H, W, C).  A sequence is an ordered stack
of frames sharing one shape.  Sequences grow only by insertion; frames are
never reordered or removed once present.

Times live on an extended axis: a frame with extended time tau < 0 has not
been inserted yet ("deleted"), tau in [0, 1) is being denoised ("flowing"),
and tau >= 1 is finished ("terminal").  Real times are the clip of extended
times to [0, 1].
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class FrameState(enum.Enum):
    DELETED = "deleted"
    FLOWING = "flowing"
    TERMINAL = "terminal"


def clip_time(tau):
    """Map extended time(s) to real time(s) in [0, 1].

    Accepts a scalar or array; rejects NaN.
    """
    arr = np.asarray(tau, dtype=np.float64)
    if np.isnan(arr).any():
        raise ValueError("clip_time: NaN time value")
    out = np.clip(arr, 0.0, 1.0)
    return float(out) if np.isscalar(tau) or arr.ndim == 0 else out


def frame_state(tau: float) -> FrameState:
    """State of a frame at extended time tau: deleted / flowing / terminal."""
    if np.isnan(tau):
        raise ValueError("frame_state: NaN time value")
    if tau < 0.0:
        return FrameState.DELETED
    if tau < 1.0:
        return FrameState.FLOWING
    return FrameState.TERMINAL


def frame_states(tau: np.ndarray) -> list[FrameState]:
    return [frame_state(float(x)) for x in np.asarray(tau, dtype=np.float64)]


def _check_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.ndim != 3:
        raise ValueError(f"frame must have shape (H, W, C), got {frame.shape}")
    if not np.isfinite(frame).all():
        raise ValueError("frame contains non-finite values")
    return frame.astype(np.float32, copy=False)


@dataclass(frozen=True)
class FrameSeq:
    """Ordered, fixed-shape stack of frames; length may be zero.

    ``frames`` has shape (n, H, W, C), float32.  Instances are immutable;
    operations return new sequences.
    """

    frames: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.frames)
        if arr.ndim != 4:
            raise ValueError(f"FrameSeq expects (n, H, W, C), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("FrameSeq contains non-finite values")
        object.__setattr__(self, "frames", arr.astype(np.float32, copy=False))
        self.frames.setflags(write=False)

    @classmethod
    def empty(cls, frame_shape: tuple[int, int, int]) -> "FrameSeq":
        return cls(np.zeros((0, *frame_shape), dtype=np.float32))

    @classmethod
    def from_frames(cls, frames) -> "FrameSeq":
        frames = [_check_frame(f) for f in frames]
        if not frames:
            raise ValueError("from_frames with no frames needs an explicit shape; use empty()")
        return cls(np.stack(frames))

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return tuple(self.frames.shape[1:])

    def frame(self, i: int) -> np.ndarray:
        return self.frames[i]

    def insert(self, i: int, frame: np.ndarray) -> "FrameSeq":
        """Insert ``frame`` to the right of frame ``i`` (1-based slot semantics).

        ``i`` counts existing frames: the new frame lands between the i-th and
        (i+1)-th frame; ``i == len(self)`` appends.  ``i == 0`` (before all
        frames) is only allowed on an empty sequence, which it seeds.
        """
        n = len(self)
        if not (0 <= i <= n):
            raise IndexError(f"insertion slot {i} out of range for length {n}")
        if i == 0 and n > 0:
            raise IndexError("slot 0 only seeds an empty sequence")
        frame = _check_frame(frame)
        if n > 0 and frame.shape != self.frame_shape:
            raise ValueError(f"frame shape {frame.shape} != sequence shape {self.frame_shape}")
        if n == 0:
            return FrameSeq(frame[None])
        return FrameSeq(np.insert(self.frames, i, frame, axis=0))

    def remove(self, i: int) -> "FrameSeq":
        """Drop frame at 0-based position ``i`` (test helper, not a transport move)."""
        if not (0 <= i < len(self)):
            raise IndexError(f"position {i} out of range")
        return FrameSeq(np.delete(self.frames, i, axis=0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameSeq):
            return NotImplemented
        return self.frames.shape == other.frames.shape and bool(
            np.array_equal(self.frames, other.frames)
        )


# Augmented sequences: visible frames interleaved with blank slots.  Blanks are
# represented by None.
AugmentedSeq = tuple  # tuple of (np.ndarray | None)


def strip(slots, frame_shape=(0, 0, 0)) -> tuple[FrameSeq, tuple[int, ...]]:
    """Remove blanks from an augmented sequence.

    Returns the visible sequence plus the alignment: ``alignment[v]`` is the
    0-based slot index that visible frame ``v`` occupied.  Alignment is
    strictly increasing.  ``frame_shape`` is only consulted when every slot is
    blank (the shape cannot be inferred from an empty result).
    """
    visible = [(j, s) for j, s in enumerate(slots) if s is not None]
    alignment = tuple(j for j, _ in visible)
    if not visible:
        return FrameSeq.empty(frame_shape), ()
    seq = FrameSeq.from_frames([s for _, s in visible])
    return seq, alignment


def strip_mask(mask: np.ndarray) -> tuple[int, ...]:
    """Alignment of a boolean visibility mask: slot indices of the True entries."""
    mask = np.asarray(mask, dtype=bool)
    return tuple(int(j) for j in np.flatnonzero(mask))


@dataclass(frozen=True)
class TimeState:
    """Extended-time bookkeeping for a full-length target sequence.

    ``tau`` holds one extended time per target frame; ``tau_g`` is the
    extended global time.  Real times are the clipped values; states derive
    from ``tau``.
    """

    tau_g: float
    tau: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.float64)
        object.__setattr__(self, "tau", tau)
        if np.isnan(self.tau_g) or np.isnan(tau).any():
            raise ValueError("TimeState: NaN time")

    @property
    def t_g(self) -> float:
        return clip_time(self.tau_g)

    @property
    def t(self) -> np.ndarray:
        return clip_time(self.tau)

    @property
    def states(self) -> list[FrameState]:
        return frame_states(self.tau)

    @property
    def visible_mask(self) -> np.ndarray:
        return self.tau >= 0.0
