"""Model I/O contract shared by the trainable net and the exact oracle.

A field model maps a sequence of frames plus per-frame times to a per-frame
velocity and a per-frame nonnegative insertion rate (the rate owns the slot
immediately to the frame's right).  Conditioning enters as *context frames*:
clean frames pinned at given relative positions.  Active context frames allow
insertions in their slot, passive ones forbid them, which is enough to express
first-frame continuation, interpolation, and unconditional generation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import FrameSeq


@dataclass(frozen=True)
class FieldOutput:
    """Per-frame velocities ``v`` (n, H, W, C) and insertion rates ``lam`` (n,).

    Arrays may be numpy (sampling/tests) or torch tensors (training, so the
    loss can backpropagate); numpy inputs are validated eagerly.
    """

    v: object
    lam: object

    def __post_init__(self):
        if isinstance(self.v, np.ndarray) and isinstance(self.lam, np.ndarray):
            if self.v.shape[0] != self.lam.shape[0]:
                raise ValueError("velocity/rate length mismatch")
            if not np.isfinite(self.v).all() or not np.isfinite(self.lam).all():
                raise ValueError("FieldOutput contains non-finite values")
            if (self.lam < 0).any():
                raise ValueError("insertion rates must be nonnegative")

    def __len__(self) -> int:
        return self.lam.shape[0]


@dataclass(frozen=True)
class ContextFrame:
    position: int
    frame: np.ndarray
    active: bool = True


@dataclass(frozen=True)
class ContextSpec:
    """Ordered conditioning frames; positions are strictly increasing."""

    frames: tuple[ContextFrame, ...] = ()

    def __post_init__(self):
        positions = [c.position for c in self.frames]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("context positions must be strictly increasing")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def is_empty(self) -> bool:
        return not self.frames


def unconditional() -> ContextSpec:
    return ContextSpec()


def first_frame(frame: np.ndarray) -> ContextSpec:
    """Continue from a single given frame (insertions allowed to its right)."""
    return ContextSpec((ContextFrame(0, np.asarray(frame), active=True),))


def prefix(frames) -> ContextSpec:
    """Continue from a clean prefix of frames, all active."""
    return ContextSpec(
        tuple(ContextFrame(i, np.asarray(f), active=True) for i, f in enumerate(frames))
    )


def interpolation(frames) -> ContextSpec:
    """Fill in between given frames: all active except the last, which is
    passive so nothing is appended after the final frame."""
    frames = list(frames)
    if len(frames) < 2:
        raise ValueError("interpolation needs at least two context frames")
    return ContextSpec(
        tuple(
            ContextFrame(i, np.asarray(f), active=(i < len(frames) - 1))
            for i, f in enumerate(frames)
        )
    )


def evaluate(model, X: FrameSeq, t, ctx: ContextSpec | None = None, cond_dropped: bool = False):
    """Uniform entry point for field models (net, oracle, or test stubs)."""
    return model.evaluate(X, np.asarray(t, dtype=np.float64), ctx, cond_dropped)
