"""Evaluation metrics: length histograms, mode mass, context fidelity."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .frames import FrameSeq


@dataclass(frozen=True)
class LengthHistogram:
    counts: dict[int, int]

    @classmethod
    def from_videos(cls, videos) -> "LengthHistogram":
        return cls(dict(Counter(len(v) for v in videos)))

    @classmethod
    def from_lengths(cls, lengths) -> "LengthHistogram":
        return cls(dict(Counter(int(x) for x in lengths)))

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def mass(self, length: int) -> float:
        return self.counts.get(length, 0) / self.total

    def tv_distance(self, other: "LengthHistogram") -> float:
        """Total variation distance, 0.5 * sum |p - q| over the union support."""
        if self.total == 0 or other.total == 0:
            raise ValueError("empty histogram")
        support = set(self.counts) | set(other.counts)
        return 0.5 * sum(abs(self.mass(k) - other.mass(k)) for k in support)

    def mode_mass(self, modes, tol: int = 1) -> dict[int, float]:
        """Fraction of samples within +-tol frames of each mode."""
        out = {}
        for m in modes:
            out[m] = sum(self.mass(k) for k in self.counts if abs(k - m) <= tol)
        return out


@dataclass(frozen=True)
class EvalReport:
    tv_distance: float
    mode_masses: dict[int, float]
    mode_mass_total: float
    mean_length: float
    std_length: float
    context_ok: bool | None
    step_counts: tuple[int, ...] = ()

    def as_dict(self) -> dict:
        return {
            "tv_distance": self.tv_distance,
            "mode_masses": {str(k): v for k, v in self.mode_masses.items()},
            "mode_mass_total": self.mode_mass_total,
            "mean_length": self.mean_length,
            "std_length": self.std_length,
            "context_ok": self.context_ok,
            "step_counts": list(self.step_counts),
        }


def contains_context(video: FrameSeq, ctx_frames) -> bool:
    """True when the context frames appear in order, bit-identical, in the video."""
    pos = 0
    for ctx in ctx_frames:
        ctx = np.asarray(ctx, dtype=np.float32)
        while pos < len(video):
            if video.frames[pos].shape == ctx.shape and np.array_equal(video.frames[pos], ctx):
                pos += 1
                break
            pos += 1
        else:
            return False
    return True


def evaluate_lengths(
    generated,
    reference,
    modes=(15, 20, 25, 30),
    ctx_frames=None,
    step_counts=(),
) -> EvalReport:
    if not generated or not reference:
        raise ValueError("need nonempty generated and reference sets")
    gen_hist = LengthHistogram.from_videos(generated)
    ref_hist = LengthHistogram.from_videos(reference)
    lengths = np.array([len(v) for v in generated], dtype=np.float64)
    masses = gen_hist.mode_mass(modes)
    context_ok = None
    if ctx_frames is not None:
        context_ok = all(contains_context(v, ctx_frames) for v in generated)
    return EvalReport(
        tv_distance=gen_hist.tv_distance(ref_hist),
        mode_masses=masses,
        mode_mass_total=float(sum(masses.values())),
        mean_length=float(lengths.mean()),
        std_length=float(lengths.std()),
        context_ok=context_ok,
        step_counts=tuple(int(s) for s in step_counts),
    )
