"""Exact conditional field for verification.

Given a target sequence, a coupled noise frame per target frame, and a reveal
delay per target frame, the conditional transport is known in closed form:
the velocity of a visible frame is constant along its linear path
(target - noise), and the true insertion rate of a visible slot equals its
pending count (the number of hidden target frames anchored to that slot).
Because the conditional velocity is constant, explicit Euler integration is
exact at any step size, so a sampler driven by this oracle must reproduce the
target sequence to rounding error.

Two sampling styles are supported:

- reconstruction (``ConditionalOracle``): insertions fire deterministically
  when the global time crosses each frame's reveal delay, reproducing the
  target length exactly;
- rate-driven (``OracleRateModel``): the oracle only reports pending counts
  as rates and lets the sampler's Bernoulli/Poisson thinning decide, which
  reproduces the target law only in the small-step limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldOutput
from .frames import FrameSeq
from .schedule import HAZARD_EDGE, Scheduler


@dataclass(frozen=True)
class ConditionalOracle:
    """Frozen coupling: target frames, per-frame noise, per-frame reveal delay.

    The first ``n_start`` delays are zero (starting frames).  All sampling
    state lives in per-run objects; the oracle itself is immutable.
    """

    target: FrameSeq
    noise: np.ndarray  # (n, H, W, C) float64
    offsets: np.ndarray  # (n,) float64, offsets[:n_start] == 0
    n_start: int = 1

    def __post_init__(self):
        n = len(self.target)
        if n < 1:
            raise ValueError("oracle needs a nonempty target")
        if self.noise.shape != self.target.frames.shape:
            raise ValueError("noise must match target shape")
        if self.offsets.shape != (n,):
            raise ValueError("need one offset per target frame")
        if not (1 <= self.n_start <= n):
            raise ValueError("n_start out of range")
        if np.any(self.offsets[: self.n_start] != 0.0):
            raise ValueError("starting frames must have zero offset")

    @classmethod
    def build(
        cls, target: FrameSeq, scheduler: Scheduler, n_start: int, rng: np.random.Generator
    ) -> "ConditionalOracle":
        n = len(target)
        noise = rng.standard_normal(target.frames.shape)
        offsets = scheduler.sample_offsets(n, n_start, rng)
        return cls(target=target, noise=noise, offsets=offsets, n_start=n_start)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.target.frame_shape

    def velocities(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        return self.target.frames[idx].astype(np.float64) - self.noise[idx]

    def field_at(self, visible_indices) -> FieldOutput:
        """Exact field for a given set of visible target indices (test hook)."""
        run = OracleRun(self, mode="rate", alignment=sorted(int(i) for i in visible_indices))
        return FieldOutput(v=self.velocities(run.alignment), lam=run.pending_counts().astype(np.float64))

    def begin_run(self, rng: np.random.Generator) -> "OracleRun":
        return OracleRun(self, mode="scheduled")


@dataclass(frozen=True)
class OracleRateModel:
    """Rate-only view of a coupling: thinning decides, pending counts cap it."""

    oracle: ConditionalOracle

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.oracle.frame_shape

    def begin_run(self, rng: np.random.Generator) -> "OracleRun":
        return OracleRun(self.oracle, mode="rate")


class OracleRun:
    """Per-run alignment state: which target index each visible position holds.

    ``alignment`` is sorted ascending, so the hidden frames anchored to
    visible position j are exactly the target indices strictly between
    alignment[j] and alignment[j+1] (or the end of the target).
    """

    def __init__(self, oracle: ConditionalOracle, mode: str, alignment=None):
        if mode not in ("scheduled", "rate"):
            raise ValueError(f"unknown oracle run mode {mode!r}")
        self.oracle = oracle
        self.mode = mode
        if alignment is None:
            alignment = list(range(oracle.n_start))
        self.alignment = list(alignment)
        if self.alignment != sorted(set(self.alignment)) or not self.alignment:
            raise ValueError("alignment must be nonempty, sorted, and unique")
        if self.alignment[0] != 0:
            raise ValueError("first target frame must be visible")
        self._due_threshold = -np.inf

    # -- pending bookkeeping ------------------------------------------------

    def _gap(self, slot: int) -> range:
        n = len(self.oracle.target)
        lo = self.alignment[slot]
        hi = self.alignment[slot + 1] if slot + 1 < len(self.alignment) else n
        return range(lo + 1, hi)

    def pending_counts(self) -> np.ndarray:
        return np.array([len(self._gap(j)) for j in range(len(self.alignment))], dtype=np.int64)

    def max_insertions(self, slot: int) -> int:
        return len(self._gap(slot))

    # -- field model interface ----------------------------------------------

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.oracle.frame_shape

    def initial_frames(self, n_start: int, rng) -> list[np.ndarray]:
        if n_start != self.oracle.n_start:
            raise ValueError(
                f"oracle was built with n_start={self.oracle.n_start}, sampler asked for {n_start}"
            )
        return [self.oracle.noise[i].copy() for i in range(n_start)]

    def evaluate(self, X: FrameSeq, t, ctx=None, cond_dropped: bool = False) -> FieldOutput:
        if len(X) != len(self.alignment):
            raise ValueError("sequence length does not match oracle alignment")
        return FieldOutput(
            v=self.oracle.velocities(self.alignment),
            lam=self.pending_counts().astype(np.float64),
        )

    def insertion_counts(self, t_g: float) -> dict[int, int] | None:
        """Scheduled mode: pending indices whose reveal delay has been crossed."""
        if self.mode != "scheduled":
            return None
        self._due_threshold = t_g
        counts: dict[int, int] = {}
        for j in range(len(self.alignment)):
            due = sum(1 for m in self._gap(j) if self.oracle.offsets[m] <= t_g)
            if due:
                counts[j] = due
        return counts

    def draw_insertions(self, slot: int, count: int, rng: np.random.Generator) -> list[np.ndarray]:
        """Reveal ``count`` hidden frames in the given slot.

        Returns the coupled noise contents in placement order (ascending
        target index); updates the alignment.  In rate mode the request is
        capped at the slot's pending count and the revealed indices are drawn
        uniformly without replacement; in scheduled mode the due indices are
        revealed exactly.
        """
        gap = list(self._gap(slot))
        if self.mode == "scheduled":
            due = [m for m in gap if self.oracle.offsets[m] <= self._due_threshold]
            if len(due) < count:
                raise RuntimeError("scheduled insertion count changed between query and draw")
            chosen = due[:count]  # budget caps may ask for fewer than are due
        else:
            count = min(count, len(gap))
            if count == 0:
                return []
            chosen = sorted(rng.choice(gap, size=count, replace=False).tolist())
        for k, m in enumerate(chosen):
            self.alignment.insert(slot + 1 + k, int(m))
        return [self.oracle.noise[m].copy() for m in chosen]


def oracle_rate_scaled(run_or_counts, t_g: float, scheduler: Scheduler) -> np.ndarray:
    """Full jump-process rate per slot: hazard(t_g) times the pending count.

    The sampler applies the hazard itself, so this closed form exists for
    verification only.  Rejects t_g at or beyond the hazard divergence.
    """
    if t_g >= 1.0 - HAZARD_EDGE:
        raise ValueError("rate diverges at t_g >= 1")
    if isinstance(run_or_counts, OracleRun):
        counts = run_or_counts.pending_counts()
    else:
        counts = np.asarray(run_or_counts, dtype=np.float64)
    return scheduler.hazard(t_g) * counts.astype(np.float64)
