"""Generation loop: interleaved flow-matching steps and stochastic insertions.

Each outer step (i) advances every unfinished frame along its predicted
velocity, (ii) updates the global time tracker to the most-advanced generated
frame, and (iii) while the global time is below 1, samples frame insertions
slot by slot from the predicted rates scaled by the schedule hazard.  Inserted
frames enter as pure noise at time 0 and start flowing on the next step.
Finished (terminal) frames and context frames are frozen.

Per-frame clocks support a power reparameterization t = u**gamma: the solver
advances the coordinate u uniformly while the physical step in t grows with a
frame's age, concentrating work right after each insertion.

Models are duck-typed.  Anything with ``frame_shape`` and
``evaluate(X, t, ctx, cond_dropped) -> FieldOutput`` works; models that also
provide ``begin_run(rng)`` (the exact-coupling oracles) control insertion
contents and, in reconstruction mode, insertion schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import ContextSpec, FieldOutput
from .frames import FrameSeq
from .schedule import HAZARD_EDGE, Scheduler


@dataclass(frozen=True)
class SamplerConfig:
    h: float = 0.05  # solver-coordinate step; equals the physical step when gamma == 1
    n_start: int = 1
    thinning: str = "bernoulli"  # "bernoulli" | "poisson"
    exact_integral: bool = True
    w_s: float = 1.0  # insertion-rate guidance scale
    gamma: float = 1.0  # time-warp exponent, >= 1
    max_len: int = 64
    max_inserts_per_slot_step: int = 8
    seed: int = 0
    scheduler: Scheduler = field(default_factory=Scheduler)

    def __post_init__(self):
        if not (0.0 < self.h <= 1.0):
            raise ValueError("step size must lie in (0, 1]")
        if self.n_start < 1:
            raise ValueError("need at least one starting frame")
        if self.thinning not in ("bernoulli", "poisson"):
            raise ValueError(f"unknown thinning mode {self.thinning!r}")
        if self.w_s < 1.0:
            raise ValueError("guidance scale must be >= 1")
        if self.gamma < 1.0:
            raise ValueError("time-warp exponent must be >= 1")
        if self.max_len < self.n_start:
            raise ValueError("max_len must be >= n_start")
        if self.max_inserts_per_slot_step < 1:
            raise ValueError("max_inserts_per_slot_step must be >= 1")

    def step_bound(self) -> int:
        """Hard bound on outer iterations: twice the steps of the solver clock."""
        return 2 * math.ceil(1.0 / self.h) + 1


@dataclass(frozen=True)
class StepRecord:
    step: int
    t_g: float
    n_frames: int
    n_active: int  # frames actually denoised this step (t < 1 at step start)
    inserted_slots: tuple[int, ...]
    t_before: tuple[float, ...]
    t_after: tuple[float, ...]


@dataclass
class SampleTrace:
    records: list[StepRecord] = field(default_factory=list)
    truncated: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.records)

    def insertion_events(self) -> list[tuple[int, float]]:
        """(slot, global time) pairs across the whole run."""
        out = []
        for rec in self.records:
            out.extend((slot, rec.t_g) for slot in rec.inserted_slots)
        return out

    def active_counts(self) -> np.ndarray:
        return np.array([rec.n_active for rec in self.records], dtype=np.int64)


def time_warp(u: float, du: float, gamma: float) -> tuple[float, float]:
    """Physical time and step for one solver-coordinate advance: t = u**gamma."""
    if not (0.0 <= u <= u + du <= 1.0 + 1e-12):
        raise ValueError("solver coordinates must stay inside [0, 1]")
    if gamma < 1.0:
        raise ValueError("time-warp exponent must be >= 1")
    t = u**gamma
    dt = min(u + du, 1.0) ** gamma - t
    return t, dt


def rate_cfg(lambda_cond, lambda_uncond, w_s: float) -> np.ndarray:
    """Geometric rate guidance: cond**w * uncond**(1 - w), element-wise."""
    lc = np.asarray(lambda_cond, dtype=np.float64)
    lu = np.asarray(lambda_uncond, dtype=np.float64)
    if lc.shape != lu.shape:
        raise ValueError("guided rate vectors must have equal length")
    if (lc <= 0).any() or (lu <= 0).any():
        raise ValueError("rate guidance needs strictly positive rates")
    if w_s == 1.0:
        return lc.copy()
    return np.exp(w_s * np.log(lc) + (1.0 - w_s) * np.log(lu))


def _step_hazard_mass(scheduler: Scheduler, t_g: float, width: float, exact: bool) -> float:
    """Hazard mass for the step that ended at global time t_g.

    The interval [t_g - width, t_g] is clamped away from the divergence at 1;
    first-order mode returns width * hazard(t_g) instead of the integral.
    """
    hi = min(t_g, 1.0 - HAZARD_EDGE)
    lo = min(max(t_g - width, 0.0), hi)
    if exact:
        return scheduler.integrated_hazard(lo, hi - lo)
    return (hi - lo) * scheduler.hazard(hi)


def bernoulli_insertions(lam, t_g, h, scheduler: Scheduler, cfg: SamplerConfig, rng) -> np.ndarray:
    """Per-slot insertion indicators; at most one insertion per slot per step."""
    if t_g >= 1.0 - HAZARD_EDGE:
        raise ValueError("insertions are disabled at t_g >= 1")
    lam = np.asarray(lam, dtype=np.float64)
    mass = _step_hazard_mass(scheduler, t_g, h, cfg.exact_integral)
    if cfg.exact_integral:
        p = 1.0 - np.exp(-lam * mass)
    else:
        p = np.clip(lam * mass, 0.0, 1.0)
    return rng.uniform(size=lam.shape) < p


def poisson_insertions(lam, t_g, h, scheduler: Scheduler, cfg: SamplerConfig, rng) -> np.ndarray:
    """Per-slot insertion counts, allowing several insertions per slot per step."""
    if t_g >= 1.0 - HAZARD_EDGE:
        raise ValueError("insertions are disabled at t_g >= 1")
    lam = np.asarray(lam, dtype=np.float64)
    mass = _step_hazard_mass(scheduler, t_g, h, cfg.exact_integral)
    counts = rng.poisson(lam * mass)
    return np.minimum(counts, cfg.max_inserts_per_slot_step)


class _FieldRun:
    """Run adapter for plain field models: fresh-noise insertions, no schedule."""

    def __init__(self, model):
        self.model = model
        self.frame_shape = model.frame_shape

    def initial_frames(self, n_start, rng):
        return [rng.standard_normal(self.frame_shape) for _ in range(n_start)]

    def evaluate(self, X, t, ctx, cond_dropped):
        return self.model.evaluate(X, t, ctx, cond_dropped)

    def insertion_counts(self, t_g):
        return None

    def max_insertions(self, slot):
        return None

    def draw_insertions(self, slot, count, rng):
        return [rng.standard_normal(self.frame_shape) for _ in range(count)]


class _RunState:
    """Mutable state of one generation run (float64 internally)."""

    def __init__(self, model, cfg: SamplerConfig, ctx: ContextSpec | None, rng):
        self.cfg = cfg
        self.rng = rng
        ctx = ctx if ctx is not None else ContextSpec()
        if hasattr(model, "begin_run"):
            if not ctx.is_empty:
                raise ValueError("oracle-coupled runs are unconditional")
            self.run = model.begin_run(rng)
        else:
            self.run = _FieldRun(model)
        self.has_ctx = not ctx.is_empty
        shape = self.run.frame_shape

        frames: list[np.ndarray] = []
        u: list[float] = []
        is_ctx: list[bool] = []
        passive: list[bool] = []
        ctx_clean: list[np.ndarray | None] = []
        self._ctx_originals: list[np.ndarray] = []

        start = [np.asarray(f, dtype=np.float64) for f in self.run.initial_frames(cfg.n_start, rng)]
        if ctx.is_empty:
            noise_after = -1  # prepend
        else:
            actives = [i for i, c in enumerate(ctx.frames) if c.active]
            if not actives:
                raise ValueError("context must contain at least one active frame")
            noise_after = actives[0]
            for c in ctx.frames:
                if np.asarray(c.frame).shape != shape:
                    raise ValueError("context frame shape mismatch")

        for i, c in enumerate(ctx.frames):
            original = np.asarray(c.frame, dtype=np.float32)
            self._ctx_originals.append(original)
            frames.append(original.astype(np.float64))
            u.append(1.0)
            is_ctx.append(True)
            passive.append(not c.active)
            ctx_clean.append(original.astype(np.float64))
            if i == noise_after:
                for s in start:
                    frames.append(s)
                    u.append(0.0)
                    is_ctx.append(False)
                    passive.append(False)
                    ctx_clean.append(None)
        if ctx.is_empty:
            for s in start:
                frames.append(s)
                u.append(0.0)
                is_ctx.append(False)
                passive.append(False)
                ctx_clean.append(None)

        self.frames = frames
        self.u = np.array(u, dtype=np.float64)
        self.is_ctx = np.array(is_ctx, dtype=bool)
        self.passive = np.array(passive, dtype=bool)
        self.ctx_clean = ctx_clean
        self.trace = SampleTrace()
        self.step_idx = 0

    # -- views ---------------------------------------------------------------

    @property
    def t(self) -> np.ndarray:
        return self.u**self.cfg.gamma

    @property
    def t_g(self) -> float:
        gen = ~self.is_ctx
        return float(self.t[gen].max())

    def _ctx_channel(self) -> np.ndarray | None:
        if not self.has_ctx:
            return None
        chan = np.zeros((len(self.frames), *self.run.frame_shape), dtype=np.float64)
        for i, clean in enumerate(self.ctx_clean):
            if clean is not None:
                chan[i] = clean
        return chan

    def _sequence(self) -> FrameSeq:
        return FrameSeq(np.stack(self.frames).astype(np.float32))

    # -- one transport step ----------------------------------------------------

    def step(self) -> list[tuple[int, float]]:
        cfg = self.cfg
        t_before = self.t
        n_active = int((t_before < 1.0).sum())

        out = self.run.evaluate(self._sequence(), t_before, self._ctx_channel(), False)
        v = np.asarray(out.v, dtype=np.float64)
        lam = np.asarray(out.lam, dtype=np.float64)
        if v.shape[0] != len(self.frames) or lam.shape[0] != len(self.frames):
            raise RuntimeError("model output length does not match sequence length")
        if cfg.w_s != 1.0 and self.has_ctx:
            uncond = self.run.evaluate(self._sequence(), t_before, None, True)
            lam = rate_cfg(lam, np.asarray(uncond.lam, dtype=np.float64), cfg.w_s)

        t_g_prev = self.t_g
        # flow update: each unfinished frame advances by its own clamped step
        u_new = np.minimum(self.u + cfg.h, 1.0)
        t_new = u_new**cfg.gamma
        dt = t_new - t_before
        for i, step_i in enumerate(dt):
            if step_i > 0.0:
                self.frames[i] = self.frames[i] + step_i * v[i]
        self.u = u_new
        t_g = self.t_g

        events: list[tuple[int, float]] = []
        counts = self.run.insertion_counts(t_g)
        if counts is None:
            counts = {}
            if t_g < 1.0 - HAZARD_EDGE:
                if len(self.frames) >= cfg.max_len:
                    self.trace.truncated = True
                else:
                    width = t_g - t_g_prev
                    if cfg.thinning == "bernoulli":
                        fired = bernoulli_insertions(lam, t_g, width, cfg.scheduler, cfg, self.rng)
                        per_slot = fired.astype(np.int64)
                    else:
                        per_slot = poisson_insertions(lam, t_g, width, cfg.scheduler, cfg, self.rng)
                    per_slot[self.passive] = 0
                    counts = {j: int(c) for j, c in enumerate(per_slot) if c > 0}

        budget = cfg.max_len - len(self.frames)
        for j in sorted(counts, reverse=True):
            want = counts[j]
            allowed = min(want, budget)
            if allowed < want:
                self.trace.truncated = True
            if allowed <= 0:
                continue
            contents = self.run.draw_insertions(j, allowed, self.rng)
            budget -= len(contents)
            for k, content in enumerate(contents):
                pos = j + 1 + k
                self.frames.insert(pos, np.asarray(content, dtype=np.float64))
                self.u = np.insert(self.u, pos, 0.0)
                self.is_ctx = np.insert(self.is_ctx, pos, False)
                self.passive = np.insert(self.passive, pos, False)
                self.ctx_clean.insert(pos, None)
                events.append((j, t_g))

        self.trace.records.append(
            StepRecord(
                step=self.step_idx,
                t_g=t_g,
                n_frames=len(self.frames),
                n_active=n_active,
                inserted_slots=tuple(j for j, _ in events),
                t_before=tuple(t_before.tolist()),
                t_after=tuple(self.t.tolist()),
            )
        )
        self.step_idx += 1
        return events

    def finished(self) -> bool:
        return bool((self.t >= 1.0).all())

    def final_sequence(self) -> FrameSeq:
        stack = np.stack([f.astype(np.float32) for f in self.frames])
        # context frames are returned bit-identical to the provided arrays
        ctx_iter = iter(self._ctx_originals)
        for i, flag in enumerate(self.is_ctx):
            if flag:
                stack[i] = next(ctx_iter)
        return FrameSeq(stack)


def generate(
    model,
    cfg: SamplerConfig,
    ctx: ContextSpec | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[FrameSeq, SampleTrace]:
    """Run the full transport until every frame is finished.

    Returns the generated sequence (context frames verbatim at their
    positions) and the step-by-step trace.  Runs are deterministic given
    (model, cfg, ctx, rng/seed).
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    state = _RunState(model, cfg, ctx, rng)
    hard_cap = 4 * cfg.step_bound()
    while not state.finished():
        state.step()
        if state.step_idx > hard_cap:
            raise RuntimeError("sampler exceeded the termination bound safety cap")
    return state.final_sequence(), state.trace


def step(model, X: FrameSeq, t, cfg: SamplerConfig, rng: np.random.Generator):
    """One transport step on explicit state (no context); test/diagnostic hook.

    Returns (X', t', t_g', events).
    """
    t = np.asarray(t, dtype=np.float64)
    if not (t < 1.0).any():
        raise ValueError("no frame left to advance")
    state = _RunState(model, cfg, None, rng)
    state.frames = [f.astype(np.float64) for f in X.frames]
    state.u = np.power(t, 1.0 / cfg.gamma)
    state.is_ctx = np.zeros(len(X), dtype=bool)
    state.passive = np.zeros(len(X), dtype=bool)
    state.ctx_clean = [None] * len(X)
    events = state.step()
    return state.final_sequence(), state.t, state.t_g, events
