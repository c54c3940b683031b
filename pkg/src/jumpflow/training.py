"""Snapshot construction and the optimization loop.

A training snapshot freezes one noisy view of a target video: sampled
extended times, hidden frames stripped, visible frames noised along the
linear path, pending counts per visible slot, and (optionally) a clean prefix
of context frames pinned at time 1 exactly as the sampler pins them.  With
probability ``cond_dropout_prob`` the context is dropped entirely, training
the unconditional branch used by rate guidance.

Batches mix video lengths; the velocity loss is reduced as a mean over all
flowing frames in the batch and the insertion loss as a mean over all visible
slots in the batch, so short videos are not over-weighted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .config import LossConfig, TrainConfig
from .frames import FrameSeq
from .losses import pending_counts
from .net import ReferenceNet
from .schedule import HAZARD_EDGE, GlobalTimeDist, Scheduler, sample_training_times


@dataclass
class TrainingSnapshot:
    frames: np.ndarray  # (m, H, W, C) float32, noised visible frames
    t: np.ndarray  # (m,) float64 per-frame times
    velocity_targets: np.ndarray  # (m, H, W, C) float64, x1 - x0 (zeros where not flowing)
    flowing_mask: np.ndarray  # (m,) bool
    pending: np.ndarray  # (m,) int64 per-slot pending counts
    ctx_channel: np.ndarray | None  # (m, H, W, C) float32 aligned clean context
    cond_dropped: bool
    tau_g: float
    hazard_at_tg: float

    def __len__(self) -> int:
        return self.frames.shape[0]


def make_snapshot(
    video: FrameSeq,
    scheduler: Scheduler,
    dist: GlobalTimeDist,
    cfg: TrainConfig,
    rng: np.random.Generator,
    max_resamples: int = 10_000,
) -> TrainingSnapshot:
    n = len(video)
    if n < 1:
        raise ValueError("empty video")

    use_ctx = cfg.ctx_frames_max > 0 and n >= 2
    cond_dropped = bool(use_ctx and rng.uniform() < cfg.cond_dropout_prob)
    n_ctx = 0
    if use_ctx and not cond_dropped:
        n_ctx = int(rng.integers(1, min(cfg.ctx_frames_max, n - 1) + 1))

    for _ in range(max_resamples):
        times = sample_training_times(scheduler, dist, n, cfg.n_start, rng)
        tau = times.tau.copy()
        tau[:n_ctx] = 1.0  # context prefix is pinned clean, matching the sampler
        flowing_full = (tau >= 0.0) & (tau < 1.0)
        if flowing_full.any():
            break
    else:
        raise RuntimeError("could not sample a snapshot with a flowing frame")

    visible = tau >= 0.0
    t_full = np.clip(tau, 0.0, 1.0)
    x1 = video.frames.astype(np.float64)
    x0 = rng.standard_normal(x1.shape)

    t_vis = t_full[visible]
    x1_vis = x1[visible]
    x0_vis = x0[visible]
    noised = t_vis[:, None, None, None] * x1_vis + (1.0 - t_vis)[:, None, None, None] * x0_vis

    targets = x1_vis - x0_vis
    flowing = flowing_full[visible]
    targets[~flowing] = 0.0

    ctx_channel = None
    if n_ctx > 0:
        ctx_channel = np.zeros_like(video.frames)
        ctx_channel[:n_ctx] = video.frames[:n_ctx]  # prefix frames are visible at positions 0..n_ctx-1
        ctx_channel = ctx_channel[visible]

    t_g = float(np.clip(times.tau_g, 0.0, 1.0))
    hazard_at = scheduler.hazard(t_g) if t_g < 1.0 - HAZARD_EDGE else 0.0

    return TrainingSnapshot(
        frames=noised.astype(np.float32),
        t=t_vis,
        velocity_targets=targets,
        flowing_mask=flowing,
        pending=pending_counts(visible),
        ctx_channel=ctx_channel,
        cond_dropped=cond_dropped,
        tau_g=float(times.tau_g),
        hazard_at_tg=float(hazard_at),
    )


def collate(snapshots, frame_dim: int):
    """Pad a list of snapshots into batch tensors (float32, bool masks)."""
    b = len(snapshots)
    n_max = max(len(s) for s in snapshots)
    x = torch.zeros(b, n_max, frame_dim)
    ctx = torch.zeros(b, n_max, frame_dim)
    t = torch.zeros(b, n_max)
    frame_mask = torch.zeros(b, n_max, dtype=torch.bool)
    flowing = torch.zeros(b, n_max, dtype=torch.bool)
    targets = torch.zeros(b, n_max, frame_dim, dtype=torch.float64)
    pending = torch.zeros(b, n_max, dtype=torch.float64)
    hazard = torch.zeros(b)
    for i, s in enumerate(snapshots):
        m = len(s)
        x[i, :m] = torch.from_numpy(s.frames.reshape(m, -1))
        if s.ctx_channel is not None:
            ctx[i, :m] = torch.from_numpy(s.ctx_channel.reshape(m, -1))
        t[i, :m] = torch.from_numpy(s.t.astype(np.float32))
        frame_mask[i, :m] = True
        flowing[i, :m] = torch.from_numpy(s.flowing_mask)
        targets[i, :m] = torch.from_numpy(s.velocity_targets.reshape(m, -1))
        pending[i, :m] = torch.from_numpy(s.pending.astype(np.float64))
        hazard[i] = s.hazard_at_tg
    return x, ctx, t, frame_mask, flowing, targets, pending, hazard


def batch_loss(net: ReferenceNet, snapshots, loss_cfg: LossConfig):
    """Batch objective: mean slot NLL (insertion) plus mean flowing-frame MSE."""
    x, ctx, t, frame_mask, flowing, targets, pending, hazard = collate(
        snapshots, net.cfg.frame_dim
    )
    v, lam = net.forward(x, ctx, t, frame_mask)
    lam64 = lam.to(torch.float64)
    log_term = pending * torch.log(torch.clamp(lam64, min=1e-300))
    if loss_cfg.elbo_weighted:
        log_term = hazard.to(torch.float64)[:, None] * log_term
    per_slot = lam64 - log_term
    n_slots = int(frame_mask.sum())
    ins = per_slot[frame_mask].sum() / n_slots

    err = (v.to(torch.float64) - targets) ** 2
    per_frame = err.sum(dim=-1)
    n_flowing = int(flowing.sum())
    if n_flowing == 0:
        raise ValueError("batch has no flowing frames")
    vel = per_frame[flowing].sum() / n_flowing

    total = loss_cfg.w_ins * ins + vel
    return total, ins, vel, n_flowing


def make_optimizer(net: ReferenceNet, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(net.parameters(), lr=cfg.lr)
    return torch.optim.SGD(net.parameters(), lr=cfg.lr)


def train_step(net, snapshots, optimizer, loss_cfg: LossConfig):
    """One gradient step on a batch of snapshots; returns the loss scalars."""
    if not snapshots:
        raise ValueError("empty batch")
    total, ins, vel, n_flowing = batch_loss(net, snapshots, loss_cfg)
    if not torch.isfinite(total):
        raise FloatingPointError(
            f"non-finite training loss (insertion={ins.item()}, velocity={vel.item()})"
        )
    optimizer.zero_grad()
    total.backward()
    optimizer.step()
    return total.item(), ins.item(), vel.item(), n_flowing


def train_loop(
    net: ReferenceNet,
    videos,
    train_cfg: TrainConfig,
    scheduler: Scheduler,
    dist: GlobalTimeDist,
    loss_cfg: LossConfig,
    start_step: int = 0,
    log_every: int = 50,
    on_log=None,
):
    """Run the configured number of steps; returns [(step, ins, vel)] log rows."""
    if not videos:
        raise ValueError("no training videos")
    optimizer = make_optimizer(net, train_cfg)
    data_rng = np.random.default_rng(np.random.SeedSequence(entropy=train_cfg.seed, spawn_key=(0,)))
    snap_rng = np.random.default_rng(np.random.SeedSequence(entropy=train_cfg.seed, spawn_key=(1,)))
    torch.manual_seed(train_cfg.seed)
    log: list[tuple[int, float, float]] = []
    for step in range(start_step, start_step + train_cfg.steps):
        picks = data_rng.integers(0, len(videos), size=train_cfg.batch_size)
        batch = [
            make_snapshot(videos[int(i)], scheduler, dist, train_cfg, snap_rng) for i in picks
        ]
        _, ins, vel, _ = train_step(net, batch, optimizer, loss_cfg)
        if (step + 1) % log_every == 0 or step == start_step:
            log.append((step + 1, ins, vel))
            if on_log is not None:
                on_log(step + 1, ins, vel)
    return log
