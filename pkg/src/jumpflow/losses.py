"""Training objective: Poisson insertion loss plus flow-matching velocity loss.

The insertion head is trained with the Poisson negative log-likelihood
``sum_j (lambda_j - k_j * log lambda_j)`` against the per-slot pending counts
k_j (the number of not-yet-inserted target frames whose nearest visible frame
to the left is j).  The time-dependent hazard prefactor is dropped by default
for stability; the weighted form is available behind ``elbo_weighted``, which
scales the log term by the hazard at the snapshot's global time (the linear
term is left unweighted so the objective stays finite for fully revealed
snapshots).

The velocity head is trained with the rectified-flow target x1 - x0, reduced
as a mean over all *flowing* frames (terminal and deleted frames are masked
out).  Reductions are accumulated in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


def _as_tensor(x, dtype=torch.float64) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


@dataclass
class LossReport:
    """Scalar loss terms for one snapshot (torch scalars when gradients flow)."""

    insertion_nll: torch.Tensor
    velocity_mse: torch.Tensor
    active_frame_count: int
    total: torch.Tensor

    def floats(self) -> tuple[float, float, float]:
        return float(self.insertion_nll), float(self.velocity_mse), float(self.total)


def pending_counts(visible_mask) -> np.ndarray:
    """Per-visible-slot pending counts from a full-length visibility mask.

    ``k[j]`` counts the hidden entries between the j-th visible entry and the
    next visible entry (or the end of the mask).  The first entry must be
    visible so every hidden frame has a visible left neighbor.
    """
    mask = np.asarray(visible_mask, dtype=bool)
    if mask.ndim != 1 or mask.size == 0:
        raise ValueError("visible_mask must be a nonempty 1-D boolean array")
    if not mask[0]:
        raise ValueError("first frame must be visible (unanchored hidden prefix)")
    visible_idx = np.flatnonzero(mask)
    bounds = np.append(visible_idx, mask.size)
    return (np.diff(bounds) - 1).astype(np.int64)


def insertion_loss(lam, k, hazard_weight: float | None = None) -> torch.Tensor:
    """Poisson NLL ``sum_j (lambda_j - k_j log lambda_j)`` over slots.

    ``hazard_weight`` (optional) multiplies the log term, giving the
    ELBO-weighted variant.  Rejects nonpositive rates wherever k_j > 0.
    """
    lam_t = _as_tensor(lam)
    k_t = _as_tensor(k)
    if lam_t.shape != k_t.shape:
        raise ValueError(f"shape mismatch: lambda {tuple(lam_t.shape)} vs k {tuple(k_t.shape)}")
    if torch.isnan(lam_t).any():
        raise ValueError("insertion_loss: NaN rate")
    positive_needed = k_t > 0
    if (lam_t[positive_needed] <= 0).any():
        raise ValueError("insertion_loss: nonpositive rate where pending count > 0")
    # 0 * log(lambda) := 0 when k_j = 0; the linear term always remains.
    log_term = torch.zeros_like(lam_t)
    if positive_needed.any():
        log_term = torch.where(
            positive_needed, k_t * torch.log(torch.clamp(lam_t, min=1e-300)), log_term
        )
    if hazard_weight is not None:
        log_term = hazard_weight * log_term
    return (lam_t - log_term).sum()


def velocity_loss(v_pred, x1, x0, active_mask) -> torch.Tensor:
    """Mean over active frames of the squared error against x1 - x0.

    Frames are the leading axis; the per-frame error is the full squared norm
    over the frame's entries.  Rejects an empty active set.
    """
    v = _as_tensor(v_pred)
    target = _as_tensor(x1) - _as_tensor(x0)
    return velocity_loss_to_target(v, target, active_mask)


def velocity_loss_to_target(v_pred, target, active_mask) -> torch.Tensor:
    v = _as_tensor(v_pred)
    tgt = _as_tensor(target)
    mask = _as_tensor(active_mask, dtype=torch.bool)
    if v.shape != tgt.shape:
        raise ValueError(f"shape mismatch: v {tuple(v.shape)} vs target {tuple(tgt.shape)}")
    if mask.shape[0] != v.shape[0]:
        raise ValueError("active_mask length must match frame count")
    n_active = int(mask.sum())
    if n_active == 0:
        raise ValueError("velocity_loss: no active frames")
    err = (v - tgt).reshape(v.shape[0], -1)
    per_frame = (err**2).sum(dim=1)
    return per_frame[mask].sum() / n_active


def total_loss(out, snapshot, w_ins: float = 1.0, elbo_weighted: bool = False) -> LossReport:
    """Combined objective for one training snapshot.

    ``out`` carries per-visible-frame velocities ``v`` and rates ``lam``
    (torch tensors keep gradients; numpy is accepted for test oracles).
    """
    hazard_weight = snapshot.hazard_at_tg if elbo_weighted else None
    ins = insertion_loss(out.lam, snapshot.pending, hazard_weight=hazard_weight)
    vel = velocity_loss_to_target(
        _flatten_frames(out.v), _flatten_frames(snapshot.velocity_targets), snapshot.flowing_mask
    )
    total = w_ins * ins + vel
    if not torch.isfinite(total):
        raise FloatingPointError("total_loss is not finite")
    return LossReport(
        insertion_nll=ins,
        velocity_mse=vel,
        active_frame_count=int(np.asarray(snapshot.flowing_mask).sum()),
        total=total,
    )


def _flatten_frames(frames):
    t = _as_tensor(frames)
    return t.reshape(t.shape[0], -1)
