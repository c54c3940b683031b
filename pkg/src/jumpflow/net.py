"""Trainable reference network: per-frame-time-conditioned residual blocks.

Frames are flattened to feature vectors and processed by a small stack of
blocks, each combining single-head bidirectional attention over frames with a
per-frame MLP.  Per-frame times enter through a sinusoidal embedding that
modulates every block (scale/shift/gate, zero-initialized so blocks start as
identities).  The input channels are doubled: the first half carries the
noisy frame, the second half the aligned clean context frame or zeros.

Two heads read out the trunk: a dense linear velocity head, and a rate head
that concatenates a shared learnable read-out token to each frame's features
before a small MLP with an exponential activation, keeping rates strictly
positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .fields import ContextSpec, FieldOutput
from .frames import FrameSeq


@dataclass(frozen=True)
class NetConfig:
    frame_shape: tuple[int, int, int] = (3, 3, 3)
    hidden: int = 64
    blocks: int = 4
    mlp_ratio: int = 4

    @property
    def frame_dim(self) -> int:
        h, w, c = self.frame_shape
        return h * w * c


def sinusoidal_embedding(t: torch.Tensor, dim: int, max_period: float = 1e4) -> torch.Tensor:
    """Standard sinusoidal features of t (scaled by 1000), last dim = dim."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=t.dtype, device=t.device) / half
    )
    args = t.unsqueeze(-1) * 1000.0 * freqs
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


def _modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1.0 + scale) + shift


class _Block(nn.Module):
    def __init__(self, dim: int, mlp_ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.attn_out = nn.Linear(dim, dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim), nn.SiLU(), nn.Linear(mlp_ratio * dim, dim)
        )
        self.ada = nn.Linear(dim, 6 * dim)
        nn.init.zeros_(self.ada.weight)
        nn.init.zeros_(self.ada.bias)

    def forward(self, h: torch.Tensor, temb: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        s1, b1, g1, s2, b2, g2 = self.ada(temb).chunk(6, dim=-1)
        x = _modulate(self.norm1(h), b1, s1)
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
        scores = scores.masked_fill(~frame_mask[:, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        mixed = self.attn_out(attn @ v) * frame_mask.unsqueeze(-1)
        h = h + g1 * mixed
        x = _modulate(self.norm2(h), b2, s2)
        h = h + g2 * self.mlp(x) * frame_mask.unsqueeze(-1)
        return h


class ReferenceNet(nn.Module):
    """Field model over padded batches; also exposes a numpy single-sequence API."""

    def __init__(self, cfg: NetConfig, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.cfg = cfg
        dim = cfg.hidden
        feat = cfg.frame_dim
        self.in_proj = nn.Linear(2 * feat, dim)
        self.time_mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))
        self.blocks = nn.ModuleList(_Block(dim, cfg.mlp_ratio) for _ in range(cfg.blocks))
        self.final_norm = nn.LayerNorm(dim, elementwise_affine=False)
        self.velocity_head = nn.Linear(dim, feat)
        nn.init.zeros_(self.velocity_head.weight)
        nn.init.zeros_(self.velocity_head.bias)
        self.rate_token = nn.Parameter(torch.randn(dim) * 0.02)
        self.rate_mlp = nn.Sequential(nn.Linear(2 * dim, dim), nn.SiLU(), nn.Linear(dim, 1))
        nn.init.zeros_(self.rate_mlp[-1].weight)
        nn.init.zeros_(self.rate_mlp[-1].bias)

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.cfg.frame_shape

    def forward(
        self,
        x: torch.Tensor,  # (B, N, F) noisy frames, flattened
        ctx: torch.Tensor,  # (B, N, F) aligned clean context or zeros
        t: torch.Tensor,  # (B, N) per-frame times
        frame_mask: torch.Tensor,  # (B, N) True on real frames
    ) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.in_proj(torch.cat([x, ctx], dim=-1))
        temb = self.time_mlp(sinusoidal_embedding(t, self.cfg.hidden))
        for block in self.blocks:
            h = block(h, temb, frame_mask)
        h = self.final_norm(h)
        v = self.velocity_head(h)
        token = self.rate_token.to(h.dtype).expand(*h.shape[:-1], -1)
        lam = torch.exp(self.rate_mlp(torch.cat([h, token], dim=-1)).squeeze(-1))
        return v, lam

    # -- numpy single-sequence interface (sampling / verification) -----------

    def evaluate(self, X: FrameSeq, t, ctx=None, cond_dropped: bool = False) -> FieldOutput:
        """Evaluate one sequence; ctx may be a ContextSpec or an aligned array."""
        n = len(X)
        if n < 1:
            raise ValueError("need at least one frame")
        t = np.asarray(t, dtype=np.float64)
        if t.shape != (n,):
            raise ValueError("per-frame time vector must match sequence length")
        feat = self.cfg.frame_dim
        ctx_flat = np.zeros((n, feat), dtype=np.float32)
        if ctx is not None and not cond_dropped:
            if isinstance(ctx, ContextSpec):
                for c in ctx.frames:
                    if not (0 <= c.position < n):
                        raise ValueError("context position outside sequence")
                    ctx_flat[c.position] = np.asarray(c.frame, dtype=np.float32).reshape(-1)
            else:
                ctx_arr = np.asarray(ctx, dtype=np.float32)
                if ctx_arr.shape[0] != n:
                    raise ValueError("aligned context length mismatch")
                ctx_flat = ctx_arr.reshape(n, feat)
        dtype = next(self.parameters()).dtype
        with torch.no_grad():
            x = torch.as_tensor(X.frames.reshape(n, feat), dtype=dtype).unsqueeze(0)
            c = torch.as_tensor(ctx_flat, dtype=dtype).unsqueeze(0)
            tt = torch.as_tensor(t, dtype=dtype).unsqueeze(0)
            mask = torch.ones(1, n, dtype=torch.bool)
            v, lam = self.forward(x, c, tt, mask)
        v_np = v[0].to(torch.float64).numpy().reshape(n, *self.cfg.frame_shape)
        lam_np = lam[0].to(torch.float64).numpy()
        return FieldOutput(v=v_np, lam=lam_np)
