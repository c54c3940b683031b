"""Binary checkpoint format for the reference network.

Layout (all integers little-endian):

    magic            4 bytes  b"FJCP"
    format version   u32
    hyperparam count u32
    per hyperparam:  name length u32, name (utf-8), value i64
    tensor count     u32
    per tensor:      name length u32, name (utf-8), ndim u32,
                     dims u32 * ndim, data offset u64
    tensor data      raw float32 little-endian, in manifest order

Round trips are byte-exact: saving a loaded checkpoint reproduces the file.
"""

from __future__ import annotations

import struct

import numpy as np
import torch

from .net import NetConfig, ReferenceNet

MAGIC = b"FJCP"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


_ARCH_KEYS = ("frame_h", "frame_w", "frame_c", "hidden", "blocks", "mlp_ratio")


def _arch_hparams(cfg: NetConfig) -> dict[str, int]:
    h, w, c = cfg.frame_shape
    return {
        "frame_h": h,
        "frame_w": w,
        "frame_c": c,
        "hidden": cfg.hidden,
        "blocks": cfg.blocks,
        "mlp_ratio": cfg.mlp_ratio,
    }


def save_checkpoint(path, net: ReferenceNet, step: int = 0) -> None:
    hparams = dict(_arch_hparams(net.cfg))
    hparams["step"] = int(step)
    tensors = [(name, p.detach().to(torch.float32).cpu().numpy()) for name, p in net.state_dict().items()]

    header = bytearray()
    header += MAGIC
    header += struct.pack("<I", FORMAT_VERSION)
    header += struct.pack("<I", len(hparams))
    for name, value in hparams.items():
        raw = name.encode("utf-8")
        header += struct.pack("<I", len(raw)) + raw + struct.pack("<q", int(value))
    header += struct.pack("<I", len(tensors))
    offset = 0
    for name, arr in tensors:
        raw = name.encode("utf-8")
        header += struct.pack("<I", len(raw)) + raw
        header += struct.pack("<I", arr.ndim)
        for d in arr.shape:
            header += struct.pack("<I", d)
        header += struct.pack("<Q", offset)
        offset += arr.size * 4

    with open(path, "wb") as f:
        f.write(bytes(header))
        for _, arr in tensors:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"checkpoint ends early (needed {n} bytes at offset {self.pos})"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def name(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def read_checkpoint(path) -> tuple[dict[str, int], dict[str, np.ndarray]]:
    """Parse a checkpoint into (hyperparams, tensors) without building a net."""
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointMagicError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}")
    hparams = {}
    for _ in range(r.u32()):
        name = r.name()
        hparams[name] = r.i64()
    manifest = []
    for _ in range(r.u32()):
        name = r.name()
        ndim = r.u32()
        shape = tuple(r.u32() for _ in range(ndim))
        off = r.u64()
        manifest.append((name, shape, off))
    data_start = r.pos
    tensors = {}
    for name, shape, off in manifest:
        numel = int(np.prod(shape, dtype=np.int64)) if shape else 1
        lo = data_start + off
        hi = lo + numel * 4
        if hi > len(data):
            raise CheckpointTruncatedError(f"tensor {name!r} data is truncated")
        tensors[name] = np.frombuffer(data[lo:hi], dtype="<f4").reshape(shape).copy()
    return hparams, tensors


def load_checkpoint(path, expect_cfg: NetConfig | None = None) -> tuple[ReferenceNet, int]:
    """Rebuild a net from a checkpoint; returns (net, training step).

    When ``expect_cfg`` is given, the stored architecture must match it.
    """
    hparams, tensors = read_checkpoint(path)
    missing = [k for k in _ARCH_KEYS if k not in hparams]
    if missing:
        raise CheckpointError(f"checkpoint lacks architecture fields {missing}")
    cfg = NetConfig(
        frame_shape=(hparams["frame_h"], hparams["frame_w"], hparams["frame_c"]),
        hidden=hparams["hidden"],
        blocks=hparams["blocks"],
        mlp_ratio=hparams["mlp_ratio"],
    )
    if expect_cfg is not None and cfg != expect_cfg:
        raise CheckpointShapeError(f"architecture mismatch: file has {cfg}, expected {expect_cfg}")
    net = ReferenceNet(cfg)
    state = net.state_dict()
    if set(state.keys()) != set(tensors.keys()):
        raise CheckpointShapeError("tensor manifest does not match the architecture")
    for name, arr in tensors.items():
        if tuple(state[name].shape) != arr.shape:
            raise CheckpointShapeError(
                f"tensor {name!r} has shape {arr.shape}, net expects {tuple(state[name].shape)}"
            )
        state[name] = torch.from_numpy(arr)
    net.load_state_dict(state)
    return net, int(hparams.get("step", 0))
