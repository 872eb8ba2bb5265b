"""Binary weight checkpoints.

Layout, all integers little-endian:

    magic  b"SRFB"
    u32    format version (currently 1)
    u32*6  scale, iterations, groups, base_channels, in_channels, out_channels
    u32    flag bits: share_weights, tie_loss_every_iteration,
           lr_input_every_iteration, use_updown_layers, use_dense_skips
    u32    entry count
    per entry:
      u16      identifier byte length, then UTF-8 identifier
      u8       rank, then u32 per dim
      float32  payload, C order

Entries are written sorted by identifier, so equal weight sets produce
byte-identical files.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .model import ModelConfig

MAGIC = b"SRFB"
VERSION = 1

_FLAGS = ("share_weights", "tie_loss_every_iteration", "lr_input_every_iteration",
          "use_updown_layers", "use_dense_skips")


class CheckpointError(Exception):
    """Malformed or truncated checkpoint file."""


def checkpoint_save(weights: dict, config: ModelConfig, path: str) -> None:
    flags = 0
    for bit, name in enumerate(_FLAGS):
        if getattr(config, name):
            flags |= 1 << bit
    blob = [MAGIC, struct.pack("<8I", VERSION, config.scale, config.iterations,
                               config.groups, config.base_channels, config.in_channels,
                               config.out_channels, flags),
            struct.pack("<I", len(weights))]
    for name in sorted(weights):
        w = np.ascontiguousarray(weights[name], dtype="<f4")
        ident = name.encode("utf-8")
        blob.append(struct.pack("<H", len(ident)))
        blob.append(ident)
        blob.append(struct.pack(f"<B{w.ndim}I", w.ndim, *w.shape))
        blob.append(w.tobytes())
    # write-then-rename so a crash never leaves a half-written checkpoint
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(blob))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated checkpoint: wanted {n} bytes at offset {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_load(path: str):
    """Returns (weights, config). Raises CheckpointError on format problems."""
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    if rd.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, scale, iterations, groups, base_channels, in_ch, out_ch, flags = rd.unpack("<8I")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    kw = {name: bool(flags >> bit & 1) for bit, name in enumerate(_FLAGS)}
    config = ModelConfig(scale=scale, iterations=iterations, groups=groups,
                         base_channels=base_channels, in_channels=in_ch,
                         out_channels=out_ch, **kw)
    (count,) = rd.unpack("<I")
    weights: dict = {}
    for _ in range(count):
        (ident_len,) = rd.unpack("<H")
        name = rd.take(ident_len).decode("utf-8")
        (rank,) = rd.unpack("<B")
        dims = rd.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = rd.take(4 * size)
        weights[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if rd.pos != len(rd.data):
        raise CheckpointError(f"{path}: {len(rd.data) - rd.pos} trailing bytes")
    return weights, config
