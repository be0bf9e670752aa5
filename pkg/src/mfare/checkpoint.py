"""Binary checkpoint: JSON header followed by named little-endian fp64 blocks.

Layout::

    b"MFARECKP"                 magic
    u32                         format version
    u64                         header length in bytes
    header                      UTF-8 JSON (hyper, params list, extras)
    per parameter:
        u32 name length, name, u32 ndim, u64 * ndim dims, fp64 payload
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .network import HyperParams, ModelParams, param_shapes

MAGIC = b"MFARECKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: ModelParams, hyper: HyperParams, path, extra=None) -> None:
    header = {
        "hyper": hyper.to_dict(),
        "params": [[name, list(t.shape)] for name, t in params.items()],
    }
    if extra:
        header.update(extra)
    head = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    chunks = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    for name, t in params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{t.data.ndim}Q", t.data.ndim, *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.parent.mkdir(parents=True, exist_ok=True)
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"checkpoint truncated at byte {len(self.buf)} "
                                  f"(needed {self.pos + n})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _check_hyper(stored: HyperParams, expected: HyperParams) -> None:
    for name, want in expected.to_dict().items():
        have = getattr(stored, name)
        if have != want:
            raise CheckpointError(f"{name} mismatch: checkpoint has {have!r}, config has {want!r}")


def load_checkpoint(path, expected_hyper: HyperParams | None = None):
    """Return ``(params, hyper, header)``; nothing is returned on any corruption."""
    r = _Reader(Path(path).read_bytes())
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, head_len = r.unpack("<IQ")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        header = json.loads(r.take(head_len).decode("utf-8"))
        hyper = HyperParams.from_dict(header["hyper"])
        declared = [(n, tuple(s)) for n, s in header["params"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if expected_hyper is not None:
        _check_hyper(hyper, expected_hyper)
    expected = param_shapes(hyper)
    if [n for n, _ in declared] != list(expected):
        raise CheckpointError(f"parameter names {[n for n, _ in declared]} do not match "
                              f"configuration {list(expected)}")
    tensors = {}
    for name, shape in declared:
        (name_len,) = r.unpack("<I")
        got = r.take(name_len).decode("utf-8", errors="replace")
        if got != name:
            raise CheckpointError(f"expected block {name!r}, found {got!r}")
        (ndim,) = r.unpack("<I")
        dims = r.unpack(f"<{ndim}Q")
        if tuple(dims) != shape or shape != expected[name]:
            raise CheckpointError(f"shape mismatch for {name}: block {tuple(dims)}, "
                                  f"header {shape}, configuration {expected[name]}")
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    if r.pos != len(r.buf):
        raise CheckpointError(f"{len(r.buf) - r.pos} trailing bytes after last block")
    return ModelParams(tensors), hyper, header
