"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"BPLC"  u32 format_version  u32 header_len  header (UTF-8 JSON)
    u32 n_blocks
    n_blocks x [u32 name_len, name (UTF-8), u32 ndim, ndim x u32 dim]
    block data, float64 little-endian, in table order

The JSON header carries the resolved config, step, history and optimizer
constants. Blocks hold model parameters (``param/<name>``) and the Adam
moments (``adam.m/<name>``, ``adam.v/<name>``). Floats in the header are
written with ``repr`` precision by :mod:`json`, so the round trip is exact.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, SchemaError
from .optim import AdamState

MAGIC = b"BPLC"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    config: dict
    step: int
    params: "OrderedDict[str, np.ndarray]"
    adam: AdamState
    history: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _blocks(ckpt: Checkpoint):
    out = [(f"param/{k}", v) for k, v in ckpt.params.items()]
    out += [(f"adam.m/{k}", v) for k, v in ckpt.adam.m.items()]
    out += [(f"adam.v/{k}", v) for k, v in ckpt.adam.v.items()]
    return out


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "version": FORMAT_VERSION,
        "config": ckpt.config,
        "step": int(ckpt.step),
        "adam": {
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps_hat": ckpt.adam.eps_hat,
            "base_lr": ckpt.adam.base_lr,
            "step": ckpt.adam.step,
        },
        "history": ckpt.history,
        "extra": ckpt.extra,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blocks = _blocks(ckpt)
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(hbytes)), hbytes, _U32.pack(len(blocks))]
    for name, arr in blocks:
        nb = name.encode("utf-8")
        arr = np.asarray(arr)
        parts += [_U32.pack(len(nb)), nb, _U32.pack(arr.ndim)]
        parts += [_U32.pack(d) for d in arr.shape]
    for _, arr in blocks:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise SchemaError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return _U32.unpack(self.take(4))[0]


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != MAGIC:
        raise SchemaError(f"{path}: not a checkpoint file")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: corrupt header ({exc})") from exc

    table = []
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        shape = tuple(r.u32() for _ in range(r.u32()))
        table.append((name, shape))
    arrays = OrderedDict()
    for name, shape in table:
        count = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    if r.pos != len(r.raw):
        raise SchemaError(f"{path}: trailing bytes after parameter blocks")

    params = OrderedDict((k[6:], v) for k, v in arrays.items() if k.startswith("param/"))
    a = header["adam"]
    adam = AdamState(beta1=a["beta1"], beta2=a["beta2"], eps_hat=a["eps_hat"], base_lr=a["base_lr"], step=a["step"])
    adam.m = {k[7:]: v for k, v in arrays.items() if k.startswith("adam.m/")}
    adam.v = {k[7:]: v for k, v in arrays.items() if k.startswith("adam.v/")}
    return Checkpoint(
        config=header["config"],
        step=header["step"],
        params=params,
        adam=adam,
        history=header.get("history", {}),
        extra=header.get("extra", {}),
        version=version,
    )
