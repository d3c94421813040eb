"""Binary checkpoint format.

Layout (all integers 32-bit little-endian unless noted)::

    b"DNFS"  version(=1)
    str  architecture spec          # u32 length + UTF-8
    str  metadata                   # "key=value" lines
    u32  count, then per parameter: str name, u32 rank, rank x u32 dims, f32 values
    u64  optimizer step
    f64  lr, beta1, beta2, eps
    u32  count, then first moments  (same layout as parameters)
    u32  count, then second moments (same layout as parameters)
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .arch import ArchSpec, build
from .graph import OptimizerState

MAGIC = b"DNFS"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: ArchSpec
    params: dict[str, np.ndarray]
    optimizer: OptimizerState
    epoch: int = 0
    meta: dict[str, str] = field(default_factory=dict)

    @classmethod
    def capture(cls, net, optimizer, epoch, **meta):
        return cls(
            spec=net.spec,
            params={k: v.copy() for k, v in net.parameters().items()},
            optimizer=optimizer,
            epoch=epoch,
            meta={k: str(v) for k, v in meta.items()},
        )

    def network(self, image_size=None):
        """Rebuild the network and load the stored parameters into it."""
        net = build(self.spec, image_size)
        target = net.parameters()
        if target.keys() != self.params.keys():
            raise CheckpointError("checkpoint parameters do not match the architecture")
        for name, arr in target.items():
            if arr.shape != self.params[name].shape:
                raise CheckpointError(f"{name}: checkpoint shape {self.params[name].shape}, network {arr.shape}")
            arr[...] = self.params[name]
        return net


def _write_str(buf, text):
    raw = text.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _write_arrays(buf, arrays):
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        _write_str(buf, name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def dumps(ckpt):
    meta = dict(ckpt.meta)
    meta["epoch"] = str(ckpt.epoch)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _write_str(buf, ckpt.spec.to_string())
    _write_str(buf, "".join(f"{k}={meta[k]}\n" for k in sorted(meta)))
    _write_arrays(buf, ckpt.params)
    opt = ckpt.optimizer
    buf.write(struct.pack("<Q", opt.step))
    buf.write(struct.pack("<4d", opt.lr, opt.beta1, opt.beta2, opt.eps))
    _write_arrays(buf, opt.m)
    _write_arrays(buf, opt.v)
    return buf.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def arrays(self):
        (count,) = self.unpack("<I")
        out = {}
        for _ in range(count):
            name = self.string()
            (rank,) = self.unpack("<I")
            dims = self.unpack(f"<{rank}I")
            size = int(np.prod(dims, dtype=np.int64))
            out[name] = np.frombuffer(self.take(4 * size), dtype="<f4").astype(np.float32).reshape(dims)
        return out


def loads(data):
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a DNFS checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    spec = ArchSpec.from_string(r.string())
    meta = dict(line.split("=", 1) for line in r.string().splitlines() if line)
    params = r.arrays()
    (step,) = r.unpack("<Q")
    lr, b1, b2, eps = r.unpack("<4d")
    opt = OptimizerState(lr=lr, beta1=b1, beta2=b2, eps=eps, step=step)
    opt.m = r.arrays()
    opt.v = r.arrays()
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    epoch = int(meta.pop("epoch", 0))
    return Checkpoint(spec=spec, params=params, optimizer=opt, epoch=epoch, meta=meta)


def save(path, ckpt):
    with open(path, "wb") as fh:
        fh.write(dumps(ckpt))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
