"""Binary checkpoint format.

Layout (little-endian)::

    b"MLFA" | u32 version | u16 epoch | u32 tensor count
    per tensor: u16 name length | UTF-8 name | u8 rank | u32 dims[rank] | f32 payload
    u32 CRC32 of every preceding byte

The training configuration rides along as a rank-1 tensor named
``__config__`` holding UTF-8 JSON bytes, one byte per f32 value.
"""

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadCheckpoint, BadMagic, CrcMismatch, VersionUnsupported

MAGIC = b"MLFA"
VERSION = 1
CONFIG_KEY = "__config__"


@dataclass
class Checkpoint:
    tensors: dict = field(default_factory=dict)
    config: dict = None
    epoch: int = 0
    version: int = VERSION


def _pack_config(cfg):
    raw = json.dumps(cfg, sort_keys=True).encode("utf-8")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.float32)


def to_bytes(c):
    tensors = {k: np.asarray(v, dtype=np.float32) for k, v in c.tensors.items()}
    if c.config is not None:
        tensors[CONFIG_KEY] = _pack_config(c.config)
    out = bytearray(MAGIC)
    out += struct.pack("<IHI", c.version, c.epoch, len(tensors))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(out))
    return bytes(out)


def from_bytes(buf):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic("not a checkpoint (bad magic)")
    if len(buf) < 18:
        raise BadCheckpoint("truncated checkpoint")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CrcMismatch("checkpoint CRC32 mismatch")
    version, epoch, count = struct.unpack_from("<IHI", body, 4)
    if version != VERSION:
        raise VersionUnsupported(f"checkpoint version {version}")
    pos = 14
    tensors, config = {}, None
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, pos)
            name = body[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", body, pos)
            dims = struct.unpack_from(f"<{rank}I", body, pos + 1)
            pos += 1 + 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(body, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * size
            if name in tensors:
                raise BadCheckpoint(f"duplicate tensor {name!r}")
            if name == CONFIG_KEY:
                config = json.loads(arr.astype(np.uint8).tobytes().decode("utf-8"))
            else:
                tensors[name] = arr
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise BadCheckpoint(f"malformed checkpoint: {exc}") from exc
    if pos != len(body):
        raise BadCheckpoint("trailing bytes after tensors")
    return Checkpoint(tensors, config, epoch, version)


def save_checkpoint(c, path):
    Path(path).write_bytes(to_bytes(c))


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())


def total_param_count(c):
    tensors = c.tensors if isinstance(c, Checkpoint) else c
    return int(sum(np.asarray(v).size for k, v in tensors.items() if not k.startswith("__")))
