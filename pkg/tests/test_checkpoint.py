import struct
import zlib

import numpy as np
import pytest

from zskws.checkpoint import (
    Checkpoint,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
    total_param_count,
)
from zskws.errors import BadCheckpoint, BadMagic, CrcMismatch, VersionUnsupported


def sample():
    rng = np.random.default_rng(0)
    return Checkpoint(
        {"a.w": rng.normal(size=(3, 4)).astype(np.float32), "b": np.float32(2.5) * np.ones(7, np.float32), "s": np.array(1.0, np.float32)},
        {"train": {"epochs": 3}},
        epoch=3,
    )


def test_round_trip_bit_identical(tmp_path):
    c = sample()
    save_checkpoint(c, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert list(back.tensors) == list(c.tensors)
    for k in c.tensors:
        assert back.tensors[k].dtype == np.float32
        assert back.tensors[k].tobytes() == np.asarray(c.tensors[k], np.float32).tobytes()
    assert back.config == c.config and back.epoch == 3
    assert to_bytes(back) == to_bytes(c)


def test_empty_is_header_plus_crc():
    raw = to_bytes(Checkpoint())
    assert len(raw) == 14 + 4
    assert raw[:4] == b"MLFA"
    assert struct.unpack("<IHI", raw[4:14]) == (1, 0, 0)
    assert struct.unpack("<I", raw[14:])[0] == zlib.crc32(raw[:14])
    assert from_bytes(raw).tensors == {}


def test_layout_is_little_endian():
    raw = to_bytes(Checkpoint({"x": np.array([1.0, -2.0], np.float32)}))
    body = raw[14:-4]
    assert body == struct.pack("<H", 1) + b"x" + struct.pack("<BI", 1, 2) + struct.pack("<2f", 1.0, -2.0)


def test_corruption_detected():
    raw = bytearray(to_bytes(sample()))
    raw[40] ^= 0xFF
    with pytest.raises(CrcMismatch):
        from_bytes(bytes(raw))


def test_bad_magic_and_version():
    raw = to_bytes(sample())
    with pytest.raises(BadMagic):
        from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(BadMagic):
        from_bytes(b"")
    body = bytearray(to_bytes(Checkpoint(version=7))[:-4])
    with pytest.raises(VersionUnsupported):
        from_bytes(bytes(body) + struct.pack("<I", zlib.crc32(body)))


def test_truncated_and_malformed():
    with pytest.raises(BadCheckpoint):
        from_bytes(b"MLFA\x01")
    body = bytearray(to_bytes(sample())[:-4])
    body[10:14] = struct.pack("<I", 99)  # claims more tensors than present
    with pytest.raises(BadCheckpoint):
        from_bytes(bytes(body) + struct.pack("<I", zlib.crc32(body)))


def test_param_count_ignores_config():
    c = sample()
    assert total_param_count(c) == 12 + 7 + 1
    assert total_param_count(from_bytes(to_bytes(c))) == 20
