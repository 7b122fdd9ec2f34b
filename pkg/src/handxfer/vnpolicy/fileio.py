"""Binary model files.

Layout (little-endian)::

    "AINM" | u16 version | u32 len + config JSON (UTF-8)
    | u32 parameter count
    | per parameter: u32 len + name | u32 ndim | ndim x u32 shape | f64 values
    | u32 CRC32 of everything before it

Parameters appear in module declaration order, so the file is byte-identical
for identical models.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from ..errors import BadMagic, ChecksumMismatch, TruncatedFile, VersionMismatch
from .config import PolicyConfig
from .model import PolicyModel, build_model

MAGIC = b"AINM"
VERSION = 1


def _blob(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


def encode_model(model: PolicyModel) -> bytes:
    parts = [MAGIC, struct.pack("<H", VERSION), _blob(model.config.to_json().encode("utf-8"))]
    params = list(model.named_parameters())
    parts.append(struct.pack("<I", len(params)))
    for name, p in params:
        arr = p.detach().numpy().astype("<f8")
        parts.append(_blob(name.encode("utf-8")))
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_model(data: bytes) -> PolicyModel:
    if len(data) < 6:
        raise TruncatedFile("file shorter than its header")
    if data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {data[:4]!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise VersionMismatch(f"model file version {version}, expected {VERSION}")
    if len(data) < 10:
        raise TruncatedFile("file has no checksum")
    if struct.unpack("<I", data[-4:])[0] != zlib.crc32(data[:-4]):
        raise ChecksumMismatch("CRC32 does not match file contents")
    pos = 6

    def take(n):
        nonlocal pos
        if pos + n > len(data) - 4:
            raise TruncatedFile(f"need {n} bytes at offset {pos}")
        out = data[pos:pos + n]
        pos += n
        return out

    def u32():
        return struct.unpack("<I", take(4))[0]

    try:
        config = PolicyConfig.from_dict(json.loads(take(u32()).decode("utf-8")))
        model = build_model(config)
        expected = dict(model.named_parameters())
        count = u32()
        if count != len(expected):
            raise ValueError(f"file has {count} parameters, model has {len(expected)}")
        with torch.no_grad():
            for _ in range(count):
                name = take(u32()).decode("utf-8")
                shape = tuple(struct.unpack(f"<{(nd := u32())}I", take(4 * nd)))
                p = expected[name]
                if tuple(p.shape) != shape:
                    raise ValueError(f"{name}: shape {shape}, expected {tuple(p.shape)}")
                values = np.frombuffer(take(8 * int(np.prod(shape, dtype=int))), dtype="<f8")
                p.copy_(torch.from_numpy(values.reshape(shape).copy()))
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ChecksumMismatch(f"model payload is inconsistent: {exc}") from exc
    if pos != len(data) - 4:
        raise ChecksumMismatch(f"{len(data) - 4 - pos} unexpected trailing bytes")
    model.eval()
    return model


def save_model(model: PolicyModel, path) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> PolicyModel:
    return decode_model(Path(path).read_bytes())
