"""Binary trajectory files and JSON dataset manifests.

Trajectory layout (little-endian)::

    "AINA" | u16 version | u8 source | u8 frame_of_reference | u32 N
    | u32 frame_count | f32 rate_hz | u32 len + task name (UTF-8)
    | u32 prompt count | (u32 len + prompt UTF-8)*
    | frame_count x [f64 timestamp | N*3 f32 objects | 5*3 f32 fingertips]
    | u32 CRC32 of everything before it

Points are stored as float32, so ``load(save(t))`` equals ``t`` exactly once
``t`` has been through one round trip.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import BadMagic, ChecksumMismatch, TruncatedFile, UnsupportedVersion
from .model import Dataset, FrameOfReference, Source, Trajectory

MAGIC = b"AINA"
VERSION = 1
GENERATOR_VERSION = "1"
_FIXED = struct.Struct("<4sHBBIIf")


def encode_trajectory(traj: Trajectory) -> bytes:
    T, N = traj.n_frames, traj.n_points
    parts = [_FIXED.pack(MAGIC, VERSION, int(traj.source), int(traj.frame_of_reference),
                         N, T, traj.rate_hz)]
    name = traj.task_name.encode("utf-8")
    parts.append(struct.pack("<I", len(name)) + name)
    parts.append(struct.pack("<I", len(traj.prompts)))
    for p in traj.prompts:
        b = p.encode("utf-8")
        parts.append(struct.pack("<I", len(b)) + b)
    rec = np.dtype([("t", "<f8"), ("obj", "<f4", (N, 3)), ("tips", "<f4", (5, 3))])
    frames = np.empty(T, dtype=rec)
    frames["t"] = traj.timestamps
    frames["obj"] = traj.objects
    frames["tips"] = traj.fingertips
    parts.append(frames.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ChecksumMismatch("string field is not valid UTF-8") from exc


def decode_trajectory(data: bytes) -> Trajectory:
    if len(data) < 4:
        raise TruncatedFile("file shorter than its magic number")
    if data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {data[:4]!r}")
    r = _Reader(data)
    _, version, source, frame, N, T, rate = _FIXED.unpack(r.take(_FIXED.size))
    if version != VERSION:
        raise UnsupportedVersion(f"trajectory file version {version}, expected {VERSION}")
    task_name = r.string()
    prompts = tuple(r.string() for _ in range(r.u32()))
    # size check in plain integers first: a corrupted N or T must not reach numpy
    itemsize = 8 + 12 * N + 60
    if r.pos + itemsize * T + 4 > len(data):
        raise TruncatedFile(f"header declares {T} frames of {N} points; file has {len(data)} bytes")
    rec = np.dtype([("t", "<f8"), ("obj", "<f4", (N, 3)), ("tips", "<f4", (5, 3))])
    payload = r.take(rec.itemsize * T)
    crc_bytes = r.take(4)
    if r.pos != len(data):
        raise ChecksumMismatch(f"{len(data) - r.pos} unexpected trailing bytes")
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(data[:-4]):
        raise ChecksumMismatch("CRC32 does not match file contents")
    frames = np.frombuffer(payload, dtype=rec, count=T)
    try:
        return Trajectory(
            timestamps=frames["t"].astype(np.float64),
            objects=frames["obj"].astype(np.float64),
            fingertips=frames["tips"].astype(np.float64),
            source=Source(source),
            frame_of_reference=FrameOfReference(frame),
            task_name=task_name,
            prompts=prompts,
            rate_hz=float(np.float32(rate)),
        )
    except ValueError as exc:
        # enum codes or structure that passed the CRC but are not meaningful
        raise ChecksumMismatch(f"decoded trajectory is invalid: {exc}") from exc


def save_trajectory(traj: Trajectory, path) -> None:
    Path(path).write_bytes(encode_trajectory(traj))


def load_trajectory(path) -> Trajectory:
    return decode_trajectory(Path(path).read_bytes())


def save_dataset(dataset: Dataset, out_dir, manifest_name: str = "manifest.json") -> Path:
    """Write ``scene.aina``, ``wild/wild_XXXX.aina`` and a JSON manifest under ``out_dir``."""
    out = Path(out_dir)
    (out / "wild").mkdir(parents=True, exist_ok=True)
    save_trajectory(dataset.in_scene, out / "scene.aina")
    wild = []
    for i, traj in enumerate(dataset.in_the_wild):
        rel = f"wild/wild_{i:04d}.aina"
        save_trajectory(traj, out / rel)
        wild.append(rel)
    meta = dict(dataset.metadata)
    manifest = {
        "format": "aina-dataset",
        "generator_version": meta.pop("generator_version", GENERATOR_VERSION),
        "seed": meta.pop("seed", None),
        "N": dataset.N,
        "in_scene": "scene.aina",
        "in_the_wild": wild,
        "metadata": meta,
    }
    path = out / manifest_name
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_dataset(manifest_path) -> Dataset:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    manifest = json.loads(path.read_text())
    root = path.parent
    meta = dict(manifest.get("metadata", {}))
    meta["seed"] = manifest.get("seed")
    meta["generator_version"] = manifest.get("generator_version")
    return Dataset(
        in_scene=load_trajectory(root / manifest["in_scene"]),
        in_the_wild=[load_trajectory(root / p) for p in manifest["in_the_wild"]],
        metadata=meta,
    )
