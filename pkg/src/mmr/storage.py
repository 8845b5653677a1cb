"""On-disk formats: binary checkpoint container and JSONL segment files.

The checkpoint layout is fixed-endianness so files are portable:
magic "MMRC" | version u32 LE | meta JSON (u32 length + UTF-8) |
tensor count u32 | per tensor: name (u32 + UTF-8), rank u32,
dims u64[rank], float64 LE data. Tensors are written sorted by name, so
identical state always produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .synth import Segment

MAGIC = b"MMRC"
VERSION = 1


def save_checkpoint(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype=np.float64)  # 0-d stays 0-d
            encoded = name.encode()
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file (bad magic)")
        version = struct.unpack("<I", fh.read(4))[0]
        if version != VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        meta_len = struct.unpack("<I", fh.read(4))[0]
        meta = json.loads(fh.read(meta_len).decode())
        count = struct.unpack("<I", fh.read(4))[0]
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            name_len = struct.unpack("<I", fh.read(4))[0]
            name = fh.read(name_len).decode()
            rank = struct.unpack("<I", fh.read(4))[0]
            dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
            n_items = int(np.prod(dims)) if dims else 1
            raw = fh.read(8 * n_items)
            tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return meta, tensors


def write_segments(path, segments: list[Segment]) -> None:
    """JSON-lines segment file; one independently parseable object per line."""
    path = Path(path)
    with open(path, "w") as fh:
        for seg in segments:
            fh.write(json.dumps({
                "user_id": seg.user_id,
                "segment_id": seg.segment_id,
                "fs_hz": seg.fs_hz,
                "samples": [float(v) for v in seg.samples],
                "labels": {k: float(v) for k, v in sorted(seg.labels.items())},
            }, sort_keys=True))
            fh.write("\n")


def read_segments(path) -> list[Segment]:
    path = Path(path)
    segments = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{line_no}: invalid JSON line") from exc
            try:
                seg = Segment(obj["user_id"], obj["segment_id"],
                              float(obj["fs_hz"]),
                              np.asarray(obj["samples"], dtype=np.float64),
                              {k: float(v) for k, v in obj.get("labels", {}).items()})
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{line_no}: bad segment record") from exc
            seg.validate()
            segments.append(seg)
    return segments


def write_csv(path, header: list[str], rows) -> None:
    """Deterministic CSV: repr-format floats, everything else str()."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                repr(v) if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")
