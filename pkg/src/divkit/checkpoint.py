"""Named-tensor checkpoint container: manifest.json + weights.bin.

The manifest holds the model config and a tensor directory (name, dtype,
shape, byte offset, length, crc32); the payload is the concatenation of
little-endian tensor bytes in directory order.  Round trips are bit-exact.
"""

from __future__ import annotations

import json
import os
import zlib
from pathlib import Path

import numpy as np

from .model import ModelConfig

_DTYPE_TAGS = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class CorruptCheckpointError(RuntimeError):
    pass


def _dtype_tag(arr: np.ndarray) -> str:
    if arr.dtype == np.float32:
        return "f32"
    if arr.dtype == np.float64:
        return "f64"
    raise ValueError(f"unsupported checkpoint dtype {arr.dtype}")


def save_checkpoint(directory, cfg: ModelConfig, tensors: dict[str, np.ndarray],
                    extra: dict | None = None) -> Path:
    """Write manifest.json + weights.bin atomically (temp file + rename)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        # note: ascontiguousarray promotes 0-d to 1-d, so record arr.shape first
        raw = np.ascontiguousarray(arr).astype(_DTYPE_TAGS[_dtype_tag(arr)], copy=False).tobytes()
        entries.append({
            "name": name,
            "dtype": _dtype_tag(arr),
            "shape": list(arr.shape),
            "offset": offset,
            "length": len(raw),
            "crc32": zlib.crc32(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    manifest = {"config": cfg.to_dict(), "tensors": entries}
    if extra:
        manifest["extra"] = extra

    tmp_bin = directory / "weights.bin.tmp"
    tmp_man = directory / "manifest.json.tmp"
    tmp_bin.write_bytes(b"".join(chunks))
    tmp_man.write_text(json.dumps(manifest, indent=1))
    os.replace(tmp_bin, directory / "weights.bin")
    os.replace(tmp_man, directory / "manifest.json")
    return directory


def load_checkpoint(directory, verify: bool = True):
    """Returns (cfg, tensors, extra). Raises CorruptCheckpointError on bad crc."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    payload = (directory / "weights.bin").read_bytes()
    tensors: dict[str, np.ndarray] = {}
    for ent in manifest["tensors"]:
        raw = payload[ent["offset"]:ent["offset"] + ent["length"]]
        if len(raw) != ent["length"]:
            raise CorruptCheckpointError(f"truncated payload for tensor {ent['name']!r}")
        if verify and zlib.crc32(raw) != ent["crc32"]:
            raise CorruptCheckpointError(f"crc mismatch for tensor {ent['name']!r}")
        arr = np.frombuffer(raw, dtype=_DTYPE_TAGS[ent["dtype"]]).reshape(ent["shape"])
        tensors[ent["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    cfg = ModelConfig.from_dict(manifest["config"])
    return cfg, tensors, manifest.get("extra", {})


def checkpoint_checksum(directory) -> int:
    """crc32 over the raw payload; used to assert read-only analysis contracts."""
    return zlib.crc32((Path(directory) / "weights.bin").read_bytes())
