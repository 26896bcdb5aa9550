"""Self-describing checkpoint container.

Layout: the magic line ``AFNETCKPT\\n``, a little-endian uint64 manifest length, a
UTF-8 JSON manifest (format version, metadata, config snapshot, and one
name/shape/offset/nbytes record per tensor), then the little-endian float32
payloads back to back.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"AFNETCKPT\n"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: dict
    tensors: dict[str, np.ndarray]
    epoch: int = 0
    best_val_psnr: float = float("-inf")
    meta: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix.`` with the prefix stripped."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self.tensors.items() if k.startswith(prefix + ".")}


def _encode_float(x: float):
    return x if math.isfinite(x) else repr(x)


def _decode_float(x) -> float:
    return float(x)


def to_bytes(ckpt: Checkpoint) -> bytes:
    records, chunks, offset = [], [], 0
    for name, arr in ckpt.tensors.items():
        data = np.ascontiguousarray(arr, dtype=_F32).tobytes()
        records.append({"name": name, "shape": list(np.shape(arr)), "offset": offset,
                        "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    manifest = {
        "format_version": ckpt.format_version,
        "epoch": ckpt.epoch,
        "best_val_psnr": _encode_float(ckpt.best_val_psnr),
        "meta": ckpt.meta,
        "config": ckpt.config,
        "tensors": records,
        "payload_bytes": offset,
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(chunks)


def from_bytes(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise FormatError("not an afnet checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise FormatError("truncated checkpoint header")
    (mlen,) = struct.unpack("<Q", blob[pos:pos + 8])
    pos += 8
    try:
        manifest = json.loads(blob[pos:pos + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint manifest: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"checkpoint format version {manifest.get('format_version')} != {FORMAT_VERSION}")
    payload = blob[pos + mlen:]
    if len(payload) != manifest["payload_bytes"]:
        raise FormatError(
            f"checkpoint payload is {len(payload)} bytes, manifest says {manifest['payload_bytes']}")
    tensors: dict[str, np.ndarray] = {}
    for rec in manifest["tensors"]:
        name, shape = rec["name"], tuple(rec["shape"])
        if name in tensors:
            raise FormatError(f"tensor {name!r} listed twice")
        expected = int(np.prod(shape, dtype=np.int64)) * _F32.itemsize
        start, nbytes = rec["offset"], rec["nbytes"]
        if nbytes != expected or start < 0 or start + nbytes > len(payload):
            raise FormatError(f"tensor {name!r} has inconsistent extent")
        arr = np.frombuffer(payload, dtype=_F32, count=expected // 4, offset=start)
        tensors[name] = arr.reshape(shape).astype(np.float32)
    return Checkpoint(config=manifest["config"], tensors=tensors, epoch=manifest["epoch"],
                      best_val_psnr=_decode_float(manifest["best_val_psnr"]),
                      meta=manifest["meta"], format_version=manifest["format_version"])


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(blob)
