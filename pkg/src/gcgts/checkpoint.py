"""Single-file checkpoints: magic line, JSON manifest, raw little-endian f32 payload.

Layout::

    b"GCGTS1\\n"
    u64 little-endian manifest length
    manifest (UTF-8 JSON, sorted keys, compact separators)
    payload  (tensors back to back, in manifest order)
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from . import numkit as nk
from .corpus import Vocabs
from .model import GCGTS, ModelConfig, param_shapes

MAGIC = b"GCGTS1\n"


class CheckpointError(ValueError):
    pass


def _dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def to_bytes(model: GCGTS, extra: Optional[dict] = None) -> bytes:
    tensors = []
    chunks = []
    offset = 0
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name].data, dtype="<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": "f32",
                        "offset": offset, "nbytes": arr.nbytes})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {"format": "GCGTS1", "config": model.config.to_json(),
                "vocabs": model.vocabs.to_json(), "tensors": tensors, "extra": extra or {}}
    head = _dumps(manifest)
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(chunks)


def from_bytes(buf: bytes, vectors=None) -> Tuple[GCGTS, dict]:
    if not buf.startswith(MAGIC):
        raise CheckpointError("not a GCGTS1 checkpoint")
    pos = len(MAGIC)
    if len(buf) < pos + 8:
        raise CheckpointError("truncated checkpoint header")
    (size,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    try:
        manifest = json.loads(buf[pos:pos + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}") from None
    payload = buf[pos + size:]
    config = ModelConfig.from_json(manifest["config"])
    vocabs = Vocabs.from_json(manifest["vocabs"])

    expected = 0
    for t in manifest["tensors"]:
        if t["offset"] != expected:
            raise CheckpointError(f"tensor {t['name']} offset does not tile the payload")
        expected += t["nbytes"]
    if expected != len(payload):
        raise CheckpointError("manifest offsets do not cover the payload exactly")

    shapes = param_shapes(config, vocabs)
    names = {t["name"] for t in manifest["tensors"]}
    if names != set(shapes):
        raise CheckpointError("checkpoint tensors do not match its configuration")
    params: Dict[str, nk.Tensor] = {}
    for t in manifest["tensors"]:
        shape = tuple(t["shape"])
        if shape != tuple(shapes[t["name"]]):
            raise CheckpointError(
                f"vocabulary mismatch: tensor {t['name']} has shape {shape}, "
                f"vocabularies imply {tuple(shapes[t['name']])}")
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=t["offset"]).reshape(shape)
        params[t["name"]] = nk.parameter(arr.astype(config.np_dtype), name=t["name"])
    return GCGTS(config, vocabs, params, vectors=vectors), manifest.get("extra", {})


def save(model: GCGTS, path, extra: Optional[dict] = None) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model, extra))


def load(path, vectors=None) -> Tuple[GCGTS, dict]:
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), vectors)
