"""Model files.

Layout (all integers little-endian)::

    b"LEXCRF01"                 magic + format version
    u64  manifest length
    manifest                    UTF-8 JSON, sorted keys
    float64[...]                tensor payloads in manifest order
    32 bytes                    SHA-256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .errors import IntegrityError, VersionError
from .training import Checkpoint

MAGIC = b"LEXCRF"
VERSION = b"01"
HEADER = MAGIC + VERSION
DIGEST = 32


def _tensor_groups(ck: Checkpoint):
    yield "params", ck.params
    if ck.optimizer:
        yield "adam_m", ck.optimizer["m"]
        yield "adam_v", ck.optimizer["v"]


def dumps_model(ck: Checkpoint) -> bytes:
    tensors, payload = [], []
    offset = 0
    for group, table in _tensor_groups(ck):
        for name in sorted(table):
            arr = table[name].detach().cpu().numpy().astype("<f8", copy=False)
            tensors.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset})
            payload.append(arr.tobytes(order="C"))
            offset += arr.size
    manifest = {
        "config": ck.config.to_dict(),
        "vocab": list(ck.vocab),
        "labels": list(ck.labels),
        "dev_f1": ck.dev_f1,
        "epoch": ck.epoch,
        "history": ck.history,
        "adam_step": ck.optimizer.get("step", 0) if ck.optimizer else None,
        "tensors": tensors,
    }
    meta = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = HEADER + struct.pack("<Q", len(meta)) + meta + b"".join(payload)
    return body + hashlib.sha256(body).digest()


def loads_model(data: bytes) -> Checkpoint:
    if len(data) < len(HEADER) or not data.startswith(MAGIC):
        raise IntegrityError("not a lexcrf model file")
    version = data[len(MAGIC):len(HEADER)]
    if version != VERSION:
        raise VersionError(f"model format {version.decode('ascii', 'replace')!r} is not supported "
                           f"(expected {VERSION.decode()})")
    if len(data) < len(HEADER) + 8 + DIGEST:
        raise IntegrityError("model file is truncated")
    body, digest = data[:-DIGEST], data[-DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("model file checksum mismatch (truncated or corrupted)")
    (size,) = struct.unpack("<Q", body[len(HEADER):len(HEADER) + 8])
    start = len(HEADER) + 8
    try:
        manifest = json.loads(body[start:start + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"bad manifest: {exc}") from None
    values = np.frombuffer(body[start + size:], dtype="<f8")
    groups = {"params": {}, "adam_m": {}, "adam_v": {}}
    for t in manifest["tensors"]:
        count = int(np.prod(t["shape"])) if t["shape"] else 1
        chunk = values[t["offset"]:t["offset"] + count]
        if chunk.size != count:
            raise IntegrityError(f"payload too short for {t['name']}")
        groups[t["group"]][t["name"]] = torch.from_numpy(chunk.copy().reshape(t["shape"])).to(torch.float64)
    optimizer = {}
    if manifest["adam_step"] is not None:
        optimizer = {"step": manifest["adam_step"], "m": groups["adam_m"], "v": groups["adam_v"]}
    return Checkpoint(
        config=TrainConfig.from_dict(manifest["config"]),
        vocab=manifest["vocab"], labels=manifest["labels"], params=groups["params"],
        optimizer=optimizer, dev_f1=manifest["dev_f1"], epoch=manifest["epoch"],
        history=manifest["history"],
    )


def save_model(path, ck: Checkpoint) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps_model(ck))


def load_model(path) -> Checkpoint:
    return loads_model(Path(path).read_bytes())
