"""Checkpoint and embedding files: a JSON header followed by little-endian float64 blobs.

Layout: 8-byte magic, uint64 (LE) header length, UTF-8 JSON header, then the raw
arrays back to back. The header's tensor directory lists each array's name,
shape and byte offset into the data section.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numkit as nk
from .data import Schema, Vocab

CHECKPOINT_MAGIC = b"JPAVECK1"
EMBEDDING_MAGIC = b"JPAVEEM1"
FORMAT_VERSION = 1
_LE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: object  # TrainConfig
    vocab: Vocab
    schema: Schema
    value_space: list
    params: nk.ModelParams
    rng_state: dict
    epoch: int
    version: int = FORMAT_VERSION


def _write(path, magic: bytes, header: dict, arrays) -> None:
    directory = []
    offset = 0
    for name, arr in arrays:
        arr = np.ascontiguousarray(arr, dtype=_LE)
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.nbytes
    header = dict(header, tensors=directory)
    raw = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=_LE).tobytes())


def _read(path, magic: bytes):
    blob = Path(path).read_bytes()
    if blob[:8] != magic:
        raise CheckpointError(f"{path}: not a {magic.decode()} file")
    (n,) = struct.unpack("<Q", blob[8:16])
    try:
        header = json.loads(blob[16 : 16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    data = blob[16 + n :]
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(data):
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data[start:end], dtype=_LE).reshape(shape).astype(np.float64)
    return header, arrays


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.to_json(),
        "schema": ckpt.schema.to_json(),
        "value_space": [list(v) for v in ckpt.value_space],
        "rng_state": ckpt.rng_state,
        "epoch": ckpt.epoch,
    }
    _write(path, CHECKPOINT_MAGIC, header, [(p.name, p.data) for p in ckpt.params])


def load_checkpoint(path) -> Checkpoint:
    from .training import TrainConfig

    header, arrays = _read(path, CHECKPOINT_MAGIC)
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    params = nk.ModelParams()
    for entry in header["tensors"]:
        params.add(entry["name"], arrays[entry["name"]])
    return Checkpoint(
        TrainConfig.from_dict(header["config"]),
        Vocab.from_json(header["vocab"]),
        Schema.from_json(header["schema"]),
        [tuple(v) for v in header["value_space"]],
        params,
        header["rng_state"],
        header["epoch"],
        header["version"],
    )


def save_embedding_file(path, keys, matrix) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(keys):
        raise CheckpointError("embedding matrix must be (len(keys), dim)")
    _write(path, EMBEDDING_MAGIC, {"vocab": list(keys), "dim": int(matrix.shape[1])}, [("embeddings", matrix)])


def load_embedding_file(path) -> tuple[list[str], np.ndarray]:
    header, arrays = _read(path, EMBEDDING_MAGIC)
    mat = arrays["embeddings"]
    if mat.shape != (len(header["vocab"]), header["dim"]):
        raise CheckpointError(f"{path}: header does not match embedding matrix shape {mat.shape}")
    return list(header["vocab"]), mat
