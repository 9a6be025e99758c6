"""Flat binary checkpoint format for model parameters.

Layout: one JSON header line (config, optional metadata, tensor names with
shapes and byte offsets, and a payload checksum) terminated by a newline,
followed by the concatenated little-endian float64 tensor data.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ..errors import InputError
from .model import ModelConfig, ModelParams, TENSOR_FIELDS

FORMAT_MAGIC = "recdrop-checkpoint"
FORMAT_VERSION = 1


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> Path:
    """Write ``params`` (and optional run metadata) to ``path``."""
    params.validate_shapes()
    path = Path(path)
    chunks = []
    tensors = []
    offset = 0
    for name, tensor in params.tensors():
        data = np.ascontiguousarray(tensor, dtype="<f8").tobytes()
        tensors.append(
            {"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(data)}
        )
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    cfg = params.config
    header = {
        "magic": FORMAT_MAGIC,
        "format_version": FORMAT_VERSION,
        "config": {
            "vocab_size": cfg.vocab_size,
            "embed_dim": cfg.embed_dim,
            "hidden_dim": cfg.hidden_dim,
            "head_dims": list(cfg.head_dims),
            "temperature": cfg.temperature,
        },
        "meta": meta or {},
        "tensors": tensors,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Read a checkpoint, validating structure and payload checksum."""
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: not a checkpoint (bad header): {exc}") from None
    if header.get("magic") != FORMAT_MAGIC:
        raise InputError(f"{path}: not a checkpoint (magic mismatch)")
    if header.get("format_version") != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported format version {header.get('format_version')}")
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("payload_sha256"):
        raise InputError(f"{path}: payload checksum mismatch")
    try:
        cfg_dict = dict(header["config"])
        cfg_dict["head_dims"] = tuple(cfg_dict["head_dims"])
        config = ModelConfig(**cfg_dict)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed config in header: {exc}") from None
    entries = {entry["name"]: entry for entry in header.get("tensors", [])}
    if set(entries) != set(TENSOR_FIELDS):
        raise InputError(f"{path}: tensor names do not match the model layout")
    shapes = config.tensor_shapes()
    out = {}
    for name in TENSOR_FIELDS:
        entry = entries[name]
        shape = tuple(entry["shape"])
        if shape != shapes[name]:
            raise InputError(
                f"{path}: tensor {name} has shape {shape}, expected {shapes[name]}"
            )
        start, nbytes = int(entry["offset"]), int(entry["nbytes"])
        if start < 0 or start + nbytes > len(payload) or nbytes != 8 * int(np.prod(shape)):
            raise InputError(f"{path}: tensor {name} has inconsistent offsets")
        flat = np.frombuffer(payload[start : start + nbytes], dtype="<f8")
        out[name] = flat.reshape(shape).astype(float)
    params = ModelParams(config, **out)
    params.validate_shapes()
    return params, dict(header.get("meta", {}))
