"""Versioned checkpoint container.

Layout: 4-byte magic ``BWEC``, format version (u32 LE), header length
(u64 LE), a JSON header (cascade config, step counter, tensor manifest
with name/shape/offset/nbytes), then raw little-endian float32 tensor
payloads.  The header is serialized with sorted keys and the manifest
sorted by name, so saving identical state twice yields identical bytes.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import CheckpointError, InvalidArgumentError
from .model import CascadeConfig, config_from_dict, config_to_dict

MAGIC = b"BWEC"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<4sIQ")


class Checkpoint:
    """Loaded checkpoint: config, step counter, and named tensors."""

    def __init__(self, version: int, config: CascadeConfig, step: int,
                 tensors: dict[str, np.ndarray]):
        self.version = version
        self.config = config
        self.step = step
        self.tensors = tensors


def save_checkpoint(path: str, config: CascadeConfig,
                    tensors: dict[str, np.ndarray], step: int) -> None:
    """Write atomically: a temp file in the target directory, then rename."""
    if step < 0:
        raise InvalidArgumentError("step must be non-negative")
    names = sorted(tensors)
    if len(names) != len(tensors):
        raise InvalidArgumentError("tensor names must be unique")

    manifest = []
    blobs = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = arr.tobytes()
        manifest.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "float32",
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)

    header = json.dumps(
        {
            "config": config_to_dict(config),
            "step": int(step),
            "tensors": manifest,
        },
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_HEAD.pack(MAGIC, FORMAT_VERSION, len(header)))
            fh.write(header)
            for raw in blobs:
                fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str,
                    expected_config: CascadeConfig | None = None) -> Checkpoint:
    """Read and validate a checkpoint file.

    With ``expected_config`` given, a config that differs raises
    CheckpointError naming the differing fields.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    if len(blob) < _HEAD.size:
        raise CheckpointError(
            f"{path}: truncated preamble ({len(blob)} bytes, need {_HEAD.size})")
    magic, version, header_len = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r} at byte 0")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} not supported (expected {FORMAT_VERSION})")
    if _HEAD.size + header_len > len(blob):
        raise CheckpointError(
            f"{path}: truncated header (need {header_len} bytes at byte {_HEAD.size})")

    try:
        header = json.loads(blob[_HEAD.size:_HEAD.size + header_len])
        config = config_from_dict(header["config"])
        step = int(header["step"])
        manifest = header["tensors"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError,
            InvalidArgumentError) as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from exc

    if expected_config is not None and config != expected_config:
        theirs = config_to_dict(config)
        ours = config_to_dict(expected_config)
        diffs = [k for k in ours if theirs.get(k) != ours[k]]
        raise CheckpointError(
            f"{path}: config mismatch in {diffs}: checkpoint has "
            f"{ {k: theirs[k] for k in diffs} }, expected "
            f"{ {k: ours[k] for k in diffs} }")

    payload = blob[_HEAD.size + header_len:]
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest:
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            off = int(entry["offset"])
            nbytes = int(entry["nbytes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: malformed manifest entry: {exc}") from exc
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        expected_bytes = int(np.prod(shape, dtype=np.int64)) * 4
        if nbytes != expected_bytes:
            raise CheckpointError(
                f"{path}: tensor {name!r} declares {nbytes} bytes but shape "
                f"{shape} needs {expected_bytes}")
        if off < 0 or off + nbytes > len(payload):
            raise CheckpointError(
                f"{path}: tensor {name!r} spans [{off}, {off + nbytes}) outside "
                f"payload of {len(payload)} bytes")
        arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=off)
        tensors[name] = arr.reshape(shape).copy()
    return Checkpoint(version, config, step, tensors)


def model_tensors(checkpoint: Checkpoint) -> dict[str, np.ndarray]:
    """The generator's parameters (everything outside reserved prefixes)."""
    return {k: v for k, v in checkpoint.tensors.items()
            if not k.startswith(("disc.", "opt."))}


def load_model(path: str):
    """Instantiate a CascadeModel from a checkpoint file.

    Returns (model, checkpoint); the checkpoint keeps any optimizer and
    discriminator state for callers that resume training.
    """
    from .model import CascadeModel

    ckpt = load_checkpoint(path)
    model = CascadeModel(ckpt.config)
    model.load_state(model_tensors(ckpt))
    return model, ckpt
