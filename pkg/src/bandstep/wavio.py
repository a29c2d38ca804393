"""Mono WAV file I/O: RIFF containers holding PCM 16-bit or IEEE
float32 samples.

Reads walk the chunk list and report the byte offset of the first
malformed field, so corrupt files are diagnosable.  Writes go through a
temporary file in the destination directory and are renamed into place;
a failed write never leaves a partial file behind.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .dsp import Waveform
from .errors import DataError, InvalidArgumentError

_TAG_PCM = 1
_TAG_FLOAT = 3


def atomic_write_bytes(path: str, blob: bytes) -> None:
    """Write ``blob`` to ``path`` via a same-directory temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _fail(path: str, offset: int, what: str) -> None:
    raise DataError(f"{path}: malformed WAV at byte {offset}: {what}")


def read_wav(path: str) -> Waveform:
    """Read a mono PCM16 or float32 WAV file.

    PCM16 samples are scaled to [-1, 1) by 1/32768; float32 samples are
    taken as-is.  Multi-channel files and other encodings are rejected.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if len(blob) < 12:
        _fail(path, 0, f"file is {len(blob)} bytes; the RIFF header needs 12")
    if blob[0:4] != b"RIFF":
        _fail(path, 0, f"expected b'RIFF', found {blob[0:4]!r}")
    if blob[8:12] != b"WAVE":
        _fail(path, 8, f"expected b'WAVE', found {blob[8:12]!r}")

    fmt_off = fmt_body = None
    data_off = data_body = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8:pos + 8 + size]
        if len(body) < size:
            _fail(path, pos + 4,
                  f"chunk {cid!r} claims {size} bytes but only "
                  f"{len(body)} remain")
        if cid == b"fmt ":
            fmt_off, fmt_body = pos + 8, body
        elif cid == b"data":
            data_off, data_body = pos + 8, body
        pos += 8 + size + (size & 1)  # chunks are 2-byte aligned
    if pos < len(blob):
        _fail(path, pos,
              f"truncated chunk header: only {len(blob) - pos} bytes remain")

    if fmt_body is None:
        _fail(path, 12, "no 'fmt ' chunk")
    if len(fmt_body) < 16:
        _fail(path, fmt_off, f"'fmt ' chunk is {len(fmt_body)} bytes; needs 16")
    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt_body)
    if tag not in (_TAG_PCM, _TAG_FLOAT):
        _fail(path, fmt_off,
              f"format tag {tag} unsupported (PCM=1 or IEEE float=3)")
    if channels != 1:
        raise DataError(
            f"{path}: {channels} channels; only mono files are supported")
    if rate == 0:
        _fail(path, fmt_off + 4, "sample rate is 0")
    want_bits = 16 if tag == _TAG_PCM else 32
    if bits != want_bits:
        _fail(path, fmt_off + 14,
              f"{bits} bits per sample; format tag {tag} requires {want_bits}")
    if data_body is None:
        _fail(path, 12, "no 'data' chunk")
    width = want_bits // 8
    if len(data_body) % width:
        _fail(path, data_off,
              f"data length {len(data_body)} is not a multiple of the "
              f"{width}-byte sample size")

    if tag == _TAG_PCM:
        samples = np.frombuffer(data_body, dtype="<i2").astype(np.float64)
        samples /= 32768.0
    else:
        samples = np.frombuffer(data_body, dtype="<f4").astype(np.float64)
    return Waveform(samples, int(rate))


def write_wav(path: str, wav: Waveform, encoding: str = "float32") -> None:
    """Write a mono waveform as PCM16 or float32 WAV, atomically.

    PCM16 rounds to the nearest step and clips to the representable
    range, so the worst-case round-trip error is 1/32768.
    """
    if encoding == "pcm16":
        scaled = np.clip(np.rint(wav.samples * 32768.0), -32768, 32767)
        payload = scaled.astype("<i2").tobytes()
        tag, bits = _TAG_PCM, 16
    elif encoding == "float32":
        payload = wav.samples.astype("<f4").tobytes()
        tag, bits = _TAG_FLOAT, 32
    else:
        raise InvalidArgumentError(
            f"encoding must be 'pcm16' or 'float32', got {encoding!r}")

    width = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, wav.rate, wav.rate * width,
                      width, bits)
    blob = b"".join([
        b"RIFF", struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)),
        b"WAVE",
        b"fmt ", struct.pack("<I", len(fmt)), fmt,
        b"data", struct.pack("<I", len(payload)), payload,
    ])
    atomic_write_bytes(path, blob)
