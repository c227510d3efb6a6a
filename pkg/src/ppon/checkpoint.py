"""Self-describing binary container for parameters.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON
header, then raw little-endian float32 blobs in the header's declared
order.  The header carries the architecture config, seed, stage
provenance, init scheme and per-tensor shapes, so a file can rebuild its
model without outside context.  Writes go through a temp file and an
atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"PPONCKV1"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Malformed, truncated or incompatible container file."""


def write_container(path, header: dict, blobs) -> None:
    """Serialize header + float32 blobs atomically."""
    path = Path(path)
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    tensors = header.get("tensors")
    if tensors is None or len(tensors) != len(blobs):
        raise ContainerError(
            "header['tensors'] must describe every blob (name and shape)"
        )
    for desc, blob in zip(tensors, blobs):
        if tuple(desc["shape"]) != tuple(blob.shape):
            raise ContainerError(
                f"blob {desc['name']}: header shape {desc['shape']} != "
                f"array shape {blob.shape}"
            )
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            for blob in blobs:
                fh.write(np.ascontiguousarray(blob, dtype="<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path):
    """Read and validate a container fully before returning (header, blobs)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ContainerError(f"{path}: cannot read ({exc})") from exc
    if len(raw) < len(MAGIC) + 4:
        raise ContainerError(f"{path}: file too short to be a checkpoint")
    if raw[: len(MAGIC)] != MAGIC:
        raise ContainerError(f"{path}: bad magic, not a checkpoint container")
    (head_len,) = struct.unpack_from("<I", raw, len(MAGIC))
    head_start = len(MAGIC) + 4
    if head_start + head_len > len(raw):
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(raw[head_start : head_start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: corrupt header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(
            f"{path}: unsupported format version {header.get('format_version')!r}"
        )
    tensors = header.get("tensors")
    if not isinstance(tensors, list):
        raise ContainerError(f"{path}: header lacks tensor declarations")

    offset = head_start + head_len
    blobs = []
    for desc in tensors:
        shape = tuple(int(s) for s in desc["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(raw):
            raise ContainerError(
                f"{path}: truncated blob for tensor {desc.get('name')!r}"
            )
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        blobs.append(arr.reshape(shape).copy())
        offset += nbytes
    if offset != len(raw):
        raise ContainerError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, blobs
