"""Named-tensor checkpoint files.

Layout: the magic line ``PMNT1``, a manifest of ``name dims byte_offset``
lines (dims comma-joined), a ``---`` terminator line, then the payload of
little-endian 8-byte floats. Round trips are bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = b"PMNT1\n"
_TERMINATOR = b"---\n"


class CheckpointFormatError(ValueError):
    """Raised for bad magic, malformed manifests, or truncated payloads."""


def write_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float64 tensors; names are sorted for canonical output."""
    manifest_lines = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        if arr.ndim < 1:
            raise ValueError(f"tensor {name!r} must have rank >= 1")
        if any(ch.isspace() for ch in name) or not name:
            raise ValueError(f"invalid tensor name {name!r}")
        dims = ",".join(str(d) for d in arr.shape)
        manifest_lines.append(f"{name} {dims} {offset}\n")
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for line in manifest_lines:
            fh.write(line.encode("ascii"))
        fh.write(_TERMINATOR)
        for blob in blobs:
            fh.write(blob)


def read_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint, validating magic, manifest, and payload length."""
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointFormatError(f"{path}: bad magic")
    body = raw[len(MAGIC):]
    sep = body.find(_TERMINATOR)
    if sep < 0:
        raise CheckpointFormatError(f"{path}: missing manifest terminator")
    manifest = body[:sep].decode("ascii", errors="replace")
    payload = body[sep + len(_TERMINATOR):]
    entries: list[tuple[str, tuple[int, ...], int]] = []
    for lineno, line in enumerate(manifest.splitlines(), start=1):
        parts = line.split()
        if len(parts) != 3:
            raise CheckpointFormatError(f"{path}: manifest line {lineno} malformed")
        name, dims_s, offset_s = parts
        try:
            dims = tuple(int(d) for d in dims_s.split(","))
            offset = int(offset_s)
        except ValueError as exc:
            raise CheckpointFormatError(
                f"{path}: manifest line {lineno} malformed") from exc
        if any(d < 0 for d in dims) or offset < 0:
            raise CheckpointFormatError(f"{path}: manifest line {lineno} malformed")
        entries.append((name, dims, offset))
    tensors: dict[str, np.ndarray] = {}
    for name, dims, offset in entries:
        nbytes = 8 * int(np.prod(dims, dtype=np.int64)) if dims else 8
        if offset + nbytes > len(payload):
            raise CheckpointFormatError(f"{path}: truncated payload for {name!r}")
        arr = np.frombuffer(payload, dtype="<f8", count=nbytes // 8,
                            offset=offset).reshape(dims)
        tensors[name] = arr.astype(np.float64, copy=True)
    expected = sum(8 * int(np.prod(d, dtype=np.int64)) for _, d, _ in entries)
    if expected != len(payload):
        raise CheckpointFormatError(f"{path}: payload length mismatch")
    return tensors
