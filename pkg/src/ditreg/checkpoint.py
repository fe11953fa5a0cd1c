"""Checkpoint directories: text manifest + little-endian float64 blob.

Layout::

    <dir>/manifest.txt   one line per tensor: name rank extent...
    <dir>/params.bin     tensors concatenated in manifest order
    <dir>/config.txt     key = value pipeline configuration
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .tensor import Tensor

MANIFEST = "manifest.txt"
BLOB = "params.bin"
CONFIG = "config.txt"


class CheckpointError(ValueError):
    pass


def save_params(directory, params: dict) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    chunks = []
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        if any(c.isspace() for c in name):
            raise CheckpointError(f"parameter name {name!r} contains whitespace")
        lines.append(" ".join([name, str(data.ndim), *map(str, data.shape)]))
        chunks.append(np.ascontiguousarray(data, dtype="<f8").tobytes())
    (d / MANIFEST).write_text("\n".join(lines) + "\n")
    (d / BLOB).write_bytes(b"".join(chunks))


def read_manifest(directory) -> list[tuple[str, tuple[int, ...]]]:
    entries = []
    for line in (Path(directory) / MANIFEST).read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split()
        name, rank = parts[0], int(parts[1])
        shape = tuple(int(x) for x in parts[2:])
        if len(shape) != rank:
            raise CheckpointError(f"manifest entry {name!r}: rank {rank} but {len(shape)} extents")
        entries.append((name, shape))
    return entries


def load_params(directory, expected: dict | None = None) -> dict:
    """Load tensors; if ``expected`` is given, names and shapes must match it."""
    d = Path(directory)
    entries = read_manifest(d)
    blob = np.frombuffer((d / BLOB).read_bytes(), dtype="<f8")
    total = sum(int(np.prod(s)) for _, s in entries)
    if blob.size != total:
        raise CheckpointError(f"blob holds {blob.size} values, manifest describes {total}")
    out, offset = {}, 0
    for name, shape in entries:
        n = int(np.prod(shape))
        out[name] = Tensor(blob[offset:offset + n].reshape(shape).astype(np.float64), requires_grad=True,
                           name=name)
        offset += n
    if expected is not None:
        want = {k: tuple(v.shape) for k, v in expected.items()}
        got = {k: tuple(v.shape) for k, v in out.items()}
        if want != got:
            missing = sorted(set(want) - set(got))
            extra = sorted(set(got) - set(want))
            bad = sorted(k for k in set(want) & set(got) if want[k] != got[k])
            raise CheckpointError(f"checkpoint/config mismatch: missing={missing} extra={extra} shape={bad}")
        out = {k: out[k] for k in expected}
    return out
