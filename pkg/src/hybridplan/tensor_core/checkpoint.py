"""Plain-text checkpoint records.

Grammar (one record per line, UTF-8)::

    hpl-checkpoint 1
    meta <key> <value>            # zero or more, value runs to end of line
    tensor <name> <d1,d2,...>     # shape; '' for a scalar
    <v1> <v2> ...                 # values in row-major order as float.hex()

Hex floats make the round trip lossless.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = "hpl-checkpoint 1"


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> str:
    lines = [MAGIC]
    for k, v in (meta or {}).items():
        if " " in k or "\n" in str(v):
            raise CheckpointError(f"bad meta entry {k!r}")
        lines.append(f"meta {k} {v}")
    for name, arr in tensors.items():
        if " " in name:
            raise CheckpointError(f"tensor name {name!r} contains a space")
        arr = np.asarray(arr, dtype=np.float64)
        lines.append(f"tensor {name} {','.join(str(d) for d in arr.shape)}")
        lines.append(" ".join(float(x).hex() for x in arr.reshape(-1)))
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    lines = text.split("\n")
    if not lines or lines[0] != MAGIC:
        raise CheckpointError("missing checkpoint header")
    tensors: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if not line:
            i += 1
            continue
        if line.startswith("meta "):
            _, key, *rest = line.split(" ", 2)
            meta[key] = rest[0] if rest else ""
            i += 1
        elif line.startswith("tensor "):
            parts = line.split(" ")
            if len(parts) != 3 or i + 1 >= len(lines):
                raise CheckpointError(f"malformed tensor record at line {i + 1}")
            shape = tuple(int(d) for d in parts[2].split(",") if d)
            body = lines[i + 1].split()
            vals = np.array([float.fromhex(x) for x in body], dtype=np.float64)
            if vals.size != int(np.prod(shape)):
                raise CheckpointError(f"tensor {parts[1]!r}: {vals.size} values for shape {shape}")
            tensors[parts[1]] = vals.reshape(shape)
            i += 2
        else:
            raise CheckpointError(f"unexpected line {i + 1}: {line[:40]!r}")
    return tensors, meta


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save(path, tensors: Mapping[str, np.ndarray], meta: Mapping[str, str] | None = None) -> None:
    atomic_write(path, dumps(tensors, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    return loads(Path(path).read_text(encoding="utf-8"))
