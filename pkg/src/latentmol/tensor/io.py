"""Checkpoint tensor blocks.

Layout (all text is UTF-8, lines end with ``\\n``)::

    latentmol tensors v1
    header <n>
    key=value            (n lines)
    manifest <m>
    name d0xd1x... offset    (m lines, offset in bytes into the data block)
    data <nbytes>
    <little-endian float32 values, concatenated in manifest order>
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from latentmol.errors import IncompatibleCheckpoint

MAGIC = "latentmol tensors v1"


def dumps(header: dict[str, str], tensors: dict[str, np.ndarray]) -> bytes:
    lines = [MAGIC, f"header {len(header)}"]
    for k, v in header.items():
        if "\n" in str(v) or "=" in k:
            raise ValueError(f"header entry {k!r} cannot be stored")
        lines.append(f"{k}={v}")
    lines.append(f"manifest {len(tensors)}")
    blocks = []
    offset = 0
    for name, arr in tensors.items():
        if " " in name:
            raise ValueError(f"tensor name {name!r} contains a space")
        block = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"{name} {shape} {offset}")
        blocks.append(block)
        offset += len(block)
    lines.append(f"data {offset}")
    return ("\n".join(lines) + "\n").encode() + b"".join(blocks)


def loads(blob: bytes) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    pos = 0

    def line() -> str:
        nonlocal pos
        end = blob.index(b"\n", pos)
        text = blob[pos:end].decode()
        pos = end + 1
        return text

    try:
        if line() != MAGIC:
            raise IncompatibleCheckpoint("not a latentmol tensor file")
        n = int(line().split()[1])
        header = {}
        for _ in range(n):
            k, _, v = line().partition("=")
            header[k] = v
        m = int(line().split()[1])
        manifest = []
        for _ in range(m):
            name, shape, offset = line().split()
            dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
            manifest.append((name, dims, int(offset)))
        nbytes = int(line().split()[1])
    except (ValueError, IndexError) as exc:
        raise IncompatibleCheckpoint(f"malformed tensor file: {exc}") from None
    data = blob[pos:]
    if len(data) != nbytes:
        raise IncompatibleCheckpoint(f"data block has {len(data)} bytes, manifest says {nbytes}")
    tensors = {}
    for name, dims, offset in manifest:
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float32)
        tensors[name] = arr.reshape(dims)
    return header, tensors


def save(path: str | Path, header: dict[str, str], tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(header, tensors))


def load(path: str | Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
