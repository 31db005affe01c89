"""Reader and writer for the binary ``TTF1`` tensor-train file format.

Layout (all little-endian)::

    b"TTF1"
    u32 d
    u32 n_1 ... n_d
    u32 r_0 ... r_d
    core 1 .. core d, each as its vertical unfolding in column-major order (f64)

Because cores are kept in Fortran order, the payload of a core is exactly its
memory image.
"""

from __future__ import annotations

import os
import struct
from typing import BinaryIO

import numpy as np

from .core import TTTensor
from .errors import FormatError, RankChainMismatch, TTError

MAGIC = b"TTF1"


def dumps(tt: TTTensor) -> bytes:
    d = tt.ndim
    parts = [MAGIC, struct.pack(f"<I{d}I{d + 1}I", d, *tt.mode_sizes, *tt.ranks)]
    for c in tt.cores:
        parts.append(np.asarray(c, dtype="<f8").tobytes(order="F"))
    return b"".join(parts)


def loads(data: bytes) -> TTTensor:
    if data[:4] != MAGIC:
        raise FormatError("not a TTF1 file (bad magic)")
    pos = 4

    def take_u32(count: int) -> tuple[int, ...]:
        nonlocal pos
        end = pos + 4 * count
        if end > len(data):
            raise FormatError("truncated header")
        out = struct.unpack(f"<{count}I", data[pos:end])
        pos = end
        return out

    (d,) = take_u32(1)
    if d < 1:
        raise FormatError("d must be at least 1")
    modes = take_u32(d)
    ranks = take_u32(d + 1)
    if min(modes) < 1 or min(ranks) < 1:
        raise FormatError("mode sizes and ranks must be positive")
    if ranks[0] != 1 or ranks[-1] != 1:
        raise RankChainMismatch("boundary ranks must be 1")
    cores = []
    for k in range(d):
        count = ranks[k] * modes[k] * ranks[k + 1]
        end = pos + 8 * count
        if end > len(data):
            raise FormatError(f"truncated payload in core {k + 1}")
        flat = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
        cores.append(flat.reshape(ranks[k], modes[k], ranks[k + 1], order="F").astype(np.float64))
        pos = end
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes")
    try:
        return TTTensor(cores, copy=False)
    except TTError as exc:
        raise FormatError(str(exc)) from exc


def write_tt(path: str | os.PathLike | BinaryIO, tt: TTTensor) -> None:
    payload = dumps(tt)
    if hasattr(path, "write"):
        path.write(payload)
        return
    with open(path, "wb") as fh:
        fh.write(payload)


def read_tt(path: str | os.PathLike | BinaryIO) -> TTTensor:
    if hasattr(path, "read"):
        return loads(path.read())
    with open(path, "rb") as fh:
        return loads(fh.read())
