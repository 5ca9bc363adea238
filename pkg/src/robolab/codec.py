"""Binarize-and-compress codec for map exchange.

Wire/disk layout of a compressed world:

    u16 big-endian  rows
    u16 big-endian  cols
    u8              round(threshold * 255)
    varint...       run lengths

Runs are row-major and alternate 0-run / 1-run starting with a 0-run
(which may have length zero).  Varints are unsigned LEB128: 7-bit
groups, least significant first, high bit set on all but the last
group.  The run lengths always sum to rows*cols.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .grid import OccupancyGrid


class CodecError(ValueError):
    """Corrupt or inconsistent compressed-world bytes."""


@dataclass(frozen=True)
class CompressedWorld:
    rows: int
    cols: int
    threshold: float
    runs: list[int]

    def to_bytes(self) -> bytes:
        head = struct.pack(">HHB", self.rows, self.cols,
                           int(round(self.threshold * 255)))
        return head + encode_varints(np.asarray(self.runs, dtype=np.int64))

    MAX_CELLS = 16 * 1024 * 1024

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedWorld":
        if len(data) < 5:
            raise CodecError("compressed world shorter than its header")
        rows, cols, thr = struct.unpack(">HHB", data[:5])
        if rows * cols > cls.MAX_CELLS:
            raise CodecError(f"{rows}x{cols} map exceeds the cell limit")
        runs = decode_varints(data[5:])
        cw = cls(rows=rows, cols=cols, threshold=thr / 255.0,
                 runs=runs.tolist())
        if int(runs.sum()) != rows * cols:
            raise CodecError(
                f"run lengths sum to {int(runs.sum())}, expected {rows * cols}")
        return cw


def encode_varints(values: np.ndarray) -> bytes:
    """LEB128-encode a vector of non-negative integers."""
    v = np.asarray(values, dtype=np.uint64)
    if v.size == 0:
        return b""
    if values.min() < 0:
        raise CodecError("varints encode non-negative integers only")
    # bytes needed per value: ceil(bitlength/7), min 1
    nbytes = np.ones(v.size, dtype=np.int64)
    bound = np.uint64(1 << 7)
    while True:
        more = v >= bound
        if not more.any():
            break
        nbytes[more] += 1
        bound = bound << np.uint64(7)
    total = int(nbytes.sum())
    out = np.zeros(total, dtype=np.uint8)
    starts = np.concatenate(([0], np.cumsum(nbytes)[:-1]))
    rem = v.copy()
    k = 0
    active = np.arange(v.size)
    while active.size:
        idx = starts[active] + k
        group = (rem[active] & np.uint64(0x7F)).astype(np.uint8)
        cont = nbytes[active] > (k + 1)
        out[idx] = group | (cont.astype(np.uint8) << 7)
        rem[active] = rem[active] >> np.uint64(7)
        active = active[cont]
        k += 1
    return out.tobytes()


def decode_varints(data: bytes) -> np.ndarray:
    """Inverse of encode_varints; raises CodecError on a truncated stream."""
    b = np.frombuffer(data, dtype=np.uint8)
    if b.size == 0:
        return np.zeros(0, dtype=np.int64)
    last = (b & 0x80) == 0
    if not last[-1]:
        raise CodecError("varint stream truncated mid-value")
    ends = np.flatnonzero(last)
    starts = np.concatenate(([0], ends[:-1] + 1))
    widths = ends - starts + 1
    if int(widths.max()) * 7 > 63:
        raise CodecError("varint wider than 63 bits")
    shifts = (np.arange(b.size) - np.repeat(starts, widths)) * 7
    terms = (b & 0x7F).astype(np.uint64) << shifts.astype(np.uint64)
    values = np.add.reduceat(terms, starts)
    return values.astype(np.int64)


def rle_encode(bits: np.ndarray) -> list[int]:
    """Row-major run lengths of a 0/1 grid, first run counting 0s."""
    flat = np.asarray(bits, dtype=np.uint8).ravel()
    if flat.size == 0:
        return []
    edges = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    runs = np.diff(bounds)
    if flat[0] == 1:  # leading zero-length 0-run keeps the parity convention
        return [0] + runs.tolist()
    return runs.tolist()


def rle_decode(runs: list[int] | np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Rebuild the 0/1 grid from run lengths; validates the total count."""
    r = np.asarray(runs, dtype=np.int64)
    if r.size and r.min() < 0:
        raise CodecError("negative run length")
    total = int(r.sum()) if r.size else 0
    if total != rows * cols:
        raise CodecError(f"run lengths sum to {total}, expected {rows * cols}")
    values = np.zeros(r.size, dtype=np.uint8)
    values[1::2] = 1
    flat = np.repeat(values, r)
    return flat.reshape(rows, cols)


def compress(grid: OccupancyGrid, threshold: float) -> CompressedWorld:
    """Binarize at `threshold` (occupied iff p >= threshold) and RLE-pack."""
    bits = grid.binarize(threshold)
    return CompressedWorld(rows=grid.rows, cols=grid.cols,
                           threshold=threshold, runs=rle_encode(bits))


def decompress(cw: CompressedWorld) -> np.ndarray:
    """Binary uint8 grid encoded by `cw`."""
    return rle_decode(cw.runs, cw.rows, cw.cols)
