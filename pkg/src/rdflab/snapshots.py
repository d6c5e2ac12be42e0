"""Bit-exact binary field snapshots.

Layout (all integers and floats little-endian):

    bytes 0..6   magic "RDFLAB1"
    byte  7      format version (1)
    uint32       dimension n
    uint32 * n   node counts per axis
    uint32       component count
    float64 * n  box half-widths per axis
    float64      time stamp t
    payload      component count * node count float64 values,
                 component-major, nodes row-major with axis 0 slowest

Writing then reading reproduces the payload bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid_calculus import GridSpec

MAGIC = b"RDFLAB1"
VERSION = 1


def write_snapshot(path, grid: GridSpec, components: np.ndarray, time: float) -> None:
    """Write one field snapshot; `components` is (ncomp, *grid.shape) or a
    bare (*grid.shape) scalar array."""
    comps = np.asarray(components, dtype=np.float64)
    if comps.ndim == grid.dimension:
        comps = comps[None]
    if comps.shape[1:] != grid.shape:
        raise ValueError("component array does not match the grid")
    n = grid.dimension
    header = MAGIC + struct.pack("<B", VERSION)
    header += struct.pack("<I", n)
    header += struct.pack(f"<{n}I", *grid.nodes)
    header += struct.pack("<I", comps.shape[0])
    header += struct.pack(f"<{n}d", *grid.half_widths)
    header += struct.pack("<d", float(time))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(comps).astype("<f8", copy=False).tobytes())


def read_snapshot(path) -> tuple[GridSpec, np.ndarray, float]:
    """Read a snapshot back as (grid, components, time)."""
    raw = Path(path).read_bytes()
    if raw[:7] != MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic)")
    if raw[7] != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {raw[7]}")
    off = 8
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    nodes = struct.unpack_from(f"<{n}I", raw, off)
    off += 4 * n
    (ncomp,) = struct.unpack_from("<I", raw, off)
    off += 4
    half_widths = struct.unpack_from(f"<{n}d", raw, off)
    off += 8 * n
    (t,) = struct.unpack_from("<d", raw, off)
    off += 8
    grid = GridSpec(n, nodes, half_widths)
    expected = ncomp * grid.node_count * 8
    payload = raw[off:]
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    comps = np.frombuffer(payload, dtype="<f8").reshape((ncomp,) + grid.shape)
    return grid, comps.astype(np.float64), t
