"""FLD1 tensor files: self-describing binary containers for f64 arrays.

Layout (little-endian throughout): bytes 0-3 ASCII "FLD1"; byte 4 dtype code
(0 = f64); byte 5 axis count A with channels counted as axis 0; bytes 6-7
zero padding; A x u64 dimension sizes; row-major f64 payload, last axis
fastest. No compression, no alignment padding.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import FieldFormatError
from .grids import Axis, GridSpec, RealField

MAGIC = b"FLD1"
DTYPE_F64 = 0


def pack_array(arr: np.ndarray) -> bytes:
    """Serialize an array; axis 0 is recorded as the channel axis."""
    a = np.ascontiguousarray(arr, dtype=np.float64)
    if a.ndim < 1:
        a = a.reshape(1)
    header = MAGIC + struct.pack("<BBH", DTYPE_F64, a.ndim, 0)
    dims = struct.pack(f"<{a.ndim}Q", *a.shape)
    payload = a.astype("<f8", copy=False).tobytes(order="C")
    return header + dims + payload


def unpack_array(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise FieldFormatError("truncated FLD1 header")
    if buf[:4] != MAGIC:
        raise FieldFormatError(f"bad magic {buf[:4]!r}")
    dtype_code, ndim, pad = struct.unpack("<BBH", buf[4:8])
    if dtype_code != DTYPE_F64:
        raise FieldFormatError(f"unsupported dtype code {dtype_code}")
    if pad != 0:
        raise FieldFormatError("nonzero header padding")
    need = 8 + 8 * ndim
    if len(buf) < need:
        raise FieldFormatError("truncated FLD1 dimension table")
    shape = struct.unpack(f"<{ndim}Q", buf[8:need])
    count = int(np.prod(shape)) if shape else 0
    expect = need + 8 * count
    if len(buf) != expect:
        raise FieldFormatError(
            f"payload length mismatch: have {len(buf) - need} bytes, "
            f"declared shape {shape} needs {8 * count}"
        )
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=need)
    return data.reshape(shape).astype(np.float64)


def write_array(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(pack_array(arr))


def read_array(path: str | Path) -> np.ndarray:
    return unpack_array(Path(path).read_bytes())


def write_fld(f: RealField, path: str | Path) -> None:
    write_array(path, f.data)


def read_fld(path: str | Path, grid: GridSpec | None = None) -> RealField:
    """Read a field; without a grid, axes get unit extents and generic names.

    The file format carries sizes only; physical extents travel in dataset
    manifests and must be reattached by the caller when they matter.
    """
    data = read_array(path)
    if data.ndim < 2:
        raise FieldFormatError("field files need a channel axis plus >= 1 grid axis")
    if grid is None:
        axes = tuple(Axis(f"a{i}", n, 1.0) for i, n in enumerate(data.shape[1:]))
        grid = GridSpec(axes)
    return RealField(grid, data)
