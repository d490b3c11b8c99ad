"""Minimal NIfTI-1 single-file I/O for the shared volume format.

Independent implementation of the wire format the planning toolkit reads
and writes: magic "n+1", 348-byte header, payload at offset 352,
little-endian, 3-D, float32 (code 16) or int16 (code 4), sform affine,
volume intent in descrip as "intent=NAME", x-fastest data order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError

_DTYPES = {4: np.dtype("<i2"), 16: np.dtype("<f4")}
_CODES = {np.dtype(np.int16): (4, 16), np.dtype(np.float32): (16, 32)}


def save_nifti(path, data: np.ndarray, affine: np.ndarray, intent: str) -> None:
    data = np.asarray(data)
    dtype = data.dtype.newbyteorder("=")
    if dtype not in _CODES:
        raise InvalidArgumentError(f"dtype {data.dtype} not in the subset")
    if data.ndim != 3:
        raise InvalidArgumentError("volume must be 3-D")
    code, bitpix = _CODES[dtype]
    affine = np.asarray(affine, dtype=float)
    nx, ny, nz = data.shape
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, bitpix)
    voxel = [float(np.linalg.norm(affine[:3, a])) for a in range(3)]
    struct.pack_into("<8f", hdr, 76, 1.0, *voxel, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<f", hdr, 112, 1.0)
    struct.pack_into("<f", hdr, 116, 0.0)
    hdr[123] = 2
    descrip = f"intent={intent}".encode()[:79]
    hdr[148:148 + len(descrip)] = descrip
    struct.pack_into("<h", hdr, 254, 1)
    struct.pack_into("<4f", hdr, 280, *affine[0])
    struct.pack_into("<4f", hdr, 296, *affine[1])
    struct.pack_into("<4f", hdr, 312, *affine[2])
    hdr[344:348] = b"n+1\x00"
    payload = data.astype(dtype.newbyteorder("<"), copy=False).tobytes(order="F")
    Path(path).write_bytes(bytes(hdr) + b"\x00\x00\x00\x00" + payload)


def load_nifti(path):
    """Returns (data, affine, intent)."""
    raw = Path(path).read_bytes()
    if len(raw) < 352 or struct.unpack_from("<i", raw, 0)[0] != 348:
        raise InvalidArgumentError(f"{path}: not a little-endian NIfTI-1 file")
    if raw[344:348] != b"n+1\x00":
        raise InvalidArgumentError(f"{path}: bad magic")
    dim = struct.unpack_from("<8h", raw, 40)
    if dim[0] != 3:
        raise InvalidArgumentError(f"{path}: only 3-D supported")
    (code,) = struct.unpack_from("<h", raw, 70)
    if code not in _DTYPES:
        raise InvalidArgumentError(f"{path}: datatype code {code} unsupported")
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    affine = np.eye(4)
    affine[0] = struct.unpack_from("<4f", raw, 280)
    affine[1] = struct.unpack_from("<4f", raw, 296)
    affine[2] = struct.unpack_from("<4f", raw, 312)
    descrip = raw[148:228].split(b"\x00", 1)[0].decode(errors="replace")
    intent = descrip[len("intent="):] if descrip.startswith("intent=") else "INTENSITY"
    nx, ny, nz = dim[1], dim[2], dim[3]
    data = np.frombuffer(raw, _DTYPES[code], count=nx * ny * nz,
                         offset=int(vox_offset))
    return np.reshape(data, (nx, ny, nz), order="F").copy(), affine, intent


def save_geometry_json(path, n_slices: int, normal, first_center_mm,
                       spacing_mm: float, thickness_mm: float, extent_mm) -> None:
    import json

    doc = {
        "n_slices": int(n_slices),
        "normal": [float(x) for x in normal],
        "first_center_mm": [float(x) for x in first_center_mm],
        "spacing_mm": float(spacing_mm),
        "thickness_mm": float(thickness_mm),
        "extent_mm": [float(x) for x in extent_mm],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
