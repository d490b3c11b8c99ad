"""Volumes, NIfTI-1 subset file I/O, masking, reslicing, slice partitioning.

The file format is a deliberately small NIfTI-1 single-file subset:
magic "n+1", 348-byte header, data at vox_offset 352, little-endian,
dim[0] = 3 only, datatypes float32 (code 16) and int16 (code 4), affine
taken from the srow_* fields.  Files written here round-trip bit-exactly.
Volume data is stored x-fastest on disk (Fortran order), exposed in memory
as an (nx, ny, nz) array indexed [i, j, k].

The volume's semantic intent (relative B1, absolute B1 in Hz, intensity,
mask, error-percent) is carried in the header descrip field as
"intent=NAME" so it survives round-trips.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFileError,
    DegenerateInputError,
    EmptyInputError,
    GridMismatchError,
    InvalidArgumentError,
    UnsupportedFormatError,
    ValidationError,
)

OUTSIDE = float("nan")  # sentinel returned for sample points outside the grid hull

_HULL_EPS = 1e-6  # voxel units; points this close to the hull are snapped inside


def is_outside(value: float) -> bool:
    """True if a sampled value is the outside-the-hull sentinel."""
    return math.isnan(value)


class VolumeIntent(str, Enum):
    RELATIVE_B1 = "RELATIVE_B1"
    ABSOLUTE_B1_HZ = "ABSOLUTE_B1_HZ"
    INTENSITY = "INTENSITY"
    MASK = "MASK"
    ERROR_PERCENT = "ERROR_PERCENT"


@dataclass(eq=False)
class Volume:
    """3-D scalar field with a voxel-index -> world-mm affine."""

    data: np.ndarray
    affine: np.ndarray
    intent: VolumeIntent
    voxel_size_mm: tuple[float, float, float] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.intent = VolumeIntent(self.intent)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValidationError("volume data must be a 3-D array")
        self.affine = np.asarray(self.affine, dtype=float)
        if self.affine.shape != (4, 4):
            raise ValidationError("affine must be 4x4")
        if not np.allclose(self.affine[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise ValidationError("affine bottom row must be [0, 0, 0, 1]")
        if abs(np.linalg.det(self.affine[:3, :3])) <= 1e-12:
            raise ValidationError("affine 3x3 part is not invertible")
        if self.intent is VolumeIntent.MASK:
            vals = np.unique(self.data)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValidationError("MASK volumes may contain only 0 and 1")
        if self.voxel_size_mm is None:
            self.voxel_size_mm = tuple(
                float(np.linalg.norm(self.affine[:3, a])) for a in range(3)
            )
        else:
            self.voxel_size_mm = tuple(float(v) for v in self.voxel_size_mm)
        self.data.setflags(write=False)
        self.affine.setflags(write=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def like(self, data: np.ndarray, intent: VolumeIntent) -> "Volume":
        """New volume on this grid."""
        return Volume(data=data, affine=self.affine, intent=intent,
                      voxel_size_mm=self.voxel_size_mm)

    def world_from_voxel(self, vox: np.ndarray) -> np.ndarray:
        vox = np.asarray(vox, dtype=float)
        return vox @ self.affine[:3, :3].T + self.affine[:3, 3]

    def voxel_from_world(self, world: np.ndarray) -> np.ndarray:
        world = np.asarray(world, dtype=float)
        inv = np.linalg.inv(self.affine)
        return world @ inv[:3, :3].T + inv[:3, 3]

    def same_grid(self, other: "Volume", atol: float = 1e-6) -> bool:
        return self.dims == other.dims and np.allclose(
            self.affine, other.affine, atol=atol
        )


def require_same_grid(*volumes: Volume) -> None:
    first = volumes[0]
    for v in volumes[1:]:
        if not first.same_grid(v):
            raise GridMismatchError(
                f"volumes are not on the same grid ({first.dims} vs {v.dims})"
            )


# ---------------------------------------------------------------------------
# NIfTI-1 subset I/O

_NII_DTYPES = {4: np.dtype("<i2"), 16: np.dtype("<f4")}
_NII_CODES = {np.dtype(np.int16): (4, 16), np.dtype(np.float32): (16, 32)}
_VOX_OFFSET = 352


def save_volume(v: Volume, path) -> None:
    """Write the NIfTI-1 subset; data dtype must be float32 or int16."""
    dtype = v.data.dtype.newbyteorder("=")
    if dtype not in _NII_CODES:
        raise UnsupportedFormatError(
            f"dtype {v.data.dtype} not writable; use float32 or int16"
        )
    code, bitpix = _NII_CODES[dtype]
    nx, ny, nz = v.dims
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, bitpix)
    dx, dy, dz = v.voxel_size_mm
    struct.pack_into("<8f", hdr, 76, 1.0, dx, dy, dz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(_VOX_OFFSET))
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    hdr[123] = 2  # xyzt_units: millimetres
    descrip = f"intent={v.intent.value}".encode()[:79]
    hdr[148:148 + len(descrip)] = descrip
    struct.pack_into("<h", hdr, 254, 1)  # sform_code: scanner anatomical
    struct.pack_into("<4f", hdr, 280, *v.affine[0])
    struct.pack_into("<4f", hdr, 296, *v.affine[1])
    struct.pack_into("<4f", hdr, 312, *v.affine[2])
    hdr[344:348] = b"n+1\x00"

    payload = np.asarray(v.data, dtype=dtype.newbyteorder("<")).tobytes(order="F")
    Path(path).write_bytes(bytes(hdr) + b"\x00\x00\x00\x00" + payload)


def load_volume(path) -> Volume:
    raw = Path(path).read_bytes()
    if len(raw) < 348:
        raise CorruptFileError(f"{path}: shorter than a NIfTI-1 header")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != 348:
        if struct.unpack_from(">i", raw, 0)[0] == 348:
            raise UnsupportedFormatError(f"{path}: big-endian files not supported")
        raise CorruptFileError(f"{path}: sizeof_hdr is {sizeof_hdr}, expected 348")
    magic = raw[344:348]
    if magic != b"n+1\x00":
        raise UnsupportedFormatError(f"{path}: magic {magic!r}, expected 'n+1'")
    dim = struct.unpack_from("<8h", raw, 40)
    if dim[0] != 3:
        raise UnsupportedFormatError(f"{path}: dim[0]={dim[0]}; only 3-D supported")
    nx, ny, nz = dim[1], dim[2], dim[3]
    if min(nx, ny, nz) < 1:
        raise CorruptFileError(f"{path}: nonpositive dimensions {dim[1:4]}")
    (datatype,) = struct.unpack_from("<h", raw, 70)
    if datatype not in _NII_DTYPES:
        raise UnsupportedFormatError(f"{path}: unsupported datatype code {datatype}")
    dtype = _NII_DTYPES[datatype]
    pixdim = struct.unpack_from("<8f", raw, 76)
    (vox_offset,) = struct.unpack_from("<f", raw, 108)
    offset = int(vox_offset)
    if offset < 348:
        raise CorruptFileError(f"{path}: vox_offset {vox_offset} below header size")
    slope, inter = struct.unpack_from("<2f", raw, 112)
    if slope not in (0.0, 1.0) or inter != 0.0:
        raise UnsupportedFormatError(
            f"{path}: scl_slope/scl_inter scaling ({slope}, {inter}) not supported"
        )
    (sform_code,) = struct.unpack_from("<h", raw, 254)
    if sform_code <= 0:
        raise UnsupportedFormatError(f"{path}: sform affine required (sform_code=0)")
    affine = np.eye(4)
    affine[0] = struct.unpack_from("<4f", raw, 280)
    affine[1] = struct.unpack_from("<4f", raw, 296)
    affine[2] = struct.unpack_from("<4f", raw, 312)

    descrip = raw[148:228].split(b"\x00", 1)[0].decode(errors="replace")
    intent = VolumeIntent.INTENSITY
    if descrip.startswith("intent="):
        try:
            intent = VolumeIntent(descrip[len("intent="):])
        except ValueError:
            pass

    nvox = nx * ny * nz
    need = nvox * dtype.itemsize
    if len(raw) - offset < need:
        raise CorruptFileError(
            f"{path}: payload holds {len(raw) - offset} bytes, header needs {need}"
        )
    data = np.frombuffer(raw, dtype=dtype, count=nvox, offset=offset)
    data = np.reshape(data, (nx, ny, nz), order="F").copy()
    return Volume(
        data=data,
        affine=affine,
        intent=intent,
        voxel_size_mm=tuple(float(p) for p in pixdim[1:4]),
    )


# ---------------------------------------------------------------------------
# Masking

def threshold_mask(v: Volume, method: str, fraction: float | None = None) -> Volume:
    """Binary mask from an intensity-like volume.

    method "fraction": keep voxels >= fraction * max(data).
    method "otsu": split a 256-bin histogram at the threshold maximizing
    the between-class variance; keep the upper class.
    """
    if v.intent not in (VolumeIntent.INTENSITY, VolumeIntent.RELATIVE_B1):
        raise InvalidArgumentError("threshold_mask expects INTENSITY or RELATIVE_B1")
    data = np.asarray(v.data, dtype=float)
    if method == "fraction":
        if fraction is None or not math.isfinite(fraction):
            raise InvalidArgumentError("fraction method needs a finite fraction")
        thr = fraction * float(data.max())
    elif method == "otsu":
        lo, hi = float(data.min()), float(data.max())
        if hi == lo:
            raise DegenerateInputError("constant volume has no Otsu threshold")
        counts, edges = np.histogram(data, bins=256, range=(lo, hi))
        p = counts / counts.sum()
        w0 = np.cumsum(p)
        centers = 0.5 * (edges[:-1] + edges[1:])
        mu_cum = np.cumsum(p * centers)
        mu_total = mu_cum[-1]
        w1 = 1.0 - w0
        with np.errstate(divide="ignore", invalid="ignore"):
            mu0 = mu_cum / w0
            mu1 = (mu_total - mu_cum) / w1
            sigma_b = w0 * w1 * (mu0 - mu1) ** 2
        sigma_b = np.nan_to_num(sigma_b[:-1], nan=-1.0)
        k = int(np.argmax(sigma_b))
        thr = float(edges[k + 1])
    else:
        raise InvalidArgumentError(f"unknown mask method {method!r}")
    mask = (data >= thr).astype(np.int16)
    return v.like(mask, VolumeIntent.MASK)


# ---------------------------------------------------------------------------
# Sampling and reslicing

def _trilinear_voxel(v: Volume, pts_vox: np.ndarray):
    """Trilinear interpolation at voxel-space points; (values, valid)."""
    n = np.asarray(v.dims, dtype=float)
    p = np.asarray(pts_vox, dtype=float)
    valid = np.all((p >= -_HULL_EPS) & (p <= n - 1 + _HULL_EPS), axis=-1)
    p = np.clip(p, 0.0, n - 1)
    i0 = np.floor(p).astype(np.int64)
    i0 = np.minimum(i0, np.maximum(np.asarray(v.dims) - 2, 0))
    f = p - i0
    i1 = np.minimum(i0 + 1, np.asarray(v.dims) - 1)
    d = v.data
    x0, y0, z0 = i0[..., 0], i0[..., 1], i0[..., 2]
    x1, y1, z1 = i1[..., 0], i1[..., 1], i1[..., 2]
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    gx, gy, gz = 1.0 - fx, 1.0 - fy, 1.0 - fz
    val = (
        d[x0, y0, z0] * gx * gy * gz
        + d[x1, y0, z0] * fx * gy * gz
        + d[x0, y1, z0] * gx * fy * gz
        + d[x0, y0, z1] * gx * gy * fz
        + d[x1, y1, z0] * fx * fy * gz
        + d[x1, y0, z1] * fx * gy * fz
        + d[x0, y1, z1] * gx * fy * fz
        + d[x1, y1, z1] * fx * fy * fz
    )
    return val, valid


def trilinear_sample(v: Volume, world_point_mm) -> float:
    """Value at one world point; OUTSIDE (NaN) beyond the voxel-center hull."""
    vox = v.voxel_from_world(np.asarray(world_point_mm, dtype=float)[None, :])
    val, valid = _trilinear_voxel(v, vox)
    return float(val[0]) if valid[0] else OUTSIDE


def reslice_to(src: Volume, target_affine, target_dims) -> tuple[Volume, Volume]:
    """Resample src onto the target grid.

    Returns (resliced, validity): out-of-hull voxels are zero in the
    resliced volume and zero in the int16 validity mask.
    """
    target_dims = tuple(int(d) for d in target_dims)
    if len(target_dims) != 3 or min(target_dims) < 1:
        raise InvalidArgumentError(f"degenerate target dims {target_dims}")
    target_affine = np.asarray(target_affine, dtype=float)
    if target_affine.shape != (4, 4) or abs(np.linalg.det(target_affine[:3, :3])) <= 1e-12:
        raise InvalidArgumentError("target affine must be an invertible 4x4")

    compose = np.linalg.inv(src.affine) @ target_affine
    ii, jj, kk = np.meshgrid(
        np.arange(target_dims[0]),
        np.arange(target_dims[1]),
        np.arange(target_dims[2]),
        indexing="ij",
    )
    idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3).astype(float)
    vox_src = idx @ compose[:3, :3].T + compose[:3, 3]
    vals, valid = _trilinear_voxel(src, vox_src)
    vals = np.where(valid, vals, 0.0)

    # interpolation of a binary mask yields fractional occupancy
    out_intent = (VolumeIntent.INTENSITY if src.intent is VolumeIntent.MASK
                  else src.intent)
    out = Volume(
        data=vals.reshape(target_dims).astype(np.float32),
        affine=target_affine,
        intent=out_intent,
    )
    validity = Volume(
        data=valid.reshape(target_dims).astype(np.int16),
        affine=target_affine,
        intent=VolumeIntent.MASK,
    )
    return out, validity


def save_resliced(resliced: Volume, validity: Volume, path) -> Path:
    """Write a resliced volume plus its validity mask as a sibling file
    with the "_valid" suffix; returns the sibling path."""
    path = Path(path)
    save_volume(resliced, path)
    sibling = path.with_name(path.stem + "_valid" + path.suffix)
    save_volume(validity, sibling)
    return sibling


# ---------------------------------------------------------------------------
# Slice-stack geometry

@dataclass(eq=False)
class SliceStackGeometry:
    """Positions/orientation/thickness of a 2-D multi-slice acquisition."""

    n_slices: int
    normal: np.ndarray
    center_mm: np.ndarray  # (n_slices, 3) world points
    thickness_mm: float
    in_plane_extent_mm: tuple[float, float]

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        self.center_mm = np.asarray(self.center_mm, dtype=float)
        if self.n_slices < 1:
            raise ValidationError("n_slices must be >= 1")
        if self.normal.shape != (3,) or abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise ValidationError("normal must be a unit 3-vector")
        if self.center_mm.shape != (self.n_slices, 3):
            raise ValidationError("center_mm must be one world point per slice")
        if not (math.isfinite(self.thickness_mm) and self.thickness_mm > 0):
            raise ValidationError("thickness_mm must be positive")
        along = self.center_mm @ self.normal
        if self.n_slices > 1 and not np.all(np.diff(along) > 0):
            raise ValidationError("slice centers must be ordered along the normal")


def save_geometry(geom: SliceStackGeometry, path) -> None:
    """Write the geometry JSON (regular spacing required by the schema)."""
    along = geom.center_mm @ geom.normal
    if geom.n_slices > 1:
        spacings = np.diff(along)
        spacing = float(spacings[0])
        if not np.allclose(spacings, spacing, rtol=1e-9, atol=1e-9):
            raise InvalidArgumentError("geometry file requires uniform slice spacing")
    else:
        spacing = geom.thickness_mm
    doc = {
        "n_slices": geom.n_slices,
        "normal": [float(x) for x in geom.normal],
        "first_center_mm": [float(x) for x in geom.center_mm[0]],
        "spacing_mm": spacing,
        "thickness_mm": geom.thickness_mm,
        "extent_mm": [float(x) for x in geom.in_plane_extent_mm],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_geometry(path) -> SliceStackGeometry:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: line {e.lineno}: {e.msg}") from e
    try:
        n = int(doc["n_slices"])
        normal = np.asarray(doc["normal"], dtype=float)
        first = np.asarray(doc["first_center_mm"], dtype=float)
        spacing = float(doc["spacing_mm"])
        thickness = float(doc["thickness_mm"])
        extent = tuple(float(x) for x in doc["extent_mm"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"{path}: bad geometry document: {e}") from e
    norm = np.linalg.norm(normal)
    if norm <= 0:
        raise ValidationError(f"{path}: zero-length normal")
    normal = normal / norm
    centers = first[None, :] + spacing * np.arange(n)[:, None] * normal[None, :]
    return SliceStackGeometry(
        n_slices=n, normal=normal, center_mm=centers,
        thickness_mm=thickness, in_plane_extent_mm=extent,
    )


def geometry_from_reference(v: Volume, n_slices: int, thickness_mm: float,
                            spacing_mm: float | None = None,
                            axis: int = 2) -> SliceStackGeometry:
    """Slice stack along one voxel axis of a reference volume, centered on it."""
    if spacing_mm is None:
        spacing_mm = thickness_mm
    direction = v.affine[:3, axis]
    normal = direction / np.linalg.norm(direction)
    center_vox = (np.asarray(v.dims, dtype=float) - 1.0) / 2.0
    center_world = v.world_from_voxel(center_vox[None, :])[0]
    offsets = (np.arange(n_slices) - (n_slices - 1) / 2.0) * spacing_mm
    centers = center_world[None, :] + offsets[:, None] * normal[None, :]
    other = [a for a in range(3) if a != axis]
    extent = tuple(
        float(v.dims[a] * np.linalg.norm(v.affine[:3, a])) for a in other
    )
    return SliceStackGeometry(
        n_slices=n_slices, normal=normal, center_mm=centers,
        thickness_mm=thickness_mm, in_plane_extent_mm=extent,
    )


def partition_slices(v: Volume, geom: SliceStackGeometry,
                     mask: Volume) -> list[np.ndarray]:
    """Masked voxel values grouped by acquisition slab.

    A voxel belongs to slice i when its signed distance along the normal
    from center i is within +/- thickness/2; claims are resolved in slice
    order, so shared boundaries go to the lower index.  Voxels in no slab
    are dropped.
    """
    require_same_grid(v, mask)
    if mask.intent is not VolumeIntent.MASK:
        raise InvalidArgumentError("mask volume must have MASK intent")
    sel = np.asarray(mask.data) != 0
    if not np.any(sel):
        raise EmptyInputError("mask selects no voxels")
    idx = np.argwhere(sel).astype(float)
    world = v.world_from_voxel(idx)
    d = world @ geom.normal
    values = np.asarray(v.data, dtype=float)[sel]
    centers_d = geom.center_mm @ geom.normal
    half = geom.thickness_mm / 2.0
    unassigned = np.ones(d.size, dtype=bool)
    out = []
    for c in centers_d:
        take = unassigned & (np.abs(d - c) <= half)
        out.append(values[take])
        unassigned &= ~take
    return out
