"""Synthetic subjects: phantom anatomy, smooth B1 fields, localizer signal.

Anatomy is a nested-ellipsoid head phantom (scalp, skull, gray matter,
white matter, ventricles) with per-subject shape jitter and a few random
proton-density blobs.  The relative B1 field is a smooth low-order pattern:
center-bright with a quadratic radial falloff, a linear superior-inferior
tilt, and one random ellipsoidal perturbation.  The localizer is the
spoiled gradient-echo signal at a nominal 16 degree flip angle,

    s = pd * sin(a) * (1 - E1) / (1 - cos(a) * E1),   a = 16deg * b1,

with E1 = exp(-TR/T1) per compartment and additive Gaussian noise, so the
B1 pattern is implicitly encoded in the image intensities.

Head poses are rigid rotations of the whole scene about the volume center:
LEFT/RIGHT are +/-20 degree yaw about the superior-inferior (z) axis,
FRONT/BACK are +/-20 degree pitch about the left-right (x) axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

VOXEL_MM = 4.0
TR_S = 0.004
FLIP_DEG = 16.0

POSES = ("NEUTRAL", "LEFT", "RIGHT", "FRONT", "BACK")
_POSE_AXIS_ANGLE = {
    "NEUTRAL": (np.array([0.0, 0.0, 1.0]), 0.0),
    "LEFT": (np.array([0.0, 0.0, 1.0]), math.radians(20.0)),
    "RIGHT": (np.array([0.0, 0.0, 1.0]), math.radians(-20.0)),
    "FRONT": (np.array([1.0, 0.0, 0.0]), math.radians(20.0)),
    "BACK": (np.array([1.0, 0.0, 0.0]), math.radians(-20.0)),
}

# (proton density, T1 seconds)
_TISSUE = {
    "scalp": (0.75, 0.5),
    "skull": (0.20, 0.3),
    "gm": (0.85, 1.8),
    "wm": (0.70, 1.2),
    "csf": (1.00, 4.0),
}


@dataclass
class SubjectParams:
    head_semiaxes_mm: np.ndarray
    brain_fraction: float
    wm_fraction: float
    vent_semiaxes_mm: np.ndarray
    blobs: list  # (center_mm, semiaxes_mm, pd_scale)
    b1_base: float
    b1_radial: float
    b1_tilt: float
    b1_center_mm: np.ndarray
    bump_center_mm: np.ndarray
    bump_sigma_mm: float
    bump_amp: float
    noise_frac: float
    noise_seed: int


@dataclass
class SyntheticSubject:
    localizer: np.ndarray  # float32, INTENSITY
    b1: np.ndarray         # float32, RELATIVE_B1 (None for file-loaded inputs)
    mask: np.ndarray       # int16, MASK
    affine: np.ndarray
    pose: str = "NEUTRAL"
    params: SubjectParams | None = None


def pose_rotation(pose: str) -> np.ndarray:
    try:
        axis, angle = _POSE_AXIS_ANGLE[pose]
    except KeyError:
        raise InvalidArgumentError(f"unknown pose {pose!r}") from None
    k = axis / np.linalg.norm(axis)
    kx, ky, kz = k
    kmat = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + math.sin(angle) * kmat + (1 - math.cos(angle)) * (kmat @ kmat)


def draw_subject_params(rng: np.random.Generator, extent_mm: float) -> SubjectParams:
    half = extent_mm / 2.0
    head = half * np.array([0.72, 0.82, 0.78]) * rng.uniform(0.93, 1.07, 3)
    # blob amplitude stays well below the B1-induced intensity variation:
    # a smooth proton-density blob is locally indistinguishable from a B1
    # bump, so strong blobs would make the prediction task ill-posed
    blobs = []
    for _ in range(rng.integers(2, 5)):
        center = rng.uniform(-0.4, 0.4, 3) * head
        semi = rng.uniform(8.0, 22.0, 3)
        blobs.append((center, semi, float(rng.uniform(0.96, 1.04))))
    return SubjectParams(
        head_semiaxes_mm=head,
        brain_fraction=float(rng.uniform(0.78, 0.84)),
        wm_fraction=float(rng.uniform(0.55, 0.65)),
        vent_semiaxes_mm=np.array([10.0, 16.0, 10.0]) * rng.uniform(0.8, 1.2),
        blobs=blobs,
        b1_base=float(rng.uniform(1.0, 1.15)),
        b1_radial=float(rng.uniform(0.40, 0.60)),
        b1_tilt=float(rng.uniform(0.30, 0.45)),
        b1_center_mm=rng.uniform(-12.0, 12.0, 3),
        bump_center_mm=rng.uniform(-0.35, 0.35, 3) * head,
        bump_sigma_mm=float(rng.uniform(25.0, 45.0)),
        bump_amp=float(rng.uniform(-0.20, 0.20)),
        noise_frac=0.015,
        noise_seed=int(rng.integers(0, 2**31 - 1)),
    )


def _ellipsoid(coords, center, semiaxes):
    return sum(((coords[a] - center[a]) / semiaxes[a]) ** 2 for a in range(3)) <= 1.0


def _b1_field(params: SubjectParams, coords, half_mm: float) -> np.ndarray:
    rho2 = sum(((coords[a] - params.b1_center_mm[a]) / half_mm) ** 2
               for a in range(3))
    bump_d2 = sum((coords[a] - params.bump_center_mm[a]) ** 2 for a in range(3))
    b1 = (
        params.b1_base
        - params.b1_radial * rho2
        + params.b1_tilt * (coords[2] / half_mm)
        + params.bump_amp * np.exp(-0.5 * bump_d2 / params.bump_sigma_mm**2)
    )
    return np.clip(b1, 0.05, 2.0)


def realize(params: SubjectParams, grid: int, pose: str = "NEUTRAL",
            voxel_mm: float = VOXEL_MM) -> SyntheticSubject:
    """Evaluate a subject's fields on the grid under a head pose.

    Fields are functions of world coordinates, so rotated poses are exact
    rigid rotations of anatomy and B1 together (no resampling error).
    """
    n = int(grid)
    affine = np.diag([voxel_mm, voxel_mm, voxel_mm, 1.0])
    affine[:3, 3] = -(n - 1) / 2.0 * voxel_mm  # world origin at volume center
    idx = np.indices((n, n, n)).astype(float)
    world = [idx[a] * voxel_mm + affine[a, 3] for a in range(3)]
    rot = pose_rotation(pose)
    rinv = rot.T
    coords = [
        rinv[a, 0] * world[0] + rinv[a, 1] * world[1] + rinv[a, 2] * world[2]
        for a in range(3)
    ]
    half_mm = n * voxel_mm / 2.0

    zero3 = np.zeros(3)
    head = _ellipsoid(coords, zero3, params.head_semiaxes_mm)
    skull = _ellipsoid(coords, zero3, params.head_semiaxes_mm * 0.94)
    brain = _ellipsoid(coords, zero3,
                       params.head_semiaxes_mm * params.brain_fraction)
    wm = _ellipsoid(coords, zero3,
                    params.head_semiaxes_mm * params.brain_fraction
                    * params.wm_fraction)
    vent = _ellipsoid(coords, np.array([0.0, 0.0, 8.0]), params.vent_semiaxes_mm)

    pd = np.zeros((n, n, n))
    t1 = np.full((n, n, n), 1.0)
    for sel, tissue in ((head, "scalp"), (skull, "skull"), (brain, "gm"),
                        (wm, "wm"), (vent & brain, "csf")):
        pd[sel] = _TISSUE[tissue][0]
        t1[sel] = _TISSUE[tissue][1]
    for center, semi, scale in params.blobs:
        sel = _ellipsoid(coords, center, semi) & brain
        pd[sel] *= scale

    b1 = _b1_field(params, coords, half_mm)
    alpha = math.radians(FLIP_DEG) * b1
    e1 = np.exp(-TR_S / t1)
    signal = pd * np.sin(alpha) * (1.0 - e1) / (1.0 - np.cos(alpha) * e1)
    noise_rng = np.random.default_rng(params.noise_seed + 101 * POSES.index(pose))
    ref = signal[head].mean() if head.any() else 1.0
    localizer = signal + noise_rng.normal(0.0, params.noise_frac * ref, signal.shape)

    return SyntheticSubject(
        localizer=localizer.astype(np.float32),
        b1=b1.astype(np.float32),
        mask=brain.astype(np.int16),
        affine=affine,
        pose=pose,
        params=params,
    )


def erode_mask(mask: np.ndarray, iterations: int = 1) -> np.ndarray:
    """6-neighborhood binary erosion; trims unreliable rim voxels before
    per-slice statistics (partial-volume edges dominate prediction error)."""
    m = mask.astype(bool)
    for _ in range(iterations):
        out = m.copy()
        for ax in range(3):
            out &= np.roll(m, 1, axis=ax) & np.roll(m, -1, axis=ax)
        m = out
    return m.astype(np.int16)


def synthesize_cohort(n_subjects: int, grid: int, seed: int,
                      voxel_mm: float = VOXEL_MM) -> list[SyntheticSubject]:
    """Deterministic cohort of NEUTRAL-pose subjects for one seed."""
    if n_subjects < 2:
        raise InvalidArgumentError("need at least 2 subjects")
    if grid < 32:
        raise InvalidArgumentError("grid smaller than the 32-voxel patch size")
    rng = np.random.default_rng(seed)
    extent = grid * voxel_mm
    return [
        realize(draw_subject_params(rng, extent), grid, "NEUTRAL", voxel_mm)
        for _ in range(n_subjects)
    ]
