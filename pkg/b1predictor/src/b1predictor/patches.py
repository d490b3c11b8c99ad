"""Aligned localizer/B1 patch sampling from synthetic subjects."""

from __future__ import annotations

import numpy as np

from .errors import EmptyInputError, InvalidArgumentError
from .synth import SyntheticSubject

PATCH = 32


def normalized_localizer(subject: SyntheticSubject) -> np.ndarray:
    """Localizer scaled by its masked mean (the network's input units)."""
    sel = subject.mask != 0
    mean = float(subject.localizer[sel].mean()) if sel.any() else 0.0
    if not np.isfinite(mean) or abs(mean) < 1e-12:
        mean = 1.0
    return (subject.localizer / mean).astype(np.float32)


def sample_patches(subject: SyntheticSubject, n: int, seed: int,
                   patch: int = PATCH, return_corners: bool = False):
    """n aligned (localizer, b1, mask) patch triples, centers uniform over
    the masked voxels whose patch box fits inside the volume."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    dims = np.asarray(subject.mask.shape)
    if np.any(dims < patch):
        raise InvalidArgumentError("volume smaller than the patch size")
    half = patch // 2
    centers = np.argwhere(subject.mask != 0)
    fits = np.all((centers - half >= 0) & (centers - half + patch <= dims), axis=1)
    centers = centers[fits]
    if centers.size == 0:
        raise EmptyInputError("mask has no voxels with a fitting patch box")
    rng = np.random.default_rng(seed)
    picks = centers[rng.integers(0, centers.shape[0], size=n)]
    corners = picks - half

    loc = normalized_localizer(subject)
    out_loc = np.empty((n, 1, patch, patch, patch), np.float32)
    out_b1 = np.empty((n, 1, patch, patch, patch), np.float32)
    out_mask = np.empty((n, 1, patch, patch, patch), np.float32)
    for i, (x, y, z) in enumerate(corners):
        sl = (slice(x, x + patch), slice(y, y + patch), slice(z, z + patch))
        out_loc[i, 0] = loc[sl]
        out_b1[i, 0] = subject.b1[sl]
        out_mask[i, 0] = subject.mask[sl]
    if return_corners:
        return out_loc, out_b1, out_mask, corners
    return out_loc, out_b1, out_mask
