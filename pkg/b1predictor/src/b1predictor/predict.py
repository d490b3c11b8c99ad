"""Whole-volume inference: overlapping sliding windows, averaged overlaps."""

from __future__ import annotations

import numpy as np
import torch

from .errors import InvalidArgumentError
from .patches import PATCH, normalized_localizer
from .synth import SyntheticSubject


def _positions(dim: int, patch: int, stride: int):
    pos = list(range(0, dim - patch + 1, stride))
    if pos[-1] != dim - patch:
        pos.append(dim - patch)
    return pos


def predict_volume(model, subject: SyntheticSubject, patch: int = PATCH,
                   stride: int = 16, batch: int = 8) -> np.ndarray:
    """Predicted relative B1 on the subject's grid; masked-out voxels are 0."""
    dims = subject.mask.shape
    if any(d < patch for d in dims):
        raise InvalidArgumentError("volume smaller than the patch size")
    loc = normalized_localizer(subject)
    acc = np.zeros(dims, np.float64)
    cnt = np.zeros(dims, np.float64)
    corners = [(x, y, z)
               for x in _positions(dims[0], patch, stride)
               for y in _positions(dims[1], patch, stride)
               for z in _positions(dims[2], patch, stride)]
    model.eval()
    with torch.no_grad():
        for start in range(0, len(corners), batch):
            group = corners[start:start + batch]
            tiles = np.stack([
                loc[x:x + patch, y:y + patch, z:z + patch] for x, y, z in group
            ])[:, None]
            pred = model(torch.from_numpy(tiles)).numpy()[:, 0]
            for (x, y, z), tile in zip(group, pred):
                acc[x:x + patch, y:y + patch, z:z + patch] += tile
                cnt[x:x + patch, y:y + patch, z:z + patch] += 1.0
    out = acc / np.maximum(cnt, 1.0)
    out[subject.mask == 0] = 0.0
    out = np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)
    return out.astype(np.float32)


def prediction_error_percent(predicted: np.ndarray, measured: np.ndarray,
                             mask: np.ndarray) -> float:
    """Mean absolute percent error over masked, measured-nonzero voxels."""
    sel = (mask != 0) & (measured != 0)
    if not sel.any():
        raise InvalidArgumentError("no voxels to compare")
    err = (predicted[sel].astype(float) - measured[sel]) / measured[sel] * 100.0
    return float(np.mean(np.abs(err)))
