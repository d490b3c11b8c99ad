"""Head-pose robustness: per-pose prediction error of one subject."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .predict import predict_volume, prediction_error_percent
from .synth import POSES, draw_subject_params, realize, VOXEL_MM


def rotation_robustness(model, grid: int, seed: int, poses=POSES,
                        voxel_mm: float = VOXEL_MM):
    """One subject rendered in each pose, predicted, scored with the
    percent-error map summary; returns [(pose, mean_abs_percent), ...]."""
    bad = [p for p in poses if p not in POSES]
    if bad:
        raise InvalidArgumentError(f"unknown poses: {bad}")
    rng = np.random.default_rng(seed)
    params = draw_subject_params(rng, grid * voxel_mm)
    rows = []
    for pose in poses:
        subject = realize(params, grid, pose, voxel_mm)
        pred = predict_volume(model, subject)
        err = prediction_error_percent(pred, subject.b1, subject.mask)
        rows.append((pose, err))
    return rows


def robustness_to_csv(rows, path) -> None:
    lines = ["pose,mean_abs_percent"]
    lines += [f"{pose},{err!r}" for pose, err in rows]
    Path(path).write_text("\n".join(lines) + "\n")
