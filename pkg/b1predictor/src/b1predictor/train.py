"""Training loop: masked-MSE regression of B1 patches from localizer patches.

The optimizer is Adam at the configured learning rate; on this
un-normalized U-Net, plain SGD (with or without momentum) stalls at the
constant-mean level regardless of rate, while Adam refines the spatial
pattern.  Rates around 1e-3 train well; the full-scale default of 0.02 is
accepted but trains poorly with Adam.  The loss is the mean squared error
over masked voxels only.  All randomness (patch
sampling, train/validation split, batch shuffling, weight init) flows from
the single config seed, so runs are reproducible on one device.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidArgumentError, TrainingDivergedError
from .patches import sample_patches
from .unet import UNet3D


@dataclass
class TrainConfig:
    patch_size: int = 32
    patches_per_subject: int = 1000
    epochs: int = 200
    learning_rate: float = 0.02
    batch_size: int = 16
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 8 or self.patch_size % 4 != 0:
            raise InvalidArgumentError("patch_size must be a multiple of 4, >= 8")
        if not 0.0 < self.validation_fraction < 1.0:
            raise InvalidArgumentError("validation_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.patches_per_subject < 1:
            raise InvalidArgumentError("epochs, batch_size, patches_per_subject >= 1")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidArgumentError("learning_rate must be positive")


@dataclass
class TrainResult:
    model: UNet3D
    history: list
    best_epoch: int
    best_val_loss: float
    baseline_val_loss: float
    config: TrainConfig


def _masked_mse(pred, target, mask):
    weight = mask.sum().clamp(min=1.0)
    return ((pred - target) ** 2 * mask).sum() / weight


def train(cohort, cfg: TrainConfig) -> TrainResult:
    """Train on a cohort of synthetic subjects.

    The patch pool (patches_per_subject from each subject) is shuffled once
    and split into train/validation by validation_fraction; the checkpoint
    with the best validation loss wins.  The constant-mean predictor's
    validation loss is recorded as the baseline to beat.
    """
    if len(cohort) < 2:
        raise InvalidArgumentError("need at least 2 subjects")
    for s in cohort:
        if any(d < cfg.patch_size for d in s.mask.shape):
            raise InvalidArgumentError("patch does not fit inside every volume")

    torch.manual_seed(cfg.seed)
    loc, b1, msk = [], [], []
    for i, subject in enumerate(cohort):
        pl, pb, pm = sample_patches(subject, cfg.patches_per_subject,
                                    seed=cfg.seed + 17 * i, patch=cfg.patch_size)
        loc.append(pl)
        b1.append(pb)
        msk.append(pm)
    loc = torch.from_numpy(np.concatenate(loc))
    b1 = torch.from_numpy(np.concatenate(b1))
    msk = torch.from_numpy(np.concatenate(msk))

    n_total = loc.shape[0]
    order = np.random.default_rng(cfg.seed).permutation(n_total)
    n_val = max(1, int(round(cfg.validation_fraction * n_total)))
    val_idx = torch.from_numpy(order[:n_val].copy())
    train_idx = torch.from_numpy(order[n_val:].copy())
    if train_idx.numel() == 0:
        raise InvalidArgumentError("no training patches left after the split")

    # constant-mean baseline: masked mean of the training targets
    tmask = msk[train_idx]
    const = float((b1[train_idx] * tmask).sum() / tmask.sum().clamp(min=1.0))
    baseline_val = float(_masked_mse(
        torch.full_like(b1[val_idx], const), b1[val_idx], msk[val_idx]
    ))

    model = UNet3D()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    shuffler = torch.Generator().manual_seed(cfg.seed + 1)
    history = []
    best_val = math.inf
    best_epoch = -1
    best_state = None

    for epoch in range(cfg.epochs):
        model.train()
        perm = torch.randperm(train_idx.numel(), generator=shuffler)
        epoch_train = 0.0
        n_seen = 0
        for start in range(0, perm.numel(), cfg.batch_size):
            sel = train_idx[perm[start:start + cfg.batch_size]]
            opt.zero_grad()
            loss = _masked_mse(model(loc[sel]), b1[sel], msk[sel])
            loss.backward()
            opt.step()
            epoch_train += float(loss.detach()) * sel.numel()
            n_seen += sel.numel()
        train_loss = epoch_train / n_seen

        model.eval()
        with torch.no_grad():
            val_losses = []
            for start in range(0, val_idx.numel(), cfg.batch_size):
                sel = val_idx[start:start + cfg.batch_size]
                val_losses.append(
                    float(_masked_mse(model(loc[sel]), b1[sel], msk[sel]))
                    * sel.numel()
                )
            val_loss = sum(val_losses) / val_idx.numel()

        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss})
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}", history
            )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = {k: v.detach().clone()
                          for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_val_loss=best_val, baseline_val_loss=baseline_val,
                       config=cfg)


def save_model(result: TrainResult, path, extra_metrics: dict | None = None):
    """Checkpoint plus a sidecar JSON {config, metrics, seed}."""
    path = Path(path)
    torch.save(result.model.state_dict(), path)
    sidecar = {
        "config": asdict(result.config),
        "seed": result.config.seed,
        "metrics": {
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
            "baseline_val_loss": result.baseline_val_loss,
            **(extra_metrics or {}),
        },
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_model(path) -> UNet3D:
    model = UNet3D()
    model.load_state_dict(torch.load(path, map_location="cpu",
                                     weights_only=True))
    model.eval()
    return model


def history_to_csv(history, path):
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{h['epoch']},{h['train_loss']!r},{h['val_loss']!r}"
              for h in history]
    Path(path).write_text("\n".join(lines) + "\n")
