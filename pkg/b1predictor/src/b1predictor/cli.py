"""Command line: synth / train / predict / robustness.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import B1PredictorError
from .niftiio import load_nifti, save_geometry_json, save_nifti
from .predict import predict_volume
from .robustness import POSES, robustness_to_csv, rotation_robustness
from .synth import SyntheticSubject, VOXEL_MM, realize, synthesize_cohort
from .train import TrainConfig, history_to_csv, load_model, save_model, train


def build_parser():
    ap = argparse.ArgumentParser(
        prog="b1predictor",
        description="3D U-Net B1 prediction from localizer-like volumes "
                    "(synthetic desk scale).",
    )
    ap.add_argument("--version", action="version",
                    version=f"b1predictor {__version__}")
    ap.add_argument("--out-dir", default=".")
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    sy = sub.add_parser("synth", help="write a synthetic cohort to disk")
    sy.add_argument("--subjects", type=int, default=2)
    sy.add_argument("--grid", type=int, default=64)
    sy.add_argument("--geometry-slices", type=int, default=10)

    tr = sub.add_parser("train", help="train on a synthetic cohort")
    tr.add_argument("--subjects", type=int, default=2)
    tr.add_argument("--grid", type=int, default=64)
    tr.add_argument("--patches", type=int, default=1000)
    tr.add_argument("--epochs", type=int, default=200)
    tr.add_argument("--lr", type=float, default=0.02)
    tr.add_argument("--batch", type=int, default=16)
    tr.add_argument("--val-fraction", type=float, default=0.2)
    tr.add_argument("--model-out", default="model.pt")

    pr = sub.add_parser("predict", help="predict B1 from a localizer volume")
    pr.add_argument("--model", required=True)
    pr.add_argument("--localizer", required=True)
    pr.add_argument("--mask", required=True)
    pr.add_argument("--out", default="predicted_b1.nii")

    rb = sub.add_parser("robustness", help="five-pose prediction error table")
    rb.add_argument("--model", required=True)
    rb.add_argument("--grid", type=int, default=64)
    rb.add_argument("--poses", nargs="+", default=list(POSES))
    rb.add_argument("--out", default="robustness.csv")
    rb.add_argument("--save-volumes", action="store_true",
                    help="also write per-pose b1/localizer/mask/prediction")
    return ap


def _outpath(args, name) -> Path:
    p = Path(name)
    out = p if p.is_absolute() else Path(args.out_dir) / p
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _write_subject(args, subject, stem):
    save_nifti(_outpath(args, f"{stem}_localizer.nii"),
               subject.localizer.astype(np.float32), subject.affine, "INTENSITY")
    save_nifti(_outpath(args, f"{stem}_b1.nii"),
               subject.b1.astype(np.float32), subject.affine, "RELATIVE_B1")
    save_nifti(_outpath(args, f"{stem}_mask.nii"),
               subject.mask.astype(np.int16), subject.affine, "MASK")


def _write_geometry(args, grid, n_slices):
    extent = grid * VOXEL_MM
    stack = 0.66 * extent
    thickness = stack / n_slices
    first = -stack / 2.0 + thickness / 2.0
    save_geometry_json(
        _outpath(args, "geometry.json"), n_slices, (0.0, 0.0, 1.0),
        (0.0, 0.0, first), thickness, thickness, (extent, extent),
    )


def _cmd_synth(args):
    cohort = synthesize_cohort(args.subjects, args.grid, args.seed)
    for i, subject in enumerate(cohort):
        _write_subject(args, subject, f"subject{i:02d}")
    _write_geometry(args, args.grid, args.geometry_slices)
    print(f"wrote {len(cohort)} subjects to {args.out_dir}")
    return 0


def _cmd_train(args):
    cfg = TrainConfig(
        patches_per_subject=args.patches, epochs=args.epochs,
        learning_rate=args.lr, batch_size=args.batch,
        validation_fraction=args.val_fraction, seed=args.seed,
    )
    cohort = synthesize_cohort(args.subjects, args.grid, args.seed)
    result = train(cohort, cfg)
    model_path = _outpath(args, args.model_out)
    save_model(result, model_path)
    history_to_csv(result.history, _outpath(args, "training_log.csv"))
    print(f"best val loss {result.best_val_loss:.6f} @ epoch "
          f"{result.best_epoch} (constant-mean baseline "
          f"{result.baseline_val_loss:.6f})")
    return 0


def _cmd_predict(args):
    loc, affine, _ = load_nifti(args.localizer)
    mask, mask_affine, _ = load_nifti(args.mask)
    if loc.shape != mask.shape or not np.allclose(affine, mask_affine, atol=1e-5):
        print("error: localizer and mask are not on the same grid",
              file=sys.stderr)
        return 1
    subject = SyntheticSubject(
        localizer=loc.astype(np.float32), b1=None,
        mask=mask.astype(np.int16), affine=affine,
    )
    model = load_model(args.model)
    pred = predict_volume(model, subject)
    save_nifti(_outpath(args, args.out), pred, affine, "RELATIVE_B1")
    print(_outpath(args, args.out))
    return 0


def _cmd_robustness(args):
    model = load_model(args.model)
    rows = rotation_robustness(model, args.grid, args.seed, tuple(args.poses))
    robustness_to_csv(rows, _outpath(args, args.out))
    for pose, err in rows:
        print(f"{pose}: {err:.3f}%")
    if args.save_volumes:
        from .synth import draw_subject_params

        rng = np.random.default_rng(args.seed)
        params = draw_subject_params(rng, args.grid * VOXEL_MM)
        for pose in args.poses:
            subject = realize(params, args.grid, pose)
            _write_subject(args, subject, f"pose_{pose.lower()}")
            pred = predict_volume(model, subject)
            save_nifti(_outpath(args, f"pose_{pose.lower()}_pred.nii"),
                       pred, subject.affine, "RELATIVE_B1")
        _write_geometry(args, args.grid, 10)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "robustness": _cmd_robustness,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (B1PredictorError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
