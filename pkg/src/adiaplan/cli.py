"""Command-line pipeline: simulate-pulse, find-threshold, plan, compare, report.

Exit codes: 0 success, 1 runtime/domain error, 2 usage error,
3 threshold-not-found.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, blochsim, planner, pulsegen, svgplot, volumetrics
from .errors import AdiaplanError, ThresholdNotFoundError
from .manifest import sha256_file, write_manifest

_STRATEGY_FLAGS = {
    "ci95-sem": planner.Statistic.CI95_SEM,
    "mean-plus-1.96sd": planner.Statistic.MEAN_PLUS_1P96_SD,
    "percentile": planner.Statistic.PERCENTILE,
}
_POPULATION_FLAGS = {
    "subthreshold": planner.Population.SUBTHRESHOLD_WITH_FALLBACK,
    "all": planner.Population.ALL_MASKED,
}


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ADIAPLAN_THREADS", "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="adiaplan",
        description="Adiabatic inversion planning: Bloch simulation, "
                    "B1 thresholds, per-slice pulse power scaling.",
    )
    ap.add_argument("--version", action="version", version=f"adiaplan {__version__}")
    ap.add_argument("--out-dir", default=".", help="directory for outputs")
    ap.add_argument("--threads", type=int, default=_default_threads(),
                    help="worker threads (ADIAPLAN_THREADS as fallback)")
    ap.add_argument("--seed", type=int, default=None,
                    help="recorded in the manifest; the pipeline is deterministic")
    ap.add_argument("--quiet", action="store_true", help="suppress progress notes")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate-pulse", help="slice profile of one pulse")
    sp.add_argument("--waveform", required=True)
    sp.add_argument("--b1max-hz", type=float, required=True)
    sp.add_argument("--thickness-mm", type=float, required=True)
    sp.add_argument("--out", required=True, help="profile CSV (z_mm,mz)")
    sp.add_argument("--svg-out", default=None)
    sp.add_argument("--z-points", type=int, default=81)
    sp.add_argument("--z-span-thicknesses", type=float, default=2.0)
    sp.add_argument("--metric", choices=("band", "center"), default="band")
    sp.add_argument("--max-dt-s", type=float, default=blochsim.DEFAULT_MAX_DT_S)

    ft = sub.add_parser("find-threshold", help="minimum B1 for adiabaticity")
    ft.add_argument("--waveform", required=True)
    ft.add_argument("--thickness-mm", type=float, required=True)
    ft.add_argument("--target", type=float, required=True)
    ft.add_argument("--range", required=True, metavar="LO:HI",
                    help="B1 search range in Hz, e.g. 0:200")
    ft.add_argument("--tol-hz", type=float, default=0.5)
    ft.add_argument("--sweep-out", default=None, help="efficiency sweep CSV")
    ft.add_argument("--sweep-points", type=int, default=33)
    ft.add_argument("--metric", choices=("band", "center"), default="band")
    ft.add_argument("--max-dt-s", type=float, default=blochsim.DEFAULT_MAX_DT_S)

    pl = sub.add_parser("plan", help="per-slice scale factors from a B1 map")
    pl.add_argument("--b1map", required=True)
    pl.add_argument("--mask", default=None,
                    help="binary mask volume; Otsu fallback when omitted")
    pl.add_argument("--geometry", required=True)
    pl.add_argument("--threshold-hz", type=float, required=True)
    pl.add_argument("--nominal-hz", type=float, required=True)
    pl.add_argument("--strategy", choices=sorted(_STRATEGY_FLAGS), default="ci95-sem")
    pl.add_argument("--percentile", type=float, default=None)
    pl.add_argument("--population", choices=sorted(_POPULATION_FLAGS),
                    default="subthreshold")
    pl.add_argument("--safety-margin", type=float, default=1.0)
    pl.add_argument("--clamp-max", type=float, default=1.0)
    pl.add_argument("--v-ref-volts", type=float, default=None)
    pl.add_argument("--v-op-volts", type=float, default=None)
    pl.add_argument("--b1-at-ref-hz", type=float, default=None)
    pl.add_argument("--plan-out", default="plan.json")
    pl.add_argument("--csv-out", default="plan.csv")
    pl.add_argument("--svg-out", default="plan.svg")

    cp = sub.add_parser("compare", help="percent-error map of two volumes")
    cp.add_argument("--predicted", required=True)
    cp.add_argument("--measured", required=True)
    cp.add_argument("--mask", default=None)
    cp.add_argument("--out-volume", default="error_percent.nii")
    cp.add_argument("--out-stats", default="error_stats.json")

    rp = sub.add_parser("report", help="overlay per-slice scale factor curves")
    rp.add_argument("--plans", nargs="+", required=True)
    rp.add_argument("--out", default="report.svg")
    return ap


def _note(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _outpath(args, p) -> Path:
    p = Path(p)
    out = p if p.is_absolute() else Path(args.out_dir) / p
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _require_files(parser, *paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            parser.error(f"file not found: {p}")


def _manifest_params(args, skip=("command", "out_dir", "threads", "quiet")):
    return {k: v for k, v in vars(args).items() if k not in skip}


def _cmd_simulate_pulse(args, parser) -> int:
    _require_files(parser, args.waveform)
    w = pulsegen.load_waveform(args.waveform)
    sel = pulsegen.SliceSelection.from_waveform(w, args.thickness_mm)
    z = blochsim.default_z_grid(sel, n_points=args.z_points,
                                span_thicknesses=args.z_span_thicknesses)
    cfg = blochsim.SimConfig(
        b1max_hz=args.b1max_hz, slice_sel=sel, z_grid_mm=z,
        max_dt_s=args.max_dt_s, efficiency_metric=args.metric,
    )
    profile = blochsim.slice_profile(w, cfg)
    out_csv = _outpath(args, args.out)
    blochsim.profile_to_csv(profile, out_csv)
    outputs = {"profile_csv": out_csv}
    if args.svg_out:
        out_svg = _outpath(args, args.svg_out)
        svg = svgplot.render_line_chart(
            [(f"b1max {args.b1max_hz:g} Hz", profile.z_mm, profile.mz_final)],
            title=f"Slice profile: {w.name}", xlabel="z (mm)", ylabel="Mz",
            y_range=(-1.05, 1.05),
        )
        out_svg.write_text(svg)
        outputs["profile_svg"] = out_svg
    _note(args, f"inversion efficiency: {profile.inversion_efficiency:.6f}")
    write_manifest(args.out_dir, "simulate-pulse", _manifest_params(args),
                   {"waveform": args.waveform}, outputs)
    return 0


def _cmd_find_threshold(args, parser) -> int:
    _require_files(parser, args.waveform)
    try:
        lo, hi = (float(v) for v in args.range.split(":"))
    except ValueError:
        parser.error(f"--range must look like LO:HI, got {args.range!r}")
    w = pulsegen.load_waveform(args.waveform)
    sel = pulsegen.SliceSelection.from_waveform(w, args.thickness_mm)
    outputs = {}
    try:
        thr = blochsim.find_threshold(
            w, sel, args.target, (lo, hi), args.tol_hz,
            efficiency_metric=args.metric, max_dt_s=args.max_dt_s,
        )
    except ThresholdNotFoundError as e:
        print(str(e), file=sys.stderr)
        return 3
    print(f"{thr:.3f}")
    if args.sweep_out:
        values = np.linspace(lo, hi, args.sweep_points)
        profiles = blochsim.sweep_grid(
            w, sel, values, threads=args.threads,
            efficiency_metric=args.metric, max_dt_s=args.max_dt_s,
        )
        out_csv = _outpath(args, args.sweep_out)
        blochsim.sweep_to_csv(values, profiles, out_csv)
        outputs["sweep_csv"] = out_csv
    write_manifest(args.out_dir, "find-threshold", _manifest_params(args),
                   {"waveform": args.waveform}, outputs)
    return 0


def _load_plan_inputs(args, parser):
    _require_files(parser, args.b1map, args.mask, args.geometry)
    vol = volumetrics.load_volume(args.b1map)
    geom = volumetrics.load_geometry(args.geometry)
    cal_flags = (args.v_ref_volts, args.v_op_volts, args.b1_at_ref_hz)
    if any(f is not None for f in cal_flags):
        if any(f is None for f in cal_flags):
            parser.error("--v-ref-volts, --v-op-volts and --b1-at-ref-hz "
                         "must be given together")
        if vol.intent is not volumetrics.VolumeIntent.RELATIVE_B1:
            parser.error(f"calibration flags need a RELATIVE_B1 input, "
                         f"got {vol.intent.value}")
        cal = planner.Calibration(args.v_ref_volts, args.v_op_volts,
                                  args.b1_at_ref_hz)
        vol = planner.to_absolute(vol, cal)
    elif vol.intent is volumetrics.VolumeIntent.RELATIVE_B1:
        parser.error("relative B1 input needs calibration flags "
                     "(--v-ref-volts --v-op-volts --b1-at-ref-hz)")
    if args.mask:
        mask = volumetrics.load_volume(args.mask)
    else:
        # Otsu fallback on the map itself; intent relabeled for the helper.
        as_intensity = vol.like(vol.data, volumetrics.VolumeIntent.INTENSITY)
        mask = volumetrics.threshold_mask(as_intensity, "otsu")
    return vol, mask, geom


def _strategy_from_args(args, parser) -> planner.ScaleStrategy:
    stat = _STRATEGY_FLAGS[args.strategy]
    if stat is planner.Statistic.PERCENTILE and args.percentile is None:
        parser.error("--strategy percentile needs --percentile")
    return planner.ScaleStrategy(
        statistic=stat, percentile=args.percentile,
        population=_POPULATION_FLAGS[args.population],
        safety_margin=args.safety_margin, clamp_max=args.clamp_max,
    )


def _cmd_plan(args, parser) -> int:
    vol, mask, geom = _load_plan_inputs(args, parser)
    strategy = _strategy_from_args(args, parser)
    plan = planner.make_plan(vol, mask, geom, args.threshold_hz,
                             args.nominal_hz, strategy, threads=args.threads)
    digests = {"b1map": sha256_file(args.b1map),
               "geometry": sha256_file(args.geometry)}
    if args.mask:
        digests["mask"] = sha256_file(args.mask)
    out_json = _outpath(args, args.plan_out)
    planner.save_plan(plan, out_json, input_digests=digests)
    out_csv = _outpath(args, args.csv_out)
    planner.plan_to_csv(plan, out_csv)
    idx = [s.index for s in plan.slices]
    out_svg = _outpath(args, args.svg_out)
    out_svg.write_text(svgplot.render_line_chart(
        [("scale factor k", idx, plan.scale_factors)],
        title="Per-slice pulse power scale factors",
        xlabel="slice index", ylabel="k", y_range=(0.0, 1.05),
    ))
    print(f"SAR reduction: {plan.sar_reduction_percent:.1f}%")
    write_manifest(
        args.out_dir, "plan", _manifest_params(args),
        {k: v for k, v in (("b1map", args.b1map), ("mask", args.mask),
                           ("geometry", args.geometry)) if v},
        {"plan_json": out_json, "plan_csv": out_csv, "plan_svg": out_svg},
    )
    return 0


def _cmd_compare(args, parser) -> int:
    _require_files(parser, args.predicted, args.measured, args.mask)
    pred = volumetrics.load_volume(args.predicted)
    meas = volumetrics.load_volume(args.measured)
    if args.mask:
        mask = volumetrics.load_volume(args.mask)
    else:
        mask = pred.like(np.ones(pred.dims, dtype=np.int16),
                         volumetrics.VolumeIntent.MASK)
    errmap = planner.compare_maps(pred, meas, mask)
    out_vol = _outpath(args, args.out_volume)
    volumetrics.save_volume(errmap.volume, out_vol)
    stats = {
        "mean_abs_percent": errmap.mean_abs_percent,
        "max_abs_percent": errmap.max_abs_percent,
        "n_excluded": errmap.n_excluded,
    }
    out_stats = _outpath(args, args.out_stats)
    out_stats.write_text(json.dumps(stats, indent=2) + "\n")
    print(f"mean abs error: {errmap.mean_abs_percent:.4f}%")
    write_manifest(
        args.out_dir, "compare", _manifest_params(args),
        {k: v for k, v in (("predicted", args.predicted),
                           ("measured", args.measured),
                           ("mask", args.mask)) if v},
        {"error_volume": out_vol, "stats_json": out_stats},
    )
    return 0


def _cmd_report(args, parser) -> int:
    _require_files(parser, *args.plans)
    plans = [planner.load_plan(p) for p in args.plans]
    series = []
    for path, plan in zip(args.plans, plans):
        idx = [s.index for s in plan.slices]
        series.append((Path(path).stem, idx, plan.scale_factors))
    bands = []
    if len(plans) >= 3 and len({len(p.slices) for p in plans}) == 1:
        ks = np.stack([p.scale_factors for p in plans])
        mean = ks.mean(axis=0)
        sd = ks.std(axis=0, ddof=1)
        idx = [s.index for s in plans[0].slices]
        bands.append((idx, mean - sd, mean + sd))
        series.insert(0, ("mean", idx, mean))
    out = _outpath(args, args.out)
    out.write_text(svgplot.render_line_chart(
        series, bands=bands, title="Scale factors by slice",
        xlabel="slice index", ylabel="k", y_range=(0.0, 1.05),
    ))
    write_manifest(
        args.out_dir, "report", _manifest_params(args),
        {f"plan{i}": p for i, p in enumerate(args.plans)}, {"report_svg": out},
    )
    return 0


_COMMANDS = {
    "simulate-pulse": _cmd_simulate_pulse,
    "find-threshold": _cmd_find_threshold,
    "plan": _cmd_plan,
    "compare": _cmd_compare,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.command](args, parser)
    except SystemExit as e:  # parser.error inside a command
        return int(e.code or 0)
    except ThresholdNotFoundError as e:
        print(str(e), file=sys.stderr)
        return 3
    except (AdiaplanError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
