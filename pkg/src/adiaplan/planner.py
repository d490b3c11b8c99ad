"""Per-slice pulse-power scale factors and the SAR reduction index.

Pipeline: convert a relative B1 map to absolute Hz through the transmitter
calibration, group masked voxels into acquisition slabs, compute a per-slice
upper bound of the B1 distribution, and scale the inversion pulse power by
nominal/bound (clamped to 1).  The SAR reduction index is sum(k_i^2)/N.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    EmptyInputError,
    GridMismatchError,
    InvalidArgumentError,
    ValidationError,
)
from .volumetrics import (
    SliceStackGeometry,
    Volume,
    VolumeIntent,
    partition_slices,
    require_same_grid,
)


@dataclass(frozen=True)
class Calibration:
    """Transmitter voltages tying a relative B1 map to absolute Hz."""

    v_ref_volts: float
    v_op_volts: float
    b1_at_ref_hz: float

    def __post_init__(self):
        for label, v in (("v_ref_volts", self.v_ref_volts),
                         ("v_op_volts", self.v_op_volts),
                         ("b1_at_ref_hz", self.b1_at_ref_hz)):
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{label} must be positive and finite")

    @property
    def hz_per_unit(self) -> float:
        """Absolute Hz produced by a relative-map value of 1.0."""
        return self.b1_at_ref_hz * (self.v_op_volts / self.v_ref_volts)


class Statistic(str, Enum):
    CI95_SEM = "ci95_sem"                  # mean + 1.96 * sd / sqrt(n)
    MEAN_PLUS_1P96_SD = "mean_plus_1p96_sd"
    PERCENTILE = "percentile"              # nearest-rank


class Population(str, Enum):
    SUBTHRESHOLD_WITH_FALLBACK = "subthreshold_with_fallback"
    ALL_MASKED = "all_masked"


@dataclass(frozen=True)
class ScaleStrategy:
    statistic: Statistic = Statistic.CI95_SEM
    percentile: float | None = None
    population: Population = Population.SUBTHRESHOLD_WITH_FALLBACK
    safety_margin: float = 1.0
    clamp_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "statistic", Statistic(self.statistic))
        object.__setattr__(self, "population", Population(self.population))
        if self.statistic is Statistic.PERCENTILE:
            if self.percentile is None or not 0.0 < self.percentile < 100.0:
                raise ValidationError("percentile must lie in (0, 100)")
        if not (math.isfinite(self.safety_margin) and self.safety_margin >= 1.0):
            raise ValidationError("safety_margin must be >= 1")
        if not 0.0 < self.clamp_max <= 1.0:
            raise ValidationError("clamp_max must lie in (0, 1]")


@dataclass(frozen=True)
class SliceStats:
    n: int
    mean_hz: float
    sd_hz: float
    bound_hz: float
    subthreshold_fraction: float


@dataclass(frozen=True)
class SliceScale:
    index: int
    n_voxels: int
    mean_hz: float
    sd_hz: float
    bound_hz: float
    subthreshold_fraction: float
    raw_factor: float
    scale_factor: float
    empty: bool = False


@dataclass(frozen=True)
class SliceScalePlan:
    threshold_hz: float
    nominal_hz: float
    strategy: ScaleStrategy
    slices: tuple[SliceScale, ...]
    sar_reduction_index: float

    @property
    def sar_reduction_percent(self) -> float:
        return 100.0 * (1.0 - self.sar_reduction_index)

    @property
    def scale_factors(self) -> np.ndarray:
        return np.array([s.scale_factor for s in self.slices])


def to_absolute(rel: Volume, cal: Calibration) -> Volume:
    """Relative B1 map times the calibrated Hz-per-unit factor."""
    if rel.intent is not VolumeIntent.RELATIVE_B1:
        raise InvalidArgumentError("to_absolute expects a RELATIVE_B1 volume")
    data = np.asarray(rel.data, dtype=float)
    n_negative = int(np.count_nonzero(data < 0))
    if n_negative:
        raise ValidationError(f"{n_negative} negative voxels in relative B1 map")
    return rel.like(data * cal.hz_per_unit, VolumeIntent.ABSOLUTE_B1_HZ)


def _nearest_rank_percentile(sorted_vals: np.ndarray, p: float) -> float:
    # smallest value with at least p% of the data at or below it
    idx = max(0, math.ceil(p / 100.0 * sorted_vals.size) - 1)
    return float(sorted_vals[idx])


def slice_statistics(values_hz, threshold_hz: float,
                     strategy: ScaleStrategy) -> SliceStats:
    """Distribution summary of one slice's B1 values.

    The population is the sub-threshold values (falling back to all values
    when none are below threshold) or all values, per the strategy; the
    bound is the strategy's statistic over that population.  sd uses ddof=1
    (0 for a single value).
    """
    vals = np.asarray(values_hz, dtype=float)
    if vals.size == 0:
        raise EmptyInputError("slice_statistics needs at least one value")
    sub = vals[vals < threshold_hz]
    if strategy.population is Population.ALL_MASKED:
        pop = vals
    else:
        pop = sub if sub.size > 0 else vals
    n = int(pop.size)
    mean = float(pop.mean())
    sd = float(pop.std(ddof=1)) if n > 1 else 0.0
    if strategy.statistic is Statistic.CI95_SEM:
        bound = mean + 1.96 * sd / math.sqrt(n)
    elif strategy.statistic is Statistic.MEAN_PLUS_1P96_SD:
        bound = mean + 1.96 * sd
    else:
        bound = _nearest_rank_percentile(np.sort(pop), strategy.percentile)
    return SliceStats(
        n=n, mean_hz=mean, sd_hz=sd, bound_hz=bound,
        subthreshold_fraction=float(sub.size / vals.size),
    )


def scale_factor(stats: SliceStats, nominal_hz: float,
                 strategy: ScaleStrategy) -> tuple[float, float]:
    """(raw_factor, k): raw = margin * nominal / bound, k clamped."""
    if not (math.isfinite(stats.bound_hz) and stats.bound_hz > 0):
        raise InvalidArgumentError(f"bound_hz must be positive, got {stats.bound_hz}")
    if not (math.isfinite(nominal_hz) and nominal_hz > 0):
        raise InvalidArgumentError("nominal_hz must be positive")
    raw = strategy.safety_margin * nominal_hz / stats.bound_hz
    return raw, min(raw, strategy.clamp_max)


def sar_reduction_index(k) -> float:
    """Scaled-to-unscaled SAR ratio of the inversion pulses: sum(k^2)/N."""
    k = np.asarray(k, dtype=float)
    if k.size == 0:
        raise EmptyInputError("sar_reduction_index needs at least one factor")
    if not np.all(np.isfinite(k)) or np.any(k <= 0) or np.any(k > 1):
        raise InvalidArgumentError("scale factors must lie in (0, 1]")
    return float(np.sum(k * k) / k.size)


def make_plan(abs_b1: Volume, mask: Volume, geom: SliceStackGeometry,
              threshold_hz: float, nominal_hz: float, strategy: ScaleStrategy,
              threads: int = 1) -> SliceScalePlan:
    """Per-slice scale factors for a whole slice stack.

    Slices containing no masked voxels are flagged and pinned at
    k = clamp_max (full pulse power).
    """
    if abs_b1.intent is not VolumeIntent.ABSOLUTE_B1_HZ:
        raise InvalidArgumentError("make_plan expects an ABSOLUTE_B1_HZ volume")
    if not (math.isfinite(threshold_hz) and threshold_hz > 0):
        raise InvalidArgumentError("threshold_hz must be positive")
    if not (math.isfinite(nominal_hz) and nominal_hz > 0):
        raise InvalidArgumentError("nominal_hz must be positive")
    require_same_grid(abs_b1, mask)
    per_slice = partition_slices(abs_b1, geom, mask)

    def one(item):
        i, vals = item
        if vals.size == 0:
            return SliceScale(
                index=i, n_voxels=0, mean_hz=math.nan, sd_hz=math.nan,
                bound_hz=math.nan, subthreshold_fraction=math.nan,
                raw_factor=math.nan, scale_factor=strategy.clamp_max, empty=True,
            )
        stats = slice_statistics(vals, threshold_hz, strategy)
        raw, k = scale_factor(stats, nominal_hz, strategy)
        return SliceScale(
            index=i, n_voxels=int(vals.size), mean_hz=stats.mean_hz,
            sd_hz=stats.sd_hz, bound_hz=stats.bound_hz,
            subthreshold_fraction=stats.subthreshold_fraction,
            raw_factor=raw, scale_factor=k,
        )

    items = list(enumerate(per_slice))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            slices = tuple(pool.map(one, items))
    else:
        slices = tuple(one(item) for item in items)
    index = sar_reduction_index([s.scale_factor for s in slices])
    return SliceScalePlan(
        threshold_hz=threshold_hz, nominal_hz=nominal_hz, strategy=strategy,
        slices=slices, sar_reduction_index=index,
    )


@dataclass(frozen=True)
class ErrorMap:
    volume: Volume
    mean_abs_percent: float
    max_abs_percent: float
    n_excluded: int


def compare_maps(predicted: Volume, measured: Volume, mask: Volume) -> ErrorMap:
    """Voxelwise percent error (pred - meas) / meas * 100 on the mask.

    Measured-zero voxels are excluded (the ratio is undefined there) and
    counted; the summary is the mean/max of absolute errors.
    """
    require_same_grid(predicted, measured, mask)
    msel = np.asarray(mask.data) != 0
    meas = np.asarray(measured.data, dtype=float)
    pred = np.asarray(predicted.data, dtype=float)
    nonzero = meas != 0
    sel = msel & nonzero
    n_excluded = int(np.count_nonzero(msel & ~nonzero))
    if not np.any(sel):
        raise EmptyInputError("no masked, measured-nonzero voxels to compare")
    err = np.zeros(meas.shape)
    err[sel] = (pred[sel] - meas[sel]) / meas[sel] * 100.0
    return ErrorMap(
        volume=predicted.like(err.astype(np.float32), VolumeIntent.ERROR_PERCENT),
        mean_abs_percent=float(np.mean(np.abs(err[sel]))),
        max_abs_percent=float(np.max(np.abs(err[sel]))),
        n_excluded=n_excluded,
    )


# ---------------------------------------------------------------------------
# Plan serialization

def _none_if_nan(v: float):
    return None if not math.isfinite(v) else v


def plan_to_dict(plan: SliceScalePlan, input_digests: dict | None = None) -> dict:
    return {
        "tool": "adiaplan",
        "version": __version__,
        "threshold_hz": plan.threshold_hz,
        "nominal_hz": plan.nominal_hz,
        "strategy": {
            "statistic": plan.strategy.statistic.value,
            "percentile": plan.strategy.percentile,
            "population": plan.strategy.population.value,
            "safety_margin": plan.strategy.safety_margin,
            "clamp_max": plan.strategy.clamp_max,
        },
        "n_slices": len(plan.slices),
        "slices": [
            {
                "index": s.index,
                "n_voxels": s.n_voxels,
                "mean_hz": _none_if_nan(s.mean_hz),
                "sd_hz": _none_if_nan(s.sd_hz),
                "bound_hz": _none_if_nan(s.bound_hz),
                "subthreshold_fraction": _none_if_nan(s.subthreshold_fraction),
                "raw_factor": _none_if_nan(s.raw_factor),
                "scale_factor": s.scale_factor,
                "empty": s.empty,
            }
            for s in plan.slices
        ],
        "sar_reduction_index": plan.sar_reduction_index,
        "sar_reduction_percent": plan.sar_reduction_percent,
        "provenance": {"inputs": input_digests or {}},
    }


def save_plan(plan: SliceScalePlan, path, input_digests: dict | None = None) -> None:
    doc = plan_to_dict(plan, input_digests)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_plan(path) -> SliceScalePlan:
    doc = json.loads(Path(path).read_text())
    strat = doc["strategy"]
    strategy = ScaleStrategy(
        statistic=Statistic(strat["statistic"]),
        percentile=strat["percentile"],
        population=Population(strat["population"]),
        safety_margin=strat["safety_margin"],
        clamp_max=strat["clamp_max"],
    )

    def fnum(v):
        return math.nan if v is None else float(v)

    slices = tuple(
        SliceScale(
            index=s["index"], n_voxels=s["n_voxels"], mean_hz=fnum(s["mean_hz"]),
            sd_hz=fnum(s["sd_hz"]), bound_hz=fnum(s["bound_hz"]),
            subthreshold_fraction=fnum(s["subthreshold_fraction"]),
            raw_factor=fnum(s["raw_factor"]), scale_factor=s["scale_factor"],
            empty=s["empty"],
        )
        for s in doc["slices"]
    )
    return SliceScalePlan(
        threshold_hz=doc["threshold_hz"], nominal_hz=doc["nominal_hz"],
        strategy=strategy, slices=slices,
        sar_reduction_index=doc["sar_reduction_index"],
    )


def plan_to_csv(plan: SliceScalePlan, path) -> None:
    lines = ["slice,n,mean_hz,sd_hz,bound_hz,subthresh_frac,raw,k"]
    for s in plan.slices:
        lines.append(
            f"{s.index},{s.n_voxels},{s.mean_hz!r},{s.sd_hz!r},{s.bound_hz!r},"
            f"{s.subthreshold_fraction!r},{s.raw_factor!r},{s.scale_factor!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
