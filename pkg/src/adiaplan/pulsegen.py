"""Adiabatic RF pulse synthesis, time-warping, and waveform file I/O.

A pulse is stored as three sampled modulation channels on a uniform time
grid: peak-normalized amplitude ``am`` (unitless, in [0, 1]), instantaneous
frequency offset ``fm_hz`` (Hz), and normalized gradient ``gm`` (unitless,
in [0, 1]).  Sample ``i`` sits at the midpoint of the i-th of ``n_samples``
equal intervals, so ``duration_s = dt_s * n_samples`` and the grid is
symmetric about the pulse center.  Between sample nodes the channels are
treated as piecewise-linear, held constant before the first and after the
last node; the Bloch integrator shares this convention.

Frequency modulation is stored as instantaneous frequency in Hz, not phase;
phase is accumulated downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ValidationError, WaveformParseError


class PulseFamily(str, Enum):
    HS = "HS"
    FOCI = "FOCI"
    TRFOCI = "TRFOCI"
    CUSTOM = "CUSTOM"


@dataclass(eq=False)
class PulseWaveform:
    """Sampled modulation functions of one RF pulse.

    Invariants (checked on construction): at least 2 samples, all channels
    finite, am and gm within [0, 1], am peak-normalized (max exactly 1),
    and ``duration_s == dt_s * n_samples``.
    """

    name: str
    family: PulseFamily
    dt_s: float
    duration_s: float
    am: np.ndarray
    fm_hz: np.ndarray
    gm: np.ndarray

    def __post_init__(self):
        self.family = PulseFamily(self.family)
        self.am = np.asarray(self.am, dtype=float)
        self.fm_hz = np.asarray(self.fm_hz, dtype=float)
        self.gm = np.asarray(self.gm, dtype=float)
        n = self.am.size
        if n < 2:
            raise ValidationError("waveform needs at least 2 samples")
        if self.fm_hz.size != n or self.gm.size != n:
            raise ValidationError("am, fm_hz, gm must have equal length")
        for label, arr in (("am", self.am), ("fm_hz", self.fm_hz), ("gm", self.gm)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite value in channel {label}")
        if self.am.min() < 0.0 or self.am.max() > 1.0:
            raise ValidationError("am out of range [0, 1]")
        if abs(self.am.max() - 1.0) > 1e-9:
            raise ValidationError("am is not peak-normalized (max(am) must be 1)")
        if self.gm.min() < 0.0 or self.gm.max() > 1.0:
            raise ValidationError("gm out of range [0, 1]")
        if not (math.isfinite(self.dt_s) and self.dt_s > 0):
            raise ValidationError("dt_s must be positive and finite")
        if not (
            math.isfinite(self.duration_s)
            and abs(self.duration_s - self.dt_s * n) <= 1e-9 * self.duration_s
        ):
            raise ValidationError("duration_s must equal dt_s * n_samples")
        for arr in (self.am, self.fm_hz, self.gm):
            arr.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.am.size

    @property
    def sample_times(self) -> np.ndarray:
        """Midpoint time of each sample interval, in seconds."""
        return (np.arange(self.n_samples) + 0.5) * self.dt_s

    def channels_at(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(am, fm_hz, gm) linearly interpolated at times ``t``, end-held."""
        nodes = self.sample_times
        t = np.asarray(t, dtype=float)
        return (
            np.interp(t, nodes, self.am),
            np.interp(t, nodes, self.fm_hz),
            np.interp(t, nodes, self.gm),
        )


@dataclass(frozen=True)
class SliceSelection:
    """Slice thickness paired with the pulse bandwidth that selects it."""

    thickness_mm: float
    pulse_bandwidth_hz: float
    nominal_gradient_hz_per_mm: float = None  # type: ignore[assignment]

    def __post_init__(self):
        for label, v in (
            ("thickness_mm", self.thickness_mm),
            ("pulse_bandwidth_hz", self.pulse_bandwidth_hz),
        ):
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{label} must be positive and finite")
        if self.nominal_gradient_hz_per_mm is None:
            object.__setattr__(
                self,
                "nominal_gradient_hz_per_mm",
                self.pulse_bandwidth_hz / self.thickness_mm,
            )
        if not (
            math.isfinite(self.nominal_gradient_hz_per_mm)
            and self.nominal_gradient_hz_per_mm > 0
        ):
            raise ValidationError("nominal_gradient_hz_per_mm must be positive")
        if (
            abs(self.nominal_gradient_hz_per_mm * self.thickness_mm - self.pulse_bandwidth_hz)
            > 1e-9 * self.pulse_bandwidth_hz
        ):
            raise ValidationError("gradient * thickness must equal bandwidth")

    @classmethod
    def from_waveform(cls, w: PulseWaveform, thickness_mm: float) -> "SliceSelection":
        return cls(thickness_mm=thickness_mm, pulse_bandwidth_hz=bandwidth(w))


def _tau_grid(n_samples: int) -> np.ndarray:
    """Symmetric normalized-time grid: midpoints of n equal intervals on [-1, 1]."""
    return (2.0 * np.arange(n_samples) + 1.0) / n_samples - 1.0


def generate_hs(n_power: int, beta: float, mu: float, duration_s: float,
                n_samples: int, name: str | None = None) -> PulseWaveform:
    """Hyperbolic-secant pulse of order ``n_power``.

    am(tau) = sech(beta * tau^n), and the frequency sweep is the constant-
    adiabaticity companion fm(tau) = -(mu * beta^2 / 2pi) * F(tau) with
    F(tau) = integral_0^tau sech^2(beta u^n) du.  For n = 1 this reduces to
    the classic fm(tau) = -(mu * beta / 2pi) * tanh(beta * tau), giving a
    full-width sweep of mu * beta / pi Hz.  The gradient channel is flat.
    """
    if not (isinstance(n_power, (int, np.integer)) and n_power >= 1):
        raise InvalidArgumentError("n_power must be an integer >= 1")
    if not (math.isfinite(duration_s) and duration_s > 0):
        raise InvalidArgumentError("duration_s must be positive and finite")
    if n_samples < 16:
        raise InvalidArgumentError("n_samples must be >= 16")
    if not (math.isfinite(beta) and beta > 0 and math.isfinite(mu) and mu > 0):
        raise InvalidArgumentError("beta and mu must be positive and finite")

    tau = _tau_grid(n_samples)
    abs_tau = np.abs(tau)
    am = 1.0 / np.cosh(beta * abs_tau**n_power)
    am = am / am.max()

    # F on a fine uniform grid of [0, 1], then interpolated at |tau|; the
    # sign mirror keeps fm exactly antisymmetric.
    u = np.linspace(0.0, 1.0, 4097)
    integrand = 1.0 / np.cosh(beta * u**n_power) ** 2
    f_cum = np.concatenate(
        ([0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(u)))
    )
    fm = -(mu * beta**2 / (2.0 * np.pi)) * np.sign(tau) * np.interp(abs_tau, u, f_cum)

    return PulseWaveform(
        name=name or f"hs{n_power}",
        family=PulseFamily.HS,
        dt_s=duration_s / n_samples,
        duration_s=duration_s,
        am=am,
        fm_hz=fm,
        gm=np.ones(n_samples),
    )


def generate_foci(base: PulseWaveform, a_max: float, name: str | None = None) -> PulseWaveform:
    """Apply the gradient-modulated shape factor A to an HS base pulse.

    A(tau) = min(1/am(tau), a_max), which equals min(cosh(beta tau^n), a_max)
    for a peak-normalized HS base.  Amplitude and frequency channels are
    multiplied by A (flat-topping the amplitude), the gradient channel
    becomes A / a_max so its maximum is reached at the pulse edges.
    """
    if base.family is not PulseFamily.HS:
        raise InvalidArgumentError("FOCI construction requires an HS base pulse")
    if not (math.isfinite(a_max) and a_max >= 1.0):
        raise InvalidArgumentError("a_max must be >= 1")
    shape = np.minimum(1.0 / np.maximum(base.am, 1e-300), a_max)
    am = np.clip(shape * base.am, 0.0, 1.0)
    am = am / am.max()
    return PulseWaveform(
        name=name or f"{base.name}-foci{a_max:g}",
        family=PulseFamily.FOCI,
        dt_s=base.dt_s,
        duration_s=base.duration_s,
        am=am,
        fm_hz=shape * base.fm_hz,
        gm=shape / a_max,
    )


def resample_trfoci(base: PulseWaveform, warp, name: str | None = None) -> PulseWaveform:
    """Time-resample a FOCI pulse through a monotone warp of [0, duration].

    ``warp`` holds ``n_samples`` knot values: the source times reached at
    uniformly spaced output times spanning [0, duration] inclusive.  The
    am/gm channels are composed with the warp; fm is composed and then
    multiplied by the warp's slope so the integrated phase sweep of the
    source pulse is preserved.  Duration and sample count are unchanged.
    """
    if base.family is not PulseFamily.FOCI:
        raise InvalidArgumentError("time resampling expects a FOCI base pulse")
    warp = np.asarray(warp, dtype=float)
    t_total = base.duration_s
    if warp.ndim != 1 or warp.size != base.n_samples:
        raise InvalidArgumentError("warp must supply one knot per base sample")
    if not np.all(np.isfinite(warp)):
        raise InvalidArgumentError("warp contains non-finite knots")
    if not np.all(np.diff(warp) > 0):
        raise InvalidArgumentError("warp must be strictly increasing")
    if abs(warp[0]) > 1e-9 * t_total or abs(warp[-1] - t_total) > 1e-9 * t_total:
        raise InvalidArgumentError("warp must map [0, duration] onto [0, duration]")

    knot_t = np.linspace(0.0, t_total, warp.size)
    slopes = np.diff(warp) / np.diff(knot_t)
    t_out = base.sample_times
    src_t = np.interp(t_out, knot_t, warp)
    seg = np.clip(np.searchsorted(knot_t, t_out, side="right") - 1, 0, slopes.size - 1)

    am, fm, gm = base.channels_at(src_t)
    am = am / am.max()
    return PulseWaveform(
        name=name or f"{base.name}-tr",
        family=PulseFamily.TRFOCI,
        dt_s=base.dt_s,
        duration_s=base.duration_s,
        am=am,
        fm_hz=fm * slopes[seg],
        gm=np.clip(gm, 0.0, 1.0),
    )


def default_trfoci_warp(n_knots: int, duration_s: float,
                        depth: float = 0.15) -> np.ndarray:
    """Smooth sinusoidal time remap, sampled as ``n_knots`` knots.

    Traversal speed is (1 + depth) at the pulse edges and (1 - depth) at
    the center, so the resampled pulse lingers on the central frequency
    sweep and rushes the saturated tails.  The speed profile is continuous
    (a single cosine), which keeps the instantaneous resonance position
    sweeping monotonically through the slice; stronger or kinked warps
    revisit already-inverted positions and ruin the profile.
    """
    if not 0.0 <= depth < 1.0:
        raise InvalidArgumentError("depth must lie in [0, 1)")
    if n_knots < 2:
        raise InvalidArgumentError("need at least 2 warp knots")
    t = np.linspace(0.0, duration_s, n_knots)
    return t + depth * (duration_s / (2.0 * np.pi)) * np.sin(2.0 * np.pi * t / duration_s)


# Frozen parameters of the bundled 20 ms inversion pulse (see
# scripts/calibrate_bundled_pulse.py for the sweep that picked them: the
# 97%-efficiency threshold for a 3 mm slice lands at ~151 Hz).
BUNDLED_BETA = 5.3
BUNDLED_MU = 230.0
BUNDLED_AMAX = 10.0
BUNDLED_WARP_DEPTH = 0.15


def bundled_trfoci(duration_s: float = 0.02, n_samples: int = 512) -> PulseWaveform:
    """The gradient-modulated, time-resampled inversion pulse shipped with
    the toolkit (amplitude/frequency/gradient channels as one waveform)."""
    hs = generate_hs(1, BUNDLED_BETA, BUNDLED_MU, duration_s, n_samples)
    foci = generate_foci(hs, BUNDLED_AMAX)
    warp = default_trfoci_warp(n_samples, duration_s, BUNDLED_WARP_DEPTH)
    return resample_trfoci(foci, warp, name="trfoci-style-20ms")


def bandwidth(w: PulseWaveform) -> float:
    """Full width of the frequency sweep: max(fm) - min(fm), in Hz."""
    return float(w.fm_hz.max() - w.fm_hz.min())


_REQUIRED_FIELDS = ("name", "family", "dt_s", "duration_s", "am", "fm_hz", "gm")


def save_waveform(w: PulseWaveform, path) -> None:
    """Write a waveform as a JSON document (full-precision decimals)."""
    doc = {
        "name": w.name,
        "family": w.family.value,
        "dt_s": w.dt_s,
        "duration_s": w.duration_s,
        "am": [float(v) for v in w.am],
        "fm_hz": [float(v) for v in w.fm_hz],
        "gm": [float(v) for v in w.gm],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_waveform(path) -> PulseWaveform:
    """Read a waveform JSON file; raises WaveformParseError with line/field
    diagnostics on malformed input and ValidationError on invariant breaks."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise WaveformParseError(
            f"{path}: line {e.lineno} column {e.colno}: {e.msg}"
        ) from e
    if not isinstance(doc, dict):
        raise WaveformParseError(f"{path}: top-level value must be an object")
    for key in _REQUIRED_FIELDS:
        if key not in doc:
            raise WaveformParseError(f"{path}: missing field '{key}'")
    try:
        family = PulseFamily(doc["family"])
    except ValueError:
        valid = ", ".join(f.value for f in PulseFamily)
        raise WaveformParseError(
            f"{path}: field 'family' must be one of {valid}, got {doc['family']!r}"
        ) from None
    arrays = {}
    for key in ("am", "fm_hz", "gm"):
        if not isinstance(doc[key], list):
            raise WaveformParseError(f"{path}: field '{key}' must be an array")
        arrays[key] = np.asarray(doc[key], dtype=float)
    lengths = {arrays[k].size for k in arrays}
    if len(lengths) != 1:
        raise WaveformParseError(f"{path}: am, fm_hz, gm arrays differ in length")
    return PulseWaveform(
        name=str(doc["name"]),
        family=family,
        dt_s=float(doc["dt_s"]),
        duration_s=float(doc["duration_s"]),
        am=arrays["am"],
        fm_hz=arrays["fm_hz"],
        gm=arrays["gm"],
    )
