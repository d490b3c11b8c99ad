"""Bloch-equation propagation of sampled RF pulses across slice positions.

Conventions
-----------
Field amplitudes are expressed in Hz (gamma * B / 2pi).  The simulation
frame rotates at the RF carrier; frequency modulation enters through the RF
phase phi(t) = 2pi * integral(fm dt), accumulated trapezoidally over the
sample nodes.  A spin at slice position z (mm) sees the effective field

    omega(t) = 2pi * ( b1max * am(t) * cos(phi(t)),
                       b1max * am(t) * sin(phi(t)),
                       gm(t) * G0 * z + df0 )        [rad/s]

with G0 the nominal slice gradient in Hz/mm and df0 an optional residual
frequency offset.  Magnetization evolves by dM/dt = M x omega (precession
sense of a positive gyromagnetic ratio).  Integration applies, per substep
of length <= max_dt_s, the exact rotation generated by the field sampled at
the substep midpoint; substeps never straddle a sample node, so |M| is
conserved to machine precision in relaxation-free mode.  Optional T1/T2
relaxation is applied by first-order operator splitting after each substep.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, NumericalError, ThresholdNotFoundError
from .pulsegen import PulseWaveform, SliceSelection

TWO_PI = 2.0 * math.pi

DEFAULT_MAX_DT_S = 4e-6


@dataclass(frozen=True)
class Magnetization:
    mx: float
    my: float
    mz: float

    @classmethod
    def equilibrium(cls) -> "Magnetization":
        return cls(0.0, 0.0, 1.0)

    def norm(self) -> float:
        return math.sqrt(self.mx**2 + self.my**2 + self.mz**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.mx, self.my, self.mz])


@dataclass(frozen=True)
class Relaxation:
    t1_s: float
    t2_s: float


@dataclass
class SimConfig:
    """Inputs of one simulation: peak B1, slice geometry, z grid, stepping."""

    b1max_hz: float
    slice_sel: SliceSelection | None
    z_grid_mm: np.ndarray | None = None
    max_dt_s: float = DEFAULT_MAX_DT_S
    relaxation: Relaxation | None = None
    off_resonance_hz: float = 0.0
    efficiency_metric: str = "band"  # "band" (central 80% of slice) or "center"

    def __post_init__(self):
        if not (math.isfinite(self.b1max_hz) and self.b1max_hz >= 0):
            raise InvalidArgumentError("b1max_hz must be finite and >= 0")
        if not (math.isfinite(self.max_dt_s) and self.max_dt_s > 0):
            raise InvalidArgumentError("max_dt_s must be positive")
        if self.z_grid_mm is not None:
            z = np.asarray(self.z_grid_mm, dtype=float)
            if z.ndim != 1 or z.size < 1 or not np.all(np.isfinite(z)):
                raise InvalidArgumentError("z_grid_mm must be a finite 1-D grid")
            if z.size > 1 and not np.all(np.diff(z) > 0):
                raise InvalidArgumentError("z_grid_mm must be strictly increasing")
            self.z_grid_mm = z
        if self.relaxation is not None:
            if not (self.relaxation.t1_s > 0 and self.relaxation.t2_s > 0):
                raise InvalidArgumentError("relaxation times must be positive")
        if self.efficiency_metric not in ("band", "center"):
            raise InvalidArgumentError("efficiency_metric must be 'band' or 'center'")


@dataclass(frozen=True)
class SliceProfile:
    z_mm: np.ndarray
    mz_final: np.ndarray
    inversion_efficiency: float


def _phase_at(w: PulseWaveform, t: np.ndarray) -> np.ndarray:
    """RF phase 2pi * integral_0^t fm dt' for the piecewise-linear fm model."""
    nodes = w.sample_times
    fm = w.fm_hz
    # cycles accumulated at each node; fm is held at fm[0] before nodes[0]
    node_cyc = np.empty(nodes.size)
    node_cyc[0] = fm[0] * nodes[0]
    node_cyc[1:] = node_cyc[0] + np.cumsum(0.5 * (fm[1:] + fm[:-1]) * np.diff(nodes))

    t = np.asarray(t, dtype=float)
    cyc = np.empty(t.shape)
    before = t < nodes[0]
    after = t >= nodes[-1]
    mid = ~(before | after)
    cyc[before] = fm[0] * t[before]
    cyc[after] = node_cyc[-1] + fm[-1] * (t[after] - nodes[-1])
    if np.any(mid):
        seg = np.searchsorted(nodes, t[mid], side="right") - 1
        u = t[mid] - nodes[seg]
        slope = (fm[seg + 1] - fm[seg]) / (nodes[seg + 1] - nodes[seg])
        cyc[mid] = node_cyc[seg] + fm[seg] * u + 0.5 * slope * u * u
    return TWO_PI * cyc


def _substep_schedule(w: PulseWaveform, max_dt_s: float):
    """Substep midpoints/lengths plus channel values there.

    Segment boundaries are the sample nodes (plus t=0 and t=duration), each
    segment split evenly so no substep exceeds max_dt_s or crosses a node.
    """
    nodes = w.sample_times
    bounds = np.concatenate(([0.0], nodes, [w.duration_s]))
    mids = []
    lens = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        span = b - a
        if span <= 0:
            continue
        k = max(1, int(math.ceil(span / max_dt_s - 1e-12)))
        h = span / k
        mids.append(a + (np.arange(k) + 0.5) * h)
        lens.append(np.full(k, h))
    t_mid = np.concatenate(mids)
    h = np.concatenate(lens)
    am, _, gm = w.channels_at(t_mid)
    phi = _phase_at(w, t_mid)
    return t_mid, h, am, gm, phi


def _propagate_many(w, b1max_hz, z_mm, g0_hz_per_mm, m0, max_dt_s,
                    relaxation=None, off_resonance_hz=0.0):
    """Propagate K spins through the whole pulse; returns (K, 3) array.

    b1max_hz and z_mm broadcast against each other to the spin count.
    """
    b1 = np.asarray(b1max_hz, dtype=float)
    z = np.asarray(z_mm, dtype=float)
    b1, z = np.broadcast_arrays(np.atleast_1d(b1), np.atleast_1d(z))
    if not (np.all(np.isfinite(b1)) and np.all(np.isfinite(z))):
        raise NumericalError("non-finite b1max or z input")

    _, h, am, gm, phi = _substep_schedule(w, max_dt_s)
    cphi = np.cos(phi)
    sphi = np.sin(phi)
    wz_static = TWO_PI * g0_hz_per_mm * z
    dfw = TWO_PI * off_resonance_hz
    b1w = TWO_PI * b1

    m = np.broadcast_to(np.asarray(m0, dtype=float), z.shape + (3,)).copy()
    mx, my, mz = m[..., 0].copy(), m[..., 1].copy(), m[..., 2].copy()

    if relaxation is not None:
        e1 = np.exp(-h / relaxation.t1_s)
        e2 = np.exp(-h / relaxation.t2_s)

    for j in range(h.size):
        wxy = b1w * am[j]
        wx = wxy * cphi[j]
        wy = wxy * sphi[j]
        wz = wz_static * gm[j] + dfw
        wn = np.sqrt(wx * wx + wy * wy + wz * wz)
        theta = -h[j] * wn
        ct = np.cos(theta)
        st = np.sin(theta)
        wn_safe = np.where(wn > 0.0, wn, 1.0)
        kx = wx / wn_safe
        ky = wy / wn_safe
        kz = wz / wn_safe
        kv = (1.0 - ct) * (kx * mx + ky * my + kz * mz)
        cx = ky * mz - kz * my
        cy = kz * mx - kx * mz
        cz = kx * my - ky * mx
        mx = mx * ct + cx * st + kx * kv
        my = my * ct + cy * st + ky * kv
        mz = mz * ct + cz * st + kz * kv
        if relaxation is not None:
            mx *= e2[j]
            my *= e2[j]
            mz = 1.0 + (mz - 1.0) * e1[j]

    out = np.stack([mx, my, mz], axis=-1)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite magnetization after propagation")
    return out


def propagate(m0: Magnetization, w: PulseWaveform, cfg: SimConfig,
              z_mm: float) -> Magnetization:
    """Apply the full pulse to one spin at slice position z_mm."""
    g0 = cfg.slice_sel.nominal_gradient_hz_per_mm if cfg.slice_sel else 0.0
    m = _propagate_many(
        w, cfg.b1max_hz, z_mm, g0, m0.as_array(), cfg.max_dt_s,
        relaxation=cfg.relaxation, off_resonance_hz=cfg.off_resonance_hz,
    )[0]
    return Magnetization(float(m[0]), float(m[1]), float(m[2]))


def default_z_grid(slice_sel: SliceSelection, n_points: int = 81,
                   span_thicknesses: float = 2.0) -> np.ndarray:
    half = span_thicknesses * slice_sel.thickness_mm
    return np.linspace(-half, half, n_points)


def _efficiency(z: np.ndarray, mz: np.ndarray, slice_sel: SliceSelection,
                metric: str) -> float:
    if metric == "center":
        mz_metric = mz[np.argmin(np.abs(z))]
    else:
        band = np.abs(z) <= 0.4 * slice_sel.thickness_mm * (1.0 + 1e-12)
        if not np.any(band):
            raise InvalidArgumentError("z grid has no points inside the slice band")
        mz_metric = float(np.mean(mz[band]))
    return float(min(max((1.0 - mz_metric) / 2.0, 0.0), 1.0))


def slice_profile(w: PulseWaveform, cfg: SimConfig) -> SliceProfile:
    """Final Mz(z) over the configured grid plus the inversion efficiency."""
    if cfg.slice_sel is None:
        raise InvalidArgumentError("slice_profile requires a slice selection")
    if cfg.z_grid_mm is None:
        raise InvalidArgumentError("slice_profile requires a z grid")
    z = cfg.z_grid_mm
    t = cfg.slice_sel.thickness_mm
    if z.min() > -2.0 * t * (1.0 - 1e-9) or z.max() < 2.0 * t * (1.0 - 1e-9):
        raise InvalidArgumentError("z grid must span at least +/-2 slice thicknesses")
    m = _propagate_many(
        w, cfg.b1max_hz, z, cfg.slice_sel.nominal_gradient_hz_per_mm,
        np.array([0.0, 0.0, 1.0]), cfg.max_dt_s,
        relaxation=cfg.relaxation, off_resonance_hz=cfg.off_resonance_hz,
    )
    mz = m[:, 2]
    return SliceProfile(
        z_mm=z, mz_final=mz,
        inversion_efficiency=_efficiency(z, mz, cfg.slice_sel, cfg.efficiency_metric),
    )


def adiabaticity_factor(w: PulseWaveform, b1max_hz: float, t_index: int) -> float:
    """Ratio |omega_eff| / |d(alpha)/dt| at one sample, for a spin at z = 0.

    alpha is the tilt of the effective field from +z in the frame rotating
    with the instantaneous RF frequency.  Values well above 1 indicate the
    sweep is adiabatic at that instant.  Returns +inf where alpha is static.
    """
    n = w.n_samples
    if not 0 <= t_index < n - 1:
        raise InvalidArgumentError("t_index must satisfy 0 <= t_index < n_samples - 1")
    w1 = TWO_PI * b1max_hz * w.am
    dz = -TWO_PI * w.fm_hz
    alpha = np.arctan2(w1, dz)
    dalpha = alpha[t_index + 1] - alpha[t_index]
    if dalpha == 0.0:
        return math.inf
    omega = math.hypot(w1[t_index], dz[t_index])
    return float(omega / abs(dalpha / w.dt_s))


def find_threshold(w: PulseWaveform, slice_sel: SliceSelection,
                   target_efficiency: float, b1_range_hz: tuple[float, float],
                   tol_hz: float, *, z_grid_mm=None, efficiency_metric="band",
                   max_dt_s: float = DEFAULT_MAX_DT_S,
                   coarse_points: int = 17) -> float:
    """Smallest B1 amplitude in the range reaching the target efficiency.

    A coarse scan localizes the first crossing, bisection narrows it to
    tol_hz.  Raises ThresholdNotFoundError (carrying the best efficiency)
    when even the top of the range falls short.
    """
    lo, hi = b1_range_hz
    if not (0.0 < target_efficiency < 1.0):
        raise InvalidArgumentError("target efficiency must lie in (0, 1)")
    if not (lo < hi and lo >= 0.0):
        raise InvalidArgumentError("b1 range must satisfy 0 <= lo < hi")
    if not (math.isfinite(tol_hz) and tol_hz > 0):
        raise InvalidArgumentError("tol_hz must be positive")
    z = default_z_grid(slice_sel) if z_grid_mm is None else np.asarray(z_grid_mm, float)

    def efficiency(b1):
        cfg = SimConfig(b1max_hz=b1, slice_sel=slice_sel, z_grid_mm=z,
                        max_dt_s=max_dt_s, efficiency_metric=efficiency_metric)
        return slice_profile(w, cfg).inversion_efficiency

    grid = np.linspace(lo, hi, coarse_points)
    crossing = None
    prev = lo
    for b in grid:
        if efficiency(b) >= target_efficiency:
            crossing = (prev, b)
            break
        prev = b
    if crossing is None:
        best = efficiency(hi)
        raise ThresholdNotFoundError(
            f"target efficiency {target_efficiency:g} not reached at "
            f"{hi:g} Hz (best: {best:.6f})",
            best_efficiency=best,
        )
    below, above = crossing
    if above == lo:
        return float(lo)
    while above - below > tol_hz:
        mid = 0.5 * (below + above)
        if efficiency(mid) >= target_efficiency:
            above = mid
        else:
            below = mid
    return float(above)


def sweep_grid(w: PulseWaveform, slice_sel: SliceSelection, b1_values_hz,
               *, threads: int = 1, z_grid_mm=None, efficiency_metric="band",
               max_dt_s: float = DEFAULT_MAX_DT_S) -> list[SliceProfile]:
    """One slice profile per amplitude, assembled in input order."""
    values = [float(v) for v in b1_values_hz]
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise InvalidArgumentError("b1 values must be finite and non-negative")
    z = default_z_grid(slice_sel) if z_grid_mm is None else np.asarray(z_grid_mm, float)

    def one(b1):
        cfg = SimConfig(b1max_hz=b1, slice_sel=slice_sel, z_grid_mm=z,
                        max_dt_s=max_dt_s, efficiency_metric=efficiency_metric)
        return slice_profile(w, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, values))
    return [one(b1) for b1 in values]


def profile_to_csv(profile: SliceProfile, path) -> None:
    lines = ["z_mm,mz"]
    lines += [f"{float(z)!r},{float(m)!r}" for z, m in zip(profile.z_mm, profile.mz_final)]
    Path(path).write_text("\n".join(lines) + "\n")


def sweep_to_csv(b1_values_hz, profiles, path) -> None:
    lines = ["b1max_hz,inversion_efficiency"]
    lines += [
        f"{float(b)!r},{float(p.inversion_efficiency)!r}"
        for b, p in zip(b1_values_hz, profiles)
    ]
    Path(path).write_text("\n".join(lines) + "\n")
