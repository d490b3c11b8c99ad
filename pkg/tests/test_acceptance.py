"""Acceptance suite: one test per release criterion, at stated tolerances.

Runtimes are asserted where the criterion bounds them.  A one-line
PASS/FAIL summary per criterion is printed at the end of the session
(see conftest.pytest_terminal_summary).
"""

import json
import time

import numpy as np
import pytest

from adiaplan import blochsim as bs
from adiaplan import cli
from adiaplan import planner as pl
from adiaplan import pulsegen as pg
from adiaplan import volumetrics as vm
from conftest import constant_pulse
from oracles import brute_force_plan, rk4_propagate


@pytest.fixture(scope="module")
def bundled():
    return pg.bundled_trfoci()


@pytest.fixture(scope="module")
def bundled_selection(bundled):
    return pg.SliceSelection.from_waveform(bundled, 3.0)


def test_pi_pulse_exactness():
    """Constant 250 Hz, 2 ms pulse inverts (0,0,1) to mz = -1 within 1e-9."""
    w = constant_pulse(duration_s=0.002, n_samples=64)
    cfg = bs.SimConfig(b1max_hz=250.0, slice_sel=None)
    m = bs.propagate(bs.Magnetization.equilibrium(), w, cfg, 0.0)
    assert abs(m.mz - (-1.0)) <= 1e-9


def test_norm_conservation(bundled, bundled_selection):
    """|M| drift < 1e-9 over the bundled 512-sample pulse, 100 random draws."""
    rng = np.random.default_rng(2024)
    for _ in range(100):
        b1 = float(rng.uniform(0.0, 250.0))
        z = float(rng.uniform(-8.0, 8.0))
        cfg = bs.SimConfig(b1max_hz=b1, slice_sel=bundled_selection)
        m = bs.propagate(bs.Magnetization.equilibrium(), bundled, cfg, z)
        assert abs(m.norm() - 1.0) < 1e-9


def test_integrator_oracle(bundled):
    """Rotation stepper vs 4th-order reference at one-tenth the step size:
    <= 1e-4 per component, HS1 / FOCI / TR-FOCI-style at 10 amplitudes."""
    t0 = time.monotonic()
    hs = pg.generate_hs(1, pg.BUNDLED_BETA, pg.BUNDLED_MU, 0.02, 512)
    foci = pg.generate_foci(hs, pg.BUNDLED_AMAX)
    amplitudes = np.linspace(20.0, 200.0, 10)
    for w in (hs, foci, bundled):
        sel = pg.SliceSelection.from_waveform(w, 3.0)
        cfg_dt = bs.DEFAULT_MAX_DT_S
        ref = rk4_propagate(w, amplitudes, 1.0, sel.nominal_gradient_hz_per_mm,
                            np.array([0.0, 0.0, 1.0]), cfg_dt / 10.0)
        for b1, expected in zip(amplitudes, ref):
            cfg = bs.SimConfig(b1max_hz=float(b1), slice_sel=sel, max_dt_s=cfg_dt)
            m = bs.propagate(bs.Magnetization.equilibrium(), w, cfg, 1.0)
            assert np.max(np.abs(m.as_array() - expected)) <= 1e-4, (
                f"{w.name} at {b1:.1f} Hz"
            )
    assert time.monotonic() - t0 < 60.0


def test_threshold_reproduction(bundled, bundled_selection):
    """97%-efficiency threshold of the bundled 20 ms / 3 mm pulse lies in
    [120, 180] Hz; efficiency is non-decreasing (tol 1e-3) above it."""
    t0 = time.monotonic()
    thr = bs.find_threshold(bundled, bundled_selection, 0.97, (0.0, 200.0), 0.5)
    assert 120.0 <= thr <= 180.0
    values = np.linspace(0.0, 200.0, 64)
    profiles = bs.sweep_grid(bundled, bundled_selection, values)
    effs = np.array([p.inversion_efficiency for p in profiles])
    above = values >= thr
    diffs = np.diff(effs[above])
    assert np.all(diffs >= -1e-3)
    assert effs[-1] >= 0.97
    assert time.monotonic() - t0 < 120.0


def test_eq6_arithmetic():
    """k = 1 -> index 1.0 exactly; 40 x 0.5 -> 0.25 exactly; random vectors
    match a brute-force sum within 1e-15."""
    assert pl.sar_reduction_index([1.0] * 40) == 1.0
    assert pl.sar_reduction_index([0.5] * 40) == 0.25
    rng = np.random.default_rng(7)
    for _ in range(200):
        ks = rng.uniform(0.01, 1.0, rng.integers(1, 64))
        brute = sum(float(k) * float(k) for k in ks) / len(ks)
        assert abs(pl.sar_reduction_index(ks) - brute) <= 1e-15


SLAB_VALUES = (300.0, 100.0, 300.0, 200.0, 150.0, 400.0, 250.0, 300.0)


def _scanner_grid_fixture(tmp_path):
    """64^3, 288 mm FOV (4.5 mm voxels), 8 slab-constant bands along z."""
    voxel = 288.0 / 64
    data = np.zeros((64, 64, 64), dtype=np.float32)
    for i, val in enumerate(SLAB_VALUES):
        data[:, :, i * 8:(i + 1) * 8] = val
    affine = np.diag([voxel, voxel, voxel, 1.0])
    vol = vm.Volume(data=data, affine=affine,
                    intent=vm.VolumeIntent.ABSOLUTE_B1_HZ)
    mask = vm.Volume(data=np.ones((64, 64, 64), np.int16), affine=affine,
                     intent=vm.VolumeIntent.MASK)
    slab_mm = 8 * voxel
    geom = vm.SliceStackGeometry(
        n_slices=8, normal=np.array([0.0, 0.0, 1.0]),
        center_mm=np.array(
            [[0.0, 0.0, (slab_mm - voxel) / 2.0 + slab_mm * i] for i in range(8)]
        ),
        thickness_mm=slab_mm, in_plane_extent_mm=(288.0, 288.0),
    )
    paths = {"b1map": tmp_path / "b1.nii", "mask": tmp_path / "mask.nii",
             "geometry": tmp_path / "geom.json"}
    vm.save_volume(vol, paths["b1map"])
    vm.save_volume(mask, paths["mask"])
    vm.save_geometry(geom, paths["geometry"])
    return paths


STRATEGY_FLAGS = [
    ("ci95-sem", None, "ci95_sem"),
    ("mean-plus-1.96sd", None, "mean_plus_1p96_sd"),
    ("percentile", 97.5, "percentile"),
]


def test_end_to_end_plan_oracle(tmp_path):
    """`plan` on the 64^3 slab fixture matches a brute-force per-slice
    script exactly for all three statistics."""
    paths = _scanner_grid_fixture(tmp_path)
    voxels_per_slab = 64 * 64 * 8
    raw_lists = [[v] * voxels_per_slab for v in SLAB_VALUES]
    for flag, pctl, stat_name in STRATEGY_FLAGS:
        args = ["--out-dir", str(tmp_path), "--quiet", "plan",
                "--b1map", str(paths["b1map"]), "--mask", str(paths["mask"]),
                "--geometry", str(paths["geometry"]),
                "--threshold-hz", "150", "--nominal-hz", "150",
                "--strategy", flag,
                "--plan-out", f"plan_{stat_name}.json"]
        if pctl is not None:
            args += ["--percentile", str(pctl)]
        assert cli.main(args) == 0
        doc = json.loads((tmp_path / f"plan_{stat_name}.json").read_text())
        rows, index = brute_force_plan(
            raw_lists, 150.0, 150.0, stat_name, pctl,
            "subthreshold_with_fallback",
        )
        assert doc["sar_reduction_index"] == index
        for s, row in zip(doc["slices"], rows):
            assert s["scale_factor"] == row["k"]
            assert s["raw_factor"] == row["raw"]
            assert s["mean_hz"] == row["mean"]
            assert s["bound_hz"] == row["bound"]
            assert s["n_voxels"] == voxels_per_slab


def test_reslice_identity_and_shift():
    """Identity reslice within 1e-12; one-voxel ramp shift within 1e-6."""
    rng = np.random.default_rng(11)
    src = vm.Volume(rng.normal(size=(12, 10, 9)).astype(np.float32),
                    np.diag([2.0, 2.0, 2.0, 1.0]), vm.VolumeIntent.INTENSITY)
    out, valid = vm.reslice_to(src, src.affine, src.dims)
    assert np.all(valid.data == 1)
    assert np.max(np.abs(out.data.astype(float) - src.data.astype(float))) <= 1e-12

    idx = np.indices((8, 8, 8)).astype(np.float32)
    ramp = vm.Volume(idx[0], np.diag([3.0, 3.0, 3.0, 1.0]),
                     vm.VolumeIntent.INTENSITY)
    target = ramp.affine.copy()
    target[0, 3] += 3.0
    out, valid = vm.reslice_to(ramp, target, ramp.dims)
    inside = valid.data.astype(bool)
    expected = idx[0] + 1.0
    assert np.max(np.abs(out.data[inside] - expected[inside])) <= 1e-6


def test_file_round_trips(tmp_path, bundled):
    """NIfTI-subset and waveform files round-trip bit-exactly; plan JSON is
    digest-stable across runs and thread counts."""
    rng = np.random.default_rng(23)
    affine = np.diag([4.5, 4.5, 4.5, 1.0])
    affine[:3, 3] = (-10.0, 5.5, 0.25)
    for data in (
        rng.normal(size=(9, 8, 7)).astype(np.float32),
        rng.integers(-900, 900, size=(9, 8, 7)).astype(np.int16),
    ):
        v = vm.Volume(data, affine, vm.VolumeIntent.INTENSITY)
        p1, p2 = tmp_path / "v1.nii", tmp_path / "v2.nii"
        vm.save_volume(v, p1)
        vm.save_volume(vm.load_volume(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    w1, w2 = tmp_path / "w1.json", tmp_path / "w2.json"
    pg.save_waveform(bundled, w1)
    pg.save_waveform(pg.load_waveform(w1), w2)
    assert w1.read_bytes() == w2.read_bytes()

    paths = _scanner_grid_fixture(tmp_path)
    blobs = []
    for threads in ("1", "4", "1"):
        assert cli.main(["--out-dir", str(tmp_path), "--quiet",
                         "--threads", threads, "plan",
                         "--b1map", str(paths["b1map"]),
                         "--mask", str(paths["mask"]),
                         "--geometry", str(paths["geometry"]),
                         "--threshold-hz", "150", "--nominal-hz", "150"]) == 0
        blobs.append((tmp_path / "plan.json").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]
