#!/usr/bin/env python3
"""Parameter sweep behind the bundled inversion pulse.

Scans the sweep scale mu and the warp depth of the HS1 -> shape-factor ->
time-resample chain, printing for each candidate the waveform bandwidth,
the 97%-efficiency B1 threshold for a 3 mm slice, and whether the
efficiency curve is non-decreasing above the threshold.  The constants
frozen in adiaplan.pulsegen (BUNDLED_*) come from this sweep: a threshold
of ~150 Hz with a clean monotone knee.

Usage: python3 scripts/calibrate_bundled_pulse.py [--fast]
"""

import argparse
import sys

import numpy as np

from adiaplan import blochsim as bs
from adiaplan import pulsegen as pg


def candidate(mu, depth, duration_s=0.02, n_samples=512):
    hs = pg.generate_hs(1, pg.BUNDLED_BETA, mu, duration_s, n_samples)
    foci = pg.generate_foci(hs, pg.BUNDLED_AMAX)
    warp = pg.default_trfoci_warp(n_samples, duration_s, depth)
    return pg.resample_trfoci(foci, warp)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fast", action="store_true", help="coarser candidate grid")
    ap.add_argument("--thickness-mm", type=float, default=3.0)
    args = ap.parse_args(argv)

    mus = (180.0, 230.0, 280.0) if args.fast else (160.0, 180.0, 200.0, 220.0, 230.0, 240.0, 260.0)
    depths = (0.0, 0.15) if args.fast else (0.0, 0.10, 0.15, 0.20)

    print("mu      depth  bw_hz    thr_hz   mono  eff@200")
    for mu in mus:
        for depth in depths:
            w = candidate(mu, depth)
            sel = pg.SliceSelection.from_waveform(w, args.thickness_mm)
            try:
                thr = bs.find_threshold(w, sel, 0.97, (0.0, 200.0), 0.5)
            except bs.ThresholdNotFoundError as e:
                print(f"{mu:6.1f}  {depth:4.2f}  {pg.bandwidth(w):7.1f}  "
                      f"not reached (best {e.best_efficiency:.4f})")
                continue
            sweep = np.linspace(thr, 200.0, 12)
            effs = [p.inversion_efficiency
                    for p in bs.sweep_grid(w, sel, sweep)]
            mono = all(b >= a - 1e-3 for a, b in zip(effs, effs[1:]))
            print(f"{mu:6.1f}  {depth:4.2f}  {pg.bandwidth(w):7.1f}  "
                  f"{thr:7.1f}  {str(mono):5s} {effs[-1]:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
