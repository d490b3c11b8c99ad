#!/usr/bin/env python3
"""Write the bundled inversion pulse to a waveform JSON file.

Usage: python3 scripts/export_bundled_pulse.py [out.json]
"""

import sys

from adiaplan import pulsegen as pg


def main(argv):
    out = argv[1] if len(argv) > 1 else "trfoci.json"
    pg.save_waveform(pg.bundled_trfoci(), out)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
