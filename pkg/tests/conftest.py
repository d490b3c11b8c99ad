import numpy as np
import pytest

from adiaplan import pulsegen as pg


@pytest.fixture(scope="session")
def bundled_pulse():
    return pg.bundled_trfoci()


@pytest.fixture(scope="session")
def hs1_short():
    """Fast HS1 fixture in the physical regime (sweep >> threshold B1)."""
    return pg.generate_hs(1, 5.3, 1000.0, 0.01, 256)


@pytest.fixture(scope="session")
def foci_short(hs1_short):
    return pg.generate_foci(hs1_short, 10.0)


def constant_pulse(b1_shape=1.0, duration_s=0.002, n_samples=64):
    n = n_samples
    return pg.PulseWaveform(
        name="const",
        family=pg.PulseFamily.CUSTOM,
        dt_s=duration_s / n,
        duration_s=duration_s,
        am=np.full(n, b1_shape),
        fm_hz=np.zeros(n),
        gm=np.ones(n),
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, "PASS" if status == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}")
