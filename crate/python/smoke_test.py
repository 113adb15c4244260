#!/usr/bin/env python3
"""Smoke test for the simctl_py extension module.

Builds nothing itself: it imports the extension from a `maturin develop`
install if present, otherwise loads the cargo-built cdylib straight out
of target/. Run from the repository root:

    cargo build -p simctl-py --release
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_simctl_py():
    try:
        import simctl_py  # noqa: F401

        return simctl_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        built = REPO / "target" / profile / "libsimctl_py.so"
        if built.exists():
            stage = Path(tempfile.mkdtemp(prefix="simctl_py_"))
            shutil.copy2(built, stage / "simctl_py.so")
            sys.path.insert(0, str(stage))
            import simctl_py

            return simctl_py
    raise SystemExit(
        "simctl_py not found: run `cargo build -p simctl-py` first "
        "or install it with `maturin develop`"
    )


RC_NETLIST = """\
title: rc step response
element name=V1 type=vsrc_dc nodes=in 0 v=1
element name=R1 type=r nodes=in out r=1k
element name=C1 type=c nodes=out 0 c=1u
begin_solve
kind=startup t_start=0 outvars=v(out)
end_solve
begin_solve
kind=trns method=trz t_start=0 t_end=5m dt=10u init=startup
out_file=rc.dat outvars=v(out) R1.i
end_solve
"""

SINE_SSW_NETLIST = """\
element name=V1 type=vsrc_sin nodes=in 0 va=1 freq=1k
element name=R1 type=r nodes=in out r=1k
element name=C1 type=c nodes=out 0 c=1u
begin_solve
kind=ssw method=trz t_start=0 t_end=1m dt=0.5u period=1m tol_ssw=1e-12
outvars=v(out) v(in)
end_solve
"""


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b} (tol {tol})"


def main():
    simctl_py = import_simctl_py()
    print(f"simctl_py {simctl_py.__version__}")

    # engineering-suffix literals
    approx(simctl_py.parse_value("600u"), 6.0e-4, 1e-15)
    approx(simctl_py.parse_value("2.5k"), 2500.0, 1e-12)

    # validation diagnostics
    assert simctl_py.check(RC_NETLIST) == []
    bad = RC_NETLIST.replace("nodes=out 0", "nodes=out float")
    assert any("floats" in d for d in simctl_py.check(bad))

    # transient run: rc charging against the analytic law
    blocks, waves = simctl_py.run(RC_NETLIST)
    assert [b.kind for b in blocks] == ["startup", "trns"]
    w = waves[1]
    assert w.kind == "trns"
    t = w.time()
    v = w.column("v(out)")
    for i in range(0, len(t), 50):
        approx(v[i], 1.0 - math.exp(-t[i] / 1e-3), 1e-4)
    # post-processing on the returned waveform
    approx(w.rms("v(out)", 4e-3, 5e-3), 1.0 - math.exp(-4.5), 2e-2)

    # periodic steady state: amplitude matches the phasor solution
    blocks, waves = simctl_py.run(SINE_SSW_NETLIST)
    assert blocks[0].ssw_periods_integrated <= 5
    w = waves[0]
    amp = max(abs(x) for x in w.column("v(out)"))
    wrc = 2.0 * math.pi
    approx(amp, 1.0 / math.sqrt(1.0 + wrc * wrc), 1e-3)
    f1, a0, harmonics = w.fourier("v(in)", 0.0, 1e-3, 5)
    approx(f1, 1000.0, 1e-9)
    approx(harmonics[0][1], 1.0, 1e-5)  # unit fundamental on the drive

    print("smoke test passed")


if __name__ == "__main__":
    main()
