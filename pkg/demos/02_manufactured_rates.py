"""Checking the time stepper against a known solution.

eta*(x, t) = a(t) (x1 x2 + 1) with a(t) = (1 - 0.8 exp(-0.4 t)) / 2 solves
the forced surface Allen-Cahn equation on the unit sphere.  Refining h and
dt together (dt = 2^-(1+level)) should show second order in both the
L-infinity-in-time and L2-in-time norms of the surface L2 error.

The coarsest pair is pre-asymptotic; the finer pair is the one to look at.

    python demos/02_manufactured_rates.py [--ch]
"""
import sys
import tempfile

from tracephase import cli
from tracephase.config import resolve

preset = "ch_validation" if "--ch" in sys.argv else "ac_validation"
cfg = resolve(overrides={"experiment": preset, "validation.t_end": 2.0})
with tempfile.TemporaryDirectory() as out:
    res = cli.validate_levels(cfg, [2, 3, 4], out)

for name, errs in res["errors"].items():
    rates = ", ".join(f"{r:.2f}" for r in res["rates"][name])
    print(f"{name:10s} errors " + " ".join(f"{e:.3e}" for e in errs) + f"   rates {rates}")
