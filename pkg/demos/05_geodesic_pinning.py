"""Interfaces that stop moving on a non-convex surface.

On the idealized cell the Allen-Cahn interface moves by geodesic
curvature, so it can come to rest on a closed geodesic such as the neck
around the waist.  Depending on the random start the flow ends either
there, with both phases present, or in a single phase.  The run stops
once ||eta^k - eta^(k-1)|| / dt < 1e-6.

    python demos/05_geodesic_pinning.py [seed ...]
"""
import sys

from tracephase.config import CELL_AC_SCHEDULE
from tracephase.diagnostics import phase_area_fraction
from tracephase.fem import TraceSpace
from tracephase.geometry import ImplicitSurface
from tracephase.models import AllenCahn, ModelParams, step_sizes

seeds = [int(s) for s in sys.argv[1:]] or [0, 1]
space = TraceSpace(ImplicitSurface.cell(), 4, (3, 2, 2))
for seed in seeds:
    ac = AllenCahn(space, ModelParams(epsilon=0.05, dt=1.0))
    ac.start(space.random_field(seed))
    for dt in step_sizes(CELL_AC_SCHEDULE, 23000.0):
        prev = ac.state.u_k
        u = ac.step(dt).u
        rate = space.l2_norm(space.eval_surface(u - prev)) / dt
        if rate < 1e-6:
            break
    frac = phase_area_fraction(space, u)
    kind = "two phases, pinned interface" if 0.02 < frac < 0.98 else "single phase"
    print(f"seed {seed}: settled at t = {ac.state.t:.0f}, fraction {frac:.4f} ({kind})")
