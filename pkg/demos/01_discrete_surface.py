"""How good is the discrete sphere?

The sphere is never meshed.  A tetrahedral grid of the box [-5/3, 5/3]^3
is refined toward the zero level set of phi(x) = |x| - 1, the band of cut
tetrahedra carries the unknowns, and Gamma_h is the piecewise planar zero
set of the interpolated level set.  Each level halves h, so the area error
should drop by about four.

    python demos/01_discrete_surface.py
"""
import math

from tracephase.fem import TraceSpace
from tracephase.geometry import ImplicitSurface

sphere = ImplicitSurface.sphere()
prev = None
print(f"{'level':>5} {'h':>8} {'band tets':>9} {'dofs':>6} {'area error':>11} {'order':>6}")
for level in range(1, 6):
    space = TraceSpace(sphere, level)
    err = abs(space.gamma.area - 4 * math.pi)
    order = "" if prev is None else f"{math.log2(prev / err):6.2f}"
    print(f"{level:5d} {space.h:8.4f} {len(space.band.tet_ids):9d} {space.n_dofs:6d} {err:11.3e} {order}")
    prev = err

# the same machinery works for any closed level set inside its box
for name in ("spindle", "cell"):
    surf = ImplicitSurface.from_kind(name)
    space = TraceSpace(surf, 3, {"spindle": (8, 2, 2), "cell": (3, 2, 2)}[name])
    print(f"{name}: level 3, {space.n_dofs} dofs, area {space.gamma.area:.4f}")
