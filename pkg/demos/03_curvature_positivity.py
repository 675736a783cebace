"""Geodesic curvature of the evolving total-space form.

Nine fibers over a 3x3 base stencil are evolved together; base derivatives
of phi(t) assemble the mixed and ss-bar components of the total form, whose
Schur complement is the geodesic curvature c(omega(t)).  Positivity of c
means the evolving form is semipositive on the total space; the degenerate
product family stays at c = 0 exactly.
"""

import numpy as np

import fiberflow as ff
from fiberflow.assembly import OFFSETS

times = [0.25, 0.5, 1.0, 2.0]

for kind, s0 in (("unit_ball", 0.3 + 0.1j), ("hartogs", 0.3),
                 ("product_disc", 0.2), ("translated_disc", 0.2)):
    spec = ff.FamilySpec(kind=kind)
    st = ff.build_stencil(spec, s0, delta=0.02, h=0.05, eps_cut=0.05)
    phis = {}
    for off, grid in st.grids.items():
        res = ff.solve_flow(grid, max(times), snapshot_times=times, c_cfl=2.0)
        phis[off] = {snap.t: snap.phi for snap in res.snapshots}
    print(f"--- {kind} (s0 = {s0})")
    for t in times:
        form = ff.assemble_total_form(st, {o: phis[o][t] for o in OFFSETS}, t)
        c = form.c()[st.cinterior]
        print(f"    t = {t:4.2f}: min c = {np.nanmin(c):+.6e}, "
              f"max c = {np.nanmax(c):+.6e}")
    print()
