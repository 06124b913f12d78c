import numpy as np

from nahmoper.fields import MetricDeformation, chern_fields
from nahmoper.model import build_H0
from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint
from nahmoper.solver import (ContinuitySchedule, comm, continuity_solve, dag,
                             far_fit, far_flat_pair, far_profile)

mesh = make_mesh(0.05, 12.0, 200, 1.08)


def slice_defect(fields):
    P1, P2 = far_flat_pair(fields)
    w2 = abs(fields.tilt.w) ** 2
    scale = max(np.linalg.norm(P1), np.linalg.norm(P2)) ** 2
    return (np.linalg.norm(w2 * comm(dag(P2), P2) + comm(dag(P1), P1))
            + np.linalg.norm(comm(P1, P2))) / scale


for q in (0.0, 0.25, 0.5, 1.0):
    op = OperPoint(2, 0.2, (q,))
    adm = build_H0(op, 6)
    bg = adm.background(mesh)
    z = np.zeros((mesh.ny, 1, 1, op.n, op.n), dtype=complex)
    bgf = chern_fields(bg.holo, MetricDeformation(bg, z))
    prof_b = far_profile(bgf)
    print(f"q={q} admissible bg: slice_defect {slice_defect(bgf):.3e}")
    rows = [int(np.searchsorted(mesh.y, y)) for y in
            (6.0, 7.0, 8.0, 9.0, 10.0, 10.5, 11.0, 11.5, 11.8)]
    print("   bg prof:", " ".join(f"{prof_b[m]:.2e}" for m in rows))
    for lo, hi in ((0.55, 0.97), (0.7, 0.97), (0.87, 0.992)):
        sl, r2 = far_fit(mesh, prof_b, lo, hi)
        print(f"   bg fit[{lo},{hi}]: rate {sl:+.3f} r2 {r2:.5f}")
    rep = continuity_solve(op, mesh, order=6,
                           schedule=ContinuitySchedule(linear_solver="dense"))
    fields = rep.unitary_fields()
    prof = far_profile(fields)
    print(f"   solve: res {rep.res_sup:.1e} wall {rep.wall_time:.1f}s "
          f"slice_defect {slice_defect(fields):.3e}")
    print("   sol prof:", " ".join(f"{prof[m]:.2e}" for m in rows))
    for lo, hi in ((0.55, 0.97), (0.7, 0.97), (0.87, 0.992)):
        sl, r2 = far_fit(mesh, prof, lo, hi)
        print(f"   sol fit[{lo},{hi}]: rate {sl:+.3f} r2 {r2:.5f}")
