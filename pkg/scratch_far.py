import numpy as np

from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint
from nahmoper.solver import (ContinuitySchedule, balance_defect, continuity_solve,
                             far_flat_pair, far_profile, kobayashi_hitchin)

mesh = make_mesh(0.05, 12.0, 200, 1.08)
for q in (0.25, 0.5):
    op = OperPoint(2, 0.2, (q,))
    rep = continuity_solve(op, mesh, order=6,
                           schedule=ContinuitySchedule(linear_solver="dense"))
    fields = rep.unitary_fields()
    prof = far_profile(fields)
    snorm = np.linalg.norm(rep.s.reshape(mesh.ny, -1), axis=1)
    print(f"q={q}  res {rep.res_sup:.1e}")
    for y in (4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 10.5, 11.0, 11.3, 11.6, 11.9):
        m = int(np.searchsorted(mesh.y, y))
        print(f"  y={mesh.y[m]:6.2f} prof {prof[m]:.3e}  |s| {snorm[m]:.3e}")
    P1, P2 = far_flat_pair(fields)
    print("  P2 far:", np.round(P2, 6).tolist())
    print("  P1 far:", np.round(P1, 6).tolist())
    for frac in (0.8, 0.9, 0.95, 0.985):
        print(f"  balance({frac}) = {balance_defect(fields, frac):.3e}")
    for ctol in (1e-4, 1e-2, 1.0):
        try:
            print(f"  kh(ctol={ctol}): {kobayashi_hitchin(fields, ctol=ctol).q}")
            break
        except Exception as e:
            print(f"  kh(ctol={ctol}): {type(e).__name__}")
