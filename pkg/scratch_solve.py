import sys
import time

import numpy as np

from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint
from nahmoper.solver import ContinuitySchedule, continuity_solve

mesh = make_mesh(0.05, 12.0, 200, 1.08)
mode = sys.argv[1] if len(sys.argv) > 1 else "dense"
qs = [float(x) for x in sys.argv[2:]] or [0.25]

for q in qs:
    op = OperPoint(2, 0.2, (q,))
    sched = ContinuitySchedule(linear_solver=mode)
    t0 = time.perf_counter()
    try:
        rep = continuity_solve(op, mesh, order=6, schedule=sched)
    except Exception as e:
        print(f"q={q}: FAILED {type(e).__name__}: {e}")
        rep = getattr(e, "report", None)
        if rep is not None:
            print("  last_good_t:", rep.parameters["last_good_t"])
            for h in rep.history[-8:]:
                print("  ", h)
        continue
    dt = time.perf_counter() - t0
    iters = {}
    for h in rep.history:
        iters[h["t"]] = h["iter"]
    print(f"q={q}: wall {dt:.1f}s res_sup {rep.res_sup:.3e} "
          f"s_sup {rep.s_sup:.3f} balance {rep.balance_defect:.3e}")
    print(f"  iters/stage: {list(iters.values())}")
    print(f"  extracted_q: {rep.extracted_q} (target {q})")
    print(f"  pole_rel: {rep.pole_rel}")
    print(f"  far: rate {rep.far_rate:.3f} r2 {rep.far_r2:.5f} "
          f"s_decay {rep.s_decay:.3f}")
