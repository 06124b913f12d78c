import numpy as np

from nahmoper.lie import herm_traceless_basis
from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint, build_H0
from nahmoper.solver import (ContinuitySchedule, Nt_derivative, Nt_residual,
                             continuity_solve, far_fit, far_profile)

mesh16 = make_mesh(0.05, 16.0, 240, 1.08)
for q in (0.5, 1.0):
    rep = continuity_solve(OperPoint(2, 0.2, (q,)), mesh16, order=6,
                           schedule=ContinuitySchedule(linear_solver="dense"))
    prof = far_profile(rep.unitary_fields())
    print(f"q={q} y_max=16: res {rep.res_sup:.1e} wall {rep.wall_time:.1f}s "
          f"extracted {rep.extracted_q}")
    for lo, hi in ((0.45, 0.85), (0.5, 0.85), (0.55, 0.85), (0.5, 0.8),
                   (0.55, 0.97)):
        sl, r2 = far_fit(mesh16, prof, lo, hi)
        print(f"   fit[{lo},{hi}] y=[{lo*16:.1f},{hi*16:.1f}]: "
              f"rate {sl:+.4f} r2 {r2:.5f}")

# derivative FD margin vs eps on the acceptance mesh
mesh = make_mesh(0.05, 12.0, 200, 1.08)
op = OperPoint(2, 0.2, (0.5,))
bg = build_H0(op, 6).background(mesh)
basis = herm_traceless_basis(2)
rng = np.random.default_rng(7)
y = mesh.y
win = (np.clip((y - 1.5) * (11.5 - y), 0.0, None) / 25.0) ** 4
prof_s = np.zeros((mesh.ny, len(basis)))
for d in range(len(basis)):
    for k in range(1, 4):
        a, b = rng.standard_normal(2)
        prof_s[:, d] += a * np.sin(np.pi * k * y / 12) + 0.5 * b * np.cos(
            np.pi * k * y / 12)
prof_s *= win[:, None]


def mk(scale, seed):
    r2 = np.random.default_rng(seed)
    p = np.zeros((mesh.ny, len(basis)))
    for d in range(len(basis)):
        for k in range(1, 4):
            a, b = r2.standard_normal(2)
            p[:, d] += a * np.sin(np.pi * k * y / 12) + 0.5 * b * np.cos(
                np.pi * k * y / 12)
    p *= win[:, None]
    return scale * np.einsum("md,dij->mij", p, basis)[:, None, None]


s = mk(0.6, 3)
v = mk(1.0, 4)
ex = Nt_derivative(bg, s, v, t=0.7)
for eps in (1e-5, 3e-6, 1e-6):
    fd = (Nt_residual(bg, s + eps * v, 0.7)
          - Nt_residual(bg, s - eps * v, 0.7)) / (2 * eps)
    err = np.abs(fd - ex).max()
    print(f"eps={eps:g}: |fd - exact|_sup = {err:.3e}")
