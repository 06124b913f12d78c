import numpy as np

from nahmoper.fields import hat_moment_map
from nahmoper.lie import TiltParams, herm_traceless_basis
from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint, model_background
from nahmoper.solver import (Nt_residual, absorb_deformation, apply_L,
                             inner_w, keyeq_check)


def nsup(a):
    return float(np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1))).max())


def gentle_field(mesh, n, scale=1.0, seed=13, lo=1.5, hi=11.5):
    rng = np.random.default_rng(seed)
    basis = herm_traceless_basis(n)
    y = mesh.y
    win = (np.clip((y - lo) * (hi - y), 0.0, None) / 25.0) ** 4
    prof = np.zeros((len(y), len(basis)))
    for d in range(len(basis)):
        for k in range(1, 4):
            a, b = rng.normal(size=2)
            prof[:, d] += a * np.sin(np.pi * k * y / y[-1]) \
                + 0.5 * b * np.cos(np.pi * k * y / y[-1])
    prof *= win[:, None]
    return scale * np.einsum("md,dij->mij", prof, basis)[:, None, None]


mesh = make_mesh(0.05, 12.0, 80, 1.1)
fine = mesh.refine()
finer = fine.refine()

print("== keyeq on model bg, gentle field, 3 levels ==")
kv = []
for m in (mesh, fine, finer):
    bg = model_background(m, TiltParams(0.3), 2)
    s = gentle_field(m, 2, scale=0.4, seed=31)
    kv.append(keyeq_check(bg, s))
    print(f"  ny={m.ny}: {kv[-1]:.4e}")
print(f"  ratios {kv[0]/kv[1]:.3f} {kv[1]/kv[2]:.3f}")

print("== two-path n=3 on model bg, gentle field ==")
tv = []
for m in (mesh, fine, finer):
    bg = model_background(m, TiltParams(0.2), 3)
    v = gentle_field(m, 3, seed=5)
    tv.append(nsup(apply_L(bg, v) - apply_L(bg, v, path="symmetric")))
    print(f"  ny={m.ny}: {tv[-1]:.4e}")
print(f"  ratios {tv[0]/tv[1]:.3f} {tv[1]/tv[2]:.3f}")

print("== symmetry defect on model bg, gentle fields ==")
sv = []
for m in (mesh, fine, finer):
    bg = model_background(m, TiltParams(0.2), 3)
    u = gentle_field(m, 3, seed=11)
    w = gentle_field(m, 3, scale=0.7, seed=12)
    dd = inner_w(m, apply_L(bg, u), w) - inner_w(m, u, apply_L(bg, w))
    nn = inner_w(m, u, u) ** 0.5 * inner_w(m, w, w) ** 0.5
    sv.append(abs(dd) / nn)
    print(f"  ny={m.ny}: rel {sv[-1]:.4e}")
print(f"  ratios {sv[0]/sv[1]:.3f} {sv[1]/sv[2]:.3f}")

print("== coupling shift at exact model (w=0) ==")
for m in (mesh,):
    mb = model_background(m, TiltParams(0.2), 2)
    kap = hat_moment_map(mb, np.zeros((m.ny, 1, 1, 2, 2), dtype=complex))
    moved = absorb_deformation(mb, kap)
    r1 = Nt_residual(moved, -kap, 1.0)
    print(f"  kappa {nsup(kap):.3e} resid {nsup(r1):.3e}")

print("== coupling shift, gentle w, linearity ==")
mb = model_background(mesh, TiltParams(0.2), 2)
prev = None
for wscale in (2e-3, 1e-3, 5e-4):
    w = gentle_field(mesh, 2, scale=wscale, seed=3)
    b1 = absorb_deformation(mb, w)
    kap = hat_moment_map(b1, np.zeros_like(w))
    moved = absorb_deformation(b1, kap)
    r1 = Nt_residual(moved, -kap, 1.0)
    print(f"  w={wscale}: kappa {nsup(kap):.4e} resid {nsup(r1):.4e} "
          f"rel {nsup(r1)/nsup(kap):.3f}")
