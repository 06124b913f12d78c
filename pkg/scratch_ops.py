import numpy as np
import time

from nahmoper.fields import hat_moment_map
from nahmoper.lie import dag, herm_traceless_basis, principal_triple, traceless
from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint, build_H0, model_background
from nahmoper.solver import (Nt_residual, absorb_deformation, apply_L, cov_ops,
                             inner_w, keyeq_check)

rng = np.random.default_rng(7)
OP2 = OperPoint(2, 0.3, (1.5,))
OP3 = OperPoint(3, 0.2, (0.5, 0.8 - 0.4j))


def sup(a):
    return float(np.abs(a).max())


def nsup(a):
    return float(np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1))).max())


def rand_interior(mesh, n, scale=1.0, margin=3):
    basis = herm_traceless_basis(n)
    x = rng.standard_normal((mesh.ny, len(basis)))
    v = np.einsum("md,dij->mij", x, basis)[:, None, None]
    bump = np.exp(-0.5 * ((np.log(mesh.y) - 0.3) / 0.8) ** 2)
    v = v * bump[:, None, None, None, None]
    v[:margin] = 0.0
    v[-margin:] = 0.0
    return scale * v

mesh = make_mesh(0.05, 12.0, 80, 1.1)
adm = build_H0(OP2, 2)
bg = adm.background(mesh)

# 1. model zero residual
mb = model_background(mesh, OP2.beta, 2)
z = np.zeros((mesh.ny, 1, 1, 2, 2))
print("model residual s=0:", nsup(Nt_residual(mb, z, 0.7)))

# 2. coupling shift: absorb kappa, then s=-kappa at t=1
adm6 = build_H0(OP2, 6)
bg6 = adm6.background(mesh)
kap = hat_moment_map(bg6, z)
print("kappa sup:", nsup(kap))
moved = absorb_deformation(bg6, kap)
r1 = Nt_residual(moved, -kap, 1.0)
print("coupling shift residual:", nsup(r1))
# absorb metric exactness
H_orig = dag(bg6.g0) @ np.linalg.matrix_power(np.eye(2), 1) @ bg6.g0
from scipy.linalg import expm
Hs = dag(bg6.g0) @ expm(kap[:, 0, 0]) @ bg6.g0
Hm = dag(moved.g0) @ moved.g0
print("absorb metric exact:", sup(Hs - Hm))
om_moved = hat_moment_map(moved, z)
om_orig = hat_moment_map(bg6, kap)
print("absorb moment shift:", nsup(om_moved - om_orig))

# 3. FD linearization vs apply_L
v = rand_interior(mesh, 2)
t0 = 0.37
for eps in (1e-5, 1e-6):
    fd = (Nt_residual(bg, eps * v, t0) - Nt_residual(bg, -eps * v, t0)) / (2 * eps)
    La = apply_L(bg, v, t0)
    print(f"FD eps={eps}: rel {nsup(fd - La) / nsup(La):.3e}")

# 4. hand profile on model bg
mesh6 = make_mesh(0.05, 6.0, 80, 1.1)
mb6 = model_background(mesh6, OP2.beta, 2)
e0 = np.diag([1.0, -1.0]).astype(complex)
y = mesh6.y
f = (y ** 2 * (1 - y / y[-1]))
vprof = f[:, None, None, None, None] * e0
L = apply_L(mb6, vprof)
want = (4.0 / y[-1]) * y[:, None, None, None, None] * e0
dev = np.abs(L - want).max(axis=(1, 2, 3, 4))
scale = np.abs(want).max()
h_uni = y[-1] - y[-2]
uni = (y > 1.0 + 2.5 * h_uni) & (y < y[-1] - 2.5 * h_uni)
print("hand: uniform-rows rel", dev[uni].max() / scale,
      " all-interior rel", dev[2:-2].max() / scale)

# 5. indicial zeros
L2 = apply_L(mb6, (y ** 2)[:, None, None, None, None] * e0)
print("indicial n2 k1 y^2:", sup(L2[1:-1]))
mb3 = model_background(mesh6, OP3.beta, 3)
ep3 = principal_triple(3)[0]
v2 = ep3 @ ep3
v2 = v2 + dag(v2)
L3 = apply_L(mb3, (y ** 3)[:, None, None, None, None] * v2)
dev3 = np.abs(L3).max(axis=(1, 2, 3, 4))
print("indicial n3 k2 y^3: uniform", dev3[uni].max(), " all", dev3[1:-1].max())
d1 = np.diag([1.0, 0.0, -1.0]).astype(complex)
L3b = apply_L(mb3, (y ** 2)[:, None, None, None, None] * d1)
print("indicial n3 k1 y^2:", sup(L3b[1:-1]))

# 6. two-path agreement
for m in (mesh, mesh.refine()):
    bgm = build_H0(OP2, 2).background(m)
    vm = rand_interior(m, 2)
    da = apply_L(bgm, vm, path="direct")
    db = apply_L(bgm, vm, path="symmetric")
    print("two-path sup:", nsup(da - db), " vsup:", nsup(vm))

# 7. symmetry of direct path
for m in (mesh, mesh.refine()):
    bgm = build_H0(OP2, 2).background(m)
    u = rand_interior(m, 2)
    w = rand_interior(m, 2, scale=0.7)
    lu, lw = apply_L(bgm, u), apply_L(bgm, w)
    aaa = inner_w(m, lu, w) - inner_w(m, u, lw)
    print("symmetry defect:", abs(aaa))

# 8. positivity
for k in range(6):
    vv = rand_interior(mesh, 2, scale=rng.uniform(0.1, 2.0))
    val = inner_w(mesh, apply_L(bg, vv, 0.1), vv)
    print("positivity:", val)
