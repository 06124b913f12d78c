import numpy as np

from nahmoper.fields import hat_moment_map
from nahmoper.lie import dag, herm_traceless_basis, principal_triple
from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint, build_H0, model_background
from nahmoper.solver import (Nt_residual, absorb_deformation, apply_L,
                             inner_w)

rng = np.random.default_rng(7)
OP3 = OperPoint(3, 0.2, (0.5, 0.8 - 0.4j))


def nsup(a):
    return float(np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1))).max())


def rand_interior(mesh, n, scale=1.0, margin=3, seed_rng=None):
    r = seed_rng or rng
    basis = herm_traceless_basis(n)
    x = r.standard_normal((mesh.ny, len(basis)))
    v = np.einsum("md,dij->mij", x, basis)[:, None, None]
    bump = np.exp(-0.5 * ((np.log(mesh.y) - 0.3) / 0.8) ** 2)
    v = v * bump[:, None, None, None, None]
    v[:margin] = 0.0
    v[-margin:] = 0.0
    return scale * v

mesh = make_mesh(0.05, 12.0, 80, 1.1)

# benchmark reference-residual sizes, J=6, beta=0.2
for q in (0.0, 0.25, 0.5, 1.0):
    op = OperPoint(2, 0.2, (q,))
    adm = build_H0(op, 6)
    bg = adm.background(mesh)
    z = np.zeros((mesh.ny, 1, 1, 2, 2))
    om = hat_moment_map(bg, z)
    prof = np.sqrt(np.sum(np.abs(om) ** 2, axis=(-2, -1)))[:, 0, 0]
    i = int(prof.argmax())
    print(f"q={q}: om0 sup {prof.max():.4e} at y={mesh.y[i]:.2f}, window {adm.window}")

# n=3 benchmark-ish
adm3 = build_H0(OP3, 6)
z3 = np.zeros((mesh.ny, 1, 1, 3, 3))
om3 = hat_moment_map(adm3.background(mesh), z3)
print("OP3 J6 om0 sup:", nsup(om3), "window", adm3.window)

# coupling shift, small-deformation version: perturb the exact model, absorb
# its residual, check the shifted equation at t=1 kills it
mb = model_background(mesh, OperPoint(2, 0.2, (0.0,)).beta, 2)
for wscale in (1e-3, 1e-5):
    w = rand_interior(mesh, 2, scale=wscale, seed_rng=np.random.default_rng(3))
    bg_m1 = absorb_deformation(mb, w)
    kap = hat_moment_map(bg_m1, np.zeros_like(w))
    moved = absorb_deformation(bg_m1, kap)
    r1 = Nt_residual(moved, -kap, 1.0)
    print(f"w={wscale}: kappa {nsup(kap):.3e} shift-resid {nsup(r1):.3e} "
          f"ratio {nsup(r1)/nsup(kap):.3e}")

# two-path on n=3 (m3 not Hermitian there)
for m in (mesh, mesh.refine()):
    bgm = build_H0(OP3, 2).background(m)
    vm = rand_interior(m, 3, seed_rng=np.random.default_rng(5))
    da = apply_L(bgm, vm, path="direct")
    db = apply_L(bgm, vm, path="symmetric")
    print("n3 two-path sup:", nsup(da - db))

# two-path n=2 stays rounding-exact
bg2 = build_H0(OperPoint(2, 0.3, (1.5,)), 2).background(mesh)
v2 = rand_interior(mesh, 2)
print("n2 two-path:", nsup(apply_L(bg2, v2) - apply_L(bg2, v2, path="symmetric")))

# symmetry defect of the direct path
for m in (mesh, mesh.refine()):
    bgm = build_H0(OP3, 2).background(m)
    u = rand_interior(m, 3, seed_rng=np.random.default_rng(11))
    w2 = rand_interior(m, 3, scale=0.7, seed_rng=np.random.default_rng(12))
    d = inner_w(m, apply_L(bgm, u), w2) - inner_w(m, u, apply_L(bgm, w2))
    nn = inner_w(m, u, u) ** 0.5 * inner_w(m, w2, w2) ** 0.5
    print("symmetry defect:", abs(d), " rel:", abs(d) / nn)

# positivity at t = 0.1
for k in range(6):
    vv = rand_interior(mesh, 2, scale=rng.uniform(0.1, 2.0))
    val = inner_w(mesh, apply_L(bg2, vv, 0.1), vv)
    print("positivity:", val)
