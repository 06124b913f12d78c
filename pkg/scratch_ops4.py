import numpy as np

from nahmoper.fields import (Background, HoloData, MetricDeformation,
                             chern_fields, hat_moment_map)
from nahmoper.lie import TiltParams, herm_traceless_basis
from nahmoper.mesh import make_mesh
from nahmoper.model import OperPoint, build_H0, model_background
from nahmoper.solver import (Nt_residual, absorb_deformation, apply_L,
                             inner_w, keyeq_check, pole_fit)

OP2 = OperPoint(2, 0.3, (1.5,))
OP3 = OperPoint(3, 0.2, (0.5, 0.8 - 0.4j))


def nodep(a):
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))[:, 0, 0]


def nsup(a):
    return float(np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1))).max())


def bump_field(mesh, n, scale=1.0, seed=13, center=6.5, halfwidth=4.5):
    rng = np.random.default_rng(seed)
    basis = herm_traceless_basis(n)
    y = mesh.y
    u = (y - center) / halfwidth
    w = np.zeros_like(y)
    inside = np.abs(u) < 1.0
    w[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    prof = np.zeros((len(y), len(basis)))
    for d in range(len(basis)):
        for k in range(1, 4):
            a, b = rng.normal(size=2)
            prof[:, d] += a * np.sin(np.pi * k * y / y[-1]) \
                + 0.5 * b * np.cos(np.pi * k * y / y[-1])
    prof *= w[:, None]
    return scale * np.einsum("md,dij->mij", prof, basis)[:, None, None]


mesh = make_mesh(0.05, 12.0, 80, 1.1)
fine = mesh.refine()

print("== two-path n=3 profile (old smooth全域 field) ==")
bgm = build_H0(OP3, 2).background(mesh)


def smooth_field(mesh, n, scale=1.0, seed=13):
    rng = np.random.default_rng(seed)
    basis = herm_traceless_basis(n)
    y = mesh.y
    win = (y - y[0]) ** 2 * (y[-1] - y) ** 2 / y[-1] ** 4
    prof = np.zeros((len(y), len(basis)))
    for d in range(len(basis)):
        for k in range(1, 4):
            a, b = rng.normal(size=2)
            prof[:, d] += a * np.sin(np.pi * k * y / y[-1]) \
                + 0.5 * b * np.cos(np.pi * k * y / y[-1])
    prof *= win[:, None]
    return scale * np.einsum("md,dij->mij", prof, basis)[:, None, None]


vm = smooth_field(mesh, 3, seed=5)
dd = nodep(apply_L(bgm, vm) - apply_L(bgm, vm, path="symmetric"))
top = np.argsort(dd)[-6:]
for i in top:
    print(f"  row {i} y={mesh.y[i]:.4f}: {dd[i]:.3e}")

print("== two-path n=3, bump field (uniform support) ==")
vals = []
for m in (mesh, fine):
    bgm2 = build_H0(OP3, 2).background(m)
    vb = bump_field(m, 3, seed=5)
    da = apply_L(bgm2, vb)
    db = apply_L(bgm2, vb, path="symmetric")
    vals.append(nsup(da - db))
    print(f"  ny={m.ny}: {vals[-1]:.3e}")
print(f"  ratio {vals[0]/vals[1]:.3f}")

print("== keyeq n=2 bump field, halving ==")
kv = []
for m in (mesh, fine):
    bgk = build_H0(OP2, 2).background(m)
    s = bump_field(m, 2, scale=0.4, seed=31)
    kv.append(keyeq_check(bgk, s))
    print(f"  ny={m.ny}: {kv[-1]:.3e}")
print(f"  ratio {kv[0]/kv[1]:.3f}")

print("== coupling shift profile ==")
mb = model_background(mesh, TiltParams(0.2), 2)
w = smooth_field(mesh, 2, scale=1e-3, seed=3)
bg_m1 = absorb_deformation(mb, w)
kap = hat_moment_map(bg_m1, np.zeros_like(w))
moved = absorb_deformation(bg_m1, kap)
r1 = Nt_residual(moved, -kap, 1.0)
rp = nodep(r1)
top = np.argsort(rp)[-6:]
for i in top:
    print(f"  row {i} y={mesh.y[i]:.4f}: {rp[i]:.3e}")
ju = int(np.argmin(np.abs(mesh.y - 1.0)))
print(f"  junction index {ju}; kappa sup {nsup(kap):.3e}")

print("== coupling shift, bump w (uniform support) ==")
for m, mbx in ((mesh, mb), (fine, model_background(fine, TiltParams(0.2), 2))):
    wb = bump_field(m, 2, scale=1e-3, seed=3)
    b1 = absorb_deformation(mbx, wb)
    kb = hat_moment_map(b1, np.zeros_like(wb))
    mv = absorb_deformation(b1, kb)
    rr = Nt_residual(mv, -kb, 1.0)
    rrp = nodep(rr)
    i = int(np.argmax(rrp))
    print(f"  ny={m.ny}: kappa {nsup(kb):.3e} resid {nsup(rr):.3e} "
          f"rel {nsup(rr)/nsup(kb):.3e} peak y={m.y[i]:.3f}")

print("== commuting sigma_x toy ==")
sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
for m in (mesh, fine):
    holo = HoloData(mesh=m, tilt=TiltParams(0.25), n=2, alpha=sx)
    f = 1.0 + 0.1 * m.y / m.y[-1]
    df = np.full_like(m.y, 0.1 / m.y[-1])
    ii = np.eye(2, dtype=complex)
    g0 = f[:, None, None] * ii
    dg0 = df[:, None, None] * ii
    d2g0 = np.zeros_like(g0)
    toy = Background.from_g0_jets(holo, g0, dg0, d2g0, label="toy")
    for kind in ("const", "linear"):
        c = np.full(m.ny, 0.3) if kind == "const" else 0.3 * m.y / m.y[-1]
        s = c[:, None, None, None, None] * sx
        print(f"  ny={m.ny} {kind}: {keyeq_check(toy, s):.3e}")

print("== pole_fit after triple fix ==")
m200 = make_mesh(0.02, 12.0, 200, 1.08)
for n, beta in ((2, 0.2), (3, 0.3)):
    bgn = model_background(m200, TiltParams(beta), n)
    fch = chern_fields(bgn.holo, MetricDeformation(bgn, np.zeros((n, n))))
    print(f"  n={n}: rel {pole_fit(fch)['rel']}")
adm = build_H0(OperPoint(2, 0.2, (0.5,)), 6)
bgc = adm.background(m200)
fch = chern_fields(bgc.holo, MetricDeformation(bgc, np.zeros((2, 2))))
print("  corrected q=0.5:", pole_fit(fch)["rel"])
