import json
import math

import numpy as np
import pytest

from nahmoper.fields import MetricDeformation, chern_fields, hat_moment_map, \
    model_background
from nahmoper.lie import TiltParams, casimir_apply, dag, principal_triple, \
    traceless
from nahmoper.mesh import make_mesh
from nahmoper.model import (
    AdmissibleMetric,
    OperPoint,
    build_H0,
    iterate_corrections,
    model_fields,
    model_metric,
    moment_series,
    oper_background,
    oper_local_frame,
    vanishing_order,
)
from nahmoper.residuals import commutator_residuals, gebe_residuals, \
    moment_from_coefficients, reduced_residuals
from nahmoper.series import YLogSeries


def small_mesh(y_min=0.02, y_max=4.0, count=40):
    return make_mesh(y_min, y_max, count, 1.25)


def fine_mesh():
    return make_mesh(0.001, 12.0, 160, 1.15)


def sup(a):
    return float(np.abs(a).max())


def spin_part(g, k, n):
    # spectral projector onto the spin-k piece by Lagrange interpolation
    trip = principal_triple(n)
    out = traceless(g.copy())
    for kk in range(1, n):
        if kk != k:
            out = (casimir_apply(out, trip) - kk * (kk + 1) * out) \
                / (k * (k + 1) - kk * (kk + 1))
    return out


def herm_seed(n, seed=5):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return traceless(0.5 * (h + dag(h)))


def test_model_field_profiles():
    mesh = small_mesh()
    f = model_fields(3, 0.3, mesh)
    y = mesh.y
    sb, cb = math.sin(0.3), math.cos(0.3)
    r2 = math.sqrt(2.0)
    assert np.allclose(f.A_z[:, 0, 0, 0, 1], r2 * sb / y, rtol=1e-14)
    assert np.allclose(f.A_z[:, 0, 0, 1, 2], r2 * sb / y, rtol=1e-14)
    assert sup(f.A_z[:, :, :, 1, 0]) == 0.0
    assert np.allclose(f.phi_z[:, 0, 0, 0, 1], r2 * cb / y, rtol=1e-14)
    assert np.allclose(f.phi_1[:, 0, 0, 0, 0], 1j * cb / y, rtol=1e-14)
    assert np.allclose(f.phi_1[:, 0, 0, 2, 2], -1j * cb / y, rtol=1e-14)
    assert sup(f.phi_1[:, :, :, 1, 1]) == 0.0
    assert sup(f.A_y) == 0.0
    # jets of the 1/y profiles
    assert np.allclose(f.dy_phi_z[:, 0, 0, 0, 1], -r2 * cb / y**2, rtol=1e-14)
    assert sup(f.dy_A_y) == 0.0


def test_model_residuals_vanish():
    for n in (2, 3, 4):
        for beta in (0.1, 0.3):
            f = model_fields(n, beta, small_mesh())
            for r in commutator_residuals(f):
                assert sup(r) < 1e-10
            for r in reduced_residuals(f):
                assert sup(r) < 1e-10
            for r in gebe_residuals(f).values():
                assert sup(r) < 1e-10
            assert sup(moment_from_coefficients(f)) < 1e-10


def test_model_matches_chern_frame():
    mesh = small_mesh()
    for n, beta in ((2, 0.12), (3, 0.3)):
        bg = model_background(mesh, TiltParams(beta), n)
        f_chern = chern_fields(bg.holo, MetricDeformation(bg, np.zeros((n, n))))
        f_mod = model_fields(n, beta, mesh)
        for a, b in ((f_chern.A_z, f_mod.A_z), (f_chern.phi_z, f_mod.phi_z),
                     (f_chern.A_y, f_mod.A_y), (f_chern.phi_1, f_mod.phi_1),
                     (f_chern.dy_A_z, f_mod.dy_A_z),
                     (f_chern.dy_phi_1, f_mod.dy_phi_1)):
            assert sup(a - b) * mesh.y.min() < 1e-12


def test_model_metric_profile():
    mesh = small_mesh()
    w = model_metric(2, 0.2, mesh)
    sb = math.sin(0.2)
    assert np.allclose(w[:, 0, 0], 1.0 / (mesh.y * sb), rtol=1e-14)
    assert np.allclose(w[:, 1, 1], mesh.y * sb, rtol=1e-14)
    assert sup(w[:, 0, 1]) == 0.0


def test_small_tilt_limit():
    mesh = small_mesh()
    f = model_fields(2, 1e-6, mesh)
    assert sup(f.A_z) * mesh.y.min() < 2e-6
    assert np.allclose(f.phi_z[:, 0, 0, 0, 1], 1.0 / mesh.y, rtol=1e-9)


def test_oper_frame_trivial():
    mesh = small_mesh()
    op = OperPoint(3, 0.25, (0.0, 0.0))
    holo = oper_local_frame(op, mesh)
    ep, _, _ = principal_triple(3)
    assert sup(holo.alpha - ep) == 0.0
    bg = oper_background(op, mesh)
    bg_mod = model_background(mesh, TiltParams(0.25), 3)
    assert sup(bg.m2 - bg_mod.m2) == 0.0


def test_oper_frame_bottom_rows():
    mesh = small_mesh()
    y = mesh.y
    m2 = oper_background(OperPoint(2, 0.2, (1.0,)), mesh).m2
    assert np.allclose(m2[:, 1, 0], y, rtol=1e-12)
    assert np.allclose(m2[:, 0, 1], 1.0 / (y * math.sin(0.2)), rtol=1e-12)

    q2, q3 = 0.3 - 0.2j, 0.7 + 0.1j
    m2 = oper_background(OperPoint(3, 0.22, (q2, q3)), mesh).m2
    sb = math.sin(0.22)
    assert np.allclose(m2[:, 2, 0], y**2 * q3, rtol=1e-12)
    assert np.allclose(m2[:, 2, 1], y * q2, rtol=1e-12)
    assert np.allclose(m2[:, 0, 1], math.sqrt(2.0) / (y * sb), rtol=1e-12)
    assert sup(m2[:, 0, 2]) == 0.0 and sup(m2[:, 1, 0]) == 0.0


def test_oper_frame_conjugation():
    # conjugating the constant coefficient by the diagonal cone gauge must
    # reproduce the stored profile
    mesh = small_mesh()
    op = OperPoint(3, 0.22, (0.3 - 0.2j, 0.7 + 0.1j))
    bg = oper_background(op, mesh)
    _, e0, _ = principal_triple(3)
    lam = np.diag(e0).real
    g = (mesh.y[:, None] * math.sin(0.22)) ** (-lam / 2.0)
    conj = g[:, :, None] * bg.holo.alpha[None] / g[:, None, :]
    assert sup(conj - bg.m2) < 1e-12 / mesh.y.min()


def test_build_trivial():
    mesh = small_mesh()
    op = OperPoint(3, 0.25, (0.0, 0.0))
    adm = build_H0(op, 3)
    assert adm.coeffs == {}
    assert adm.h_flat is None
    assert sup(adm.s_field(mesh)) == 0.0
    assert np.allclose(adm.metric(mesh), model_metric(3, 0.25, mesh),
                       rtol=1e-13, atol=0)


def test_build_n2_coefficients_frozen():
    op = OperPoint(2, 0.3, (0.8 - 0.3j,))
    qq = math.sin(0.3) ** 2 * abs(0.8 - 0.3j) ** 2
    e0 = np.diag([1.0, -1.0])

    assert build_H0(op, 1).coeffs == {}
    for order in (2, 3):
        coeffs = build_H0(op, order).coeffs
        assert set(coeffs) == {(4, 0)}
        assert sup(coeffs[(4, 0)] - (-qq / 10.0) * e0) < 1e-12
    coeffs = build_H0(op, 6).coeffs
    assert set(coeffs) == {(4, 0), (8, 0)}
    assert sup(coeffs[(8, 0)] - (-(qq ** 2) / 300.0) * e0) < 1e-12


def test_series_normal_shift():
    # linear response at the exact pole background: y^j v_k maps to
    # (k(k+1) - j(j-1)) y^{j-2} v_k, with the log ladder on resonant pairs
    op = OperPoint(3, 0.25, (0.0, 0.0))
    h = herm_seed(3)
    v1, v2 = spin_part(h, 1, 3), spin_part(h, 2, 3)

    om = moment_series(op, YLogSeries(3, {(4, 0): h}), cap=3)
    want = -10.0 * v1 - 6.0 * v2
    assert sup(om.by_power()[2][0] - want) < 1e-12

    s = YLogSeries(3, {(3, 0): v1, (3, 1): v2})
    om = moment_series(op, s, cap=2).by_power()
    assert sup(om[1][0] - (-4.0 * v1 - 5.0 * v2)) < 1e-12
    assert sup(om[1].get(1, np.zeros((3, 3)))) < 1e-12


def test_equivariance_diagonal_frame():
    tilt = TiltParams(0.2)
    ep, e0, em = principal_triple(3)
    from nahmoper.fields import oper_alpha
    alpha = oper_alpha(3, (0.4 + 0.2j, -0.6 + 0.5j), tilt)
    u = np.diag(np.exp(1j * np.array([0.7, -0.3, -0.4])))
    ud = dag(u)

    base = iterate_corrections(alpha, tilt, 3)
    conj = iterate_corrections(u @ alpha @ ud, tilt, 3,
                               triple=(u @ ep @ ud, e0, u @ em @ ud))
    assert set(base) == set(conj)
    for key, v in base.items():
        assert sup(conj[key] - u @ v @ ud) < 1e-10


def test_vanishing_order_synthetic():
    mesh = fine_mesh()
    e0 = np.diag([1.0, -1.0])
    prof = mesh.broadcast((mesh.y**3)[:, None, None] * e0)
    assert abs(vanishing_order(mesh, prof) - 3.0) < 0.05

    prof = mesh.broadcast((mesh.y**2 * np.log(mesh.y))[:, None, None] * e0)
    slope = vanishing_order(mesh, prof)
    assert 1.8 <= slope <= 2.0

    assert vanishing_order(mesh, np.zeros_like(prof)) == math.inf

    coarse = make_mesh(0.08, 4.0, 16, 1.3)
    with pytest.raises(ValueError):
        vanishing_order(coarse, np.zeros((16, 1, 1, 2, 2)))


def test_admissible_roundtrip():
    op = OperPoint(2, 0.3, (0.8 - 0.3j,))
    adm = build_H0(op, 4)
    blob = adm.to_json()
    keys = set(json.loads(blob)["coefficients"])
    assert keys == {"4,0"}
    back = AdmissibleMetric.from_json(blob)
    assert back.op == op and back.order == 4
    assert set(back.coeffs) == set(adm.coeffs)
    for key in adm.coeffs:
        assert sup(back.coeffs[key] - adm.coeffs[key]) < 1e-15
    assert sup(back.h_flat - adm.h_flat) < 1e-15
    assert abs(back.delta - adm.delta) < 1e-15
    assert back.window == adm.window
    y1, y2 = adm.window
    assert 0 < y1 and abs(y2 - 1.7 * y1) < 1e-12


def test_build_errors():
    op = OperPoint(2, 0.3, (1.0,))
    with pytest.raises(ValueError):
        build_H0(op, 7)
    with pytest.raises(ValueError):
        OperPoint(3, 0.3, (1.0,))
    with pytest.raises(ValueError):
        OperPoint(1, 0.3, ())
    with pytest.raises(ValueError):
        OperPoint(2, 0.0, (1.0,))


def zero_def(mesh, n):
    return np.zeros((mesh.ny, mesh.torus_size, mesh.torus_size, n, n))


def node_sup(arr):
    return np.abs(arr).reshape(arr.shape[0], -1).max(axis=1)


OP2 = OperPoint(2, 0.3, (1.5,))
OP3 = OperPoint(3, 0.2, (0.5, 0.8 - 0.4j))


def mid_mesh():
    return make_mesh(0.05, 12.0, 100, 1.12)


def test_build_vanishing_orders():
    # the corrected metric kills the moment map through order J; higher
    # orders can vanish too when parity skips them (n=2 has no odd terms)
    cases = [
        (OP2, 1, fine_mesh(), 0.1, 1.8, 2.3),
        (OP2, 2, mid_mesh(), 0.3, 5.5, 6.5),
        (OP2, 4, mid_mesh(), 0.3, 5.5, 6.5),
        (OP3, 1, fine_mesh(), 0.1, 1.8, 2.5),
        (OP3, 2, mid_mesh(), 0.3, 2.8, 3.3),
    ]
    for op, order, mesh, cut, lo, hi in cases:
        adm = build_H0(op, order)
        om = hat_moment_map(adm.background(mesh), zero_def(mesh, op.n))
        slope = vanishing_order(mesh, om, cut=cut)
        assert lo <= slope <= hi, (op.n, order, slope)
        assert slope >= order + 1 - 0.2


def test_normal_operator_fd_rates():
    # differencing the moment map around the exact cone recovers the
    # scalar action j(j-1) - k(k+1) on spin-k y^j bumps at second order
    # in h; boundary nodes use one-sided stencils, so measure interior
    n, eps = 3, 1e-5
    adm = build_H0(OperPoint(n, 0.25, (0.0, 0.0)), 0)
    trip = principal_triple(n)
    ep = trip[0]
    seeds = {1: np.diag([1.0, 0.0, -1.0]) + 0j,
             2: ep @ ep + dag(ep @ ep)}
    for (j, k) in [(5, 1), (5, 2), (6, 1)]:
        v = seeds[k] / np.abs(seeds[k]).max()
        assert sup(casimir_apply(v, trip) - k * (k + 1) * v) < 1e-12
        rel = []
        mesh = make_mesh(0.05, 4.0, 48, 1.1)
        for _ in range(2):
            bg = adm.background(mesh)
            prof = mesh.y[:, None, None, None, None]
            bump = prof ** j * v
            d = (hat_moment_map(bg, eps * bump)
                 - hat_moment_map(bg, -eps * bump)) / (2 * eps)
            want = (k * (k + 1) - j * (j - 1)) * prof ** (j - 2) * v
            rel.append(sup((d - want)[2:-2]) / sup(want))
            mesh = mesh.refine()
        assert rel[0] < 0.015, (j, k, rel)
        assert rel[0] / rel[1] > 3.2, (j, k, rel)


def test_pole_rates():
    # the corrected background approaches the model fields at the pole:
    # quadratically in the connection parts, quartically in phi_1
    mesh = fine_mesh()
    bg = build_H0(OP2, 2).background(mesh)
    f = chern_fields(bg.holo, MetricDeformation(bg, zero_def(mesh, 2)))
    mf = model_fields(2, 0.3, mesh)

    def rel_dev(name):
        scale = node_sup(getattr(mf, name))
        dev = node_sup(getattr(f, name) - getattr(mf, name))
        return dev / np.where(scale > 0, scale, 1.0)

    for name, cap, lo, hi in [("A_z", 1e-5, 1.7, 2.3),
                              ("phi_z", 1e-5, 1.7, 2.3),
                              ("phi_1", 1e-12, 3.5, 4.5)]:
        rel = rel_dev(name)
        assert rel[0] < cap, (name, rel[0])
        slope = np.polyfit(np.log(mesh.y[:6]), np.log(rel[:6]), 1)[0]
        assert lo <= slope <= hi, (name, slope)
    # the model A_y vanishes and the corrected one is exactly zero too
    assert sup(f.A_y[mesh.y < 0.1]) < 1e-15


def test_far_field_flat():
    # past the blend window the metric is the constant flat one and the
    # moment map drops to rounding level
    mesh = fine_mesh()
    for op, order in [(OP2, 2), (OP3, 2)]:
        adm = build_H0(op, order)
        assert abs(np.linalg.det(adm.h_flat) - 1.0) < 1e-12
        y2e = min(adm.window[1], 0.85 * mesh.y[-1])
        above = mesh.y >= y2e + 1e-9
        assert above.sum() >= 10
        h = adm.metric(mesh)
        rel = np.abs(h - adm.h_flat).max(axis=(1, 2)) / np.abs(adm.h_flat).max()
        assert rel[above].max() < 1e-12
        om = hat_moment_map(adm.background(mesh), zero_def(mesh, op.n))
        assert node_sup(om)[above].max() < 1e-10


def test_continuity_in_q():
    # the whole construction moves Lipschitz-continuously with the data
    mesh = make_mesh(0.02, 8.0, 60, 1.18)
    base = build_H0(OperPoint(2, 0.3, (0.5,)), 2).metric(mesh)
    for d in (1e-2, 1e-3):
        near = build_H0(OperPoint(2, 0.3, (0.5 + d,)), 2).metric(mesh)
        assert sup(near - base) <= 20.0 * d


def test_correction_structure():
    # constant data never feeds the resonant ladder at these ranks: every
    # stored coefficient is log-free with exponent between 2 and J + 2
    op4 = OperPoint(4, 0.15, (0.4, 0.3 - 0.2j, 0.25))
    expect = {
        (OP3, 2): {(2, 0), (4, 0)},
        (OP3, 6): {(2, 0), (4, 0), (5, 0), (6, 0), (7, 0), (8, 0)},
        (op4, 2): {(2, 0), (3, 0), (4, 0)},
        (op4, 3): {(2, 0), (3, 0), (4, 0), (5, 0)},
    }
    for (op, order), keys in expect.items():
        adm = build_H0(op, order)
        assert set(adm.coeffs) == keys
        assert all(l == 0 for (j, l) in adm.coeffs)
        assert all(2 <= j <= order + 2 for (j, l) in adm.coeffs)


def test_flat_gap_frozen():
    assert abs(build_H0(OP2, 2).delta - 1.2721126815) < 1e-9
    assert abs(build_H0(OP3, 2).delta - 1.09584) < 1e-5
