import numpy as np
import pytest

from nahmoper.mesh import make_mesh


def test_node_count_example():
    m = make_mesh(1e-3, 12.0, 200, 1.08, 1, 1.0)
    assert m.ny == 200
    # geometric-series count: ceil(ln(1/y_min)/ln(r)) = 90 intervals
    assert m.below_one == 90
    assert m.y[90] == 1.0
    assert m.y[0] == pytest.approx(1e-3)
    assert m.y[-1] == 12.0


def test_mesh_invariants():
    m = make_mesh(1e-3, 12.0, 200, 1.08)
    assert np.all(np.diff(m.y) > 0)
    rat = m.y[1:][m.y[:-1] < 1.0] / m.y[:-1][m.y[:-1] < 1.0]
    assert np.all(rat <= 1.08 + 1e-12)
    up = np.diff(m.y[m.y >= 1.0])
    assert np.allclose(up, up[0])  # uniform above 1


def test_mesh_rejects_bad_input():
    with pytest.raises(ValueError):
        make_mesh(1e-3, 0.5, 200)  # y_max < 1
    with pytest.raises(ValueError):
        make_mesh(1e-3, 12.0, 8)
    with pytest.raises(ValueError):
        make_mesh(1e-3, 12.0, 40, 1.08)  # too few nodes for grading
    with pytest.raises(ValueError):
        make_mesh(1e-3, 12.0, 200, 0.9)


def test_derivative_exact_on_quadratics():
    m = make_mesh(0.05, 5.0, 80, 1.25)
    f = 3.0 * m.y**2 - 2.0 * m.y + 1.0
    assert np.allclose(m.dy(f), 6.0 * m.y - 2.0, atol=1e-10)
    assert np.allclose(m.d2y(f), 6.0, atol=1e-8)


def test_derivative_second_order():
    m = make_mesh(1e-2, 5.0, 120, 1.1)
    errs = []
    for _ in range(3):
        f = np.exp(-m.y) * np.sin(2 * m.y)
        df = np.exp(-m.y) * (2 * np.cos(2 * m.y) - np.sin(2 * m.y))
        errs.append(np.max(np.abs(m.dy(f) - df)))
        m = m.refine()
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.35)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.35)


def test_trapezoid_second_order():
    m = make_mesh(1e-2, 5.0, 120, 1.1)
    exact = np.exp(-1e-2) - np.exp(-5.0)
    errs = []
    for _ in range(3):
        errs.append(abs(m.integrate_y(np.exp(-m.y)) - exact))
        m = m.refine()
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.35)


def test_integration_by_parts_y():
    # compactly supported bumps: boundary terms vanish, defect at least O(h^2)
    def bump(y, a, b):
        t = np.clip((y - a) / (b - a), 0, 1)
        return (t * (1 - t)) ** 4

    defects = []
    m = make_mesh(0.05, 5.0, 80, 1.25)
    for _ in range(3):
        f = bump(m.y, 0.5, 3.0)
        g = bump(m.y, 1.0, 4.0)
        defects.append(abs(m.integrate_y(m.dy(f) * g + f * m.dy(g))))
        m = m.refine()
    assert defects[0] / defects[1] > 3.0
    assert defects[1] / defects[2] > 3.0
    assert defects[-1] < 1e-11


def test_torus_invariant_mode_stencils_vanish():
    m = make_mesh(0.05, 5.0, 40, 1.3, torus_size=1)
    rng = np.random.default_rng(3)
    f = rng.standard_normal((m.ny, 1, 1, 2, 2)) + 0j
    assert np.linalg.norm(m.dz(f)) == 0.0
    assert np.linalg.norm(m.dzbar(f)) == 0.0


def test_torus_derivative_plane_wave():
    N, L = 8, 1.0
    m = make_mesh(0.05, 5.0, 24, 1.4, torus_size=N, period=L)
    u, v = m.torus_coords()
    h = L / N
    k = 2 * np.pi / L
    wave = np.exp(1j * k * u)[None, :, None, None, None] * np.ones((m.ny, N, N, 1, 1))
    got = m.dz(wave)
    # central difference of e^{iku}: eigenvalue i sin(kh)/h, split by dz = (du - i dv)/2
    want = 0.5j * np.sin(k * h) / h * wave
    assert np.allclose(got, want, atol=1e-12)


def test_torus_integration_by_parts_exact():
    N = 6
    m = make_mesh(0.05, 5.0, 24, 1.4, torus_size=N, period=1.0)
    rng = np.random.default_rng(11)
    f = rng.standard_normal((m.ny, N, N, 2, 2)) + 1j * rng.standard_normal((m.ny, N, N, 2, 2))
    g = rng.standard_normal((m.ny, N, N, 2, 2)) + 1j * rng.standard_normal((m.ny, N, N, 2, 2))
    # flat-sum pairing over the torus: central differences are exactly antisymmetric
    s = np.einsum("yabij,yabij->", m.dz(f), g) + np.einsum("yabij,yabij->", f, m.dz(g))
    assert abs(s) < 1e-10 * np.linalg.norm(f) * np.linalg.norm(g)


def test_refine_halves_intervals():
    m = make_mesh(0.05, 5.0, 40, 1.3)
    r = m.refine()
    assert r.ny == 2 * m.ny - 1
    assert np.allclose(r.y[0::2], m.y)
    assert np.allclose(np.diff(r.y)[0::2], np.diff(m.y) / 2)
