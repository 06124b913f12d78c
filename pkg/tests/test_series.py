import numpy as np
import pytest
from scipy.linalg import expm, logm

from nahmoper.lie import principal_triple
from nahmoper.series import (
    YLogSeries,
    dexp_herm,
    expm_jet2,
    linop_to_matrix,
    logm_jet2,
)


def rand_mat(rng, n):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def test_series_product_and_derivative():
    rng = np.random.default_rng(0)
    a, b = rand_mat(rng, 2), rand_mat(rng, 2)
    s = YLogSeries(2).add_term(1, 0, a).add_term(2, 1, b)
    t = YLogSeries(2).add_term(-1, 0, np.eye(2))
    y = np.array([0.3, 0.7, 1.5])
    ln = np.log(y)
    want = (y**0 * 1)[:, None, None] * a + (y * ln)[:, None, None] * b
    assert np.allclose(s.mat(t).evaluate(y), want)
    # termwise derivative vs finite differences
    h = 1e-6
    num = (s.evaluate(y + h) - s.evaluate(y - h)) / (2 * h)
    assert np.allclose(s.dy().evaluate(y), num, atol=1e-6)


def test_series_wconj_matches_dense():
    rng = np.random.default_rng(1)
    n, sinb = 3, 0.35
    m = rand_mat(rng, n)
    s = YLogSeries(n).add_term(2, 0, m)
    _, e0, _ = principal_triple(n)
    y = np.array([0.2, 0.9])
    for yy, val in zip(y, s.wconj(-2, sinb).evaluate(y)):
        w = np.diag((yy * sinb) ** (-np.diag(e0).real))
        assert np.allclose(val, np.linalg.inv(w) @ (yy**2 * m) @ w, atol=1e-12)


def test_series_star_w_is_w_hermitian_conjugate():
    rng = np.random.default_rng(2)
    n, sinb = 2, 0.4
    m = rand_mat(rng, n)
    s = YLogSeries(n).add_term(3, 0, m)
    _, e0, _ = principal_triple(n)
    y = 0.37
    w = np.diag((y * sinb) ** (-np.diag(e0).real))
    # H-metric adjoint with H=W: s* = W^{-1} s^dagger W
    want = np.linalg.inv(w) @ (y**3 * m).conj().T @ w
    got = s.star_w(sinb).evaluate(np.array([y]))[0]
    assert np.allclose(got, want, atol=1e-12)


def test_series_exp_matches_expm():
    rng = np.random.default_rng(3)
    n = 2
    m = rand_mat(rng, n)
    m = 0.5 * (m + m.conj().T)
    s = YLogSeries(n).add_term(2, 0, m)  # hat orders 1..3, all positive
    y = 0.05
    got = s.exp(cap=14).evaluate(np.array([y]))[0]
    want = expm(y**2 * m)
    assert np.allclose(got, want, atol=1e-13)


def test_truncate_hat_and_min_hat():
    n = 3
    ep, e0, em = principal_triple(n)
    s = YLogSeries(n).add_term(0, 0, ep) + YLogSeries(n).add_term(2, 0, e0)
    assert s.min_hat() == -1  # superdiagonal at y^0
    t = s.truncate_hat(1)
    assert t.min_hat() == -1
    assert (2, 0) not in t.terms  # diagonal at y^2 has hat order 2


def test_linop_to_matrix_roundtrip():
    rng = np.random.default_rng(4)
    n = 2
    a = rand_mat(rng, n)

    def fun(v):
        return a @ v - v @ a

    m = linop_to_matrix(fun, n)
    v = rand_mat(rng, n)
    assert np.allclose(m @ v.reshape(-1), fun(v).reshape(-1), atol=1e-12)


def test_expm_jet2_against_finite_differences():
    rng = np.random.default_rng(5)
    n = 3
    a, b, c = rand_mat(rng, n), rand_mat(rng, n), rand_mat(rng, n)

    def curve(t):
        return a + t * b + 0.5 * t**2 * c

    t0, h = 0.3, 1e-5
    f, f1, f2 = expm_jet2(curve(t0), b + t0 * c, c)
    num1 = (expm(curve(t0 + h)) - expm(curve(t0 - h))) / (2 * h)
    num2 = (expm(curve(t0 + h)) - 2 * expm(curve(t0)) + expm(curve(t0 - h))) / h**2
    assert np.allclose(f, expm(curve(t0)), atol=1e-12)
    assert np.allclose(f1, num1, atol=1e-8)
    assert np.allclose(f2, num2, atol=1e-4)


def test_logm_jet2_inverts_expm_jet2():
    rng = np.random.default_rng(6)
    n = 2
    a = 0.3 * rand_mat(rng, n)
    a = 0.5 * (a + a.conj().T)
    b = 0.2 * rand_mat(rng, n)
    b = 0.5 * (b + b.conj().T)
    p, p1, p2 = expm_jet2(a, b, 0.1 * np.eye(n))
    m, m1, m2 = logm_jet2(p, p1, p2)
    assert np.allclose(m, a, atol=1e-11)
    assert np.allclose(m1, b, atol=1e-10)
    assert np.allclose(m2, 0.1 * np.eye(n), atol=1e-9)


@pytest.mark.parametrize("n", [2, 3])
def test_dexp_herm_matches_expm_frechet(n):
    rng = np.random.default_rng(7)
    s = rand_mat(rng, n)
    s = 0.5 * (s + s.conj().T)
    e = rand_mat(rng, n)
    h = 1e-7
    num = (expm(s + h * e) - expm(s - h * e)) / (2 * h)
    assert np.allclose(dexp_herm(s, e), num, atol=1e-6)


def test_dexp_herm_batched():
    rng = np.random.default_rng(8)
    s = rng.standard_normal((5, 2, 2))
    s = 0.5 * (s + np.swapaxes(s, -1, -2)) + 0j
    e = rng.standard_normal((5, 2, 2)) + 1j * rng.standard_normal((5, 2, 2))
    got = dexp_herm(s, e)
    for i in range(5):
        assert np.allclose(got[i], dexp_herm(s[i], e[i]), atol=1e-12)
