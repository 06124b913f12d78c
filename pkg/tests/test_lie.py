import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nahmoper.lie import (
    TiltParams,
    casimir_apply,
    casimir_spectrum,
    comm,
    dag,
    gamma_apply,
    herm_traceless_basis,
    indicial_roots,
    principal_triple,
    traceless,
    twist_gauge,
    v_apply,
)


def random_herm(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (a + a.conj().T)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_triple_brackets(n):
    ep, e0, em = principal_triple(n)
    assert np.allclose(comm(e0, ep), 2 * ep)
    assert np.allclose(comm(e0, em), -2 * em)
    assert np.allclose(comm(ep, em), e0)
    assert np.allclose(em, ep.T)
    # highest weight entry: sqrt(1*(n-1))
    assert ep[0, 1] == pytest.approx(np.sqrt(n - 1.0))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_casimir_on_triple(n):
    # e0, e+ span spin-1 pieces of the adjoint action: eigenvalue 1*2 = 2
    ep, e0, em = principal_triple(n)
    assert np.allclose(casimir_apply(e0), 2 * e0, atol=1e-12)
    assert np.allclose(casimir_apply(ep), 2 * ep, atol=1e-12)
    assert np.allclose(casimir_apply(em), 2 * em, atol=1e-12)


def test_casimir_spectrum_n2():
    assert np.allclose(casimir_spectrum(2), [2.0, 2.0, 2.0], atol=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_casimir_spectrum_multiplets(n):
    # spin-k piece appears once for k = 1..n-1, dimension 2k+1
    want = sorted(
        [k * (k + 1.0) for k in range(1, n) for _ in range(2 * k + 1)]
    )
    got = casimir_spectrum(n)
    assert len(got) == n * n - 1
    assert np.allclose(got, want, atol=1e-9)


def test_basis_orthonormal():
    for n in (2, 3, 4):
        b = herm_traceless_basis(n)
        gram = np.einsum("aij,bji->ab", b, b).real
        assert np.allclose(gram, np.eye(n * n - 1), atol=1e-12)
        assert np.allclose(b, dag(b), atol=1e-14)
        assert np.allclose(np.trace(b, axis1=1, axis2=2), 0, atol=1e-14)


@pytest.mark.parametrize(
    "n,want",
    [
        (2, [-1.0, 2.0]),
        (3, [-2.0, -1.0, 2.0, 3.0]),
        (4, [-3.0, -2.0, -1.0, 2.0, 3.0, 4.0]),
    ],
)
def test_indicial_roots(n, want):
    assert np.allclose(indicial_roots(n), want)


def test_indicial_roots_solve_quadratic():
    for n in (2, 3, 4, 6):
        for lam in indicial_roots(n):
            k = round(max(lam - 1, -lam))
            assert 1 <= k <= n - 1
            assert lam * (lam - 1) == pytest.approx(k * (k + 1))


def test_gamma_frozen_value():
    # s = diag(1,-1), x = e_plus: ad_s acts by +2, gamma factor (e^2-1)/2
    ep, e0, em = principal_triple(2)
    s = np.diag([1.0, -1.0]).astype(complex)
    got = gamma_apply(s, ep)
    assert np.allclose(got, 3.194528049465325 * ep, atol=1e-12)


def test_gamma_at_zero_is_identity():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert np.allclose(gamma_apply(np.zeros((3, 3)), x), x)
    assert np.allclose(v_apply(np.zeros((3, 3)), x), x)


@settings(deadline=None, max_examples=60)
@given(st.integers(0, 10**6), st.integers(2, 4))
def test_gamma_conjugation_identity(seed, n):
    rng = np.random.default_rng(seed)
    s = random_herm(rng, n)
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    lhs = expm(s) @ x @ expm(-s) - x
    rhs = comm(s, gamma_apply(s, x))
    assert np.allclose(lhs, rhs, atol=1e-8 * max(1.0, np.linalg.norm(lhs)))


@settings(deadline=None, max_examples=60)
@given(st.integers(0, 10**6), st.integers(2, 4))
def test_v_squares_to_gamma(seed, n):
    rng = np.random.default_rng(seed)
    s = random_herm(rng, n)
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    assert np.allclose(
        v_apply(s, v_apply(s, x)), gamma_apply(-s, x), atol=1e-10
    )


def test_v_rejects_non_hermitian():
    with pytest.raises(ValueError):
        v_apply(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))


def test_tilt_frozen_at_pi_over_12():
    tp = TiltParams(np.pi / 12)
    assert tp.t == pytest.approx(0.41421356237309503, abs=1e-14)
    assert tp.c_minus == pytest.approx(-1.0, abs=1e-13)
    assert tp.c_plus == pytest.approx(np.sqrt(2.0), abs=1e-13)
    assert tp.w == pytest.approx(np.tan(np.pi / 12), abs=1e-15)


@pytest.mark.parametrize("bad", [0.0, np.pi / 6, -np.pi / 6, 0.6, np.nan])
def test_tilt_rejects_bad_beta(bad):
    with pytest.raises(ValueError):
        TiltParams(bad)


@settings(deadline=None, max_examples=80)
@given(st.floats(-0.5, 0.5).filter(lambda b: abs(b) > 1e-3))
def test_tilt_constant_identities(beta):
    tp = TiltParams(beta)
    t = tp.t
    assert tp.c_minus == pytest.approx((t - 1.0 / t) / 2.0, abs=1e-12)
    assert tp.c_plus == pytest.approx((t + 1.0 / t) / 2.0, abs=1e-12)
    assert tp.c_plus**2 - tp.c_minus**2 == pytest.approx(1.0, abs=1e-11)


def test_twist_gauge_values():
    g = twist_gauge(4.0, 3)
    assert np.allclose(np.diag(g), [4.0, 1.0, 0.25])
    g2 = twist_gauge(4.0, 2)
    assert np.allclose(np.diag(g2), [2.0, 0.5])


def test_traceless_projection():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    ta = traceless(a)
    assert abs(np.trace(ta)) < 1e-13
    assert np.allclose(ta + np.trace(a) / 4 * np.eye(4), a)
