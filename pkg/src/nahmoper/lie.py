"""Principal sl(2) triple, Casimir operator, tilt constants, ad-function transforms.

Everything here is plain finite-dimensional matrix algebra over numpy; no mesh,
no fields.  Conventions: e0 = diag(n-1, n-3, ..., 1-n), e_plus has superdiagonal
sqrt(i(n-i)), e_minus = e_plus^T, so [e0, e+-] = +-2 e+-, [e+, e-] = e0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray


def comm(a: Array, b: Array) -> Array:
    return a @ b - b @ a


def dag(a: Array) -> Array:
    return a.conj().swapaxes(-1, -2)


def traceless(a: Array) -> Array:
    n = a.shape[-1]
    tr = np.trace(a, axis1=-2, axis2=-1)
    return a - tr[..., None, None] * np.eye(n) / n


def principal_triple(n: int) -> tuple[Array, Array, Array]:
    """Return (e_plus, e_zero, e_minus) for the n-dimensional irreducible rep."""
    if n < 2:
        raise ValueError("need n >= 2")
    e0 = np.diag(np.arange(n - 1, -n, -2)).astype(complex)
    sup = np.sqrt(np.array([i * (n - i) for i in range(1, n)], dtype=float))
    ep = np.diag(sup, 1).astype(complex)
    em = ep.T.copy()
    return ep, e0, em


def casimir_apply(s: Array, triple: tuple[Array, Array, Array] | None = None) -> Array:
    """Quadratic Casimir of the principal triple acting on a matrix.

    0.5*([e+,[e-,s]] + [e-,[e+,s]]) + 0.25*[e0,[e0,s]].  Eigenvalue k(k+1) on
    the spin-k isotypic piece of the adjoint action.
    """
    ep, e0, em = triple if triple is not None else principal_triple(s.shape[-1])
    return (0.5 * (comm(ep, comm(em, s)) + comm(em, comm(ep, s)))
            + 0.25 * comm(e0, comm(e0, s)))


def herm_traceless_basis(n: int) -> Array:
    """Orthonormal basis (w.r.t. Re tr(a b)) of traceless Hermitian n x n matrices.

    Shape (n*n - 1, n, n).  Off-diagonal pairs first, then the n-1 diagonal
    generators diag(1,..,1,-k,0,..)/sqrt(k(k+1)).
    """
    mats = []
    for i in range(n):
        for j in range(i + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[i, j] = m[j, i] = 1.0 / np.sqrt(2.0)
            mats.append(m)
            m = np.zeros((n, n), dtype=complex)
            m[i, j] = -1j / np.sqrt(2.0)
            m[j, i] = 1j / np.sqrt(2.0)
            mats.append(m)
    for k in range(1, n):
        d = np.zeros(n)
        d[:k] = 1.0
        d[k] = -float(k)
        mats.append((np.diag(d) / np.sqrt(k * (k + 1.0))).astype(complex))
    return np.array(mats)


def casimir_matrix(n: int) -> Array:
    """Casimir as a real symmetric matrix on the Hermitian traceless basis."""
    basis = herm_traceless_basis(n)
    trip = principal_triple(n)
    cols = np.array([casimir_apply(b, trip) for b in basis])
    m = np.einsum("aij,bji->ab", basis, cols).real
    return 0.5 * (m + m.T)  # symmetrize away roundoff


def casimir_spectrum(n: int) -> Array:
    return np.linalg.eigvalsh(casimir_matrix(n))


def indicial_roots(n: int) -> Array:
    """Solutions of lam(lam - 1) = k(k+1), k = 1..n-1: {-(n-1)..-1} u {2..n}."""
    roots: set[float] = set()
    for k in range(1, n):
        roots.add(float(k + 1))
        roots.add(float(-k))
    return np.array(sorted(roots))


def _ad_fn_apply(f, s: Array, x: Array) -> Array:
    # f(ad_s) x for Hermitian s: in the eigenbasis of s, ad_s scales entry
    # (i,j) by lam_i - lam_j, so apply f entrywise to that difference table.
    hnorm = np.linalg.norm(s - dag(s))
    if hnorm > 1e-10 * max(1.0, np.linalg.norm(s)):
        raise ValueError("ad-function transform needs a Hermitian argument")
    lam, u = np.linalg.eigh(0.5 * (s + dag(s)))
    xt = dag(u) @ x @ u
    return u @ (f(lam[..., :, None] - lam[..., None, :]) * xt) @ dag(u)


def _f_gamma(t: Array) -> Array:
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    nz = t != 0.0
    out[nz] = np.expm1(t[nz]) / t[nz]
    return out


def _f_v(t: Array) -> Array:
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    nz = t != 0.0
    out[nz] = -np.expm1(-t[nz]) / t[nz]
    return np.sqrt(out)


def gamma_apply(s: Array, x: Array) -> Array:
    """Apply gamma(ad_s) = (exp(ad_s) - 1)/ad_s to x, for Hermitian s.

    Satisfies exp(s) x exp(-s) - x = [s, gamma_apply(s, x)].
    """
    return _ad_fn_apply(_f_gamma, s, x)


def v_apply(s: Array, x: Array) -> Array:
    """Apply v(ad_s) = sqrt((1 - exp(-ad_s))/ad_s) to x, for Hermitian s.

    v is the symmetric square root in v_apply(s, v_apply(s, x)) ==
    gamma_apply(-s, x); it converts metric-frame pairings to unitary-frame ones.
    """
    return _ad_fn_apply(_f_v, s, x)


@dataclass(frozen=True)
class TiltParams:
    """Tilt angle beta with its derived constants.

    beta must satisfy 0 < |beta| < pi/6; the chain degenerates at beta = 0 and
    the derived constants blow up at |beta| = pi/6.
    """

    beta: float

    def __post_init__(self):
        b = float(self.beta)
        if not np.isfinite(b) or b == 0.0 or not abs(b) < np.pi / 6:
            raise ValueError("beta must lie in (-pi/6, pi/6), beta != 0")

    @property
    def w(self) -> float:
        # twist parameter of the complex structure the solutions are
        # holomorphic for
        return float(np.tan(self.beta))

    @property
    def t(self) -> float:
        return float(np.tan(np.pi / 4 - 1.5 * self.beta))

    @property
    def c_minus(self) -> float:
        # equals (t - 1/t)/2
        return float(-np.tan(3.0 * self.beta))

    @property
    def c_plus(self) -> float:
        # equals (t + 1/t)/2
        return float(1.0 / np.cos(3.0 * self.beta))

    @property
    def sin_b(self) -> float:
        return float(np.sin(self.beta))

    @property
    def cos_b(self) -> float:
        return float(np.cos(self.beta))

    @property
    def tan_b(self) -> float:
        return float(np.tan(self.beta))


def twist_gauge(w: complex, n: int) -> Array:
    """diag(w^{(n-1)/2}, ..., w^{-(n-1)/2}), the rescaling that absorbs a twist.

    Half-integer powers use the principal branch, so the result is complex for
    negative w.
    """
    expo = (n - 1 - 2.0 * np.arange(n)) / 2.0
    return np.diag(np.power(complex(w), expo))
