"""Constant-mode Hitchin layer on the flat torus.

All sections are constant, so holomorphic data, flat connections and Hermitian
metrics are plain matrices and the PDEs collapse to matrix equations.  The
metric solves minimize the norm-square functional

    M(H) = sum_i w_i ||g M_i g^{-1}||_F^2,   H = g^dag g,

whose critical points make every conjugated coefficient matrix normal.  Since
valid constant data always commutes, the solution set is a small valley; the
representative returned is the one minimizing ||log H||_F on that valley.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .lie import TiltParams, comm, dag, herm_traceless_basis, traceless

__all__ = [
    "HiggsData",
    "FlatPair",
    "ReducibleDataError",
    "metric_adjoint",
    "hitchin_section_higgs",
    "hitchin_fibration",
    "q_from_p",
    "solve_hitchin_constant",
    "solve_twisted_hitchin",
    "twist_untwist",
    "is_irreducible",
    "hyperkahler_Iw",
    "boundary_metric",
    "norm_square_functional",
    "functional_second_derivative",
]


class ReducibleDataError(RuntimeError):
    """Metric solve stalled; the data has no semisimple closure.

    Carries ``certificate``, an (n, k) orthonormal basis of a proper common
    invariant subspace of the input matrices (None if certification failed).
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


def metric_adjoint(a, H=None):
    """Adjoint of a coefficient matrix with respect to the metric H."""
    if H is None:
        return dag(a)
    return np.linalg.solve(H, dag(a) @ H)


def _scale(*mats):
    return max(1.0, *(float(np.linalg.norm(m)) for m in mats))


@dataclass
class HiggsData:
    """Constant holomorphic data: dbar-coefficient alpha0 and Higgs field phi."""

    n: int
    alpha0: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.alpha0 = np.asarray(self.alpha0, dtype=complex)
        self.phi = np.asarray(self.phi, dtype=complex)
        n = self.n
        if self.alpha0.shape != (n, n) or self.phi.shape != (n, n):
            raise ValueError("alpha0 and phi must be n x n")
        s = _scale(self.alpha0, self.phi)
        if abs(np.trace(self.phi)) > 1e-12 * s:
            raise ValueError("phi must be traceless")
        # constant-mode holomorphicity: dbar phi = [alpha0, phi] = 0
        if np.linalg.norm(comm(self.alpha0, self.phi)) > 1e-12 * s * s:
            raise ValueError("phi is not holomorphic for alpha0")


@dataclass
class FlatPair:
    """Coefficients of the dzbar / dz parts of a twisted connection.

    Flatness ||[P1, P2]|| = 0 is not enforced at construction (the twisting
    maps are algebraic and accept arbitrary data); the metric solver checks it.
    """

    P1: np.ndarray
    P2: np.ndarray
    w: complex

    def __post_init__(self):
        self.P1 = np.asarray(self.P1, dtype=complex)
        self.P2 = np.asarray(self.P2, dtype=complex)
        if self.P1.shape != self.P2.shape or self.P1.ndim != 2:
            raise ValueError("P1 and P2 must be square matrices of equal size")
        if self.w == 0:
            raise ValueError("twist parameter w must be nonzero")

    def flatness_defect(self):
        return float(np.linalg.norm(comm(self.P1, self.P2)))


def hitchin_section_higgs(n, q):
    """Section Higgs field: sqrt(B_i) superdiagonal, (q_n ... q_2 0) bottom row."""
    q = list(q)
    if len(q) != n - 1:
        raise ValueError(f"need n-1 = {n - 1} coefficients, got {len(q)}")
    phi = np.zeros((n, n), dtype=complex)
    for i in range(1, n):
        phi[i - 1, i] = np.sqrt(i * (n - i))
    for k, qk in enumerate(q, start=2):
        # q_k sits in column n - k + 1 (1-based) of the bottom row
        phi[n - 1, n - k] = qk
    return HiggsData(n=n, alpha0=np.zeros((n, n), dtype=complex), phi=phi)


def hitchin_fibration(phi):
    """Characteristic coefficients p_j with det(lam - phi) = sum lam^{n-j} (-1)^j p_j."""
    phi = np.asarray(phi, dtype=complex)
    n = phi.shape[0]
    if abs(np.trace(phi)) > 1e-10 * _scale(phi):
        raise ValueError("phi must be traceless")
    cp = np.poly(phi)
    return tuple((-1) ** j * cp[j] for j in range(2, n + 1))


def _gamma_weight(n, j):
    # product of the superdiagonal entries a bottom-row cycle of length j crosses
    return float(np.prod([np.sqrt(i * (n - i)) for i in range(n - j + 1, n)]))


def q_from_p(n, p):
    """Invert the fibration on the section: exact, one power per coefficient."""
    p = list(p)
    if len(p) != n - 1:
        raise ValueError(f"need n-1 = {n - 1} coefficients, got {len(p)}")
    return tuple(
        (-1) ** (j + 1) * pj / _gamma_weight(n, j) for j, pj in enumerate(p, start=2)
    )


def twist_untwist(data, H, w=None, direction="forward"):
    """Convert between holomorphic Higgs data and the scalar-twisted flat pair.

    forward:  (alpha0, phi) -> P1 = alpha0 + w phi^{*H},  P2 = -alpha0^{*H} + phi / w
    backward: (P1, P2) -> alpha0 = (P1 - |w|^2 P2^{*H}) / (1 + |w|^2),
                          phi = w (P2 + P1^{*H}) / (1 + |w|^2)
    The two maps are exact inverses for any metric H.
    """
    if direction == "forward":
        if not isinstance(data, HiggsData):
            raise TypeError("forward direction expects HiggsData")
        if w is None:
            raise ValueError("forward direction needs the twist parameter w")
        if w == 0:
            raise ValueError("twist parameter w must be nonzero")
        P1 = data.alpha0 + w * metric_adjoint(data.phi, H)
        P2 = -metric_adjoint(data.alpha0, H) + data.phi / w
        return FlatPair(P1=P1, P2=P2, w=w)
    if direction == "backward":
        if not isinstance(data, FlatPair):
            raise TypeError("backward direction expects FlatPair")
        w = data.w if w is None else w
        if w == 0:
            raise ValueError("twist parameter w must be nonzero")
        ww = abs(w) ** 2
        alpha0 = (data.P1 - ww * metric_adjoint(data.P2, H)) / (1 + ww)
        phi = w * (data.P2 + metric_adjoint(data.P1, H)) / (1 + ww)
        n = data.P1.shape[0]
        return HiggsData(n=n, alpha0=alpha0, phi=traceless(phi))
    raise ValueError(f"unknown direction {direction!r}")


def _expmh(x):
    lam, v = np.linalg.eigh(x)
    return (v * np.exp(lam)) @ dag(v)


def _logmh(H):
    lam, v = np.linalg.eigh(H)
    if lam[0] <= 0:
        raise ValueError("metric is not positive definite")
    return (v * np.log(lam)) @ dag(v)


def _residual(tmats, weights):
    out = 0.0
    for wgt, m in zip(weights, tmats):
        out = out + wgt * comm(m, dag(m))
    return out


def _line_value(tmats, weights, s, t):
    # functional along the geodesic g -> e^{ts/2} g, exact via the eigenbasis of s
    lam, v = np.linalg.eigh(s)
    gain = np.exp(0.5 * t * (lam[:, None] - lam[None, :]))
    tot = 0.0
    for wgt, m in zip(weights, tmats):
        tot += wgt * float(np.linalg.norm(gain * (dag(v) @ m @ v)) ** 2)
    return tot


def _matrix_algebra(mats):
    """Orthonormal basis of the unital algebra generated by mats."""
    n = mats[0].shape[0]
    basis = []

    def absorb(cands):
        nonlocal basis
        grew = False
        for c in cands:
            v = c.ravel().copy()
            for b in basis:
                v -= np.vdot(b, v) * b
            nr = np.linalg.norm(v)
            if nr > 1e-10 * max(1.0, np.linalg.norm(c)):
                basis.append(v / nr)
                grew = True
        return grew

    absorb([np.eye(n, dtype=complex)] + [np.asarray(m, complex) for m in mats])
    while len(basis) < n * n:
        prods = []
        for b in basis:
            bm = b.reshape(n, n)
            for m in mats:
                prods.append(bm @ m)
        if not absorb(prods):
            break
    return [b.reshape(n, n) for b in basis]


def _krylov_span(mats, v, alg):
    n = v.shape[0]
    cols = [b @ v for b in alg]
    u, sv, _ = np.linalg.svd(np.column_stack(cols), full_matrices=False)
    rank = int(np.sum(sv > 1e-9 * max(sv[0], 1.0)))
    if rank < n:
        return u[:, :rank]
    return None


def _invariant_subspace(mats):
    """Orthonormal basis of a proper common invariant subspace, or None."""
    mats = [np.asarray(m, complex) for m in mats]
    alg = _matrix_algebra(mats)
    rng = np.random.default_rng(0)
    candidates = list(mats)
    for _ in range(4):
        coef = rng.normal(size=len(alg))
        candidates.append(sum(c * b for c, b in zip(coef, alg)))
    for r in candidates:
        if np.linalg.norm(r) == 0:
            continue
        _, vecs = np.linalg.eig(r)
        for k in range(vecs.shape[1]):
            span = _krylov_span(mats, vecs[:, k], alg)
            if span is not None:
                return span
    return None


def is_irreducible(mats):
    """(flag, certificate): flag True iff no proper common invariant subspace.

    The certificate for reducible input is an orthonormal basis of one such
    subspace, found by scanning eigenvectors of algebra elements and closing
    them up under the generated algebra.
    """
    mats = [np.asarray(m, complex) for m in mats]
    if not mats:
        raise ValueError("need at least one matrix")
    n = mats[0].shape[0]
    if len(_matrix_algebra(mats)) == n * n:
        return True, None
    cert = _invariant_subspace(mats)
    if cert is None:
        raise RuntimeError("reducible input but no invariant subspace certified")
    return False, cert


def _normal_metric_solve(mats, weights, guess=None, tol=1e-13, max_iter=400,
                         walk=True):
    """Damped Newton for the balanced metric, then a valley walk.

    Returns the positive Hermitian H with det H = 1 minimizing ||log H||_F
    among the metrics that make every g M_i g^{-1} normal.  Raises
    ReducibleDataError when the iteration stalls or the metric diverges.
    """
    mats = [np.asarray(m, complex) for m in mats]
    n = mats[0].shape[0]
    basis = herm_traceless_basis(n)
    if guess is None:
        g = np.eye(n, dtype=complex)
    else:
        lam, v = np.linalg.eigh(np.asarray(guess, complex))
        if lam[0] <= 0:
            raise ValueError("guess metric is not positive definite")
        g = (v * np.sqrt(lam)) @ dag(v)
        g = g / np.linalg.det(g) ** (1.0 / n)
    tmats = [g @ m @ np.linalg.inv(g) for m in mats]
    scale = max(1.0, sum(w * np.linalg.norm(m) ** 2 for w, m in zip(weights, mats)))

    def fail(msg):
        raise ReducibleDataError(msg, certificate=_invariant_subspace(mats))

    # the balanced metric exists iff the module is completely reducible,
    # i.e. the generated algebra is semisimple: trace form nondegenerate
    alg = _matrix_algebra(mats)
    tform = np.array([[np.trace(a @ b) for b in alg] for a in alg])
    sv = np.linalg.svd(tform, compute_uv=False)
    if sv[-1] <= 1e-10 * max(1.0, sv[0]):
        fail("generated algebra has a radical, no balanced metric")

    def hessian():
        lmat = np.empty((len(basis), len(basis)))
        imgs = []
        for b in basis:
            img = 0.0
            for wgt, m in zip(weights, tmats):
                img = img + wgt * comm(m, comm(dag(m), b))
            imgs.append(img)
        for i, bi in enumerate(basis):
            for j in range(len(basis)):
                lmat[i, j] = np.trace(bi @ imgs[j]).real
        lmat = 0.5 * (lmat + lmat.T)
        lam, q = np.linalg.eigh(lmat)
        kernel = [
            sum(q[a, k] * basis[a] for a in range(len(basis)))
            for k in range(len(basis))
            if lam[k] <= max(lam[-1] * 1e-10, 1e-14)
        ]
        return lam, q, kernel

    walked = False
    it = 0
    while True:
        xi = _residual(tmats, weights)
        res = np.linalg.norm(xi)
        if res <= tol * scale:
            if walk and not walked:
                walked = True
                moved = _valley_walk(g, tmats, hessian()[2])
                if moved is not None:
                    g, tmats = moved
                    continue
            break
        it += 1
        if it > max_iter:
            fail("metric iteration did not converge")
        lam, q, _ = hessian()
        xivec = np.array([np.trace(b @ xi).real for b in basis])
        # damped step: keeps near-kernel curvature from blowing up the update
        mu = np.linalg.norm(xivec)
        coef = q @ (-(q.T @ xivec) / (np.clip(lam, 0.0, None) + mu))
        s = sum(c * b for c, b in zip(coef, basis))
        slope = float(np.sum(coef * xivec))
        m0 = sum(w * np.linalg.norm(m) ** 2 for w, m in zip(weights, tmats))
        t = 1.0
        if abs(slope) > 1e-12 * max(m0, 1.0):
            while t > 2.0 ** -40:
                if _line_value(tmats, weights, s, t) <= m0 + 0.25 * t * slope:
                    break
                t *= 0.5
            else:
                fail("line search stalled")
        # else: the predicted decrease sits below the fp noise of the
        # functional; the damped step is tiny, take it unverified
        step = _expmh(0.5 * t * s)
        stepi = _expmh(-0.5 * t * s)
        g = step @ g
        tmats = [step @ m @ stepi for m in tmats]
        if np.linalg.norm(_logmh(dag(g) @ g)) > 40.0:
            fail("metric diverged")
    H = dag(g) @ g
    H = 0.5 * (H + dag(H))
    H = H / np.linalg.det(H).real ** (1.0 / n)
    return H


def _valley_walk(g, tmats, kernel):
    """Minimize ||log H||_F along the exact residual-preserving directions."""
    if not kernel:
        return None
    d = len(kernel)

    def objective(theta):
        s = sum(t * k for t, k in zip(theta, kernel))
        e = _expmh(0.5 * s)
        return np.linalg.norm(_logmh(dag(g) @ e @ e @ g)) ** 2

    res = minimize(
        objective,
        np.zeros(d),
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000 * d,
                 "maxfev": 4000 * d},
    )
    if np.linalg.norm(res.x) < 1e-13:
        return None
    s = sum(t * k for t, k in zip(res.x, kernel))
    step = _expmh(0.5 * s)
    stepi = _expmh(-0.5 * s)
    return step @ g, [step @ m @ stepi for m in tmats]


def solve_hitchin_constant(data, guess=None, tol=1e-13):
    """Metric making the curvature-plus-Higgs bracket vanish, det H = 1."""
    return _normal_metric_solve([data.alpha0, data.phi], [1.0, 1.0],
                                guess=guess, tol=tol)


def solve_twisted_hitchin(pair, w=None, guess=None, tol=1e-13):
    """Metric solving the scalar-twisted system for a flat coefficient pair."""
    w = pair.w if w is None else w
    if w == 0:
        raise ValueError("twist parameter w must be nonzero")
    s = _scale(pair.P1, pair.P2)
    if pair.flatness_defect() > 1e-10 * s * s:
        raise ValueError("pair is not flat")
    return _normal_metric_solve([pair.P1, pair.P2], [1.0, abs(w) ** 2],
                                guess=guess, tol=tol)


def norm_square_functional(mats, weights, H):
    """sum_i w_i ||H^{1/2} M_i H^{-1/2}||_F^2, the potential for the solves."""
    tot = 0.0
    for wgt, m in zip(weights, mats):
        tot += wgt * np.trace(m @ np.linalg.solve(H, dag(m)) @ H).real
    return float(tot)


def functional_second_derivative(mats, weights, H, s):
    """d^2/dt^2 of the functional along H_t = H^{1/2} e^{ts} H^{1/2} at t = 0."""
    lam, v = np.linalg.eigh(np.asarray(H, complex))
    rt = (v * np.sqrt(lam)) @ dag(v)
    rti = (v / np.sqrt(lam)) @ dag(v)
    tot = 0.0
    for wgt, m in zip(weights, mats):
        tot += wgt * np.linalg.norm(comm(rt @ m @ rti, s)) ** 2
    return float(tot)


def hyperkahler_Iw(w, a, b, H=None):
    """Action of the twisted complex structure on a tangent pair (a, b).

    Built from I(a,b) = (ia, ib), J(a,b) = (i b*, -i a*), K(a,b) = (-b*, a*),
    where * is the H-adjoint; the slots swap because the adjoint exchanges the
    two form types.  Satisfies I_w^2 = -identity for every w.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d = 1.0 + abs(w) ** 2
    x = (1.0 - abs(w) ** 2) / d
    y = (1j * (w - np.conj(w))).real / d
    z = (w + np.conj(w)).real / d
    astar = metric_adjoint(a, H)
    bstar = metric_adjoint(b, H)
    return (
        x * 1j * a + y * 1j * bstar - z * bstar,
        x * 1j * b - y * 1j * astar + z * astar,
    )


def boundary_metric(oper, beta):
    """Far-field metric: twisted solve on the constant connection slice.

    ``oper`` is either the constant dz-coefficient matrix or an object with an
    ``alpha`` attribute holding it.  An all-zero section (nilpotent slice) has
    no balanced metric; the identity hat metric of the exact pole solution is
    returned for it instead.
    """
    alpha = np.asarray(getattr(oper, "alpha", oper), dtype=complex)
    n = alpha.shape[0]
    tilt = TiltParams(beta)
    nil = np.linalg.norm(np.linalg.matrix_power(alpha, n))
    if nil <= 1e-10 * max(1.0, np.linalg.norm(alpha)) ** n:
        return np.eye(n, dtype=complex)
    pair = FlatPair(P1=np.zeros((n, n), dtype=complex), P2=alpha, w=tilt.w)
    return solve_twisted_hitchin(pair)
