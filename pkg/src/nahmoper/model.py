"""Exact pole solutions and admissible approximate metrics.

The exact model: fields proportional to 1/y built from a principal sl2
triple, solving every residual system, with metric W = (y sin b)^{-e0}.
Around it, a constant holomorphic coefficient alpha with characteristic
data q deforms the picture; the metric is corrected order by order in y
so that the moment map vanishes to a prescribed power at the boundary.

Corrections are computed on a finite series in y^j (log y)^l.  At each
order the linearized moment map acts on the spin-k piece of a coefficient
as the scalar j(j-1) - k(k+1); resonant pairs (j = k+1) are cleared by a
log ladder instead.  Far from the boundary the exponent is blended into
the flat-limit metric of the constant data over a compactly supported
window, so the output agrees with the translation invariant solve exactly
past the window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .fields import Background, HoloData, UnitaryFields, model_background, \
    oper_alpha
from .hitchin import boundary_metric
from .lie import TiltParams, casimir_apply, dag, principal_triple, traceless
from .mesh import GradedMesh
from .series import YLogSeries, expm_jet2, logm_jet2

Array = np.ndarray

J_MAX = 6


def _tilt(beta) -> TiltParams:
    return beta if isinstance(beta, TiltParams) else TiltParams(float(beta))


@dataclass(frozen=True)
class OperPoint:
    """Constant oper data: rank, tilt, and characteristic coefficients q_2..q_n."""

    n: int
    beta: TiltParams
    q: tuple

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2")
        object.__setattr__(self, "beta", _tilt(self.beta))
        q = tuple(complex(c) for c in self.q)
        if len(q) != self.n - 1:
            raise ValueError("need n-1 characteristic coefficients")
        object.__setattr__(self, "q", q)

    def alpha(self) -> Array:
        return oper_alpha(self.n, self.q, self.beta)

    @property
    def trivial(self) -> bool:
        return all(c == 0 for c in self.q)


def model_fields(n: int, beta, mesh: GradedMesh) -> UnitaryFields:
    """Exact pole solution: all components 1/y times constant matrices."""
    tilt = _tilt(beta)
    ep, e0, _ = principal_triple(n)
    inv_y = 1.0 / mesh.y

    def prof(c, m):
        return mesh.broadcast((c * inv_y)[:, None, None] * m)

    zero = np.zeros((mesh.ny, mesh.torus_size, mesh.torus_size, n, n),
                    dtype=complex)
    return UnitaryFields(
        mesh=mesh, tilt=tilt,
        A_z=prof(tilt.sin_b * np.ones_like(inv_y), ep),
        phi_z=prof(tilt.cos_b * np.ones_like(inv_y), ep),
        A_y=zero,
        phi_1=prof(0.5j * tilt.cos_b * np.ones_like(inv_y), e0),
        # d/dy of c/y is -c/y^2
        dy_A_z=prof(-tilt.sin_b * inv_y, ep),
        dy_phi_z=prof(-tilt.cos_b * inv_y, ep),
        dy_A_y=zero,
        dy_phi_1=prof(-0.5j * tilt.cos_b * inv_y, e0))


def model_metric(n: int, beta, mesh: GradedMesh) -> Array:
    """Diagonal metric (y sin b)^{-e0} as an (ny, n, n) profile."""
    tilt = _tilt(beta)
    _, e0, _ = principal_triple(n)
    lam = np.diag(e0).real
    out = np.zeros((mesh.ny, n, n), dtype=complex)
    out[:, np.arange(n), np.arange(n)] = \
        (mesh.y[:, None] * tilt.sin_b) ** (-lam[None, :])
    return out


def oper_local_frame(op: OperPoint, mesh: GradedMesh) -> HoloData:
    """Holomorphic data of the oper in the constant frame."""
    return HoloData(mesh=mesh, tilt=op.beta, n=op.n, alpha=op.alpha())


def oper_background(op: OperPoint, mesh: GradedMesh) -> Background:
    """Pole-cone background over the oper frame.

    Same diagonal gauge profile as the model; the conjugated z-coefficient
    picks up the bottom row (y^{n-1} q_n, ..., y q_2, 0).
    """
    ref = model_background(mesh, op.beta, op.n)
    holo = oper_local_frame(op, mesh)
    dg0 = -ref.m3 @ ref.g0
    d2g0 = (ref.m3 @ ref.m3 - ref.m3p) @ ref.g0
    return Background.from_g0_jets(holo, ref.g0, dg0, d2g0, label="oper")


def _sdag(s: YLogSeries) -> YLogSeries:
    return YLogSeries(s.n, {k: dag(m) for k, m in s.terms.items()})


def _pole_series(alpha: Array, tilt: TiltParams):
    """(m2, m3, m3') of the cone background as y-series."""
    n = alpha.shape[0]
    _, e0, _ = principal_triple(n)
    m2 = YLogSeries(n, {(0, 0): alpha}).wconj(1, tilt.sin_b)
    m3 = YLogSeries(n, {(-1, 0): 0.5 * e0})
    m3p = YLogSeries(n, {(-2, 0): -0.5 * e0})
    return m2, m3, m3p


def _series_moment(s: YLogSeries, m2: YLogSeries, m3: YLogSeries,
                   m3p: YLogSeries, tilt: TiltParams, cap: int) -> YLogSeries:
    # same assembly as hat_moment_map with all torus derivatives dropped
    work = cap + 10
    H = s.exp_pow(work)
    Hi = s.scale(-1.0).exp_pow(work)
    c2b = Hi.mat(_sdag(m2)).mat(H).scale(-1.0)
    C2 = m2.comm(c2b)
    A = Hi.mat(H.dy())
    B = Hi.mat(_sdag(m3)).mat(H)
    C3 = A.dy() - m3p - Hi.mat(_sdag(m3p)).mat(H) + (m3 - B).comm(A - B)
    return (C2.scale(tilt.sin_b ** 2) + C3).scale(-1.0).truncate_pow(cap)


def moment_series(op: OperPoint, s: YLogSeries | None, cap: int) -> YLogSeries:
    """Moment map of exp(s) over the pole background, as a series in y.

    Assembled in the reference frame; leading coefficients agree with the
    balanced-frame assembly whenever all lower coefficients vanish.
    """
    m2, m3, m3p = _pole_series(op.alpha(), op.beta)
    if s is None:
        s = YLogSeries(op.n)
    return _series_moment(s, m2, m3, m3p, op.beta, cap)


def _spin_component(g: Array, k: int, triple) -> Array:
    n = g.shape[0]
    out = g
    for kk in range(1, n):
        if kk != k:
            out = (casimir_apply(out, triple) - kk * (kk + 1) * out) \
                / (k * (k + 1) - kk * (kk + 1))
    return out


def iterate_corrections(alpha: Array, tilt: TiltParams, order: int,
                        triple=None) -> dict:
    """Correction coefficients cancelling the moment map through y^order.

    Returns {(j, l): matrix} for the exponent sum_{j,l} s_{jl} y^j (log y)^l.
    The error coefficient at y^m is split into Casimir components; spin k
    divides by j(j-1) - k(k+1) with j = m+2, except on the resonant pair
    j = k+1 where a log y rung is inserted instead.
    """
    n = alpha.shape[0]
    if triple is None:
        triple = principal_triple(n)
    m2, m3, m3p = _pole_series(alpha, tilt)
    s = YLogSeries(n)
    for m in range(order + 1):
        j = m + 2
        for _ in range(12):
            om = _series_moment(s, m2, m3, m3p, tilt, cap=m)
            scale = max((float(np.abs(v).max()) for v in om.terms.values()),
                        default=0.0)
            thr = 1e-13 * max(1.0, scale)
            live = {l: g for l, g in om.by_power().get(m, {}).items()
                    if np.abs(g).max() > thr}
            if not live:
                break
            for l in sorted(live, reverse=True):
                g = traceless(0.5 * (live[l] + dag(live[l])))
                for k in range(1, n):
                    gk = _spin_component(g, k, triple) if n > 2 else g
                    if np.abs(gk).max() <= thr:
                        continue
                    mu = j * (j - 1) - k * (k + 1)
                    if mu != 0:
                        s.add_term(j, l, gk / mu)
                    else:
                        if l + 1 > 3:
                            raise RuntimeError(
                                "resonant log ladder ran away in the "
                                f"spin-{k} component at y^{j}")
                        s.add_term(j, l + 1, gk / ((l + 1) * (2 * j - 1)))
        else:
            raise RuntimeError(
                f"corrections failed to settle at y^{m} "
                f"(spin-{m + 1} component)")
    smax = max((float(np.abs(v).max()) for v in s.terms.values()), default=0.0)
    tol = 1e-13 * max(1.0, smax)
    return {key: traceless(0.5 * (v + dag(v)))
            for key, v in s.terms.items() if np.abs(v).max() > tol}


def _cone_jets(y: Array, tilt: TiltParams, n: int):
    """W^{1/2} = (y sin b)^{-e0/2} diagonal with two derivatives."""
    _, e0, _ = principal_triple(n)
    expo = -np.diag(e0).real / 2.0
    diag = (y[:, None] * tilt.sin_b) ** expo[None, :]
    idx = np.arange(n)
    w = np.zeros((len(y), n, n), dtype=complex)
    dw = np.zeros_like(w)
    d2w = np.zeros_like(w)
    w[:, idx, idx] = diag
    dw[:, idx, idx] = diag * expo[None, :] / y[:, None]
    d2w[:, idx, idx] = diag * (expo * (expo - 1.0))[None, :] / y[:, None] ** 2
    return w, dw, d2w


def _cutoff_jets(y: Array, y1: float, y2: float):
    """Smooth transition from 1 below y1 to 0 above y2, with derivatives.

    Built from exp(-1/t) bump factors, so it is exactly 1 and exactly 0
    outside the window and infinitely smooth inside.
    """
    chi = np.zeros_like(y)
    d1 = np.zeros_like(y)
    d2 = np.zeros_like(y)
    chi[y <= y1] = 1.0
    mid = (y > y1 + 1e-12) & (y < y2 - 1e-12)
    if not mid.any():
        return chi, d1, d2
    a = y[mid] - y1
    b = y2 - y[mid]
    F = np.exp(-1.0 / a)
    G = np.exp(-1.0 / b)
    Fp = F / a ** 2
    Gp = -G / b ** 2
    Fpp = F * (1.0 / a ** 4 - 2.0 / a ** 3)
    Gpp = G * (1.0 / b ** 4 - 2.0 / b ** 3)
    den = F + G
    chi[mid] = G / den
    num1 = Gp * F - G * Fp
    d1[mid] = num1 / den ** 2
    d2[mid] = ((Gpp * F - G * Fpp) * den - 2.0 * num1 * (Fp + Gp)) / den ** 3
    return chi, d1, d2


def _flat_exponent_jets(y: Array, tilt: TiltParams, h_flat: Array):
    """Exponent of W^{-1/2} H_flat W^{-1/2} with two y-derivatives."""
    n = h_flat.shape[0]
    _, e0, _ = principal_triple(n)
    lam = np.diag(e0).real
    u = (y[:, None] * tilt.sin_b) ** (lam[None, :] / 2.0)
    P = u[:, :, None] * h_flat[None] * u[:, None, :]
    half = 0.5 * (lam[:, None] + lam[None, :])
    dP = half[None] * P / y[:, None, None]
    d2P = (half * (half - 1.0))[None] * P / y[:, None, None] ** 2
    T = np.empty_like(P)
    T1 = np.empty_like(P)
    T2 = np.empty_like(P)
    for i in range(len(y)):
        t, t1, t2 = logm_jet2(P[i], dP[i], d2P[i])
        T[i], T1[i], T2[i] = t, t1, t2
    return (0.5 * (T + dag(T)), 0.5 * (T1 + dag(T1)), 0.5 * (T2 + dag(T2)))


def _flat_gap(alpha: Array, tilt: TiltParams) -> float:
    """Envelope rate from the eigenvalue separation of the constant data."""
    ev = np.linalg.eigvals(alpha)
    scale = max(1e-30, float(np.abs(ev).max()))
    gaps = [abs(a - b) for i, a in enumerate(ev) for b in ev[i + 1:]
            if abs(a - b) > 1e-8 * scale]
    if not gaps:
        return 0.0
    return tilt.sin_b * tilt.cos_b * min(gaps)


@dataclass(frozen=True)
class AdmissibleMetric:
    """Approximate metric W^{1/2} exp(s) W^{1/2} with series exponent s.

    coeffs holds the near-boundary correction matrices keyed by (j, l);
    h_flat is the constant far-field metric the exponent is blended into
    (None when the cone itself is exact), delta the expected decay rate of
    that convergence, window the blend interval in absolute y.  The window
    sits inside the trust radius of the series, where every stored term is
    still order one; past it the series exponent would grow like a high
    power of y and exponentiating it would be meaningless.
    """

    op: OperPoint
    order: int
    coeffs: dict = field(repr=False)
    h_flat: Array | None = field(repr=False, default=None)
    delta: float = 0.0
    window: tuple = (0.0, 0.0)

    def series(self) -> YLogSeries:
        return YLogSeries(self.op.n, self.coeffs)

    def s_jets(self, mesh: GradedMesh):
        """(s, s', s'') of the blended exponent as (ny, n, n) profiles."""
        y = mesh.y
        s0, s1, s2 = self.series().jets(y)
        if self.h_flat is None:
            return s0, s1, s2
        # keep the blend inside the mesh even when the trust radius is not
        y2 = min(self.window[1], 0.85 * y[-1])
        y1 = min(self.window[0], y2 / 1.7)
        chi, c1, c2 = _cutoff_jets(y, y1, y2)
        T0, T1, T2 = _flat_exponent_jets(y, self.op.beta, self.h_flat)
        d0, d1, d2 = s0 - T0, s1 - T1, s2 - T2
        w = chi[:, None, None]
        w1 = c1[:, None, None]
        w2 = c2[:, None, None]
        return (T0 + w * d0,
                T1 + w1 * d0 + w * d1,
                T2 + w2 * d0 + 2.0 * w1 * d1 + w * d2)

    def s_field(self, mesh: GradedMesh) -> Array:
        return mesh.broadcast(self.s_jets(mesh)[0])

    def background(self, mesh: GradedMesh) -> Background:
        s0, s1, s2 = self.s_jets(mesh)
        E, E1, E2 = expm_jet2(0.5 * s0, 0.5 * s1, 0.5 * s2)
        w, dw, d2w = _cone_jets(mesh.y, self.op.beta, self.op.n)
        holo = oper_local_frame(self.op, mesh)
        g0 = E @ w
        dg0 = E1 @ w + E @ dw
        d2g0 = E2 @ w + 2.0 * E1 @ dw + E @ d2w
        return Background.from_g0_jets(holo, g0, dg0, d2g0, label="admissible")

    def metric(self, mesh: GradedMesh) -> Array:
        s0 = self.s_jets(mesh)[0]
        _, e0, _ = principal_triple(self.op.n)
        lam = np.diag(e0).real
        half = (mesh.y[:, None] * self.op.beta.sin_b) ** (-lam[None, :] / 2.0)
        es = expm(s0)
        return half[:, :, None] * es * half[:, None, :]

    def to_json(self) -> str:
        def cmat(m):
            return [[[float(v.real), float(v.imag)] for v in row] for row in m]

        blob = {
            "n": self.op.n,
            "beta": self.op.beta.beta,
            "q": [[c.real, c.imag] for c in self.op.q],
            "order": self.order,
            "coefficients": {f"{j},{l}": cmat(v)
                             for (j, l), v in sorted(self.coeffs.items())},
            "h_flat": None if self.h_flat is None else cmat(self.h_flat),
            "delta": self.delta,
            "window": list(self.window),
        }
        return json.dumps(blob, indent=1)

    @classmethod
    def from_json(cls, blob) -> "AdmissibleMetric":
        if isinstance(blob, str):
            blob = json.loads(blob)

        def mat(rows):
            return np.array([[complex(re, im) for re, im in row]
                             for row in rows])

        op = OperPoint(blob["n"], blob["beta"],
                       tuple(complex(re, im) for re, im in blob["q"]))
        coeffs = {}
        for key, rows in blob["coefficients"].items():
            j, l = key.split(",")
            coeffs[(int(j), int(l))] = mat(rows)
        h_flat = None if blob["h_flat"] is None else mat(blob["h_flat"])
        return cls(op=op, order=blob["order"], coeffs=coeffs, h_flat=h_flat,
                   delta=blob["delta"], window=tuple(blob["window"]))


def build_H0(op: OperPoint, order: int) -> AdmissibleMetric:
    """Admissible approximate metric with moment map O(y^{order+1})."""
    if not 0 <= order <= J_MAX:
        raise ValueError(f"correction order must lie in 0..{J_MAX}")
    if op.trivial:
        # the cone is an exact solution; nothing to correct or blend
        return AdmissibleMetric(op=op, order=order, coeffs={})
    coeffs = iterate_corrections(op.alpha(), op.beta, order)
    h_flat = boundary_metric(op.alpha(), op.beta.beta)
    h_flat = h_flat / np.linalg.det(h_flat).real ** (1.0 / op.n)
    # trust radius: largest y where every stored term is still order one,
    # with a proxy from the data itself in case no terms were stored yet
    qq = op.beta.sin_b ** 2 * max(abs(c) for c in op.q) ** 2
    radii = [(10.0 / qq) ** 0.25]
    for (j, l), c in coeffs.items():
        top = np.abs(c).max()
        if j >= 1 and top > 0:
            radii.append((1.0 / top) ** (1.0 / j))
    y1 = 0.75 * min(radii)
    return AdmissibleMetric(op=op, order=order, coeffs=coeffs, h_flat=h_flat,
                            delta=_flat_gap(op.alpha(), op.beta),
                            window=(y1, 1.7 * y1))


def vanishing_order(mesh: GradedMesh, res: Array, cut: float = 0.1,
                    floor: float = 1e-13) -> float:
    """Log-log slope of the residual sup norm on the four smallest nodes.

    The mesh must put at least four nodes below cut; the fit uses the four
    closest to the boundary, where the leading power dominates.  Returns
    inf when the residual is below floor on the whole fit window.
    """
    idx = np.where(mesh.y < cut)[0]
    if len(idx) < 4:
        raise ValueError("need at least 4 mesh nodes below the fit window")
    idx = idx[np.argsort(mesh.y[idx])[:4]]
    r = np.asarray(res)[idx].reshape(4, -1)
    norms = np.abs(r).max(axis=1)
    if norms.max() < floor:
        return math.inf
    slope = np.polyfit(np.log(mesh.y[idx]), np.log(np.maximum(norms, 1e-300)),
                       1)[0]
    return float(slope)
