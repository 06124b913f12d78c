"""Continuation solver for the deformation equation, with its diagnostics.

The unknown is the traceless Hermitian deformation s of an admissible
reference metric; the equation at coupling t adds t s to the moment map of
the deformed metric.  A damped Newton iteration with a dense
finite-difference Jacobian walks t down a geometric ladder from 1 to 0,
warm-starting every stage from the previous one.  The rest of the module
holds the linearized operator in two algebraically equal assemblies, the
metric energy with its first two derivatives along a ray, a pointwise
check of the comparison identity behind the sup bound, the sup bound
itself, the vanishing-rate flag of the vertical sections at the pole, and
the readout of the characteristic coefficients from the far slice.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .fields import (Background, MetricDeformation, UnitaryFields,
                     _expmh_pair, chern_fields, hat_moment_map, weighted_norm)
from .hitchin import hitchin_fibration, q_from_p
from .lie import (_ad_fn_apply, comm, dag, herm_traceless_basis,
                  principal_triple, traceless, v_apply)
from .mesh import GradedMesh
from .model import AdmissibleMetric, OperPoint, build_H0
from .series import expm_jet2

Array = np.ndarray


class StageFailureError(RuntimeError):
    """A Newton stage stalled; carries the partial report."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class NotConvergedError(RuntimeError):
    pass


class FiltrationError(RuntimeError):
    pass


def _node_norm(u: Array) -> Array:
    return np.sqrt(np.sum(np.abs(u) ** 2, axis=(-2, -1)))


def _node_sup(u: Array) -> float:
    return float(_node_norm(u).max())


def _ysum(mesh: GradedMesh, dens: Array) -> float:
    cell = (mesh.period / mesh.torus_size) ** 2
    wq = mesh.wquad.reshape((mesh.ny,) + (1,) * (dens.ndim - 1))
    return cell * float((wq * dens).sum())


def inner_w(mesh: GradedMesh, a: Array, b: Array) -> float:
    """Real trace pairing summed with trapezoid y-weights and the torus cell."""
    return _ysum(mesh, np.einsum("...ij,...ij->...", a, np.conj(b)).real)


def absorb_deformation(bg: Background, s: Array) -> Background:
    """Push a deformation into the reference data: g0 -> e^{s/2} g0.

    The absorbed background carries the same metric exactly; its jets come
    from difference stencils on s, so moment maps evaluated before and after
    absorption agree up to the usual second-order stencil rearrangement.
    Only a z-independent deformation fits the y-profile format.
    """
    s = np.asarray(s, dtype=complex)
    if s.ndim == 5:
        flat = s.reshape(s.shape[0], -1, s.shape[-2], s.shape[-1])
        if np.abs(flat - flat[:, :1]).max() > 1e-12 * max(1.0, np.abs(s).max()):
            raise ValueError("only a z-independent deformation can be absorbed")
        s = flat[:, 0]
    mesh = bg.holo.mesh
    half = 0.5 * s
    E, E1, E2 = expm_jet2(half, mesh.dy(half), mesh.d2y(half))
    dg0 = -bg.m3 @ bg.g0
    d2g0 = (bg.m3 @ bg.m3 - bg.m3p) @ bg.g0
    return Background.from_g0_jets(
        bg.holo, E @ bg.g0, E1 @ bg.g0 + E @ dg0,
        E2 @ bg.g0 + 2.0 * E1 @ dg0 + E @ d2g0, label="absorbed")


def Nt_residual(bg: Background, s: Array, t: float) -> Array:
    """Moment map of the deformed metric plus the coupling term t s."""
    return hat_moment_map(bg, s) + t * np.asarray(s)


def _dexp_kernel(m: Array) -> Array:
    out = np.ones_like(m)
    nz = m != 0.0
    out[nz] = -np.expm1(-m[nz]) / m[nz]
    return out


def Nt_derivative(bg: Background, s: Array, v: Array, t: float = 0.0) -> Array:
    """Directional derivative of the coupled residual at s along v.

    Differentiates the discrete assembly term by term (product rule through
    every exponential and stencil), so the result matches central finite
    differences of Nt_residual at any deformation, not just small ones.
    """
    mesh = bg.holo.mesh
    tilt = bg.holo.tilt
    s = np.asarray(s, dtype=complex)
    v = np.asarray(v, dtype=complex)
    H, H_inv = _expmh_pair(s)
    E, E_inv = _expmh_pair(0.5 * s)
    dH = H @ _ad_fn_apply(_dexp_kernel, s, v)
    dE = E @ _ad_fn_apply(_dexp_kernel, 0.5 * s, 0.5 * v)
    dH_inv = -H_inv @ dH @ H_inv
    dE_inv = -E_inv @ dE @ E_inv
    m2 = bg.m2[:, None, None]
    m3 = bg.m3[:, None, None]
    m3p = bg.m3p[:, None, None]

    c1bar = H_inv @ mesh.dz(H)
    dc1bar = dH_inv @ mesh.dz(H) + H_inv @ mesh.dz(dH)
    C1 = mesh.dzbar(c1bar)
    dC1 = mesh.dzbar(dc1bar)

    c2bar = H_inv @ mesh.dzbar(H) - H_inv @ dag(m2) @ H
    dc2bar = dH_inv @ mesh.dzbar(H) + H_inv @ mesh.dzbar(dH) \
        - dH_inv @ dag(m2) @ H - H_inv @ dag(m2) @ dH
    C2 = mesh.dz(c2bar) - mesh.dzbar(np.broadcast_to(m2, s.shape)) \
        + comm(m2, c2bar)
    dC2 = mesh.dz(dc2bar) + comm(m2, dc2bar)

    A = H_inv @ mesh.dy(H)
    dA = dH_inv @ mesh.dy(H) + H_inv @ mesh.dy(dH)
    B = H_inv @ dag(m3) @ H
    dB = dH_inv @ dag(m3) @ H + H_inv @ dag(m3) @ dH
    C3 = mesh.dy(A) - m3p - H_inv @ dag(m3p) @ H + comm(m3 - B, A - B)
    dC3 = mesh.dy(dA) - dH_inv @ dag(m3p) @ H - H_inv @ dag(m3p) @ dH \
        + comm(m3 - B, dA - dB) - comm(dB, A - B)

    omega = -(tilt.cos_b ** 2 * C1 + tilt.sin_b ** 2 * C2 + C3)
    domega = -(tilt.cos_b ** 2 * dC1 + tilt.sin_b ** 2 * dC2 + dC3)
    d_raw = dE @ omega @ E_inv + E @ domega @ E_inv + E @ omega @ dE_inv
    return traceless(0.5 * (d_raw + dag(d_raw))) + t * v


def cov_ops(bg: Background):
    """The three directional derivative pairs acting on deformation fields."""
    mesh = bg.holo.mesh
    m2 = bg.m2[:, None, None]
    m3 = bg.m3[:, None, None]
    m2d, m3d = dag(m2), dag(m3)
    d1 = (lambda v: mesh.dzbar(v), lambda v: mesh.dz(v))
    d2 = (lambda v: mesh.dz(v) + comm(m2, v),
          lambda v: mesh.dzbar(v) - comm(m2d, v))
    d3 = (lambda v: mesh.dy(v) + comm(m3, v),
          lambda v: mesh.dy(v) - comm(m3d, v))
    return d1, d2, d3


def apply_L(bg: Background, v: Array, t: float = 0.0,
            path: str = "direct") -> Array:
    """Linearization of the coupled residual in the deformation, at zero.

    path="direct" differentiates the discrete assembly term by term and is
    the exact derivative of Nt_residual at s = 0.  path="symmetric" is the
    rearrangement into half-sums of the derivative pairs in both orders;
    the conjugation bracket cancels the curvature bracket there, so no
    zeroth-order term remains.  The two assemblies differ by the
    second-order defect of moving a y-stencil across a coefficient profile.
    """
    mesh = bg.holo.mesh
    tilt = bg.holo.tilt
    v = np.asarray(v, dtype=complex)
    cb2, sb2 = tilt.cos_b ** 2, tilt.sin_b ** 2
    if path == "direct":
        m2 = bg.m2[:, None, None]
        m3 = bg.m3[:, None, None]
        m3p = bg.m3p[:, None, None]
        dC1 = mesh.dzbar(mesh.dz(v))
        u2 = mesh.dzbar(v) - comm(dag(m2), v)
        dC2 = mesh.dz(u2) + comm(m2, u2)
        u3 = mesh.dy(v) - comm(dag(m3), v)
        dC3 = (mesh.dy(mesh.dy(v)) + comm(v, dag(m3p))
               - comm(comm(v, dag(m3)), dag(m3)) + comm(m3 - dag(m3), u3))
        omega0 = hat_moment_map(bg, np.zeros_like(v), raw=True)
        out = -(cb2 * dC1 + sb2 * dC2 + dC3) + 0.5 * comm(v, omega0)
    elif path == "symmetric":
        (d1, d1d), (d2, d2d), (d3, d3d) = cov_ops(bg)
        out = -0.5 * (cb2 * (d1(d1d(v)) + d1d(d1(v)))
                      + sb2 * (d2(d2d(v)) + d2d(d2(v)))
                      + d3(d3d(v)) + d3d(d3(v)))
    else:
        raise ValueError(f"unknown path {path!r}")
    return traceless(0.5 * (out + dag(out))) + t * v


@dataclass
class ContinuitySchedule:
    """Geometric ladder of couplings, strictly decreasing and ending at zero.

    linear_solver picks how each Newton system is solved: "cg" runs
    conjugate gradients on the nonnegative half-sum assembly of the
    linearization (weighted inner product), "dense" assembles a
    finite-difference Jacobian and factors it, and "auto" uses cg while the
    deformation stays inside cg_trust, where that assembly tracks the true
    Jacobian, falling back to dense whenever a cg step is rejected.
    """

    ts: tuple = ()
    stage_tol: float = 1e-9
    final_tol: float = 1e-11
    max_iter: int = 30
    fd_step: float = 1e-6
    linear_solver: str = "auto"
    cg_tol: float = 1e-4
    cg_max: int = 400
    cg_trust: float = 0.5

    def __post_init__(self):
        ts = tuple(float(t) for t in self.ts) or \
            (1.0,) + tuple(0.5 ** k for k in range(1, 11)) + (0.0,)
        if any(b >= a for a, b in zip(ts, ts[1:])) or ts[-1] != 0.0:
            raise ValueError("couplings must decrease strictly to zero")
        if self.linear_solver not in ("auto", "cg", "dense"):
            raise ValueError("linear_solver must be auto, cg or dense")
        self.ts = ts


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _c2j(a):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


@dataclass
class SolveReport:
    """Outcome of one continuation run, JSON-serializable minus the bulk."""

    parameters: dict
    history: list
    converged: bool
    wall_time: float
    res_sup: float
    res_weighted: float
    s_sup: float
    s_weighted: float
    s_decay: float
    extracted_q: list | None = None
    far_pair: dict | None = None
    balance_defect: float | None = None
    pole_rel: dict | None = None
    far_rate: float | None = None
    far_r2: float | None = None
    s: Array | None = field(default=None, repr=False)
    background: Background | None = field(default=None, repr=False)
    admissible: AdmissibleMetric | None = field(default=None, repr=False)

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": 1,
            "parameters": self.parameters,
            "history": self.history,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "norms": {"res_sup": _num(self.res_sup),
                      "res_weighted": _num(self.res_weighted),
                      "s_sup": _num(self.s_sup),
                      "s_weighted": _num(self.s_weighted),
                      "s_decay": _num(self.s_decay)},
            "extracted_oper": {"q": self.extracted_q,
                               "far_pair": self.far_pair,
                               "balance_defect": _num(self.balance_defect)
                               if self.balance_defect is not None else None},
            "boundary": {"pole_rel": self.pole_rel,
                         "far_rate": _num(self.far_rate)
                         if self.far_rate is not None else None,
                         "far_r2": _num(self.far_r2)
                         if self.far_r2 is not None else None},
        }, indent=2)

    def unitary_fields(self) -> UnitaryFields:
        holo = self.background.holo
        return chern_fields(holo, MetricDeformation(self.background, self.s))


def _fd_jacobian(fun, x: Array, step: float) -> Array:
    J = np.empty((len(x), len(x)))
    for a in range(len(x)):
        e = np.zeros_like(x)
        e[a] = step
        J[:, a] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return J


def continuity_solve(op: OperPoint, mesh: GradedMesh, order: int = 6,
                     schedule: ContinuitySchedule | None = None,
                     s0: Array | None = None) -> SolveReport:
    """March the coupled equation down the schedule to the balanced equation.

    One damped Newton solve per coupling, warm-started from the previous
    stage; the deformation is clamped to zero on both end rows, and any seed
    content there is discarded.  Raises StageFailureError with the partial
    report attached when a stage stalls; parameters["last_good_t"] then
    records the last coupling that converged.
    """
    if mesh.torus_size != 1:
        raise ValueError("the continuation solver runs on the z-invariant slice")
    sched = schedule or ContinuitySchedule()
    adm = build_H0(op, order)
    bg = adm.background(mesh)
    n = op.n
    basis = herm_traceless_basis(n)
    d = len(basis)
    rows = mesh.ny - 2
    start = time.perf_counter()

    def to_field(x):
        s = np.zeros((mesh.ny, 1, 1, n, n), dtype=complex)
        s[1:-1, 0, 0] = np.einsum("md,dij->mij", x.reshape(rows, d), basis)
        return s

    def vec_sup(r):
        return float(np.sqrt((r.reshape(rows, d) ** 2).sum(axis=1)).max())

    x = np.zeros(rows * d)
    if s0 is not None:
        s0 = np.asarray(s0, dtype=complex)
        if s0.ndim == 3:
            s0 = s0[:, None, None]
        x = np.einsum("mij,dji->md", s0[1:-1, 0, 0], basis).real.reshape(-1)

    history: list = []
    params = {
        "n": n, "beta": op.beta.beta, "q": _c2j(op.q), "order": order,
        "mesh": {"y_min": float(mesh.y[0]), "y_max": float(mesh.y[-1]),
                 "ny": mesh.ny, "ratio": mesh.ratio,
                 "torus_size": mesh.torus_size},
        "schedule": list(sched.ts), "stage_tol": sched.stage_tol,
        "final_tol": sched.final_tol, "last_good_t": None,
    }

    def make_report(converged):
        s = to_field(x)
        # the two end rows carry Dirichlet data, not equations, so the
        # reported norms run over the equation rows only
        res = hat_moment_map(bg, s)
        res[0] = 0.0
        res[-1] = 0.0
        rep = SolveReport(
            parameters=params, history=history, converged=converged,
            wall_time=time.perf_counter() - start,
            res_sup=_node_sup(res),
            res_weighted=weighted_norm(mesh, res),
            s_sup=_node_sup(s),
            s_weighted=weighted_norm(mesh, s, k=1),
            s_decay=MetricDeformation(bg, s).decay_exponent(),
            s=s, background=bg, admissible=adm)
        if converged:
            fields = rep.unitary_fields()
            P1, P2 = far_flat_pair(fields)
            rep.far_pair = {"P1": _c2j(P1), "P2": _c2j(P2)}
            rep.balance_defect = balance_defect(fields)
            try:
                rep.extracted_q = _c2j(kobayashi_hitchin(fields).q)
            except NotConvergedError:
                # residual converged but the far slice is not flat enough to
                # read an oper off; leave the extraction empty rather than
                # discarding the whole run
                rep.extracted_q = None
            rep.pole_rel = {k: _num(val)
                            for k, val in pole_fit(fields)["rel"].items()}
            rep.far_rate, rep.far_r2 = far_fit(mesh, far_profile(fields))
        return rep

    def proj(R):
        return np.einsum("mij,dji->md", R[1:-1, 0, 0], basis).real.reshape(-1)

    def resid(x, t):
        return proj(Nt_residual(bg, to_field(x), t))

    wvec = np.repeat(mesh.wquad[1:-1], d)

    # the coupling term is linear and diagonal in the orthonormal
    # coefficients, so one hat-map Jacobian serves every stage as
    # J(t) = J_hat + t*I; it is refreshed only when contraction degrades
    jh: dict = {"J": None}

    def dense_step(x, r, t, fresh=False):
        if fresh or jh["J"] is None:
            jh["J"] = _fd_jacobian(lambda xx: resid(xx, 0.0), x,
                                   sched.fd_step)
        J = jh["J"] + t * np.eye(len(x))
        try:
            return np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(J, -r, rcond=None)[0]

    def cg_step(x, r, t):
        # conjugate gradients on the symmetric half-sum assembly, in the
        # trapezoid-weighted inner product that makes it self-adjoint
        moved = absorb_deformation(bg, to_field(x))

        def av(p):
            return proj(apply_L(moved, to_field(p), t, path="symmetric"))

        b = -r
        dx = np.zeros_like(b)
        res = b.copy()
        p = res.copy()
        rz = float((wvec * res) @ res)
        target = sched.cg_tol ** 2 * rz
        for _ in range(sched.cg_max):
            if rz <= target:
                break
            ap = av(p)
            pap = float((wvec * p) @ ap)
            if not math.isfinite(pap) or pap <= 0.0:
                return None
            alpha = rz / pap
            dx = dx + alpha * p
            res = res - alpha * ap
            rz_new = float((wvec * res) @ res)
            p = res + (rz_new / rz) * p
            rz = rz_new
        return dx

    def line_search(x, r, rn, dx, t):
        lam = 1.0
        for _ in range(9):
            xn = x + lam * dx
            rv = resid(xn, t)
            rn_new = vec_sup(rv)
            if rn_new <= (1.0 - 0.25 * lam) * rn:
                return xn, rv, rn_new, lam
            lam *= 0.5
        return None

    for t in sched.ts:
        tol = sched.final_tol if t == 0.0 else sched.stage_tol
        r = resid(x, t)
        rn = vec_sup(r)
        history.append({"t": t, "iter": 0, "res": rn, "step": 0.0,
                        "snorm": vec_sup(x)})
        ok = rn <= tol
        for it in range(1, sched.max_iter + 1):
            if ok:
                break
            mode = sched.linear_solver
            use_cg = mode == "cg" or (mode == "auto"
                                      and vec_sup(x) <= sched.cg_trust)
            dx = cg_step(x, r, t) if use_cg else None
            if dx is None and mode == "cg":
                rep = make_report(False)
                raise StageFailureError(
                    f"conjugate-gradient breakdown at coupling {t:g}",
                    report=rep)
            hit = None if dx is None else line_search(x, r, rn, dx, t)
            if hit is None and mode != "cg":
                # rejected or skipped cg direction: pay for the Jacobian
                stale = jh["J"] is not None
                hit = line_search(x, r, rn, dense_step(x, r, t), t)
                if hit is None and stale:
                    hit = line_search(x, r, rn,
                                      dense_step(x, r, t, fresh=True), t)
            if hit is None:
                break
            x, r, rn_new, lam = hit
            if not use_cg and rn_new > 0.3 * rn:
                # slow contraction: the cached Jacobian has drifted
                jh["J"] = None
            rn = rn_new
            history.append({"t": t, "iter": it, "res": rn, "step": lam,
                            "snorm": vec_sup(x)})
            ok = rn <= tol
        if not ok:
            rep = make_report(False)
            raise StageFailureError(
                f"Newton stalled at coupling {t:g} with residual {rn:.3e}",
                report=rep)
        params["last_good_t"] = t
    return make_report(True)


def validation_residual(adm: AdmissibleMetric, mesh: GradedMesh,
                        s: Array) -> float:
    """Moment map sup of a solved deformation, evaluated off the solve grid.

    Newton drives the residual on its own mesh to the iteration tolerance,
    so mesh convergence has to be probed elsewhere: the deformation is
    splined onto the once-refined mesh and the map evaluated there, which
    resurrects the second-order discretization error of s.
    """
    fine = mesh.refine()
    prof = np.asarray(s, dtype=complex)[:, 0, 0]
    sf = (CubicSpline(mesh.y, prof.real, axis=0)(fine.y)
          + 1j * CubicSpline(mesh.y, prof.imag, axis=0)(fine.y))
    sf = traceless(0.5 * (sf + dag(sf)))
    sf[-1] = 0.0
    return _node_sup(hat_moment_map(adm.background(fine), sf[:, None, None]))


def donaldson_M(bg: Background, s: Array, npts: int = 8) -> float:
    """Metric energy between the reference and its deformation by s.

    Line integral over u in [0, 1] of the pairing of s with the moment map
    of the metric deformed by u s, Gauss-Legendre in u.
    """
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    mesh = bg.holo.mesh
    return float(sum(0.5 * wk * inner_w(mesh, s, hat_moment_map(bg, 0.5 * (uk + 1.0) * s))
                     for uk, wk in zip(nodes, weights)))


def _sq_density(u: Array) -> Array:
    return np.einsum("...ij,...ij->...", u, np.conj(u)).real


def donaldson_derivatives(bg: Background, s: Array,
                          t: float) -> tuple[float, float]:
    """First and second derivative of the energy along u -> u s at u = t.

    The first is the defining integrand.  The second is the directional
    square form at the deformed metric: the absorbed coefficient profiles
    act on s, with the operator weights on the three directions; it drops
    the boundary terms of the corresponding parts integration, which vanish
    for deformations clamped at both ends.
    """
    mesh = bg.holo.mesh
    tilt = bg.holo.tilt
    s = np.asarray(s, dtype=complex)
    first = inner_w(mesh, s, hat_moment_map(bg, t * s))
    moved = absorb_deformation(bg, t * s)
    (d1, _), (d2, _), (d3, _) = cov_ops(moved)
    dens = (tilt.cos_b ** 2 * _sq_density(d1(s))
            + tilt.sin_b ** 2 * _sq_density(d2(s)) + _sq_density(d3(s)))
    return first, _ysum(mesh, dens)


def keyeq_check(bg: Background, s: Array) -> float:
    """Sup defect of the pointwise comparison identity at the deformation s.

    The increment of the (unconjugated) moment map paired with s equals
    minus half the flat Laplacian of |s|^2 plus weighted squares of the
    rescaled derivative coefficients, the rescaling being the symmetric
    square root of (1 - exp(-ad_s))/ad_s.  Discretely the identity holds to
    second order in the mesh; the sup runs over interior nodes only, the
    one-sided edge stencils being first order.
    """
    mesh = bg.holo.mesh
    tilt = bg.holo.tilt
    s = np.asarray(s, dtype=complex)
    E, E_inv = _expmh_pair(0.5 * s)
    pre_s = E_inv @ hat_moment_map(bg, s, raw=True) @ E
    pre_0 = hat_moment_map(bg, np.zeros_like(s), raw=True)
    lhs = np.einsum("...ij,...ji->...", pre_s - pre_0, s).real
    f = _sq_density(s)
    lap = -0.5 * (mesh.dz(mesh.dzbar(f)).real + mesh.d2y(f))
    m2d = dag(bg.m2)[:, None, None]
    m3d = dag(bg.m3)[:, None, None]
    u1 = mesh.dz(s)
    u2 = mesh.dzbar(s) - comm(m2d, s)
    u3 = mesh.dy(s) - comm(m3d, s)
    rhs = (lap + tilt.cos_b ** 2 * _sq_density(v_apply(s, u1))
           + tilt.sin_b ** 2 * _sq_density(v_apply(s, u2))
           + _sq_density(v_apply(s, u3)))
    return float(np.abs((lhs - rhs)[2:-2]).max())


def c0_diagnostic(bg: Background, s: Array, source_scale: float = 1.0,
                  enforce: bool = True) -> dict:
    """Sup bound on a solved deformation from the reference residual alone.

    Solves the one-dimensional comparison problem -u'' = source with zero
    ends, source the nodewise norm of the zero-deformation moment map (sup
    over the torus), and reports sup|s| against the bound 2 sup u that the
    comparison identity yields for solutions of the balanced equation.
    """
    mesh = bg.holo.mesh
    s = np.asarray(s, dtype=complex)
    om0 = hat_moment_map(bg, np.zeros_like(s))
    src = source_scale * _node_norm(om0).reshape(mesh.ny, -1).max(axis=1)
    u = np.zeros(mesh.ny)
    u[1:-1] = np.linalg.solve(-mesh.d2mat[1:-1, 1:-1], src[1:-1])
    bound = 2.0 * float(u.max())
    sup_s = _node_sup(s)
    out = {"sup_s": sup_s, "bound": bound, "margin": bound - sup_s}
    if enforce and sup_s > bound * (1.0 + 1e-10) + 1e-30:
        raise NotConvergedError(
            f"deformation sup {sup_s:.3e} exceeds its bound {bound:.3e}")
    return out


@dataclass
class FiltrationResult:
    rates: tuple
    basis: Array      # columns ordered fastest-vanishing first
    induced: tuple    # successive quotient map magnitudes at the anchor
    anchor: float
    fit_y: Array


def filtration_extract(fields: UnitaryFields, anchor: float = 1.0,
                       fit_max: float | None = None,
                       gap_tol: float = 0.25) -> FiltrationResult:
    """Vanishing-rate flag of the vertical parallel sections at the pole.

    Integrates the vertical first-order system from the anchor height down
    to the pole, fits the growth exponents of the fundamental solution's
    singular values on the innermost nodes, and returns the flag of right
    singular directions together with the magnitudes of the maps induced on
    successive quotients by the z-direction coefficient at the anchor.
    Nearly degenerate fitted rates raise FiltrationError.
    """
    mesh = fields.mesh
    if mesh.torus_size != 1:
        raise ValueError("rate extraction runs on the z-invariant slice")
    n = fields.A_y.shape[-1]
    c3 = (fields.A_y - 1j * fields.phi_1 / fields.tilt.cos_b)[:, 0, 0]
    spr = CubicSpline(mesh.y, c3.real, axis=0)
    spi = CubicSpline(mesh.y, c3.imag, axis=0)

    def rhs(y, m):
        c = spr(y) + 1j * spi(y)
        return (-(c @ m.reshape(n, n))).reshape(-1)

    ys = mesh.y[mesh.y <= anchor * (1.0 + 1e-12)][::-1]
    if len(ys) < 6:
        raise ValueError("anchor leaves too few nodes below it")
    sol = solve_ivp(rhs, (ys[0], ys[-1]), np.eye(n, dtype=complex).reshape(-1),
                    t_eval=ys, rtol=1e-10, atol=1e-13)
    if not sol.success:
        raise FiltrationError(f"vertical transport failed: {sol.message}")
    mats = sol.y.T.reshape(-1, n, n)
    cap = fit_max if fit_max is not None else max(0.2, 8.0 * mesh.y[0])
    sel = ys <= cap
    if sel.sum() < 5:
        sel = np.zeros_like(sel)
        sel[-5:] = True
    sv = np.array([np.linalg.svd(m, compute_uv=False) for m in mats[sel]])
    logy = np.log(ys[sel])
    slopes = np.array([np.polyfit(logy, np.log(sv[:, k]), 1)[0]
                       for k in range(n)])
    if np.diff(slopes).min() < gap_tol:
        raise FiltrationError(
            f"vanishing rates nearly degenerate: {np.round(slopes, 3)}")
    # singular values come sorted descending, so the slope list is already
    # ascending; the flag wants fastest-vanishing (largest rate) first
    _, _, vh = np.linalg.svd(mats[sel][-1])
    basis = vh.conj().T[:, ::-1]
    ia = int(np.argmin(np.abs(mesh.y - anchor)))
    P2a = (fields.A_z + fields.phi_z / fields.tilt.tan_b)[ia, 0, 0]
    induced = tuple(float(abs(basis[:, i + 1].conj() @ (P2a @ basis[:, i])))
                    for i in range(n - 1))
    return FiltrationResult(rates=tuple(slopes), basis=basis, induced=induced,
                            anchor=anchor, fit_y=ys[sel])


def pole_fit(fields: UnitaryFields, nodes: int = 10, deg: int = 2) -> dict:
    """Leading 1/y coefficients at the inner edge, against the tilted pattern.

    Fits y*F(y) with a low-degree polynomial over the first nodes and reads
    the intercept; the expected coefficients are sin_b e+ for the
    z-connection, cos_b e+ for the z-Higgs field, and (i/2) cos_b e0 for
    the vertical Higgs component.  Returns the fitted matrices and their
    relative deviations.
    """
    mesh = fields.mesh
    n = fields.A_z.shape[-1]
    ep, e0, _ = principal_triple(n)
    tilt = fields.tilt
    y = mesh.y[:nodes]

    def intercept(F):
        g = y[:, None, None] * F[:nodes].mean(axis=(1, 2))
        c = np.polyfit(y, g.reshape(nodes, -1), deg)[-1]
        return c.reshape(n, n)

    targets = {"A_z": tilt.sin_b * ep, "phi_z": tilt.cos_b * ep,
               "phi_1": 0.5j * tilt.cos_b * e0}
    coeffs = {"A_z": intercept(fields.A_z), "phi_z": intercept(fields.phi_z),
              "phi_1": intercept(fields.phi_1)}
    rel = {k: float(np.linalg.norm(coeffs[k] - targets[k])
                    / np.linalg.norm(targets[k])) for k in targets}
    return {"coeff": coeffs, "target": targets, "rel": rel}


def far_fit(mesh: GradedMesh, prof: Array, lo: float = 0.55,
            hi: float = 0.97) -> tuple[float, float]:
    """Exponential-decay fit of a per-row profile toward the outer edge.

    prof is either a per-row scalar array or a field whose node norms are
    taken rowwise.  Returns the log-linear slope and its R^2 over the rows
    with y between lo and hi times y_max; rows already at rounding level
    are dropped, and a profile flat at that level reports (0, 1) since
    there is no decay left to fit.
    """
    prof = np.asarray(prof)
    if prof.ndim > 1:
        prof = _node_norm(prof).reshape(mesh.ny, -1).max(axis=1)
    ys = mesh.y
    floor = max(1e-13 * prof.max(), 1e-290)
    m = (ys >= lo * ys[-1]) & (ys <= hi * ys[-1]) & (prof > floor)
    if m.sum() < 6:
        return 0.0, 1.0
    obs = np.log(prof[m])
    c = np.polyfit(ys[m], obs, 1)
    res = obs - np.polyval(c, ys[m])
    sst = float(((obs - obs.mean()) ** 2).sum())
    r2 = 1.0 - float((res ** 2).sum()) / sst if sst > 0 else 1.0
    return float(c[0]), float(r2)


def far_profile(fields: UnitaryFields) -> Array:
    """Per-row distance of the flat pair from its outer-edge value.

    The decay rate of this profile is the empirical spectral gap of the
    flat limit; the outer row itself is excluded (its distance is zero by
    construction) by reporting it at rounding level.
    """
    mesh = fields.mesh
    prof = np.zeros(mesh.ny)
    ref = far_flat_pair(fields)
    for row in range(mesh.ny - 1):
        cur = far_flat_pair(fields, row)
        prof[row] = sum(np.linalg.norm(c - r) for c, r in zip(cur, ref))
    return prof


def far_flat_pair(fields: UnitaryFields, row: int = -1) -> tuple[Array, Array]:
    """dzbar / dz coefficients of the flat structure at one y-row, averaged
    over the torus."""
    tb = fields.tilt.tan_b
    P1 = (fields.A_zbar - tb * fields.phi_zbar)[row].mean(axis=(0, 1))
    P2 = (fields.A_z + fields.phi_z / tb)[row].mean(axis=(0, 1))
    return P1, P2


def balance_defect(fields: UnitaryFields, frac: float = 0.9) -> float:
    """Commutator residue of the flat pair at an interior far row.

    The outer row is clamped, so it reflects the reference data regardless
    of the solve; probing at frac * y_max catches an unconverged
    deformation.  The probe sits close to the edge because the background
    construction is only balanced beyond its matching window, which can
    reach past 0.8 * y_max at small coupling.  Normalized by the squared
    pair scale.
    """
    mesh = fields.mesh
    row = min(max(int(np.searchsorted(mesh.y, frac * mesh.y[-1])), 1),
              mesh.ny - 2)
    P1, P2 = far_flat_pair(fields, row)
    w2 = abs(fields.tilt.w) ** 2
    scale = max(np.linalg.norm(P1), np.linalg.norm(P2)) ** 2
    defect = (np.linalg.norm(w2 * comm(dag(P2), P2) + comm(dag(P1), P1))
              + np.linalg.norm(comm(P1, P2)))
    return float(defect / max(scale, 1e-300))


def kobayashi_hitchin(fields: UnitaryFields, ctol: float = 1e-4) -> OperPoint:
    """Characteristic coefficients of the oper underlying a configuration.

    Reads the flat pair off the outer slice, strips the twist by forming the
    extended z-coefficient, and inverts the fibration on the section; the
    tilt weights on the coefficients are removed last.  A commutator residue
    of the slice pair itself above ctol raises NotConvergedError, except in
    the nilpotent case, whose pair is only algebraically flat and carries no
    balance condition.
    """
    tilt = fields.tilt
    P1, P2 = far_flat_pair(fields)
    n = P2.shape[-1]
    scale = max(float(np.linalg.norm(P2)), 1e-300)
    nilpotent = np.linalg.norm(np.linalg.matrix_power(P2, n)) <= 1e-8 * scale ** n
    if not nilpotent:
        w2 = abs(tilt.w) ** 2
        defect = (np.linalg.norm(w2 * comm(dag(P2), P2) + comm(dag(P1), P1))
                  + np.linalg.norm(comm(P1, P2))) / scale ** 2
        if defect > ctol:
            raise NotConvergedError(
                f"far slice commutator residue {defect:.3e} exceeds {ctol:g}")
    phi_ext = traceless(P2 + dag(P1))
    qw = q_from_p(n, hitchin_fibration(phi_ext))
    q = tuple(qk * tilt.sin_b ** (k - 1) for k, qk in enumerate(qw, start=2))
    return OperPoint(n=n, beta=tilt.beta, q=q)
