"""Field configurations on the graded mesh and the metric moment map.

Everything lives in one of two frames.  The holomorphic frame is the one
where the three operators are bare derivatives up to a single constant
coefficient: d/dzbar, d/dz + alpha, d/dy.  The unitary frame is reached by
the complex gauge move g = e^{s/2} g0, where g0 encodes the reference
metric (pole profile included) and s is the Hermitian deformation being
solved for.  chern_fields performs that move and splits the resulting
connection coefficients into (A_z, phi_z, A_y, phi_1) using the gauge
reality conditions A_zbar = -A_z^dag, phi_zbar = -phi_z^dag.

The moment map is assembled in the "hat" frame (conjugated by g0) where the
reference data enters through three coefficient profiles m2, m3 and the
analytic derivative of m3; only the unknown deformation is ever touched by
difference stencils, so the map vanishes identically (to rounding, not to
truncation) on the exact pole background.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .lie import TiltParams, comm, dag, principal_triple, traceless
from .mesh import GradedMesh
from .series import expm_jet2

Array = np.ndarray


def _expmh_pair(s: Array) -> tuple[Array, Array]:
    # (e^s, e^{-s}) for a batch of Hermitian matrices, one eigh
    lam, v = np.linalg.eigh(s)
    vh = dag(v)
    return ((v * np.exp(lam)[..., None, :]) @ vh,
            (v * np.exp(-lam)[..., None, :]) @ vh)


def _node_norm(u: Array) -> Array:
    # Frobenius norm of the matrix at each node; plain abs for scalar fields
    if u.ndim < 2:
        return np.abs(u)
    return np.sqrt(np.sum(np.abs(u) ** 2, axis=(-2, -1)))


def _check_herm(name: str, a: Array, sign: float, tol: float = 1e-12):
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - sign * dag(a)).max() > tol * scale:
        kind = "Hermitian" if sign > 0 else "anti-Hermitian"
        raise ValueError(f"{name} must be {kind}")


@dataclass(frozen=True)
class HoloData:
    """Holomorphic-frame data: rank, tilt, and the constant z-coefficient."""

    mesh: GradedMesh
    tilt: TiltParams
    n: int
    alpha: Array

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=complex)
        if a.ndim > 2:
            const = a.reshape(-1, self.n, self.n)[0]
            if np.abs(a - const).max() > 1e-10 * max(1.0, np.abs(a).max()):
                raise ValueError("alpha must be constant over the mesh")
            a = const
        if a.shape != (self.n, self.n):
            raise ValueError("alpha has the wrong shape")
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True)
class Background:
    """Reference metric data in the hat frame.

    g0 is the y-profile of the gauge move from the holomorphic frame, m2 the
    conjugated z-coefficient, m3 = -(dy g0) g0^{-1}, and m3p the analytic
    y-derivative of m3.  All profiles are (ny, n, n); z-independent.
    """

    holo: HoloData
    g0: Array
    g0_inv: Array = field(repr=False)
    m2: Array = field(repr=False)
    m3: Array = field(repr=False)
    m3p: Array = field(repr=False)
    label: str = "model"

    @classmethod
    def from_g0_jets(cls, holo: HoloData, g0: Array, dg0: Array, d2g0: Array,
                     label: str = "custom") -> "Background":
        g0_inv = np.linalg.inv(g0)
        m3 = -dg0 @ g0_inv
        m3p = -d2g0 @ g0_inv + m3 @ m3
        m2 = g0 @ holo.alpha @ g0_inv
        return cls(holo=holo, g0=g0, g0_inv=g0_inv, m2=m2, m3=m3, m3p=m3p,
                   label=label)


def oper_alpha(n: int, q, tilt: TiltParams) -> Array:
    """Constant z-coefficient with superdiagonal sqrt(i(n-i)) and the
    characteristic data q = (q_2..q_n) spread along the bottom row with
    tilt-dependent weights sin(beta)^{1-k}."""
    q = list(q)
    if len(q) != n - 1:
        raise ValueError("need n-1 coefficients")
    a = np.zeros((n, n), dtype=complex)
    for i in range(1, n):
        a[i - 1, i] = math.sqrt(i * (n - i))
    for k, qk in enumerate(q, start=2):
        a[n - 1, n - k] += qk * tilt.sin_b ** (1 - k)
    return a


def model_background(mesh: GradedMesh, tilt: TiltParams, n: int) -> Background:
    """Exact pole background: g0 = (y sin b)^{-e0/2}, no q-data."""
    ep, e0, em = principal_triple(n)
    holo = HoloData(mesh=mesh, tilt=tilt, n=n, alpha=ep)
    w = mesh.y * tilt.sin_b
    expo = -np.diag(e0).real / 2.0
    diag = w[:, None] ** expo[None, :]
    g0 = np.zeros((mesh.ny, n, n), dtype=complex)
    idx = np.arange(n)
    g0[:, idx, idx] = diag
    dg0 = np.zeros_like(g0)
    dg0[:, idx, idx] = diag * (expo[None, :] / mesh.y[:, None])
    d2g0 = np.zeros_like(g0)
    d2g0[:, idx, idx] = diag * (expo * (expo - 1))[None, :] / mesh.y[:, None] ** 2
    return Background.from_g0_jets(holo, g0, dg0, d2g0, label="model")


@dataclass(frozen=True)
class MetricDeformation:
    """Traceless Hermitian deformation s of a reference background.

    Stored over the full grid (ny, N, N, n, n); the outer y-row must vanish
    (far boundary condition) and s must be pointwise Hermitian traceless.
    """

    background: Background
    s: Array

    def __post_init__(self):
        mesh = self.background.holo.mesh
        n = self.background.holo.n
        s = np.asarray(self.s, dtype=complex)
        if s.ndim in (2, 3):
            s = mesh.broadcast(s)
        if s.shape != (mesh.ny, mesh.torus_size, mesh.torus_size, n, n):
            raise ValueError("deformation shape does not match the mesh")
        scale = max(1.0, float(np.abs(s).max()))
        _check_herm("s", s, +1.0)
        if np.abs(np.trace(s, axis1=-2, axis2=-1)).max() > 1e-12 * scale:
            raise ValueError("s must be traceless")
        if np.abs(s[-1]).max() > 1e-12 * scale:
            raise ValueError("s must vanish on the outer boundary row")
        object.__setattr__(self, "s", s)

    def decay_exponent(self, nodes: int = 3) -> float:
        """Log-log slope of sup_z ||s|| over the smallest y-nodes.

        Rows where s vanishes identically (Dirichlet-clamped rows of a
        solver output) are skipped; with fewer than two usable rows the
        deformation is flat to rounding and inf is returned.
        """
        mesh = self.background.holo.mesh
        vals = _node_norm(self.s).reshape(mesh.ny, -1).max(axis=1)
        keep = np.nonzero(vals > 1e-300)[0][:nodes]
        if len(keep) < 2 or vals[keep].max() < 1e-14:
            return math.inf
        return float(np.polyfit(np.log(mesh.y[keep]), np.log(vals[keep]), 1)[0])


@dataclass(frozen=True)
class UnitaryFields:
    """Unitary-gauge field content; zbar components derived by the gauge
    reality conditions, the fourth connection component by the tilt lock."""

    mesh: GradedMesh
    tilt: TiltParams
    A_z: Array
    phi_z: Array
    A_y: Array
    phi_1: Array
    # optional analytic y-derivatives; residual evaluators use these when
    # present instead of differencing the (possibly singular) profiles
    dy_A_z: Array | None = None
    dy_phi_z: Array | None = None
    dy_A_y: Array | None = None
    dy_phi_1: Array | None = None

    def __post_init__(self):
        _check_herm("A_y", self.A_y, -1.0)
        _check_herm("phi_1", self.phi_1, -1.0)

    @property
    def A_zbar(self) -> Array:
        return -dag(self.A_z)

    @property
    def phi_zbar(self) -> Array:
        return -dag(self.phi_z)

    @property
    def a1(self) -> Array:
        return self.tilt.tan_b * self.phi_1

    def conjugate(self, u: Array) -> "UnitaryFields":
        """Constant unitary change of frame."""
        ud = dag(u)

        def cj(a):
            return None if a is None else u @ a @ ud

        return UnitaryFields(
            mesh=self.mesh, tilt=self.tilt,
            A_z=u @ self.A_z @ ud, phi_z=u @ self.phi_z @ ud,
            A_y=u @ self.A_y @ ud, phi_1=u @ self.phi_1 @ ud,
            dy_A_z=cj(self.dy_A_z), dy_phi_z=cj(self.dy_phi_z),
            dy_A_y=cj(self.dy_A_y), dy_phi_1=cj(self.dy_phi_1))


def chern_fields(holo: HoloData, s: MetricDeformation) -> UnitaryFields:
    """Unitary-gauge fields of the metric H determined by (background, s)."""
    bg = s.background
    if bg.holo is not holo and not np.array_equal(bg.holo.alpha, holo.alpha):
        raise ValueError("deformation was built over different holomorphic data")
    mesh, tilt = holo.mesh, holo.tilt
    sb, cb = tilt.sin_b, tilt.cos_b
    E, E_inv = _expmh_pair(0.5 * s.s)
    _, E1, E2 = expm_jet2(0.5 * s.s, 0.5 * mesh.dy(s.s), 0.5 * mesh.d2y(s.s))
    g0 = bg.g0[:, None, None]
    g0_inv = bg.g0_inv[:, None, None]
    g = E @ g0
    g_inv = g0_inv @ E_inv
    m2g = g @ holo.alpha @ g_inv
    dzg, dzbg = mesh.dz(g), mesh.dzbar(g)
    c2 = m2g - dzg @ g_inv
    c1 = -dzbg @ g_inv
    phi_z = sb * cb * (c2 + dag(c1))
    A_z = sb * sb * c2 - cb * cb * dag(c1)
    # y-coefficient: only s is differenced, the reference enters analytically
    Xs = E1 @ E_inv
    M3 = E @ bg.m3[:, None, None] @ E_inv
    X = Xs - M3
    A_y = 0.5 * (dag(X) - X)
    phi_1 = -0.5j * cb * (X + dag(X))
    # analytic y-jets of the four fields, same split applied to
    # dy g = X g and dy X; stencils touch only the deformation part
    dX = E2 @ E_inv - Xs @ Xs - comm(Xs, M3) - E @ bg.m3p[:, None, None] @ E_inv
    dyg = X @ g
    dy_c2 = comm(X, m2g) - mesh.dz(dyg) @ g_inv + dzg @ g_inv @ X
    dy_c1 = -mesh.dzbar(dyg) @ g_inv + dzbg @ g_inv @ X
    return UnitaryFields(
        mesh=mesh, tilt=tilt, A_z=A_z, phi_z=phi_z, A_y=A_y, phi_1=phi_1,
        dy_A_z=sb * sb * dy_c2 - cb * cb * dag(dy_c1),
        dy_phi_z=sb * cb * (dy_c2 + dag(dy_c1)),
        dy_A_y=0.5 * (dag(dX) - dX),
        dy_phi_1=-0.5j * cb * (dX + dag(dX)))


def hat_moment_map(bg: Background, s: Array, raw: bool = False) -> Array:
    """Moment map of H = g0^dag e^s g0, assembled in the hat frame.

    The commutator sum is weighted (cos^2 b, sin^2 b, 1) over the three
    operator directions.  With raw=True the assembly is returned as built;
    by default the result is conjugated back by e^{s/2} and projected onto
    its traceless Hermitian part, which is exact in the continuum and
    discards only an O(h^2) stencil defect (zero for y-constant s).
    """
    mesh = bg.holo.mesh
    tilt = bg.holo.tilt
    H, H_inv = _expmh_pair(s)
    m2 = bg.m2[:, None, None]
    m3 = bg.m3[:, None, None]
    m3p = bg.m3p[:, None, None]

    c1bar = H_inv @ mesh.dz(H)
    C1 = mesh.dzbar(c1bar)

    c2bar = H_inv @ mesh.dzbar(H) - H_inv @ dag(m2) @ H
    C2 = mesh.dz(c2bar) - mesh.dzbar(np.broadcast_to(m2, s.shape)) \
        + comm(m2, c2bar)

    A = H_inv @ mesh.dy(H)
    B = H_inv @ dag(m3) @ H
    C3 = mesh.dy(A) - m3p - H_inv @ dag(m3p) @ H + comm(m3 - B, A - B)

    omega = -(tilt.cos_b ** 2 * C1 + tilt.sin_b ** 2 * C2 + C3)
    E, E_inv = _expmh_pair(0.5 * s)
    out = E @ omega @ E_inv
    if raw:
        return out
    return traceless(0.5 * (out + dag(out)))


def moment_map(holo: HoloData, s: MetricDeformation, raw: bool = False) -> Array:
    if s.background.holo is not holo and \
            not np.array_equal(s.background.holo.alpha, holo.alpha):
        raise ValueError("deformation was built over different holomorphic data")
    return hat_moment_map(s.background, s.s, raw=raw)


def weighted_norm(mesh: GradedMesh, u: Array, mu: float = 1.0,
                  delta: float = 0.5, k: int = 0) -> float:
    """Weighted sup-norm y^{-mu} e^{delta y} of u and its scaled derivatives.

    Derivatives up to total order k (k <= 2) enter as y d/dy and y d/dz,
    y d/dzbar; values above 1e6 are reported as inf (divergence sentinel).
    """
    if k not in (0, 1, 2):
        raise ValueError("k must be 0, 1 or 2")
    u = np.asarray(u)
    yexp = mesh.y.reshape((mesh.ny,) + (1,) * (u.ndim - 1))

    def scaled_ops(v):
        return [yexp * mesh.dy(v), yexp * mesh.dz(v), yexp * mesh.dzbar(v)]

    total = _node_norm(u).astype(float)
    if k >= 1:
        level = scaled_ops(u)
        for v in level:
            total = total + _node_norm(v)
        if k == 2:
            for v in level:
                for w in scaled_ops(v):
                    total = total + _node_norm(w)
    weight = (mesh.y ** (-mu) * np.exp(delta * mesh.y)).reshape(yexp.shape)
    value = float(np.max(weight.reshape(total.shape[:1] + (1,) * (total.ndim - 1))
                         * total))
    return math.inf if value > 1e6 else value


def dump_field_csv(field_arr: Array, path) -> None:
    """Write one field as CSV rows (y_index, z_index, row, col, re, im).

    The two torus directions are flattened into the single z_index in
    row-major order; rows come out sorted by all four indices.
    """
    a = np.asarray(field_arr, dtype=complex)
    ny, nu, nv, n, _ = a.shape
    flat = a.reshape(ny, nu * nv, n, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y_index", "z_index", "matrix_entry_row",
                    "matrix_entry_col", "re", "im"])
        for iy in range(ny):
            for iz in range(nu * nv):
                for r in range(n):
                    for c in range(n):
                        v = flat[iy, iz, r, c]
                        w.writerow([iy, iz, r, c,
                                    repr(float(v.real)), repr(float(v.imag))])


def dump_fields_csv(prefix: str, named_fields: dict) -> list:
    paths = []
    for name in sorted(named_fields):
        p = f"{prefix}_{name}.csv"
        dump_field_csv(named_fields[name], p)
        paths.append(p)
    return paths
