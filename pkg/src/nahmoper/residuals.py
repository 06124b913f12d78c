"""Residual systems for tilted field configurations in unitary gauge.

Three equivalent presentations of the same flatness-plus-moment-map content:
the raw commutator system (four matrix expressions), a reduced five-equation
form, and the one-parameter family used for the twisted topological
equations.  All evaluators take a UnitaryFields instance; y-derivatives come
from the analytic jets attached to the fields when available (the chern
split provides them, so exact backgrounds give residuals at rounding level
rather than stencil truncation) and fall back to mesh stencils otherwise.
Everything is pointwise algebra plus first differences, so constant unitary
conjugation commutes with each evaluator.
"""

from __future__ import annotations

import numpy as np

from .fields import UnitaryFields
from .lie import comm, dag

Array = np.ndarray


def _dy_phi_1(f: UnitaryFields) -> Array:
    """Plain y-derivative of phi_1: attached jet if present, else stencil."""
    if f.dy_phi_1 is not None:
        return f.dy_phi_1
    return f.mesh.dy(f.phi_1)


def _jets(f: UnitaryFields):
    """Covariant first derivatives and curvature components used everywhere."""
    mesh = f.mesh
    Az, Azb = f.A_z, f.A_zbar
    pz, pzb = f.phi_z, f.phi_zbar
    Ay, p1 = f.A_y, f.phi_1
    dy_pz = f.dy_phi_z if f.dy_phi_z is not None else mesh.dy(pz)
    dy_Az = f.dy_A_z if f.dy_A_z is not None else mesh.dy(Az)
    j = {}
    j["F_zzb"] = mesh.dz(Azb) - mesh.dzbar(Az) + comm(Az, Azb)
    j["Dz_pzb"] = mesh.dz(pzb) + comm(Az, pzb)
    j["Dzb_pz"] = mesh.dzbar(pz) + comm(Azb, pz)
    j["f"] = j["F_zzb"] - comm(pz, pzb)
    j["Sm"] = j["Dz_pzb"] - j["Dzb_pz"]
    j["Sp"] = j["Dz_pzb"] + j["Dzb_pz"]
    j["Dy_p1"] = _dy_phi_1(f) + comm(Ay, p1)
    j["Dy_pz"] = dy_pz + comm(Ay, pz)
    j["Dy_pzb"] = -dag(dy_pz) + comm(Ay, pzb)
    j["F_yz"] = dy_Az - mesh.dz(Ay) + comm(Ay, Az)
    j["F_yzb"] = -dag(dy_Az) - mesh.dzbar(Ay) + comm(Ay, Azb)
    j["Dz_p1"] = mesh.dz(p1) + comm(Az, p1)
    j["Dzb_p1"] = mesh.dzbar(p1) + comm(Azb, p1)
    return j


def commutator_residuals(f: UnitaryFields, tilt=None):
    """The four commutator combinations (I12, I13, I23, Imm)."""
    t = tilt if tilt is not None else f.tilt
    sb, cb = t.sin_b, t.cos_b
    s2, c2 = 2 * sb * cb, cb * cb - sb * sb
    j = _jets(f)
    i12 = s2 * j["f"] + c2 * j["Sm"] - j["Sp"]
    i13 = (j["F_yzb"] - (sb / cb) * j["Dy_pzb"] + (1j / cb) * j["Dzb_p1"]
           - (1j * sb / cb ** 2) * comm(f.phi_zbar, f.phi_1))
    i23 = (j["F_yz"] + (cb / sb) * j["Dy_pz"] + (1j / cb) * j["Dz_p1"]
           + (1j / sb) * comm(f.phi_z, f.phi_1))
    imm = c2 * j["f"] - s2 * j["Sm"] - (2j / cb) * j["Dy_p1"]
    return i12, i13, i23, imm


def unitary_coefficients(f: UnitaryFields, tilt=None):
    """Connection coefficients c1, c2, c3 of the three tilted operators."""
    t = tilt if tilt is not None else f.tilt
    sb, cb = t.sin_b, t.cos_b
    c1 = f.A_zbar - (sb / cb) * f.phi_zbar
    c2 = f.A_z + (cb / sb) * f.phi_z
    c3 = f.A_y - (1j / cb) * f.phi_1
    return c1, c2, c3


def moment_from_coefficients(f: UnitaryFields, tilt=None) -> Array:
    """Second evaluation path for Imm, via the operator coefficients."""
    t = tilt if tilt is not None else f.tilt
    mesh = f.mesh
    sb, cb = t.sin_b, t.cos_b
    c1, c2, c3 = unitary_coefficients(f, t)
    k1 = -mesh.dz(c1) - mesh.dzbar(dag(c1)) - comm(c1, dag(c1))
    k2 = -mesh.dz(dag(c2)) - mesh.dzbar(c2) - comm(c2, dag(c2))
    # c3 + c3^dag collapses to the phi_1 part, so its derivative can share
    # the jet-or-stencil choice made by the commutator path
    k3 = -(2j / cb) * _dy_phi_1(f) + comm(c3, dag(c3))
    return -cb * cb * k1 - sb * sb * k2 + k3


def reduced_residuals(f: UnitaryFields, tilt=None):
    """Five-equation reduced form of the commutator system."""
    t = tilt if tilt is not None else f.tilt
    sb, cb = t.sin_b, t.cos_b
    s2, c2 = 2 * sb * cb, cb * cb - sb * sb
    j = _jets(f)
    eq1 = j["f"] + (c2 / s2) * j["Sm"]
    eq2 = 1j * j["Dy_p1"] + j["Sm"] / (4 * sb)
    eq3 = (1j * j["F_yz"] + (c2 / cb) * j["Dz_p1"]
           - 2 * sb * comm(f.phi_z, f.phi_1))
    eq4 = (1j * j["Dy_pz"] - 2 * sb * j["Dz_p1"]
           - (c2 / cb) * comm(f.phi_z, f.phi_1))
    eq5 = j["Sp"]
    return eq1, eq2, eq3, eq4, eq5


def gebe_residuals(f: UnitaryFields, t_par: float | None = None,
                   a1: Array | None = None):
    """One-parameter twisted system; t_par defaults to the tilt value
    tan(pi/4 - 3 beta/2), a1 to the locked value tan(beta) phi_1.

    Returns a dict keyed 1a, 1b, 2a, 2b, 3 (the two form-valued equations
    split into components).
    """
    mesh = f.mesh
    tilt = f.tilt
    if t_par is None:
        t_par = tilt.t
    if t_par == 0:
        raise ValueError("parameter t must be nonzero")
    locked = a1 is None
    if locked:
        a1 = f.a1
    cm = -(1.0 - t_par ** 2) / (2.0 * t_par)
    cp = (1.0 + t_par ** 2) / (2.0 * t_par)
    j = _jets(f)
    if locked:
        # a1 proportional to phi_1, so reuse its jet-or-stencil derivative
        dy_a1 = f.tilt.tan_b * j["Dy_p1"]
    else:
        dy_a1 = mesh.dy(a1) + comm(f.A_y, a1)
    dzb_a1 = mesh.dzbar(a1) + comm(f.A_zbar, a1)
    hol_1 = j["Dzb_p1"] + comm(f.phi_zbar, a1)
    out = {
        "1a": j["f"] + cm * j["Sm"] - 2j * cp * j["Dy_p1"],
        "1b": j["F_yzb"] + cm * j["Dy_pzb"] + 1j * cp * hol_1,
        "2a": dy_a1 + cm * j["Dy_p1"] + 0.5j * cp * j["Sm"],
        "2b": (dzb_a1 - comm(f.phi_zbar, f.phi_1) + cm * hol_1
               - 1j * cp * j["Dy_pzb"]),
        "3": j["Sp"] + 0.5 * comm(f.phi_1, a1),
    }
    return out


def hitchin_residuals(f: UnitaryFields):
    """Surface-only content: curvature-plus-commutator and holomorphicity.

    For y-independent fields with phi_1 = 0 the tilted system collapses to
    this pair (F + [phi, phi^dag] in the z z-bar direction, and the
    anti-holomorphic derivative of phi).
    """
    mesh = f.mesh
    fc = (mesh.dz(f.A_zbar) - mesh.dzbar(f.A_z) + comm(f.A_z, f.A_zbar)
          - comm(f.phi_z, f.phi_zbar))
    hol = mesh.dzbar(f.phi_z) + comm(f.A_zbar, f.phi_z)
    return fc, hol


def stack_residuals(parts) -> Array:
    """Flatten a residual collection (tuple or dict) to one real vector."""
    if isinstance(parts, dict):
        parts = [parts[k] for k in sorted(parts)]
    vecs = []
    for p in parts:
        a = np.asarray(p, dtype=complex).ravel()
        vecs.append(a.real)
        vecs.append(a.imag)
    return np.concatenate(vecs)
