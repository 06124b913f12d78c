"""Graded half-line mesh with a torus factor, plus difference stencils.

The y-mesh is geometric from y_min up to 1 (ratio <= the requested grading)
and uniform from 1 to y_max.  First/second derivative stencils are 3-point,
exact on quadratics also on the nonuniform part; rows at both ends are
one-sided.  Torus derivatives are central differences on a periodic uniform
N x N grid; N=1 makes them identically zero (z-invariant mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


def _lagrange_d1(xs, at):
    # weights w s.t. sum w_i f(xs_i) = p'(at), p the quadratic through xs
    x0, x1, x2 = xs
    return np.array([
        (2 * at - x1 - x2) / ((x0 - x1) * (x0 - x2)),
        (2 * at - x0 - x2) / ((x1 - x0) * (x1 - x2)),
        (2 * at - x0 - x1) / ((x2 - x0) * (x2 - x1)),
    ])


def _lagrange_d2(xs):
    x0, x1, x2 = xs
    return np.array([
        2.0 / ((x0 - x1) * (x0 - x2)),
        2.0 / ((x1 - x0) * (x1 - x2)),
        2.0 / ((x2 - x0) * (x2 - x1)),
    ])


@dataclass(frozen=True, eq=False)
class GradedMesh:
    y: Array
    ratio: float
    torus_size: int
    period: float
    dmat: Array = field(repr=False)
    d2mat: Array = field(repr=False)
    wquad: Array = field(repr=False)

    @property
    def ny(self) -> int:
        return len(self.y)

    @property
    def below_one(self) -> int:
        return int(np.sum(self.y < 1.0))

    def dy(self, f: Array) -> Array:
        return np.einsum("ij,j...->i...", self.dmat, f)

    def d2y(self, f: Array) -> Array:
        return np.einsum("ij,j...->i...", self.d2mat, f)

    def integrate_y(self, f: Array) -> Array:
        return np.einsum("i,i...->...", self.wquad, f)

    # torus derivatives act on axes 1 (x-direction) and 2 (y-direction of the
    # torus chart); z = u + i v, dz = (du - i dv)/2, dzbar = (du + i dv)/2
    def _du(self, f: Array, axis: int) -> Array:
        if self.torus_size == 1:
            return np.zeros_like(f)
        h = self.period / self.torus_size
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h)

    def dz(self, f: Array) -> Array:
        return 0.5 * (self._du(f, 1) - 1j * self._du(f, 2))

    def dzbar(self, f: Array) -> Array:
        return 0.5 * (self._du(f, 1) + 1j * self._du(f, 2))

    def torus_coords(self) -> tuple[Array, Array]:
        u = self.period * np.arange(self.torus_size) / self.torus_size
        return u, u.copy()

    def zeros(self, n: int) -> Array:
        N = self.torus_size
        return np.zeros((self.ny, N, N, n, n), dtype=complex)

    def broadcast(self, m: Array) -> Array:
        """Tile a constant matrix (or a y-profile of matrices) over the grid."""
        N = self.torus_size
        m = np.asarray(m, dtype=complex)
        if m.ndim == 2:
            out = np.empty((self.ny, N, N) + m.shape, dtype=complex)
            out[...] = m
        elif m.ndim == 3:  # (ny, n, n) y-profile
            out = np.empty((self.ny, N, N) + m.shape[1:], dtype=complex)
            out[:, :, :] = m[:, None, None]
        else:
            raise ValueError("expected (n,n) or (ny,n,n)")
        return out

    def refine(self) -> "GradedMesh":
        """Halve every y-interval (midpoint insertion); torus factor unchanged."""
        y = self.y
        mid = 0.5 * (y[1:] + y[:-1])
        yy = np.empty(2 * len(y) - 1)
        yy[0::2] = y
        yy[1::2] = mid
        return _finish_mesh(yy, self.ratio, self.torus_size, self.period)


def _finish_mesh(y: Array, ratio, torus_size, period) -> GradedMesh:
    ny = len(y)
    d = np.zeros((ny, ny))
    d2 = np.zeros((ny, ny))
    for i in range(ny):
        j = min(max(i, 1), ny - 2)  # stencil center clamped to the interior
        xs = y[j - 1:j + 2]
        d[i, j - 1:j + 2] = _lagrange_d1(xs, y[i])
        d2[i, j - 1:j + 2] = _lagrange_d2(xs)
        # constants must be annihilated exactly, not to rounding: the tiny
        # row-sum residue otherwise amplifies through repeated differences
        d[i, j] -= d[i].sum()
        d2[i, j] -= d2[i].sum()
    w = np.zeros(ny)
    dy = np.diff(y)
    w[:-1] += 0.5 * dy
    w[1:] += 0.5 * dy
    return GradedMesh(y=y, ratio=float(ratio), torus_size=int(torus_size),
                      period=float(period), dmat=d, d2mat=d2, wquad=w)


def make_mesh(y_min: float, y_max: float, count: int, grading: float = 1.08,
              torus_size: int = 1, period: float = 1.0) -> GradedMesh:
    """Build the graded mesh: geometric below 1, uniform above.

    count is the total number of y-nodes; the geometric part gets
    ceil(ln(1/y_min)/ln(grading)) intervals with the ratio shrunk so the
    last geometric node lands exactly on 1.
    """
    if not (0 < y_min < 1 < y_max):
        raise ValueError("need 0 < y_min < 1 < y_max")
    if count < 16:
        raise ValueError("count too small")
    if grading <= 1:
        raise ValueError("grading ratio must exceed 1")
    if torus_size < 1 or int(torus_size) != torus_size:
        raise ValueError("torus_size must be a positive integer")
    if period <= 0:
        raise ValueError("period must be positive")
    k = int(np.ceil(np.log(1.0 / y_min) / np.log(grading)))
    if k + 2 >= count:
        raise ValueError("count too small for this grading/y_min")
    rho = (1.0 / y_min) ** (1.0 / k)
    geo = y_min * rho ** np.arange(k + 1)
    geo[-1] = 1.0
    m = count - (k + 1)
    uni = 1.0 + (y_max - 1.0) * np.arange(1, m + 1) / m
    uni[-1] = y_max
    return _finish_mesh(np.concatenate([geo, uni]), grading, torus_size, period)
