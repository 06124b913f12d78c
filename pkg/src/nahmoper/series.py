"""Finite series in y^j log^l with matrix coefficients, plus matrix-function jets.

Used to build the near-boundary metric expansion: terms are keyed by (j, l)
with j an integer power of y (negative allowed) and l >= 0 a power of log y.
The grading that matters is the "hat" order of an entry, j + (a - b) for
matrix position (a, b); it is additive under matrix products.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm, logm

Array = np.ndarray


class YLogSeries:
    """dict[(j, l)] -> (n, n) complex coefficient, with termwise calculus."""

    def __init__(self, n: int, terms: dict | None = None):
        self.n = n
        self.terms: dict[tuple[int, int], Array] = {}
        if terms:
            for k, m in terms.items():
                self.add_term(k[0], k[1], m)

    def add_term(self, j: int, l: int, m: Array):
        m = np.asarray(m, dtype=complex)
        if l < 0:
            raise ValueError("log power must be >= 0")
        key = (int(j), int(l))
        if key in self.terms:
            self.terms[key] = self.terms[key] + m
        else:
            self.terms[key] = m.copy()
        return self

    def copy(self) -> "YLogSeries":
        return YLogSeries(self.n, {k: m for k, m in self.terms.items()})

    def prune(self, tol: float = 0.0) -> "YLogSeries":
        self.terms = {k: m for k, m in self.terms.items()
                      if np.max(np.abs(m)) > tol}
        return self

    def __add__(self, other: "YLogSeries") -> "YLogSeries":
        out = self.copy()
        for (j, l), m in other.terms.items():
            out.add_term(j, l, m)
        return out.prune()

    def __sub__(self, other: "YLogSeries") -> "YLogSeries":
        return (self + other.scale(-1.0)).prune()

    def scale(self, c: complex) -> "YLogSeries":
        return YLogSeries(self.n, {k: c * m for k, m in self.terms.items()})

    def mat(self, other: "YLogSeries") -> "YLogSeries":
        out = YLogSeries(self.n)
        for (j1, l1), m1 in self.terms.items():
            for (j2, l2), m2 in other.terms.items():
                out.add_term(j1 + j2, l1 + l2, m1 @ m2)
        return out.prune(1e-300)

    def comm(self, other: "YLogSeries") -> "YLogSeries":
        return self.mat(other) - other.mat(self)

    def dy(self) -> "YLogSeries":
        # d/dy [y^j log^l] = j y^{j-1} log^l + l y^{j-1} log^{l-1}
        out = YLogSeries(self.n)
        for (j, l), m in self.terms.items():
            if j != 0:
                out.add_term(j - 1, l, j * m)
            if l > 0:
                out.add_term(j - 1, l - 1, l * m)
        return out.prune(1e-300)

    def wconj(self, two_t: int, sinb: float) -> "YLogSeries":
        """Conjugate by W^t = (y sinb)^{-t e0}, 2t = two_t integer.

        Entry (a, b) picks up (y sinb)^{2t(a-b)} (0-indexed rows/cols give the
        same difference), so each entry shifts its y-power by 2t(a-b).
        """
        out = YLogSeries(self.n)
        n = self.n
        for (j, l), m in self.terms.items():
            for a in range(n):
                for b in range(n):
                    if m[a, b] == 0:
                        continue
                    d = two_t * (a - b)
                    e = np.zeros((n, n), dtype=complex)
                    e[a, b] = m[a, b] * sinb**d
                    out.add_term(j + d, l, e)
        return out.prune(1e-300)

    def star_w(self, sinb: float) -> "YLogSeries":
        """W-metric conjugate: (s*)_{ab}(y) = (y sinb)^{2(b-a)} conj(s_{ba}(y))."""
        out = YLogSeries(self.n)
        n = self.n
        for (j, l), m in self.terms.items():
            md = m.conj().T
            for a in range(n):
                for b in range(n):
                    if md[a, b] == 0:
                        continue
                    d = 2 * (b - a)
                    e = np.zeros((n, n), dtype=complex)
                    e[a, b] = md[a, b] * sinb**d
                    out.add_term(j + d, l, e)
        return out.prune(1e-300)

    def truncate_hat(self, cap: int) -> "YLogSeries":
        """Zero every entry whose hat order j + (a - b) exceeds cap."""
        out = YLogSeries(self.n)
        n = self.n
        for (j, l), m in self.terms.items():
            mm = m.copy()
            for a in range(n):
                for b in range(n):
                    if j + (a - b) > cap:
                        mm[a, b] = 0.0
            out.add_term(j, l, mm)
        return out.prune(1e-300)

    def min_hat(self) -> int | None:
        orders = [j + (a - b)
                  for (j, l), m in self.terms.items()
                  for a in range(self.n) for b in range(self.n)
                  if abs(m[a, b]) > 1e-13]
        return min(orders) if orders else None

    def truncate_pow(self, cap: int) -> "YLogSeries":
        """Drop whole terms with plain y-power above cap."""
        out = YLogSeries(self.n)
        for (j, l), m in self.terms.items():
            if j <= cap:
                out.add_term(j, l, m)
        return out

    def min_pow(self) -> int | None:
        return min((j for (j, l) in self.terms), default=None)

    def max_log(self) -> int:
        return max((l for (j, l), m in self.terms.items()), default=0)

    def exp(self, cap: int) -> "YLogSeries":
        """exp of a series with positive minimum hat order; exact up to cap."""
        mh = self.min_hat()
        out = YLogSeries(self.n).add_term(0, 0, np.eye(self.n))
        if mh is None:
            return out
        if mh < 1:
            raise ValueError("series exp needs positive hat order")
        power = out.copy()
        kmax = cap // mh + 1
        for k in range(1, kmax + 1):
            power = power.mat(self).truncate_hat(cap + 2 * self.n)
            out = out + power.scale(1.0 / math.factorial(k))
        return out.prune(1e-300)

    def exp_pow(self, cap: int) -> "YLogSeries":
        """exp of a series with positive minimum y-power, exact through y^cap.

        Plain-power counterpart of exp(): needed when negative entry grading
        makes the hat order of a term nonpositive while its y-power is not.
        """
        mp = self.min_pow()
        out = YLogSeries(self.n).add_term(0, 0, np.eye(self.n))
        if mp is None:
            return out
        if mp < 1:
            raise ValueError("series exp needs positive y-power")
        power = out.copy()
        for k in range(1, cap // mp + 2):
            power = power.mat(self).truncate_pow(cap)
            if not power.terms:
                break
            out = out + power.scale(1.0 / math.factorial(k))
        return out.prune(1e-300)

    def evaluate(self, y: Array) -> Array:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        ln = np.log(y)
        out = np.zeros((len(y), self.n, self.n), dtype=complex)
        for (j, l), m in self.terms.items():
            out += (y**j * ln**l)[:, None, None] * m
        return out

    def jets(self, y: Array) -> tuple[Array, Array, Array]:
        d1 = self.dy()
        return self.evaluate(y), d1.evaluate(y), d1.dy().evaluate(y)

    def by_power(self) -> dict[int, dict[int, Array]]:
        out: dict[int, dict[int, Array]] = {}
        for (j, l), m in self.terms.items():
            out.setdefault(j, {})[l] = m
        return out


def linop_to_matrix(fun, n: int) -> Array:
    """Matrix of a linear map on n x n complex matrices in the E_ab basis."""
    cols = []
    for a in range(n):
        for b in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[a, b] = 1.0
            cols.append(fun(e).reshape(-1))
    return np.array(cols).T


def expm_jet2(m: Array, m1: Array, m2: Array) -> tuple[Array, Array, Array]:
    """(e^M, (e^M)', (e^M)'') for a curve M(y) with derivatives m1, m2.

    Block upper-triangular embedding: expm of [[M, M', M''/2], [0, M, M'],
    [0, 0, M]] has (0,1) block = (e^M)' and (0,2) block = (e^M)''/2.
    """
    n = m.shape[-1]
    z = np.zeros_like(m)
    big = np.block([[m, m1, 0.5 * m2], [z, m, m1], [z, z, m]])
    e = expm(big)
    return (e[..., :n, :n], e[..., :n, n:2 * n], 2.0 * e[..., :n, 2 * n:])


def logm_jet2(p: Array, p1: Array, p2: Array) -> tuple[Array, Array, Array]:
    """(log P, (log P)', (log P)'') for a curve P(y), same embedding as expm_jet2."""
    n = p.shape[-1]
    z = np.zeros_like(p)
    big = np.block([[p, p1, 0.5 * p2], [z, p, p1], [z, z, p]])
    lg = logm(big)
    return (lg[..., :n, :n], lg[..., :n, n:2 * n], 2.0 * lg[..., :n, 2 * n:])


def dexp_herm(s: Array, e: Array) -> Array:
    """Frechet derivative of expm at Hermitian s in direction e (batched).

    In the eigenbasis of s the kernel is the divided difference
    (exp(a)-exp(b))/(a-b) = exp((a+b)/2) sinh(d)/d with d=(a-b)/2.
    """
    lam, u = np.linalg.eigh(s)
    et = np.swapaxes(u.conj(), -1, -2) @ e @ u
    d = 0.5 * (lam[..., :, None] - lam[..., None, :])
    ratio = np.ones_like(d)
    nz = d != 0.0
    ratio[nz] = np.sinh(d[nz]) / d[nz]
    ker = np.exp(0.5 * (lam[..., :, None] + lam[..., None, :])) * ratio
    return u @ (ker * et) @ np.swapaxes(u.conj(), -1, -2)
