"""Explicit positive-form test functions for ``Delta + sigma V`` on ``Z`` with ``sum V >= 0``.

Here ``Delta psi(x) = psi(x+1) + psi(x-1) - 2 psi(x)``.  On each half-line
the construction glues one solution that stays bounded and one that
vanishes at the origin, choosing the mix so the result vanishes at ``+-m``
with ``m = floor(sigma^-3)``:

    phi = psi_1 - eps_1 psi_2   on [0, m],      psi_1(0) = 1, psi_2(0) = 0, psi_2(1) = 1
    phi = psi_3 + eps_2 psi_4   on [-m, 0],     psi_3(0) = 1, psi_4(0) = 0, psi_4(-1) = -1

so ``phi(0) = 1``.  ``phi`` solves the equation off the origin, and
summation by parts gives exactly

    Q(phi) = sum_x [-(phi(x+1) - phi(x))^2 + sigma V(x) phi(x)^2] = eps,
    eps = (phi(1) - phi(0)) - (phi(0) - phi(-1)) + sigma V(0),

the jump of the discrete derivative at the origin with ``V(0)`` included.
For small ``sigma``, ``eps = sigma sum V + sigma^2 (c_+^2 + c_-^2) + O(sigma^3)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .lattice import BoxDomain, JumpKernel, LatticeField, Potential
from .spectral import SchrodingerOp, count_positive_eigenvalues

M_CAP = 1_000_000
SIGMA_MAX = 0.2


def choose_m(sigma: float) -> int:
    """``floor(sigma^-3)``, robust to the last-bit rounding of ``sigma**-3``."""
    raw = sigma ** -3.0
    m = math.floor(raw * (1.0 + 1e-12))
    return int(m)


def _values_1d(V: Potential) -> tuple[int, np.ndarray]:
    r = V.radius
    vals = np.zeros(2 * r + 1)
    for (x,), v in V.entries:
        vals[x + r] = v
    return r, vals


def _half_line(V: Potential, sigma: float, m: int, r: int, direction: int):
    """Bounded and origin-vanishing solutions at ``x = direction * y``, ``y = 0..m``."""
    if m <= r + 1:
        raise ValueError("m must exceed the support radius of V")
    top = r + 1
    v = np.array([V((direction * y,)) for y in range(top + 2)])
    # bounded: constant where V vanishes beyond the support, recurrence inward
    bounded = np.ones(top + 2)
    for y in range(top, 0, -1):
        bounded[y - 1] = (2.0 - sigma * v[y]) * bounded[y] - bounded[y + 1]
    bounded /= bounded[0]
    # vanishing at the origin with unit first increment, recurrence outward
    grow = np.zeros(top + 2)
    grow[1] = 1.0
    for y in range(1, top + 1):
        grow[y + 1] = (2.0 - sigma * v[y]) * grow[y] - grow[y - 1]
    if not (np.all(np.isfinite(bounded)) and np.all(np.isfinite(grow))):
        raise FloatingPointError("recurrence overflowed inside the support of V")
    # past the support the solutions are affine, so extend them in closed form
    y = np.arange(m + 1)

    def extend(a):
        out = np.empty(m + 1)
        out[:top + 2] = a
        out[top + 2:] = a[top + 1] + (y[top + 2:] - top - 1) * (a[top + 1] - a[top])
        return out

    return extend(bounded), extend(grow)


@dataclass
class ZeroMeanReport:
    sigma: float
    m: int
    eps1: float
    eps2: float
    epsilon: float
    quadratic_form: float
    predicted: float
    b_plus: float
    b_minus: float
    c2_plus: float
    c2_minus: float
    phi: LatticeField

    @property
    def positive_found(self) -> bool:
        return self.quadratic_form > 0

    def summary(self) -> dict:
        return {"sigma": self.sigma, "m": self.m, "eps1": self.eps1, "eps2": self.eps2,
                "epsilon": self.epsilon, "Q": self.quadratic_form, "predicted": self.predicted,
                "b_plus": self.b_plus, "b_minus": self.b_minus, "c2_plus": self.c2_plus,
                "c2_minus": self.c2_minus, "positive_found": self.positive_found}


def expansion_coefficients(V: Potential) -> tuple[float, float, float, float]:
    """``(b_+, b_-, c_+^2, c_-^2)`` with ``V(0)`` split evenly between the half lines.

    ``c_+^2 = sum_{eta >= 0} (sum_{xi > eta} V(xi))^2`` and mirrored for ``c_-^2``.
    """
    r, vals = _values_1d(V)
    xs = np.arange(-r, r + 1)
    v0 = vals[r]
    b_plus = 0.5 * v0 + vals[xs > 0].sum()
    b_minus = 0.5 * v0 + vals[xs < 0].sum()
    c2p = sum(vals[xs > eta].sum() ** 2 for eta in range(0, r + 1))
    c2m = sum(vals[xs < -eta].sum() ** 2 for eta in range(0, r + 1))
    return float(b_plus), float(b_minus), float(c2p), float(c2m)


def zero_mean_1d_construct(V: Potential, sigma: float, m: int | None = None) -> ZeroMeanReport:
    """Build ``phi`` for ``Delta + sigma V`` and evaluate its quadratic form.

    ``V`` must be one-dimensional and finitely supported with ``sum V >= 0``
    (``V = 0`` is accepted and gives ``Q < 0``); ``0 < sigma <= 0.2``.  ``m`` defaults to
    ``floor(sigma^-3)`` and may not exceed ``M_CAP``.
    """
    if V.dim != 1:
        raise ValueError("zero-mean construction is one-dimensional")
    if V.total < -1e-14:
        raise ValueError("construction needs sum V >= 0")
    if not 0 < sigma <= SIGMA_MAX:
        raise ValueError(f"sigma must lie in (0, {SIGMA_MAX}]")
    if m is None:
        m = choose_m(sigma)
    if m > M_CAP:
        raise ValueError(f"m = {m} exceeds the cap {M_CAP}; use a larger sigma")
    r = V.radius

    psi1, psi2 = _half_line(V, sigma, m, r, +1)
    psi3, psi4n = _half_line(V, sigma, m, r, -1)
    psi4 = -psi4n  # psi4(0) = 0, psi4(-1) = -1
    eps1 = psi1[m] / psi2[m]
    eps2 = -psi3[m] / psi4[m]
    right = psi1 - eps1 * psi2
    left = psi3 + eps2 * psi4
    right[m] = left[m] = 0.0
    phi = np.concatenate([left[::-1], right[1:]])
    xs = np.arange(-m, m + 1)
    pot = V.lookup(xs[:, None])
    padded = np.concatenate([[0.0], phi, [0.0]])
    q = float(-np.sum(np.diff(padded) ** 2) + sigma * np.sum(pot * phi**2))
    epsilon = float((right[1] - right[0]) - (left[0] - left[1]) + sigma * V((0,)))
    b_plus, b_minus, c2p, c2m = expansion_coefficients(V)
    predicted = sigma * V.total + sigma**2 * (c2p + c2m)
    return ZeroMeanReport(sigma, m, float(eps1), float(eps2), epsilon, q, float(predicted),
                          b_plus, b_minus, c2p, c2m,
                          LatticeField(BoxDomain(1, m, "killed"), phi))


def lattice_laplacian_op(V: Potential, sigma: float, radius: int) -> SchrodingerOp:
    """``Delta + sigma V`` on a killed box: the nearest-neighbour ``L`` scaled by 2."""
    return SchrodingerOp(JumpKernel.nearest_neighbor(1), V, sigma, 2.0,
                         BoxDomain(1, radius, "killed"))


def confirm_positive_eigenvalue(V: Potential, sigma: float, radius: int) -> tuple[int, float]:
    """``(count, lambda_top)`` for ``Delta + sigma V`` on the killed box of ``radius``."""
    op = lattice_laplacian_op(V, sigma, radius)
    count = count_positive_eigenvalues(op)
    n = op.domain.n_sites
    d = sigma * op.potential_diagonal() - 2.0
    e = np.ones(n - 1)
    lam = sla.eigvalsh_tridiagonal(d, e, select="i", select_range=(n - 1, n - 1))
    return count, float(lam[0])
