"""Second moment, Lyapunov exponents and their bounds.

For ``u(0, .) = 1`` the second moment ``m_2(t, x) = <u(t, 0) u(t, x)>`` obeys

    dm/dt = 2 kappa L m + B(x) m,      m(0, .) = 1,

and ``gamma_2`` is the top of the spectrum of ``2 kappa L + B``.  Bounds for
``gamma_p`` with ``p >= 3`` follow from grouping the pair potential into
blocks (see :mod:`pamlab.partition`) and from the rate-``kappa`` probability
``exp(-kappa t)`` of a walker never jumping.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.special import logsumexp

from .lattice import BoxDomain, Correlator, JumpKernel, LatticeField, Potential, generator_matrix
from .spectral import SchrodingerOp, top_eigenvalue
from .walks import fk_log_weights, fk_lyapunov_estimate

DEFAULT_M2_RADIUS = {1: 64, 2: 32, 3: 12}
DEFAULT_GAMMA2_RADIUS = {1: 200, 2: 16, 3: 10}
RK4_LOAD = 0.1


class EigenSolverError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# deterministic second moment


@dataclass
class M2Series:
    times: np.ndarray
    fields: list[LatticeField]

    def at_origin(self) -> np.ndarray:
        return np.array([f.at((0,) * f.domain.dim) for f in self.fields])


def solve_m2(kernel: JumpKernel, kappa: float, B: Potential, t_grid,
             domain: BoxDomain | None = None) -> M2Series:
    """Classical RK4 for the ``m_2`` equation on a periodic box.

    Substeps are uniform inside each interval of ``t_grid`` with
    ``h * (2 kappa ||L|| + max|B|) <= 0.1`` (``||L|| <= 2``).  At
    ``kappa = 0`` the sites decouple and ``exp(B t)`` is returned.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    d = kernel.dim
    if domain is None:
        domain = BoxDomain(d, DEFAULT_M2_RADIUS.get(d, 8), "periodic")
    if domain.boundary != "periodic":
        raise ValueError("solve_m2 works on a periodic box")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be nonnegative and nondecreasing")
    pot = B.lookup(domain.coords)
    if kappa == 0:
        # decoupled scalar equations, solved exactly
        return M2Series(t_grid, [LatticeField(domain, np.exp(pot * t).reshape(domain.shape))
                                 for t in t_grid])
    A = generator_matrix(kernel, domain, 2.0 * kappa, pot)
    rho = 4.0 * kappa + float(np.abs(pot).max())
    h_max = RK4_LOAD / rho if rho > 0 else math.inf
    m = np.ones(domain.n_sites)
    now = 0.0
    out = []
    for t in t_grid:
        span = t - now
        if span > 0:
            n_sub = max(1, math.ceil(span / h_max - 1e-9))
            h = span / n_sub
            for _ in range(n_sub):
                k1 = A @ m
                k2 = A @ (m + 0.5 * h * k1)
                k3 = A @ (m + 0.5 * h * k2)
                k4 = A @ (m + h * k3)
                m = m + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(m)):
                raise FloatingPointError(f"m2 became non-finite by t = {t}")
            now = t
        out.append(LatticeField(domain, m.reshape(domain.shape).copy()))
    return M2Series(t_grid, out)


# --------------------------------------------------------------------------
# gamma_2


def gamma2(kernel: JumpKernel, kappa: float, B: Potential, radius: int | None = None,
           tol: float = 1e-6) -> float:
    """``max(0, top of the spectrum of 2 kappa L + B)`` from killed boxes.

    Boxes start at ``radius`` and double until successive values agree to
    ``tol``.  Killed-box values are lower bounds, so an unstabilized trace
    returns its last (largest) value.  Raises :class:`EigenSolverError` when
    the eigensolver itself fails.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if not B.entries or float(B.values.max()) <= 0:
        return 0.0
    d = kernel.dim
    radius = radius or DEFAULT_GAMMA2_RADIUS.get(d, 8)
    radius = max(radius, 4, B.radius + 2)
    op = SchrodingerOp(kernel, B, 1.0, 2.0 * kappa, BoxDomain(d, radius, "killed"))
    rep = top_eigenvalue(op, tol=tol)
    if not rep.converged:
        raise EigenSolverError(f"eigensolver did not converge (best iterate {rep.lambda_top})")
    return max(0.0, rep.lambda_top)


def gamma2_closed_form(kappa: float) -> float:
    """``gamma_2`` for ``2 kappa L + delta_0`` with the nearest-neighbour walk on ``Z``."""
    return math.sqrt(4 * kappa**2 + 1) - 2 * kappa


# --------------------------------------------------------------------------
# bounds


@dataclass
class BoundSet:
    """Bounds on moment Lyapunov exponents, each in the normalization it is proved in.

    ``*_over_p`` bound ``gamma_p / p``; ``refined_lower_over_pm1`` bounds
    ``gamma_p / (p - 1)``.  The ``*_rate`` lower bounds use the holding rate
    ``kappa`` of the sampler; the ``*_dim_rate`` ones use the rates ``kappa d``
    and ``2 kappa d`` that appear in the literature bound.
    """

    p: int
    kappa: float
    b0: float
    dim: int
    crude_upper_over_p: float
    crude_lower_over_p_rate: float
    crude_lower_over_p_dim_rate: float
    refined_upper_over_p: float
    refined_lower_over_pm1_rate: float
    refined_lower_over_pm1_dim_rate: float
    gamma2_kappa_over_p: float
    gamma2_kappa_over_pm1: float

    def as_row(self) -> dict:
        return asdict(self)


def gamma_p_bounds(p: int, kappa: float, b0: float, gamma2_at: Callable[[float], float],
                   dim: int = 1) -> BoundSet:
    if p < 2:
        raise ValueError("p must be >= 2")
    g_p = float(gamma2_at(kappa / p))
    g_pm1 = float(gamma2_at(kappa / (p - 1)))
    base = 0.5 * (p - 1) * b0
    refined_base = g_pm1 + 0.5 * b0 * (p - 2)
    return BoundSet(
        p=p, kappa=kappa, b0=b0, dim=dim,
        crude_upper_over_p=base,
        crude_lower_over_p_rate=base - kappa,
        crude_lower_over_p_dim_rate=base - kappa * dim,
        refined_upper_over_p=(p // 2) * g_p,
        refined_lower_over_pm1_rate=refined_base - kappa,
        refined_lower_over_pm1_dim_rate=refined_base - 2 * kappa * dim,
        gamma2_kappa_over_p=g_p,
        gamma2_kappa_over_pm1=g_pm1,
    )


def weak_intermittency_threshold(kappa: float, b0: float) -> float:
    """Orders ``p`` above ``2 + 2 kappa / B(0)`` have ``gamma_p / p > 0``."""
    return 2.0 + 2.0 * kappa / b0


# --------------------------------------------------------------------------
# table


@dataclass
class LyapunovTable:
    kernel_dim: int
    kappa: float
    b0: float
    rows: list[BoundSet]
    mc: dict[int, tuple[float, float, str]]

    _columns = ("p", "crude_lower_over_p_rate", "crude_lower_over_p_dim_rate", "crude_upper_over_p",
                "refined_lower_over_pm1_rate", "refined_lower_over_pm1_dim_rate",
                "refined_upper_over_p", "gamma2_kappa_over_p", "gamma2_kappa_over_pm1",
                "mc_slope", "mc_stderr", "mc_status")

    def records(self) -> list[dict]:
        out = []
        for r in self.rows:
            rec = {c: getattr(r, c) for c in self._columns[:9]}
            slope, se, status = self.mc.get(r.p, (math.nan, math.nan, "not_run"))
            rec.update(mc_slope=slope, mc_stderr=se, mc_status=status)
            out.append(rec)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kappa", "b0", *self._columns])
        for rec in self.records():
            w.writerow([repr(self.kappa), repr(self.b0)] + [
                rec[c] if isinstance(rec[c], (int, str)) else repr(float(rec[c]))
                for c in self._columns])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"kappa": self.kappa, "b0": self.b0, "dim": self.kernel_dim,
                           "rows": self.records()})


def build_lyapunov_table(kernel: JumpKernel, kappa: float, B: Correlator, p_values,
                         mc_t_grid=None, mc_paths: int = 0, seed: int = 0) -> LyapunovTable:
    cache: dict[float, float] = {}

    def g2(k):
        if k not in cache:
            cache[k] = gamma2(kernel, k, B)
        return cache[k]

    rows = [gamma_p_bounds(p, kappa, B.b0, g2, kernel.dim) for p in p_values]
    mc = {}
    if mc_paths and mc_t_grid is not None:
        for p in p_values:
            est = fk_lyapunov_estimate(kernel, p, kappa, B, mc_t_grid, mc_paths, seed + p)
            mc[p] = (est.slope, est.stderr, est.status)
    return LyapunovTable(kernel.dim, kappa, B.b0, rows, mc)


# --------------------------------------------------------------------------
# diffusivity scaling


def scaling_check(kernel: JumpKernel, kappa: float, alpha: float, p: int, B: Potential, t: float,
                  domain: BoxDomain | None = None, n_paths: int = 20_000, seed: int = 0) -> float:
    """``|ln m~_p(t) / t - alpha ln m_p(alpha t) / (alpha t)|``.

    ``m~`` uses diffusivity ``kappa`` with potential ``alpha B``; ``m`` uses
    ``kappa / alpha`` with ``B``.  For ``p = 2`` both sides come from
    :func:`solve_m2`; for ``p >= 3`` from Feynman-Kac with common random
    numbers, under which the two path ensembles are exact time changes of
    each other.
    """
    if not alpha > 0 or not t > 0:
        raise ValueError("need alpha > 0 and t > 0")
    if p < 2:
        raise ValueError("p must be >= 2")
    aB = B.scaled(alpha)
    if p == 2:
        lhs = math.log(solve_m2(kernel, kappa, aB, [t], domain).at_origin()[0]) / t
        rhs = math.log(solve_m2(kernel, kappa / alpha, B, [alpha * t], domain).at_origin()[0]) / t
        return abs(lhs - rhs)
    lw1 = fk_log_weights(kernel, p, kappa, aB, [t], n_paths, seed)[:, 0]
    lw2 = fk_log_weights(kernel, p, kappa / alpha, B, [alpha * t], n_paths, seed)[:, 0]
    return abs(float(logsumexp(lw1) - logsumexp(lw2))) / t


def spectral_scaling_residual(kernel: JumpKernel, kappa: float, alpha: float, B: Potential,
                              radius: int = 200) -> float:
    """``lam_top(2 kappa L + alpha B) - alpha lam_top(2 (kappa/alpha) L + B)`` by dense solves."""
    dom = BoxDomain(kernel.dim, radius, "killed")

    def top(op):
        return float(sla.eigvalsh(op.matrix().toarray(), subset_by_index=[op.domain.n_sites - 1] * 2)[0])

    lhs = top(SchrodingerOp(kernel, B, alpha, 2.0 * kappa, dom))
    rhs = top(SchrodingerOp(kernel, B, 1.0, 2.0 * kappa / alpha, dom))
    return lhs - alpha * rhs


# --------------------------------------------------------------------------
# critical order p_0


def p0_estimate(kernel: JumpKernel, kappa: float, B: Correlator, method: str = "bounds",
                p_max: int = 100_000, mc_t_grid=None, mc_paths: int = 20_000,
                seed: int = 0) -> int | str:
    """Smallest ``p`` certified to have ``gamma_p > 0``.

    ``"bounds"``: for ``p = 2`` the exact ``gamma_2``; for ``p >= 3`` the
    larger of the rate-consistent crude and refined lower bounds.  Orders
    where both bounds are provably nonpositive (``gamma_2 <= B(0)``) are
    skipped without eigenvalue work.  ``"mc"``: smallest ``p`` whose
    Feynman-Kac slope exceeds three standard errors; ``"inconclusive"``
    when the estimator collapses or no order up to ``p_max`` qualifies.
    """
    b0 = B.b0
    if b0 <= 0:
        raise ValueError("B(0) must be positive")
    if method == "bounds":
        if gamma2(kernel, kappa, B) > 0:
            return 2
        start = max(3, math.floor(2.0 * kappa / b0))
        for p in range(start, p_max + 1):
            crude = 0.5 * (p - 1) * b0 - kappa
            if crude > 0:
                return p
            need = kappa - 0.5 * b0 * (p - 2)
            if need < b0 and gamma2(kernel, kappa / (p - 1), B) > need:
                return p
        return "inconclusive"
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    if mc_t_grid is None:
        mc_t_grid = np.linspace(0.5, 4.0, 8)
    for p in range(2, min(p_max, 64) + 1):
        est = fk_lyapunov_estimate(kernel, p, kappa, B, mc_t_grid, mc_paths, seed + p)
        if not est.ok:
            return "inconclusive"
        if est.slope > 3 * est.stderr:
            return p
    return "inconclusive"
