"""Continuous-time random walks and Feynman-Kac estimates of ``m_p(t, 0, ..., 0)``.

A walker with generator ``kappa L`` holds at each site for an Exponential
time of rate ``kappa`` and then jumps by ``z`` with probability ``a(z)``.
For ``u(0, .) = 1``::

    m_p(t, 0, ..., 0) = E exp( int_0^t V_p(x_1(s), ..., x_p(s)) ds ),
    V_p = sum_{i<j} B(x_i - x_j)

with independent walkers started at the origin.  The paths are piecewise
constant, so the time integral is evaluated exactly, and all averaging is
done on log-weights to survive very large moments.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .lattice import JumpKernel, Potential
from .noise import make_rng

CHUNK = 10_000


class EffectiveSampleSizeWarning(RuntimeWarning):
    pass


@dataclass
class WalkPath:
    jump_times: np.ndarray
    positions: np.ndarray  # (n_jumps + 1, d); positions[i] holds on [jump_times[i-1], jump_times[i])
    t: float

    def position_at(self, s: float) -> np.ndarray:
        return self.positions[np.searchsorted(self.jump_times, s, side="right")]


def _rng(gen, chunk: int) -> np.random.Generator:
    if isinstance(gen, np.random.Generator):
        return gen
    return make_rng(int(gen), chunk)


def sample_path(kernel: JumpKernel, kappa: float, t: float, gen) -> WalkPath:
    """One path on ``[0, t]`` started at the origin."""
    if t < 0 or kappa < 0:
        raise ValueError("need t >= 0 and kappa >= 0")
    rng = _rng(gen, 0)
    times = []
    s = 0.0
    if kappa > 0:
        while True:
            s += rng.exponential(1.0 / kappa)
            if s > t:
                break
            times.append(s)
    steps = kernel.displacements[rng.choice(len(kernel.weights), size=len(times), p=kernel.weights)]
    pos = np.vstack([np.zeros((1, kernel.dim), dtype=np.int64), np.cumsum(steps, axis=0)])
    return WalkPath(np.array(times), pos.astype(np.int64), t)


def _pair_table(B: Potential):
    r = B.radius
    table = np.zeros((2 * r + 1,) * B.dim)
    if B.entries:
        table[tuple((B.points + r).T)] = B.values
    return r, table


def _pair_potential(pos: np.ndarray, r: int, table: np.ndarray, pairs) -> np.ndarray:
    out = np.zeros(pos.shape[0])
    for i, j in pairs:
        disp = pos[:, i] - pos[:, j]
        inside = np.all(np.abs(disp) <= r, axis=1)
        if inside.any():
            out[inside] += table[tuple((disp[inside] + r).T)]
    return out


def fk_log_weights(kernel: JumpKernel, p: int, kappa: float, B: Potential, t_grid,
                   n_paths: int, gen) -> np.ndarray:
    """``int_0^t V_p ds`` along ``n_paths`` independent p-walker paths, for each ``t`` in ``t_grid``.

    Returns an ``(n_paths, len(t_grid))`` array.  The superposition of the
    p jump clocks is a Poisson process of rate ``p kappa`` whose events move
    a uniformly chosen walker.  Chunk ``c`` of paths uses stream ``(gen, c)``
    when ``gen`` is an integer seed.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if p < 1 or n_paths < 1 or np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ValueError("need p >= 1, n_paths >= 1 and a nondecreasing, nonnegative t_grid")
    out = np.zeros((n_paths, len(t_grid)))
    if p == 1 or not B.entries:
        return out
    T = float(t_grid[-1])
    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    r, table = _pair_table(B)
    n_jumps = len(kernel.weights)
    for c, start in enumerate(range(0, n_paths, CHUNK)):
        rng = _rng(gen, c)
        size = min(CHUNK, n_paths - start)
        counts = rng.poisson(p * kappa * T, size=size) if kappa > 0 else np.zeros(size, dtype=int)
        K = int(counts.max()) if size else 0
        times = rng.uniform(0.0, T, size=(size, K))
        times[np.arange(K)[None, :] >= counts[:, None]] = np.inf
        times.sort(axis=1)
        who = rng.integers(0, p, size=(size, K))
        jump = kernel.displacements[rng.choice(n_jumps, size=(size, K), p=kernel.weights)]
        pos = np.zeros((size, p, kernel.dim), dtype=np.int64)
        acc = np.zeros((size, len(t_grid)))
        v = _pair_potential(pos, r, table, pairs)
        prev = np.zeros(size)
        rows = np.arange(size)
        for k in range(K + 1):
            if k < K:
                live = np.isfinite(times[:, k])
                nxt = np.where(live, times[:, k], prev)  # finished paths add nothing here
            else:
                nxt = np.full(size, np.inf)  # final holding interval of every path
            seg = np.minimum(nxt[:, None], t_grid[None, :]) - np.minimum(prev[:, None], t_grid[None, :])
            acc += v[:, None] * seg
            if k == K:
                break
            pos[rows[live], who[live, k]] += jump[live, k]
            v = _pair_potential(pos, r, table, pairs)
            prev = nxt
        out[start:start + size] = acc
    return out


@dataclass
class FKEstimate:
    """Monte Carlo estimate of ``m_p(t)`` carried in both linear and log form."""

    p: int
    kappa: float
    t: float
    log_estimate: float
    stderr_log: float
    ess: float
    n_paths: int

    @property
    def estimate(self) -> float:
        return math.exp(self.log_estimate) if self.log_estimate < 700 else math.inf

    @property
    def stderr(self) -> float:
        return self.estimate * self.stderr_log


def _summarize(logw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # columnwise: log of the sample mean, relative standard error, ESS
    n = logw.shape[0]
    top = logw.max(axis=0)
    w = np.exp(logw - top)
    mean = w.mean(axis=0)
    log_mean = top + np.log(mean)
    rel = w.std(axis=0, ddof=1) / mean / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    ess = w.sum(axis=0) ** 2 / np.sum(w**2, axis=0)
    return log_mean, rel, ess


def _check_ess(ess, n, what):
    low = np.asarray(ess) < 1e-3 * n
    if np.any(low):
        warnings.warn(f"{what}: estimator dominated by fewer than 0.1% of paths "
                      f"(min ESS {float(np.min(ess)):.1f} of {n})", EffectiveSampleSizeWarning,
                      stacklevel=3)


def fk_moment_curve(kernel: JumpKernel, p: int, kappa: float, B: Potential, t_grid,
                    n_paths: int, gen) -> list[FKEstimate]:
    if n_paths < 2:
        raise ValueError("need n_paths >= 2")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    logw = fk_log_weights(kernel, p, kappa, B, t_grid, n_paths, gen)
    log_mean, rel, ess = _summarize(logw)
    _check_ess(ess, n_paths, f"m_{p}")
    return [FKEstimate(p, kappa, float(t), float(lm), float(r), float(e), n_paths)
            for t, lm, r, e in zip(t_grid, log_mean, rel, ess)]


def fk_moment_estimate(kernel: JumpKernel, p: int, kappa: float, B: Potential, t: float,
                       n_paths: int, gen) -> FKEstimate:
    """``m_p(t, 0, ..., 0)`` with its standard error (``.estimate``, ``.stderr``)."""
    return fk_moment_curve(kernel, p, kappa, B, [t], n_paths, gen)[0]


def estimates_to_csv(estimates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "kappa", "t", "estimate_log", "stderr_log", "n_paths"])
    for e in estimates:
        w.writerow([e.p, repr(float(e.kappa)), repr(float(e.t)), repr(e.log_estimate),
                    repr(e.stderr_log), e.n_paths])
    return buf.getvalue()


@dataclass
class LyapunovEstimate:
    slope: float
    stderr: float
    status: str
    window: tuple[float, ...]
    log_moments: np.ndarray

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _ls_slope(t, y):
    t = np.asarray(t)
    tc = t - t.mean()
    return float(np.dot(tc, y - np.mean(y)) / np.dot(tc, tc))


def fk_lyapunov_estimate(kernel: JumpKernel, p: int, kappa: float, B: Potential, t_grid,
                         n_paths: int, gen, n_groups: int = 20,
                         min_ess_frac: float = 1e-3) -> LyapunovEstimate:
    """Least-squares slope of ``ln m_p(t)`` over the usable part of ``t_grid``.

    The window is the longest prefix of ``t_grid`` on which the relative
    standard error stays below 0.5 and the effective sample size stays at
    or above ``min_ess_frac * n_paths``.  Past that point the sample mean
    is carried by a handful of paths and is biased low.  The slope's standard error is a
    delete-one-group jackknife over ``n_groups`` blocks of paths, which
    accounts for the correlation between time points.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 3:
        raise ValueError("t_grid needs at least 3 points")
    logw = fk_log_weights(kernel, p, kappa, B, t_grid, n_paths, gen)
    log_mean, rel, ess = _summarize(logw)
    bad = np.nonzero(~((rel < 0.5) & (ess >= min_ess_frac * n_paths)))[0]
    stop = int(bad[0]) if len(bad) else len(t_grid)
    if stop < 3:
        return LyapunovEstimate(math.nan, math.nan, "ess_collapse", tuple(t_grid[:stop]), log_mean)
    tw = t_grid[:stop]
    slope = _ls_slope(tw, log_mean[:stop])
    groups = np.array_split(np.arange(n_paths), n_groups)
    jack = []
    for g in groups:
        keep = np.ones(n_paths, dtype=bool)
        keep[g] = False
        lw = logw[keep, :stop]
        jack.append(_ls_slope(tw, logsumexp(lw, axis=0) - math.log(lw.shape[0])))
    jack = np.array(jack)
    se = float(np.sqrt((n_groups - 1) / n_groups * np.sum((jack - jack.mean()) ** 2)))
    return LyapunovEstimate(slope, se, "ok", tuple(tw), log_mean)
