"""Ensemble simulation of ``du = kappa L u dt + u dW`` on a periodic box."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .lattice import (BoxDomain, CorrelationKernel, JumpKernel, LatticeField,
                      correlator_from_b, operator_norm, symbol_a)
from .noise import NoiseGenerator

SCHEMES = ("exp_split", "ito_euler")


@dataclass(frozen=True)
class SpdeConfig:
    kernel: JumpKernel
    noise: CorrelationKernel | None
    diffusivity: float
    domain: BoxDomain
    dt: float
    scheme: str = "exp_split"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.domain.boundary != "periodic":
            raise ValueError("simulation requires a periodic box")
        if self.diffusivity < 0 or not self.dt > 0:
            raise ValueError("need diffusivity >= 0 and dt > 0")
        if self.noise is not None and self.noise.dim != self.domain.dim:
            raise ValueError("noise kernel and domain dimensions differ")
        if self.kernel.dim != self.domain.dim:
            raise ValueError("jump kernel and domain dimensions differ")
        load = self.dt * (self.diffusivity * operator_norm(self.kernel) + self.b0)
        if load > 0.5:
            raise ValueError(f"stability guard: dt*(kappa*||L|| + B(0)) = {load:.3g} > 0.5")

    @property
    def b0(self) -> float:
        return 0.0 if self.noise is None else correlator_from_b(self.noise).b0


def _torus_symbol(kernel: JumpKernel, domain: BoxDomain) -> np.ndarray:
    n = domain.side
    freqs = [2 * np.pi * np.fft.fftfreq(n)] * (domain.dim - 1) + [2 * np.pi * np.fft.rfftfreq(n)]
    k = np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1)
    return symbol_a(kernel, k) - 1.0


class _Stepper:
    def __init__(self, cfg: SpdeConfig):
        self.cfg = cfg
        self.axes = tuple(range(-cfg.domain.dim, 0))
        lhat = _torus_symbol(cfg.kernel, cfg.domain)
        if cfg.scheme == "exp_split":
            self.mult = np.exp(cfg.dt * cfg.diffusivity * lhat)
        else:
            self.mult = cfg.dt * cfg.diffusivity * lhat

    def _apply(self, u):
        uh = np.fft.rfftn(u, axes=self.axes)
        return np.fft.irfftn(uh * self.mult, s=self.cfg.domain.shape, axes=self.axes)

    def __call__(self, u: np.ndarray, gen: NoiseGenerator | None) -> np.ndarray:
        cfg = self.cfg
        dw = 0.0 if gen is None else gen.sample(cfg.dt)
        if cfg.scheme == "exp_split":
            out = self._apply(u * np.exp(dw - 0.5 * cfg.b0 * cfg.dt))
        else:
            out = u + self._apply(u) + u * dw
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"non-finite field after a step of dt={cfg.dt}; reduce dt")
        return out


def step(state: LatticeField, cfg: SpdeConfig, gen: NoiseGenerator | None) -> LatticeField:
    """Advance one time step.

    ``exp_split``: ``u <- exp(dt kappa L) (u exp(dW - B(0) dt / 2))``, positive and mean-exact.
    ``ito_euler``: ``u <- u + dt kappa L u + u dW``.
    """
    if cfg.scheme == "exp_split" and np.any(state.values <= 0):
        raise ValueError("exp_split requires a positive state")
    if gen is not None and gen.batch is not None:
        raise ValueError("step takes a single-field generator")
    if (gen is None) != (cfg.noise is None):
        raise ValueError("a generator must be given exactly when the config has noise")
    return LatticeField(state.domain, _Stepper(cfg)(state.values, gen))


@dataclass
class EnsembleStats:
    """Spatially and ensemble averaged raw moments ``<u^p>``.

    ``estimates[i, p-1]`` is the estimate at ``times[i]``; ``stderrs`` are the
    matching standard errors over ensemble members (for a mean, the
    delete-one jackknife coincides with ``std / sqrt(n)``).
    """

    times: np.ndarray
    estimates: np.ndarray
    stderrs: np.ndarray
    n_members: int

    def moment(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        return self.estimates[:, p - 1], self.stderrs[:, p - 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "p", "estimate", "stderr", "n_members"])
        for i, t in enumerate(self.times):
            for p in range(1, self.estimates.shape[1] + 1):
                w.writerow([repr(float(t)), p, repr(float(self.estimates[i, p - 1])),
                            repr(float(self.stderrs[i, p - 1])), self.n_members])
        return buf.getvalue()


def run_ensemble(cfg: SpdeConfig, t_max: float, n_members: int, p_max: int, base_seed: int,
                 record_times=None, block: int = 500) -> EnsembleStats:
    """Simulate ``n_members`` independent copies from ``u(0, .) = 1``.

    Members are advanced in blocks; block ``j`` draws its noise from stream
    ``(base_seed, j)``.  ``record_times`` must be multiples of ``dt``
    (default: ten evenly spaced checkpoints).
    """
    if n_members < 2 or p_max < 1:
        raise ValueError("need n_members >= 2 and p_max >= 1")
    n_steps = int(round(t_max / cfg.dt))
    if abs(n_steps * cfg.dt - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError("t_max must be a multiple of dt")
    if record_times is None:
        record_steps = np.unique(np.linspace(0, n_steps, 11).round().astype(int))
    else:
        record_steps = np.array([int(round(t / cfg.dt)) for t in record_times])
        if np.any(np.abs(record_steps * cfg.dt - np.asarray(record_times)) > 1e-9):
            raise ValueError("record_times must be multiples of dt")
        if np.any(record_steps > n_steps) or np.any(np.diff(record_steps) <= 0):
            raise ValueError("record_times must be increasing and <= t_max")
    stepper = _Stepper(cfg)
    per_member = np.empty((len(record_steps), n_members, p_max))
    powers = np.arange(1, p_max + 1)
    axes = tuple(range(1, cfg.domain.dim + 1))
    for j, start in enumerate(range(0, n_members, block)):
        size = min(block, n_members - start)
        gen = None
        if cfg.noise is not None:
            gen = NoiseGenerator(cfg.noise, cfg.domain, base_seed, stream_id=j, batch=size)
        u = np.ones((size, *cfg.domain.shape))
        r = 0
        for s in range(n_steps + 1):
            if s > 0:
                u = stepper(u, gen)
            while r < len(record_steps) and record_steps[r] == s:
                per_member[r, start:start + size] = np.stack(
                    [np.mean(u**p, axis=axes) for p in powers], axis=-1)
                r += 1
    est = per_member.mean(axis=1)
    se = per_member.std(axis=1, ddof=1) / np.sqrt(n_members)
    return EnsembleStats(record_steps * cfg.dt, est, se, n_members)
