"""Increments of the spatially correlated Wiener field ``W(t, x) = sum_z b(x - z) w(t, z)``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import BoxDomain, CorrelationKernel, LatticeField


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by ``(seed, stream_id)``.

    Distinct stream ids give statistically independent, non-overlapping
    streams, so parallel workers never share state.
    """
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class NoiseGenerator:
    """Draws ``dW`` on a periodic box.

    ``batch`` independent copies of the field are returned per call (shape
    ``(batch, *domain.shape)``) so an ensemble block can be advanced in one
    vectorized step; ``batch=None`` returns a single field.
    """

    kernel: CorrelationKernel
    domain: BoxDomain
    seed: int = 0
    stream_id: int = 0
    batch: int | None = None
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.kernel.dim != self.domain.dim:
            raise ValueError("kernel and domain dimensions differ")
        reach = int(np.abs(self.kernel.points).max())
        if 2 * reach >= self.domain.side:
            raise ValueError("box too small: b wraps onto itself on the torus")
        self.rng = make_rng(self.seed, self.stream_id)
        # periodic convolution with b, done in Fourier space
        kernel_grid = np.zeros(self.domain.shape)
        idx = tuple(np.mod(self.kernel.points, self.domain.side).T)
        np.add.at(kernel_grid, idx, self.kernel.values)
        self._b_hat = np.fft.rfftn(kernel_grid)

    def sample(self, dt: float) -> np.ndarray:
        if not dt > 0:
            raise ValueError("dt must be positive")
        shape = self.domain.shape if self.batch is None else (self.batch, *self.domain.shape)
        white = self.rng.standard_normal(shape) * np.sqrt(dt)
        axes = tuple(range(-self.domain.dim, 0))
        return np.fft.irfftn(np.fft.rfftn(white, axes=axes) * self._b_hat,
                             s=self.domain.shape, axes=axes)


def sample_increment(gen: NoiseGenerator, dt: float) -> LatticeField:
    """One increment ``dW`` over a step ``dt``: mean zero, ``Cov(dW(x), dW(y)) = dt B(x - y)``."""
    if gen.batch is not None:
        raise ValueError("use NoiseGenerator.sample for batched generators")
    return LatticeField(gen.domain, gen.sample(dt))
