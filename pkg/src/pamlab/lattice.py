"""Lattice geometry, jump kernels, noise correlators and Fourier quadrature.

Everything here is deterministic and immutable.  Wavevectors live on the
torus ``T^d = [-pi, pi]^d``; integrals over it are approximated with the
midpoint rule on a uniform ``grid_n^d`` grid, which is spectrally accurate
for smooth periodic integrands.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

Vector = tuple[int, ...]

NORMALIZATION_TOL = 1e-12
DENSITY_SLACK = 1e-10
DEFAULT_GRID = {1: 256, 2: 128, 3: 64}


def default_grid(dim: int) -> int:
    return DEFAULT_GRID.get(dim, 32)


def _vector(z, dim: int) -> Vector:
    if np.isscalar(z):
        z = (z,)
    v = tuple(int(c) for c in z)
    if len(v) != dim:
        raise ValueError(f"lattice vector {v} does not have dimension {dim}")
    return v


def _neg(z: Vector) -> Vector:
    return tuple(-c for c in z)


def _is_positive_half(z: Vector) -> bool:
    # lexicographically positive representative of {z, -z}
    for c in z:
        if c:
            return c > 0
    return False


def _entries_to_tuple(dim: int, entries) -> tuple[tuple[Vector, float], ...]:
    if isinstance(entries, Mapping):
        items = entries.items()
    else:
        items = entries
    acc: dict[Vector, float] = {}
    for z, w in items:
        v = _vector(z, dim)
        acc[v] = acc.get(v, 0.0) + float(w)
    return tuple(sorted(acc.items()))


def _serialize(dim: int, items: Iterable[tuple[Vector, float]]) -> str:
    payload = {"dim": dim, "entries": [[list(z), float(w)] for z, w in items]}
    return json.dumps(payload)


def _parse(text_or_obj) -> tuple[int, list]:
    obj = json.loads(text_or_obj) if isinstance(text_or_obj, str) else text_or_obj
    if set(obj) != {"dim", "entries"}:
        raise ValueError(f"expected keys 'dim' and 'entries', got {sorted(obj)}")
    dim = int(obj["dim"])
    return dim, [(tuple(z), w) for z, w in obj["entries"]]


@dataclass(frozen=True)
class JumpKernel:
    """Symmetric jump distribution ``a(z)`` of the nonlocal Laplacian.

    ``half`` stores one representative per pair ``{z, -z}`` (the
    lexicographically positive one) with its weight ``a(z) = a(-z)``.
    Build instances with :meth:`from_entries` or :meth:`nearest_neighbor`.
    """

    dim: int
    half: tuple[tuple[Vector, float], ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        total = 0.0
        for z, w in self.half:
            if len(z) != self.dim or not _is_positive_half(z):
                raise ValueError(f"bad half-support representative {z}")
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"jump weight a{z} = {w} must be finite and >= 0")
            total += 2 * w
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"normalization violated: sum of a(z) = {total!r} != 1")
        weights = dict(self.half)
        for i in range(self.dim):
            e = tuple(1 if j == i else 0 for j in range(self.dim))
            if weights.get(e, 0.0) <= 0:
                raise ValueError(f"non-degeneracy violated: a{e} must be > 0")

    @classmethod
    def from_entries(cls, dim: int, entries, tol: float = 1e-14) -> "JumpKernel":
        """Build from a full map ``z -> a(z)``; both ``z`` and ``-z`` must be present."""
        items = dict(_entries_to_tuple(dim, entries))
        zero = (0,) * dim
        if items.get(zero, 0.0) != 0.0:
            raise ValueError("a(0) must be absent or zero")
        items.pop(zero, None)
        half = []
        for z, w in items.items():
            if not _is_positive_half(z):
                continue
            w_neg = items.get(_neg(z), 0.0)
            if abs(w - w_neg) > tol:
                raise ValueError(f"symmetry violated: a{z} = {w} but a{_neg(z)} = {w_neg}")
            if w != 0.0:
                half.append((z, w))
        for z, w in items.items():
            if not _is_positive_half(z) and _neg(z) not in items and w != 0.0:
                raise ValueError(f"symmetry violated: a{_neg(z)} missing")
        return cls(dim, tuple(sorted(half)))

    @classmethod
    def nearest_neighbor(cls, dim: int) -> "JumpKernel":
        w = 1.0 / (2 * dim)
        half = tuple((tuple(1 if j == i else 0 for j in range(dim)), w) for i in range(dim))
        return cls(dim, tuple(sorted(half)))

    @cached_property
    def displacements(self) -> np.ndarray:
        """Full support as an ``(M, d)`` integer array (``+z`` then ``-z``)."""
        zs = np.array([z for z, _ in self.half], dtype=np.int64).reshape(-1, self.dim)
        return np.concatenate([zs, -zs])

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.array([w for _, w in self.half])
        return np.concatenate([w, w])

    @property
    def max_range(self) -> int:
        return int(np.abs(self.displacements).max())

    @property
    def second_moment(self) -> float:
        return float(np.sum(self.weights * np.sum(self.displacements**2, axis=1)))

    def entries(self) -> list[tuple[Vector, float]]:
        items = [(z, w) for z, w in self.half] + [(_neg(z), w) for z, w in self.half]
        return sorted(items)

    def to_json(self) -> str:
        return _serialize(self.dim, self.entries())

    @classmethod
    def from_json(cls, text_or_obj) -> "JumpKernel":
        dim, entries = _parse(text_or_obj)
        return cls.from_entries(dim, entries)


@dataclass(frozen=True)
class CorrelationKernel:
    """Weights ``b(z)`` mixing i.i.d. Brownian motions into the field ``W``."""

    dim: int
    entries: tuple[tuple[Vector, float], ...]

    def __post_init__(self):
        if not self.entries or all(w == 0.0 for _, w in self.entries):
            raise ValueError("correlation kernel b must not be identically zero")
        for z, w in self.entries:
            if len(z) != self.dim or not math.isfinite(w):
                raise ValueError(f"bad entry b{z} = {w}")

    @classmethod
    def from_entries(cls, dim: int, entries) -> "CorrelationKernel":
        return cls(dim, _entries_to_tuple(dim, entries))

    @classmethod
    def delta(cls, dim: int, value: float = 1.0) -> "CorrelationKernel":
        return cls(dim, (((0,) * dim, float(value)),))

    @cached_property
    def points(self) -> np.ndarray:
        return np.array([z for z, _ in self.entries], dtype=np.int64).reshape(-1, self.dim)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([w for _, w in self.entries])

    def to_json(self) -> str:
        return _serialize(self.dim, self.entries)

    @classmethod
    def from_json(cls, text_or_obj) -> "CorrelationKernel":
        dim, entries = _parse(text_or_obj)
        return cls.from_entries(dim, entries)


@dataclass(frozen=True)
class Potential:
    """Finitely supported real function on ``Z^d`` (no symmetry assumed)."""

    dim: int
    entries: tuple[tuple[Vector, float], ...]

    def __post_init__(self):
        for z, w in self.entries:
            if len(z) != self.dim or not math.isfinite(w):
                raise ValueError(f"bad entry {z} -> {w}")

    @classmethod
    def from_entries(cls, dim: int, entries) -> "Potential":
        items = tuple((z, w) for z, w in _entries_to_tuple(dim, entries) if w != 0.0)
        return cls(dim, items)

    @classmethod
    def delta(cls, dim: int, value: float = 1.0, at=None) -> "Potential":
        at = (0,) * dim if at is None else _vector(at, dim)
        return cls.from_entries(dim, {at: value})

    @cached_property
    def points(self) -> np.ndarray:
        return np.array([z for z, _ in self.entries], dtype=np.int64).reshape(-1, self.dim)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array([w for _, w in self.entries], dtype=float)

    def __call__(self, x) -> float:
        return dict(self.entries).get(_vector(x, self.dim), 0.0)

    @property
    def total(self) -> float:
        return float(self.values.sum()) if self.entries else 0.0

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.entries else 0.0

    @property
    def radius(self) -> int:
        return int(np.abs(self.points).max()) if self.entries else 0

    def scaled(self, factor: float) -> "Potential":
        return type(self)(self.dim, tuple((z, factor * w) for z, w in self.entries))

    def lookup(self, disp: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at an ``(..., d)`` integer array of sites."""
        disp = np.asarray(disp)
        out = np.zeros(disp.shape[:-1])
        if not self.entries:
            return out
        r = self.radius
        table = np.zeros((2 * r + 1,) * self.dim)
        table[tuple((self.points + r).T)] = self.values
        inside = np.all(np.abs(disp) <= r, axis=-1)
        idx = tuple(np.moveaxis(disp[inside] + r, -1, 0))
        out[inside] = table[idx]
        return out

    def to_json(self) -> str:
        return _serialize(self.dim, self.entries)

    @classmethod
    def from_json(cls, text_or_obj):
        dim, entries = _parse(text_or_obj)
        return cls.from_entries(dim, entries)


@dataclass(frozen=True)
class Correlator(Potential):
    """Symmetric spatial correlator ``B(x) = B(-x)`` of the driving field."""

    def __post_init__(self):
        super().__post_init__()
        table = dict(self.entries)
        for z, w in self.entries:
            if table.get(_neg(z), 0.0) != w:
                raise ValueError(f"correlator must be symmetric: B{z} != B{_neg(z)}")

    @property
    def b0(self) -> float:
        return self((0,) * self.dim)


@dataclass(frozen=True)
class BoxDomain:
    """Sites ``x`` with ``max|x_i| <= radius``, either periodic or killed."""

    dim: int
    radius: int
    boundary: str = "periodic"

    def __post_init__(self):
        if self.dim < 1 or self.radius < 0:
            raise ValueError("need dim >= 1 and radius >= 0")
        if self.boundary not in ("periodic", "killed"):
            raise ValueError(f"boundary must be 'periodic' or 'killed', got {self.boundary!r}")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def n_sites(self) -> int:
        return self.side**self.dim

    @cached_property
    def coords(self) -> np.ndarray:
        """``(n_sites, d)`` coordinates in C order of :attr:`shape`."""
        axes = [np.arange(-self.radius, self.radius + 1)] * self.dim
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def index(self, x) -> int:
        x = np.asarray(_vector(x, self.dim)) + self.radius
        if np.any(x < 0) or np.any(x >= self.side):
            raise IndexError(f"site {tuple(x - self.radius)} outside the box")
        return int(np.ravel_multi_index(tuple(x), self.shape))

    def shift(self, z) -> np.ndarray:
        """Flat index of ``x + z`` for every site ``x``; ``-1`` where a killed jump leaves."""
        target = self.coords + np.asarray(z, dtype=np.int64) + self.radius
        if self.boundary == "periodic":
            target = np.mod(target, self.side)
            return np.ravel_multi_index(tuple(target.T), self.shape)
        inside = np.all((target >= 0) & (target < self.side), axis=1)
        out = np.full(self.n_sites, -1, dtype=np.int64)
        out[inside] = np.ravel_multi_index(tuple(target[inside].T), self.shape)
        return out

    def field(self, values) -> "LatticeField":
        return LatticeField(self, np.asarray(values, dtype=float).reshape(self.shape))


def generator_matrix(kernel: JumpKernel, domain: BoxDomain, scale: float = 1.0,
                     diagonal=None) -> sp.csr_matrix:
    """Sparse ``scale * L`` on ``domain`` plus an optional extra diagonal.

    Periodic boxes wrap jumps; killed boxes drop them, which keeps the
    ``-scale`` diagonal and makes the matrix a principal submatrix of the
    operator on ``Z^d``.
    """
    n = domain.n_sites
    rows, cols, vals = [], [], []
    for z, w in zip(kernel.displacements, kernel.weights):
        tgt = domain.shift(z)
        ok = tgt >= 0
        rows.append(np.nonzero(ok)[0])
        cols.append(tgt[ok])
        vals.append(np.full(int(ok.sum()), scale * w))
    diag = np.full(n, -scale)
    if diagonal is not None:
        diag = diag + np.asarray(diagonal, dtype=float).ravel()
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    # duplicate entries (small periodic boxes) are summed by the constructor
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


@dataclass(frozen=True, eq=False)
class LatticeField:
    domain: BoxDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != self.domain.shape:
            raise ValueError(f"field shape {self.values.shape} != box shape {self.domain.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("lattice field has non-finite values")

    def at(self, x) -> float:
        return float(self.values.ravel()[self.domain.index(x)])


# --------------------------------------------------------------------------
# Fourier side


def _as_k(k, dim: int) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    if k.shape[-1] != dim:
        raise ValueError(f"wavevector must have trailing dimension {dim}")
    return k


def symbol_a(kernel: JumpKernel, k) -> np.ndarray | float:
    """Characteristic function ``a^(k) = sum_z a(z) cos(k.z)``.

    The symbol of the Laplacian is ``L^(k) = a^(k) - 1 <= 0``.  ``k`` may be
    a single point or an array with trailing axis of length ``d``.
    """
    k = _as_k(k, kernel.dim)
    zs = np.array([z for z, _ in kernel.half], dtype=float)
    ws = np.array([w for _, w in kernel.half])
    val = 2.0 * np.cos(k @ zs.T) @ ws
    return float(val) if np.ndim(val) == 0 else val


def _midpoints(n: int) -> np.ndarray:
    return -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)


def _phase_grid(vec, nodes: np.ndarray, dim: int) -> np.ndarray:
    # k.vec on the tensor grid, built by broadcasting 1D factors
    out = np.zeros((1,) * dim)
    for i, c in enumerate(vec):
        if c:
            shape = [1] * dim
            shape[i] = -1
            out = out + c * nodes.reshape(shape)
    return np.broadcast_to(out, (len(nodes),) * dim)


@lru_cache(maxsize=16)
def _symbol_grid(kernel: JumpKernel, grid_n: int, midpoint: bool = True) -> np.ndarray:
    nodes = _midpoints(grid_n) if midpoint else -np.pi + np.arange(grid_n) * (2 * np.pi / grid_n)
    acc = np.zeros((grid_n,) * kernel.dim)
    for z, w in kernel.half:
        acc += 2.0 * w * np.cos(_phase_grid(z, nodes, kernel.dim))
    acc.setflags(write=False)
    return acc


def _cos_grid(x, grid_n: int, dim: int) -> np.ndarray | float:
    if not any(x):
        return 1.0
    return np.cos(_phase_grid(x, _midpoints(grid_n), dim))


def symbol_min(kernel: JumpKernel, grid_n: int = 256) -> float:
    """``min_k L^(k)`` over the uniform grid ``k_j = -pi + 2 pi j / n`` (contains 0 and -pi).

    The spectrum of ``kappa * L`` is then ``[kappa * alpha, 0]``.
    """
    if grid_n < 8:
        raise ValueError("grid_n must be >= 8")
    return float(_symbol_grid(kernel, grid_n, midpoint=False).min() - 1.0)


def operator_norm(kernel: JumpKernel, grid_n: int = 64) -> float:
    """``||L|| = -min L^`` (at most 2)."""
    return -symbol_min(kernel, max(8, grid_n))


def correlator_from_b(b: CorrelationKernel) -> Correlator:
    """``B(x) = sum_z b(x - z) b(-z)``, supported on the difference set of ``supp b``."""
    acc: dict[Vector, float] = {}
    for z1, w1 in b.entries:
        for z2, w2 in b.entries:
            x = tuple(p - q for p, q in zip(z1, z2))
            acc[x] = acc.get(x, 0.0) + w1 * w2
    # symmetrize exactly: the two orders of each product can round differently
    sym = {}
    for x, w in acc.items():
        sym[x] = 0.5 * (w + acc.get(_neg(x), 0.0))
    return Correlator.from_entries(b.dim, sym)


def spectral_density(B: Potential, k) -> np.ndarray | float:
    """``B^(k) = sum_x B(x) e^{ikx}``; real because ``B`` is symmetric."""
    k = _as_k(k, B.dim)
    val = np.cos(k @ B.points.T.astype(float)) @ B.values
    return float(val) if np.ndim(val) == 0 else val


def heat_kernel(kernel: JumpKernel, diffusivity: float, rate_multiplier: float, t: float,
                x=None, grid_n: int | None = None) -> float:
    """Transition probability ``p(t, 0, x)`` of the walk generated by ``r * kappa * L``.

    Midpoint approximation of ``(2 pi)^-d int exp(r kappa L^(k) t) cos(k.x) dk``.
    ``rate_multiplier = 2`` gives the relative walk of two independent
    particles, ``1`` a single particle.
    """
    if diffusivity < 0 or rate_multiplier <= 0 or t < 0:
        raise ValueError("need diffusivity >= 0, rate_multiplier > 0, t >= 0")
    d = kernel.dim
    x = (0,) * d if x is None else _vector(x, d)
    if t == 0 or diffusivity == 0:
        return 1.0 if not any(x) else 0.0
    grid_n = grid_n or default_grid(d)
    if grid_n < 8:
        raise ValueError("grid_n must be >= 8")
    lhat = _symbol_grid(kernel, grid_n) - 1.0
    vals = np.exp(rate_multiplier * diffusivity * t * lhat) * _cos_grid(x, grid_n, d)
    return float(np.clip(vals.mean(), 0.0, 1.0))


def _dyadic_divergent(values: Sequence[float]) -> bool:
    # values at grids n, 2n, 4n.  A convergent midpoint sequence with an
    # integrable point singularity has increments shrinking by >= 2; log
    # divergence keeps them constant, power divergence grows them.
    d1 = values[1] - values[0]
    d2 = values[2] - values[1]
    if d2 <= 0 or d1 <= 0:
        return False
    return d2 / d1 > 0.75


def _resolvent_mean(kernel: JumpKernel, x, lam: float, grid_n: int) -> float:
    lhat = _symbol_grid(kernel, grid_n) - 1.0
    return float(np.mean(_cos_grid(x, grid_n, kernel.dim) / (lam - lhat)))


def integral_diverges(kernel: JumpKernel, integrand: str = "green", n0: int = 8) -> bool:
    """Dyadic-grid divergence test for ``int dk / |L^|`` (``"green"``) or ``int |k| dk / |L^|`` (``"moment"``)."""
    vals = []
    for n in (n0, 2 * n0, 4 * n0):
        lhat = _symbol_grid(kernel, n) - 1.0
        if integrand == "green":
            vals.append(float(np.mean(1.0 / -lhat)))
        else:
            vals.append(float(np.mean(_abs_k_grid(n, kernel.dim) / -lhat)))
    return _dyadic_divergent(vals)


@lru_cache(maxsize=8)
def _abs_k_grid(grid_n: int, dim: int) -> np.ndarray:
    nodes = _midpoints(grid_n)
    sq = np.zeros((1,) * dim)
    for i in range(dim):
        shape = [1] * dim
        shape[i] = -1
        sq = sq + nodes.reshape(shape) ** 2
    return np.sqrt(np.broadcast_to(sq, (grid_n,) * dim))


def _richardson(f, n: int) -> float:
    """Remove the ``1/n`` and ``1/n^3`` midpoint error terms of ``f(n)``."""
    f1, f2, f4 = f(n // 4), f(n // 2), f(n)
    r_coarse, r_fine = 2.0 * f2 - f1, 2.0 * f4 - f2
    return (8.0 * r_fine - r_coarse) / 7.0


def green_function(kernel: JumpKernel, x, lam: float, grid_n: int | None = None,
                   extrapolate: bool = False) -> float:
    """Resolvent kernel ``R_lam(x) = (2 pi)^-d int cos(k.x) / (lam + 1 - a^(k)) dk``.

    This is the rate-one normalization, ``R_lam = (lam - L)^-1``.  At
    ``lam = 0`` the integrand has a ``|k|^-2`` point singularity; the midpoint
    error is then ``c1/n + c3/n^3 + ...`` and ``extrapolate=True`` removes the
    first two terms by Richardson steps on the grids ``n/4``, ``n/2`` and ``n``.
    Returns ``inf`` when the
    ``lam = 0`` integral diverges (recurrent walk).
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    d = kernel.dim
    x = (0,) * d if x is None else _vector(x, d)
    grid_n = grid_n or default_grid(d)
    if lam == 0:
        if integral_diverges(kernel, "green"):
            return math.inf
        if extrapolate:
            return _richardson(lambda n: _resolvent_mean(kernel, x, 0.0, n), grid_n)
    return _resolvent_mean(kernel, x, lam, grid_n)


def green_diagonal(kernel: JumpKernel, lam: float, grid_n: int | None = None,
                   extrapolate: bool = False) -> float:
    """``R_lam(0)``; see :func:`green_function`."""
    return green_function(kernel, None, lam, grid_n, extrapolate)


def return_time_integral(kernel: JumpKernel, t0: float, grid_n: int | None = None,
                         extrapolate: bool = True) -> float:
    """``int_{t0}^inf p(t, 0, 0) dt = (2 pi)^-d int exp(t0 L^) / (-L^) dk`` for the rate-one walk."""
    d = kernel.dim
    grid_n = grid_n or default_grid(d)
    if integral_diverges(kernel, "green"):
        return math.inf

    def mean(n):
        lhat = _symbol_grid(kernel, n) - 1.0
        return float(np.mean(np.exp(t0 * lhat) / -lhat))

    if extrapolate:
        return _richardson(mean, grid_n)
    return mean(grid_n)
