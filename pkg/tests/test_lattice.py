from __future__ import annotations

import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ive

from pamlab.lattice import (BoxDomain, CorrelationKernel, Correlator, JumpKernel, LatticeField,
                            Potential, correlator_from_b, generator_matrix, green_diagonal,
                            green_function, heat_kernel, integral_diverges, return_time_integral,
                            spectral_density, symbol_a, symbol_min)

WATSON_3D = math.sqrt(6) / (32 * math.pi**3) * math.prod(
    math.gamma(x / 24) for x in (1, 5, 7, 11))

NN1 = JumpKernel.nearest_neighbor(1)
NN2 = JumpKernel.nearest_neighbor(2)
NN3 = JumpKernel.nearest_neighbor(3)


@st.composite
def jump_kernels(draw):
    d = draw(st.integers(1, 3))
    reps = {tuple(1 if j == i else 0 for j in range(d)) for i in range(d)}
    for _ in range(draw(st.integers(0, 3))):
        z = tuple(draw(st.integers(-2, 2)) for _ in range(d))
        if any(z):
            # lexicographically positive representative
            first = next(c for c in z if c)
            reps.add(z if first > 0 else tuple(-c for c in z))
    reps = sorted(reps)
    w = np.array([draw(st.floats(0.05, 1.0)) for _ in reps])
    w = w / (2 * w.sum())
    entries = {}
    for z, wi in zip(reps, w):
        entries[z] = wi
        entries[tuple(-c for c in z)] = wi
    return JumpKernel.from_entries(d, entries)


# ---------------------------------------------------------------- kernels


def test_kernel_rejects_unnormalized():
    with pytest.raises(ValueError, match="normalization"):
        JumpKernel.from_entries(1, {(1,): 0.4, (-1,): 0.4})


def test_kernel_rejects_asymmetric_and_origin_and_degenerate():
    with pytest.raises(ValueError, match="symmetry"):
        JumpKernel.from_entries(1, {(1,): 0.6, (-1,): 0.4})
    with pytest.raises(ValueError, match="a\\(0\\)"):
        JumpKernel.from_entries(1, {(0,): 0.2, (1,): 0.4, (-1,): 0.4})
    with pytest.raises(ValueError, match="non-degeneracy"):
        JumpKernel.from_entries(1, {(2,): 0.5, (-2,): 0.5})


def test_kernel_json_round_trip_and_canonical_equality():
    k = JumpKernel.from_entries(2, {(1, 0): 0.2, (-1, 0): 0.2, (0, 1): 0.15, (0, -1): 0.15,
                                    (1, 1): 0.15, (-1, -1): 0.15})
    again = JumpKernel.from_json(k.to_json())
    assert again == k and hash(again) == hash(k)
    obj = json.loads(k.to_json())
    assert obj["dim"] == 2 and len(obj["entries"]) == 6
    b = CorrelationKernel.from_entries(1, {(0,): 0.1, (3,): -0.7})
    assert CorrelationKernel.from_json(b.to_json()) == b
    V = Potential.from_entries(2, {(1, 0): 1.0 / 3.0})
    assert Potential.from_json(V.to_json()) == V


def test_correlation_kernel_nonzero():
    with pytest.raises(ValueError):
        CorrelationKernel.from_entries(1, {(0,): 0.0})


# ---------------------------------------------------------------- symbol


def test_symbol_examples():
    assert symbol_a(NN1, 0.0) == pytest.approx(1.0)
    assert symbol_a(NN1, math.pi) == pytest.approx(-1.0)
    assert symbol_a(NN2, (math.pi, math.pi)) == pytest.approx(-1.0)


def test_symbol_min_examples():
    assert symbol_min(NN1, 256) == pytest.approx(-2.0)
    assert symbol_min(NN2, 128) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        symbol_min(NN1, 4)


@settings(max_examples=40, deadline=None)
@given(jump_kernels(), st.integers(0, 2**31 - 1))
def test_symbol_range(kernel, seed):
    rng = np.random.default_rng(seed)
    k = rng.uniform(-np.pi, np.pi, size=(50, kernel.dim))
    a = symbol_a(kernel, k)
    assert np.all(a <= 1 + 1e-12) and np.all(a >= -1 - 1e-12)
    assert symbol_a(kernel, np.zeros(kernel.dim)) == pytest.approx(1.0, abs=1e-12)
    assert symbol_min(kernel, 16) <= 0


# ---------------------------------------------------------------- correlator


def test_correlator_examples():
    B = correlator_from_b(CorrelationKernel.delta(1))
    assert dict(B.entries) == {(0,): 1.0}
    B = correlator_from_b(CorrelationKernel.from_entries(1, {(0,): 1.0, (1,): 1.0}))
    assert dict(B.entries) == {(-1,): 1.0, (0,): 2.0, (1,): 1.0}
    assert spectral_density(B, 0.0) == pytest.approx(4.0)
    assert spectral_density(correlator_from_b(CorrelationKernel.delta(2)), (0.3, 1.1)) == 1.0


def test_correlator_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        Correlator.from_entries(1, {(1,): 1.0})


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_correlator_properties(d, seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 6)
    entries = {tuple(rng.integers(-2, 3, size=d)): rng.normal() for _ in range(n)}
    if all(v == 0 for v in entries.values()):
        entries[(0,) * d] = 1.0
    b = CorrelationKernel.from_entries(d, entries)
    B = correlator_from_b(b)
    assert B.b0 == pytest.approx(float(np.sum(b.values**2)), abs=1e-12)
    table = dict(B.entries)
    assert all(table[tuple(-c for c in x)] == w for x, w in table.items())
    assert B.max_abs == pytest.approx(B.b0, rel=1e-12)
    k = rng.uniform(-np.pi, np.pi, size=(128, d))
    assert spectral_density(B, k).min() >= -1e-10
    assert spectral_density(B, np.zeros(d)) == pytest.approx(B.total)


# ---------------------------------------------------------------- domain


def test_domain_counts_and_periodic_bijection():
    dom = BoxDomain(2, 3, "periodic")
    assert dom.n_sites == 49 and dom.coords.shape == (49, 2)
    for z in [(1, 0), (0, -2), (3, 5)]:
        fwd = dom.shift(z)
        back = dom.shift(tuple(-c for c in z))
        assert sorted(fwd) == list(range(49))
        assert np.array_equal(back[fwd], np.arange(49))
    killed = BoxDomain(1, 2, "killed")
    assert list(killed.shift((1,))) == [1, 2, 3, 4, -1]


def test_lattice_field_checks():
    dom = BoxDomain(1, 2)
    with pytest.raises(ValueError):
        LatticeField(dom, np.ones(4))
    with pytest.raises(FloatingPointError):
        LatticeField(dom, np.array([1, 2, np.nan, 4, 5.0]))
    assert dom.field(np.arange(5.0)).at((1,)) == 3.0


def test_generator_matrix_rows_sum_to_zero_on_torus():
    k = JumpKernel.from_entries(1, {(1,): 0.3, (-1,): 0.3, (2,): 0.2, (-2,): 0.2})
    A = generator_matrix(k, BoxDomain(1, 6, "periodic"))
    assert np.allclose(A.sum(axis=1), 0.0)
    assert (A - A.T).count_nonzero() == 0


# ---------------------------------------------------------------- heat kernel


def test_heat_kernel_examples():
    assert heat_kernel(NN1, 1.0, 1.0, 0.0) == 1.0
    assert heat_kernel(NN1, 1.0, 1.0, 0.0, (3,)) == 0.0
    series = sum(math.exp(-1.0) * 0.5 ** (2 * n) / math.factorial(n) ** 2 for n in range(30))
    assert heat_kernel(NN1, 1.0, 1.0, 1.0, (0,), 256) == pytest.approx(series, abs=1e-12)
    assert series == pytest.approx(0.46576, abs=1e-5)


@pytest.mark.parametrize("t", [0.5, 2.0, 7.3])
def test_heat_kernel_bessel_oracle(t):
    # rate kappa r walk on Z: p(t, 0, x) = exp(-s) I_x(s) with s = r kappa t
    for x in (0, 1, 4):
        assert heat_kernel(NN1, 0.5, 2.0, t, (x,)) == pytest.approx(ive(x, 0.5 * 2.0 * t), abs=1e-12)


def test_heat_kernel_mass_increases_to_one():
    for t in (0.5, 2.0, 5.0):
        mass = [sum(heat_kernel(NN1, 1.0, 1.0, t, (y,)) for y in range(-Y, Y + 1))
                for Y in (0, 2, 5, 10, 20)]
        assert all(b >= a - 1e-15 for a, b in zip(mass, mass[1:]))
        assert mass[-1] == pytest.approx(1.0, abs=1e-10)


def test_heat_kernel_diffusive_decay_bound():
    for k in (NN1, NN2):
        vals = [heat_kernel(k, 1.0, 1.0, t, None, 512 if k.dim == 1 else 256) * t ** (k.dim / 2)
                for t in (1, 3, 10, 30, 100)]
        assert max(vals) < 1.0


# ---------------------------------------------------------------- resolvent


def test_green_nn1_closed_form_and_dense_solve():
    # rate-one L: R_lam(0) = 1 / sqrt(lam (lam + 2))
    assert green_diagonal(NN1, 1.0) == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    A = generator_matrix(NN1, BoxDomain(1, 200, "killed"))
    e0 = np.zeros(401)
    e0[200] = 1.0
    sol = spla.spsolve((sp.identity(401, format="csr") - A).tocsc(), e0)
    assert sol[200] == pytest.approx(1 / math.sqrt(3), abs=1e-12)


def test_green_divergence_sentinel():
    assert math.isinf(green_diagonal(NN1, 0.0))
    assert math.isinf(green_diagonal(NN2, 0.0))
    assert integral_diverges(NN2, "green") and not integral_diverges(NN3, "green")


def test_green_3d_watson_convergence():
    raw = [green_diagonal(NN3, 0.0, n) for n in (16, 32, 64)]
    err = [abs(r - WATSON_3D) for r in raw]
    # first-order midpoint error from the |k|^-2 singularity ...
    assert err[0] > err[1] > err[2]
    assert err[1] / err[2] == pytest.approx(2.0, rel=0.05)
    # ... removed by one Richardson step
    assert green_diagonal(NN3, 0.0, 64, extrapolate=True) == pytest.approx(WATSON_3D, abs=1e-4)
    assert WATSON_3D == pytest.approx(1.5164, abs=1e-4)


def test_green_3d_laplace_oracle():
    from scipy import integrate

    lam = 0.1
    f = lambda t: math.exp(-lam * t) * ive(0, t / 3) ** 3
    ref, _ = integrate.quad(f, 0, np.inf, limit=500)
    assert green_diagonal(NN3, lam, 64) == pytest.approx(ref, rel=1e-6)


def test_green_decreasing_in_lambda():
    vals = [green_diagonal(NN2, lam, 64) for lam in (0.01, 0.1, 0.5, 1.0, 4.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_green_function_off_diagonal_symmetric():
    a = green_function(NN2, (1, 2), 0.3, 64)
    b = green_function(NN2, (-1, -2), 0.3, 64)
    assert a == pytest.approx(b) and 0 < a < green_diagonal(NN2, 0.3, 64)


def test_return_time_integral_full_equals_green():
    assert return_time_integral(NN3, 0.0, 64) == pytest.approx(WATSON_3D, abs=1e-4)
    assert math.isinf(return_time_integral(NN1, 1.0))
