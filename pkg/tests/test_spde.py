from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as sla

from pamlab.lattice import (BoxDomain, CorrelationKernel, JumpKernel, LatticeField,
                            correlator_from_b, generator_matrix)
from pamlab.moments import solve_m2
from pamlab.noise import NoiseGenerator
from pamlab.spde import SpdeConfig, run_ensemble, step

NN1 = JumpKernel.nearest_neighbor(1)
DELTA = CorrelationKernel.delta(1)


def test_no_noise_no_diffusion_is_identity():
    dom = BoxDomain(1, 8)
    cfg = SpdeConfig(NN1, None, 0.0, dom, 0.1)
    u = LatticeField(dom, np.linspace(1, 2, dom.side))
    assert np.allclose(step(u, cfg, None).values, u.values, atol=1e-15)


def test_geometric_brownian_closed_form():
    dom = BoxDomain(1, 6)
    b = CorrelationKernel.from_entries(1, {(0,): 0.8, (1,): 0.3})
    cfg = SpdeConfig(NN1, b, 0.0, dom, 0.05)
    gen = NoiseGenerator(b, dom, 11, 0)
    twin = NoiseGenerator(b, dom, 11, 0)
    u = LatticeField(dom, np.ones(dom.side))
    W = np.zeros(dom.side)
    for _ in range(20):
        u = step(u, cfg, gen)
        W += twin.sample(cfg.dt)
    assert np.allclose(u.values, np.exp(W - 0.5 * cfg.b0 * 1.0), rtol=1e-12)


def test_geometric_brownian_mean_one():
    dom = BoxDomain(1, 4)
    cfg = SpdeConfig(NN1, DELTA, 0.0, dom, 0.1)
    stats = run_ensemble(cfg, 1.0, 10_000, 1, 5, block=2500)
    est, se = stats.moment(1)
    assert np.all(np.abs(est - 1) < 4 * se + 1e-15)


def test_noise_free_step_is_heat_semigroup():
    dom = BoxDomain(1, 10)
    cfg = SpdeConfig(NN1, None, 0.7, dom, 0.2)
    rng = np.random.default_rng(0)
    u0 = rng.uniform(0.5, 2, dom.side)
    u1 = step(LatticeField(dom, u0), cfg, None).values
    ref = sla.expm(0.2 * 0.7 * generator_matrix(NN1, dom).toarray()) @ u0
    assert np.allclose(u1, ref, atol=1e-12)
    assert u1.sum() == pytest.approx(u0.sum(), rel=1e-13)


def test_exp_split_requires_positive_state_and_matching_generator():
    dom = BoxDomain(1, 4)
    cfg = SpdeConfig(NN1, DELTA, 0.5, dom, 0.1)
    with pytest.raises(ValueError, match="positive"):
        step(LatticeField(dom, -np.ones(dom.side)), cfg, NoiseGenerator(DELTA, dom))
    with pytest.raises(ValueError, match="generator"):
        step(LatticeField(dom, np.ones(dom.side)), cfg, None)


def test_stability_guard_and_config_checks():
    dom = BoxDomain(1, 4)
    with pytest.raises(ValueError, match="stability"):
        SpdeConfig(NN1, DELTA, 1.0, dom, 0.3)
    with pytest.raises(ValueError, match="periodic"):
        SpdeConfig(NN1, DELTA, 1.0, BoxDomain(1, 4, "killed"), 0.01)
    with pytest.raises(ValueError, match="scheme"):
        SpdeConfig(NN1, DELTA, 1.0, dom, 0.01, "rk4")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_aborts():
    dom = BoxDomain(1, 4)
    cfg = SpdeConfig(NN1, DELTA, 0.5, dom, 0.1, "ito_euler")
    big = LatticeField(dom, np.full(dom.side, 1e308))
    with pytest.raises(FloatingPointError, match="dt"):
        step(big, cfg, NoiseGenerator(DELTA, dom))


def test_ensemble_properties():
    dom = BoxDomain(1, 16)
    cfg = SpdeConfig(NN1, DELTA, 0.5, dom, 0.02)
    stats = run_ensemble(cfg, 1.0, 2000, 3, 1, record_times=[0.0, 0.5, 1.0])
    assert np.all(stats.estimates[0] == 1.0) and np.all(stats.stderrs[0] == 0.0)
    m1, se1 = stats.moment(1)
    assert np.all(np.abs(m1 - 1) < 4 * se1 + 1e-15)
    m2, _ = stats.moment(2)
    m3, _ = stats.moment(3)
    assert np.all(m2 >= 1.0) and np.all(m3 >= m2)
    assert np.all(stats.stderrs >= 0) and np.all(np.isfinite(stats.estimates))


def test_ensemble_reproducible_and_csv():
    dom = BoxDomain(1, 8)
    cfg = SpdeConfig(NN1, DELTA, 0.5, dom, 0.05)
    a = run_ensemble(cfg, 0.5, 50, 2, 3, block=20)
    b = run_ensemble(cfg, 0.5, 50, 2, 3, block=20)
    assert a.to_csv() == b.to_csv()
    lines = a.to_csv().splitlines()
    assert lines[0] == "time,p,estimate,stderr,n_members"
    assert len(lines) == 1 + 2 * len(a.times)


def test_exp_split_positive_paths():
    dom = BoxDomain(1, 8)
    cfg = SpdeConfig(NN1, DELTA, 0.5, dom, 0.1)
    gen = NoiseGenerator(DELTA, dom, 4, 0)
    u = LatticeField(dom, np.ones(dom.side))
    for _ in range(50):
        u = step(u, cfg, gen)
        assert np.all(u.values > 0)


def test_schemes_agree_as_dt_shrinks():
    dom = BoxDomain(1, 16)
    m2_exact = solve_m2(NN1, 0.5, correlator_from_b(DELTA), [1.0], dom).at_origin()[0]
    for scheme in ("exp_split", "ito_euler"):
        est = {}
        for dt in (0.02, 0.01):
            cfg = SpdeConfig(NN1, DELTA, 0.5, dom, dt, scheme)
            s = run_ensemble(cfg, 1.0, 4000, 2, 21, record_times=[1.0])
            est[dt] = s.moment(2)
        (e1, s1), (e2, s2) = est[0.02], est[0.01]
        assert abs(e1[0] - e2[0]) < 4 * np.hypot(s1[0], s2[0])
        assert abs(e2[0] - m2_exact) < 4 * s2[0] + 0.01
