from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from pamlab.lattice import BoxDomain, CorrelationKernel, JumpKernel, Potential, correlator_from_b
from pamlab.moments import gamma2_closed_form, solve_m2
from pamlab.walks import (EffectiveSampleSizeWarning, estimates_to_csv, fk_log_weights,
                          fk_lyapunov_estimate, fk_moment_curve, fk_moment_estimate, sample_path)

NN1 = JumpKernel.nearest_neighbor(1)
NN2 = JumpKernel.nearest_neighbor(2)
B_DELTA = correlator_from_b(CorrelationKernel.delta(1))
B_ZERO = Potential.from_entries(1, {})


def test_no_jumps_without_diffusion():
    path = sample_path(NN2, 0.0, 5.0, np.random.default_rng(0))
    assert len(path.jump_times) == 0
    assert np.array_equal(path.position_at(3.0), [0, 0])


def test_jump_count_and_mean_position():
    rng = np.random.default_rng(1)
    paths = [sample_path(NN1, 1.0, 10.0, rng) for _ in range(10_000)]
    counts = np.array([len(p.jump_times) for p in paths])
    assert abs(counts.mean() - 10.0) < 4 * math.sqrt(10.0 / 10_000)
    ends = np.array([p.positions[-1, 0] for p in paths])
    assert abs(ends.mean()) < 4 * ends.std() / 100
    assert np.mean(counts == 0) == pytest.approx(math.exp(-10.0), abs=4e-4)


def test_prob_no_jump_short_time():
    rng = np.random.default_rng(2)
    none = np.mean([len(sample_path(NN1, 2.0, 0.3, rng).jump_times) == 0 for _ in range(20_000)])
    q = math.exp(-0.6)
    assert abs(none - q) < 4 * math.sqrt(q * (1 - q) / 20_000)


def test_path_is_piecewise_constant():
    path = sample_path(NN1, 1.0, 5.0, np.random.default_rng(3))
    for i, s in enumerate(path.jump_times):
        assert np.array_equal(path.position_at(s - 1e-12), path.positions[i])
        assert np.array_equal(path.position_at(s), path.positions[i + 1])


def test_trivial_moments():
    e = fk_moment_estimate(NN1, 1, 0.5, B_DELTA, 2.0, 100, 0)
    assert e.estimate == 1.0 and e.stderr == 0.0
    e = fk_moment_estimate(NN1, 3, 0.5, B_ZERO, 2.0, 100, 0)
    assert e.estimate == 1.0 and e.stderr == 0.0


def test_frozen_walkers_exact():
    # kappa = 0: all walkers sit at the origin, m_p = exp(p(p-1)/2 B(0) t)
    e = fk_moment_estimate(NN1, 4, 0.0, B_DELTA, 1.5, 50, 0)
    assert e.log_estimate == pytest.approx(6 * 1.5)
    assert e.stderr_log == 0.0


def test_two_walkers_match_moment_equation():
    t = [0.5, 1.0, 2.0]
    ref = solve_m2(NN1, 0.5, B_DELTA, t, BoxDomain(1, 64)).at_origin()
    est = fk_moment_curve(NN1, 2, 0.5, B_DELTA, t, 100_000, 7)
    for e, r in zip(est, ref):
        assert abs(e.estimate - r) < 4 * e.stderr


def test_superposed_clocks_match_independent_walkers():
    # reference: two independently simulated walkers, exact time integral
    rng = np.random.default_rng(11)
    t, n = 2.0, 3000
    ref = np.empty(n)
    for m in range(n):
        a, b = sample_path(NN1, 1.0, t, rng), sample_path(NN1, 1.0, t, rng)
        cuts = np.unique(np.concatenate([[0.0], a.jump_times, b.jump_times, [t]]))
        mids = 0.5 * (cuts[1:] + cuts[:-1])
        same = np.array([a.position_at(s)[0] == b.position_at(s)[0] for s in mids])
        ref[m] = np.sum(np.diff(cuts) * same)
    fk = fk_log_weights(NN1, 2, 1.0, B_DELTA, [t], n, 5)[:, 0]
    assert ks_2samp(ref, fk).pvalue > 0.01


def test_walker_labels_exchangeable():
    # pair integrals for (1,2) and (1,3) share a law; compare with a KS test
    B_near = Potential.from_entries(1, {(0,): 1.0})
    n = 4000
    logs = []
    for pair_off in (1, 2):
        rng = np.random.default_rng(pair_off)
        vals = np.empty(n)
        for m in range(n):
            ws = [sample_path(NN1, 1.0, 2.0, rng) for _ in range(3)]
            a, b = ws[0], ws[pair_off]
            cuts = np.unique(np.concatenate([[0.0], a.jump_times, b.jump_times, [2.0]]))
            mids = 0.5 * (cuts[1:] + cuts[:-1])
            vals[m] = sum(dt * B_near.lookup(tuple(a.position_at(s) - b.position_at(s)))
                          for dt, s in zip(np.diff(cuts), mids))
        logs.append(vals)
    assert ks_2samp(*logs).pvalue > 0.01


def test_stderr_scales_like_inverse_root_n():
    se = [fk_moment_estimate(NN1, 2, 0.5, B_DELTA, 1.0, n, 3).stderr_log for n in (2000, 32_000)]
    assert se[0] / se[1] == pytest.approx(4.0, rel=0.2)


def test_moment_ordering():
    est = {p: fk_moment_estimate(NN1, p, 0.5, B_DELTA, 1.0, 20_000, 4).estimate for p in (1, 2, 3)}
    assert 1.0 == est[1] <= est[2] <= est[3]


def test_reproducible_by_seed():
    a = fk_log_weights(NN2, 3, 1.0, correlator_from_b(CorrelationKernel.delta(2)), [1, 2], 25_000, 9)
    b = fk_log_weights(NN2, 3, 1.0, correlator_from_b(CorrelationKernel.delta(2)), [1, 2], 25_000, 9)
    assert np.array_equal(a, b)
    assert np.all(np.diff(a, axis=1) >= 0)


def test_zero_potential_slope():
    est = fk_lyapunov_estimate(NN1, 3, 1.0, B_ZERO, np.linspace(1, 4, 7), 500, 0)
    assert est.ok and est.slope == 0.0 and est.stderr == 0.0


def test_two_walker_slope_near_gamma2():
    est = fk_lyapunov_estimate(NN1, 2, 0.5, B_DELTA, np.linspace(2, 8, 13), 100_000, 12)
    g = gamma2_closed_form(0.5)
    assert est.ok
    assert abs(est.slope - g) < 3 * est.stderr + 0.05 * g


def test_ess_collapse_reported():
    big = Potential.from_entries(1, {(0,): 40.0})
    est = fk_lyapunov_estimate(NN1, 4, 1.0, big, np.linspace(1, 5, 5), 300, 0)
    assert est.status == "ess_collapse" and not est.ok
    with pytest.warns(EffectiveSampleSizeWarning):
        fk_moment_curve(NN1, 4, 1.0, big, [5.0], 20_000, 0)


def test_csv_format():
    est = fk_moment_curve(NN1, 2, 0.5, B_DELTA, [0.5, 1.0], 200, 0)
    lines = estimates_to_csv(est).splitlines()
    assert lines[0] == "p,kappa,t,estimate_log,stderr_log,n_paths"
    row = lines[2].split(",")
    assert row[0] == "2" and float(row[2]) == 1.0 and row[5] == "200"


def test_bad_arguments():
    with pytest.raises(ValueError):
        fk_log_weights(NN1, 0, 1.0, B_DELTA, [1.0], 10, 0)
    with pytest.raises(ValueError):
        fk_log_weights(NN1, 2, 1.0, B_DELTA, [2.0, 1.0], 10, 0)
    with pytest.raises(ValueError):
        sample_path(NN1, -1.0, 1.0, 0)
