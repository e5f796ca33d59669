"""Particle simulator: determinism, mean-field limit, collocation plumbing."""

import numpy as np
import pytest

from tumorkin import (
    CollocationPlan,
    ControlSpec,
    GrowthParams,
    PositivityError,
    RandomVector,
    Selective,
    Uniform,
    integrate_micro,
    run_collocation,
    run_dsmc,
)
from tumorkin.control import AtTime, MeanThreshold
from tumorkin.dsmc_sim import noise_amplitude, sample_from_grid
from tumorkin.growth_models import phi_eps


@pytest.fixture
def par() -> GrowthParams:
    return GrowthParams(mu=0.3, lam=0.0, delta=0.0, x_L=0.5, sigma2=0.0025)


def test_noise_amplitude_formula():
    assert noise_amplitude(0.04, 0.1) == pytest.approx(np.sqrt(3 * 0.1 * 0.04))


def test_positivity_guard():
    p = GrowthParams(mu=0.3, lam=0.0, delta=0.0, x_L=0.5, sigma2=0.5)
    with pytest.raises(PositivityError):
        run_dsmc(p, 100, 1.0, 0.05, np.full(100, 0.2), eps=10.0, seed=0)


def test_argument_validation(par):
    ic = np.full(10, 0.2)
    with pytest.raises(ValueError):
        run_dsmc(par, 10, 1.0, 0.2, ic, eps=0.1, seed=0)  # dt > eps
    with pytest.raises(ValueError):
        run_dsmc(par, 10, -1.0, 0.05, ic, seed=0)
    with pytest.raises(ValueError):
        run_dsmc(par, 10, 1.0, 0.05, ic, seed=0,
                 rng=np.random.default_rng(0))


def test_same_seed_same_population(par):
    ic = np.linspace(0.05, 0.6, 500)
    a = run_dsmc(par, 500, 2.0, 0.05, ic, seed=42)
    b = run_dsmc(par, 500, 2.0, 0.05, ic, seed=42)
    assert np.array_equal(a.final, b.final)
    assert np.array_equal(a.m, b.m)
    c = run_dsmc(par, 500, 2.0, 0.05, ic, seed=43)
    assert not np.array_equal(a.final, c.final)


def test_deterministic_map_when_noise_free():
    # dt = eps fires every particle every step; with sigma2 = 0 the chain is
    # the deterministic recursion x -> x (1 + phi_eps(x / x_L))
    p = GrowthParams(mu=0.3, lam=0.0, delta=0.0, x_L=0.5, sigma2=0.0)
    dt = eps = 0.01
    res = run_dsmc(p, 5, 3.0, dt, np.full(5, 0.07), eps=eps, seed=1)
    x = 0.07
    for _ in range(300):
        x = x * (1.0 + phi_eps(x / p.x_L, p, eps))
    assert res.final == pytest.approx(np.full(5, x), rel=1e-12)
    # and that recursion is an O(eps) approximation of the growth ODE
    ode = integrate_micro(0.07, p, [0.0, 3.0], max_step=0.2)[-1]
    assert res.final[0] == pytest.approx(ode, rel=1e-3)


def test_records_and_t_zero(par):
    ic = np.full(200, 0.2)
    res = run_dsmc(par, 200, 0.0, 0.05, ic, seed=3)
    assert res.times.tolist() == [0.0]
    assert res.m[0] == pytest.approx(0.2)
    res2 = run_dsmc(par, 200, 1.0, 0.05, ic, seed=3, n_records=4,
                    snapshot_times=(0.5,))
    assert res2.times.size == 5
    assert len(res2.snapshots) >= 1
    assert res2.var == pytest.approx(res2.e2 - res2.m**2, abs=1e-12)


def test_population_mean_tracks_ode(par):
    # small eps, moderate noise: the empirical mean follows the growth ODE
    rng = np.random.default_rng(11)
    ic = rng.uniform(0.1, 0.3, size=20000)
    res = run_dsmc(par, 20000, 5.0, 0.01, ic, eps=0.02, seed=7)
    moved = integrate_micro(float(ic.mean()), par, [0.0, 5.0], max_step=0.2)[-1]
    # curvature of the flow spreads mean-of-ODE vs ODE-of-mean slightly
    assert res.m[-1] == pytest.approx(moved, rel=2e-2)


def test_sample_from_grid_moments(grid201, rng):
    from tumorkin import gamma_ic

    f = gamma_ic(grid201, shape=2.0, rate=8.0)
    x = grid201.nodes()
    s = sample_from_grid(rng, x, f, 200_000)
    m_ref = float((x * f).sum() * grid201.dx)
    assert s.mean() == pytest.approx(m_ref, abs=4 * s.std() / np.sqrt(s.size))
    assert s.min() >= 0.0 and s.max() <= grid201.x_max


def test_control_pulls_population_to_target(par):
    ctl = ControlSpec(p=2, kappa=0.1, x_d=0.18, activation=AtTime(0.0))
    ic = np.full(5000, 0.45)
    res = run_dsmc(par, 5000, 20.0, 0.05, ic, control=ctl, seed=5)
    assert abs(res.m[-1] - 0.18) < 0.03
    assert res.activated_at == 0.0


def test_mean_threshold_latches_on_population_mean(par):
    ctl = ControlSpec(p=2, kappa=0.1, x_d=0.18,
                      activation=MeanThreshold(0.3))
    ic = np.full(2000, 0.2)
    res = run_dsmc(par, 2000, 20.0, 0.05, ic, control=ctl, seed=5)
    assert res.activated_at is not None and res.activated_at > 0.0
    # after latching the mean is pinned near the target, far below free growth
    assert res.m[-1] < 0.3


def test_p1_clamping_reported(par):
    ctl = ControlSpec(p=1, kappa=1e-6, x_d=0.18, u_bounds=(-0.2, 0.2),
                      activation=AtTime(0.0))
    ic = np.full(500, 1.5)
    res = run_dsmc(par, 500, 1.0, 0.05, ic, control=ctl, seed=9)
    assert 0.0 < res.clamp_fraction <= 1.0


def test_collocation_weights_and_aggregation(par):
    rv = RandomVector(names=("alpha",), dists=(Uniform(0.2, 0.4),))
    plan = CollocationPlan(base=par, rv=rv, n_per_dim=3, n_particles=400,
                           dt=0.05, seed=21)
    nodes, weights = plan.quadrature()
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    ens = run_collocation(plan, 2.0, np.full(400, 0.2), n_records=4)
    assert len(ens.results) == 3
    manual = np.stack([r.m for r in ens.results], axis=1) @ ens.weights
    assert ens.mean_curve() == pytest.approx(manual)


def test_collocation_threads_do_not_change_results(par):
    rv = RandomVector(names=("alpha",), dists=(Uniform(0.2, 0.4),))
    plan = CollocationPlan(base=par, rv=rv, n_per_dim=4, n_particles=300,
                           dt=0.05, seed=8)
    a = run_collocation(plan, 1.5, np.full(300, 0.2), threads=1)
    b = run_collocation(plan, 1.5, np.full(300, 0.2), threads=4)
    for ra, rb in zip(a.results, b.results):
        assert np.array_equal(ra.final, rb.final)


def test_grid_ic_tuple_accepted(par, grid201):
    from tumorkin import gamma_ic

    f = gamma_ic(grid201, shape=0.3, rate=2.8)
    res = run_dsmc(par, 1000, 1.0, 0.05, (grid201.nodes(), f), seed=2)
    assert res.final.size == 1000
    assert np.all(res.final >= 0.0)
