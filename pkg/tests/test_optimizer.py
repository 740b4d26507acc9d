import dataclasses
import math

import numpy as np
import pytest

from cka_rate.keyrate import SINGLE_PHOTON, practical_rate, practical_rate_batch
from cka_rate.model import DEFAULT_SYSTEM, sqrt_eta
from cka_rate.optimizer import OptimizerConfig, optimize_at_distance, optimize_single_photon, sweep

FAST = OptimizerConfig(population_size=32, generations=60, restarts=2, patience=20)


def grid_best(sys, cfg, L, n=40):
    t = np.geomspace(cfg.t_bounds[0], cfg.t_bounds[1], n)
    mu = np.geomspace(cfg.mu_bounds[0], cfg.mu_bounds[1], n)
    nu = np.geomspace(cfg.nu_lower, cfg.mu_bounds[1], n)
    T, M, V = (a.ravel() for a in np.meshgrid(t, mu, nu, indexing="ij"))
    ok = V < M
    return float(np.max(practical_rate_batch(sys, T[ok], M[ok], V[ok], sqrt_eta(sys, L))))


def test_config_validation():
    for bad in (dict(population_size=2), dict(generations=0), dict(t_bounds=(0.5, 0.1)), dict(t_bounds=(0.1, 1.0)), dict(nu_lower=1.0), dict(seed=-1)):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


def test_deterministic_and_monotone_trace():
    a = optimize_at_distance(DEFAULT_SYSTEM, FAST, 200)
    b = optimize_at_distance(DEFAULT_SYSTEM, FAST, 200)
    assert a.best == b.best and a.trace == b.trace and a.evaluations == b.evaluations
    assert all(y >= x for x, y in zip(a.trace, a.trace[1:]))
    c = optimize_at_distance(DEFAULT_SYSTEM, dataclasses.replace(FAST, seed=99), 200)
    assert c.trace != a.trace


def test_self_consistency_exact():
    res = optimize_at_distance(DEFAULT_SYSTEM, FAST, 350)
    assert res.best.R == practical_rate(DEFAULT_SYSTEM, res.best.params, 350).R
    assert res.best.params.nu < res.best.params.mu


def test_beyond_cutoff_flagged():
    res = optimize_at_distance(DEFAULT_SYSTEM, FAST, 1200)
    assert res.flagged and res.best.R == 0.0 and res.best.flag == "beyond_cutoff"
    sp = optimize_single_photon(DEFAULT_SYSTEM, FAST, 1200)
    assert sp.flagged and sp.best.R == 0.0


def test_beats_grid_search_at_300km():
    res = optimize_at_distance(DEFAULT_SYSTEM, OptimizerConfig(), 300)
    assert res.best.R >= grid_best(DEFAULT_SYSTEM, OptimizerConfig(), 300) * (1 - 0.01)


def test_sweep_basics():
    assert sweep(DEFAULT_SYSTEM, FAST, [0])[0].R > 0
    with pytest.raises(ValueError):
        sweep(DEFAULT_SYSTEM, FAST, [100, 0])
    with pytest.raises(ValueError):
        sweep(DEFAULT_SYSTEM, FAST, [0], protocol_kind="other")


def test_sweep_reaches_600_in_50km_steps():
    # [PAPER] positive rate through 600 km
    pts = sweep(DEFAULT_SYSTEM, OptimizerConfig(), list(range(0, 601, 50)))
    assert all(p.R > 0 for p in pts)
    assert all(b.R < a.R for a, b in zip(pts, pts[1:]))


def test_parallel_cold_sweep_matches_serial():
    grid = [0, 250, 500]
    serial = sweep(DEFAULT_SYSTEM, FAST, grid, warm_start=False)
    parallel = sweep(DEFAULT_SYSTEM, FAST, grid, warm_start=False, workers=2)
    assert serial == parallel


def test_single_photon_dominates_practical():
    grid = list(range(0, 601, 100))
    prac = sweep(DEFAULT_SYSTEM, OptimizerConfig(), grid)
    ideal = sweep(DEFAULT_SYSTEM, OptimizerConfig(), grid, protocol_kind=SINGLE_PHOTON)
    for a, b in zip(prac, ideal):
        assert b.R >= a.R


def test_single_photon_optimum_in_box():
    res = optimize_single_photon(DEFAULT_SYSTEM, FAST, 300)
    assert FAST.t_bounds[0] <= res.best.t <= FAST.t_bounds[1]
    assert res.best.R > 0 and math.isnan(res.best.mu)
