"""Real-coded genetic search for the free protocol parameters at each distance.

Candidates live in the unit cube and are mapped log-uniformly onto the
parameter box. Each generation keeps two elites, fills the rest by tournament
selection, blend (BLX-alpha) crossover and Gaussian mutation whose step grows
after an improving generation and shrinks otherwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from cka_rate.keyrate import (
    PRACTICAL,
    SINGLE_PHOTON,
    RatePoint,
    practical_rate,
    practical_rate_batch,
    single_photon_rate,
    single_photon_rate_batch,
)
from cka_rate.model import ProtocolParams, SystemParams, sqrt_eta

__all__ = ["OptimizerConfig", "OptimizationResult", "optimize_at_distance", "optimize_single_photon", "sweep"]

_ELITES = 2
_NU_CAP = 1.0 - 1e-3  # repaired decoy intensity never exceeds this fraction of mu


@dataclass(frozen=True)
class OptimizerConfig:
    population_size: int = 64
    generations: int = 200
    seed: int = 12345
    restarts: int = 3
    tolerance: float = 1e-10
    patience: int = 40
    t_bounds: tuple = (1e-6, 0.5)
    mu_bounds: tuple = (1e-4, 1.5)
    nu_lower: float = 1e-5
    tournament_size: int = 3
    blend_alpha: float = 0.3
    mutation_prob: float = 0.35
    initial_step: float = 0.08

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        if self.generations < 1 or self.restarts < 1:
            raise ValueError("generations and restarts must be positive")
        for name in ("t_bounds", "mu_bounds"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ValueError(f"{name} must be a nonempty positive interval")
        if self.t_bounds[1] >= 1:
            raise ValueError("t upper bound must be below 1")
        if not 0 < self.nu_lower < self.mu_bounds[0]:
            raise ValueError("nu lower bound must sit below the smallest mu")
        if not self.seed >= 0:
            raise ValueError("seed must be non-negative")

    def practical_box(self):
        lo = np.log([self.t_bounds[0], self.mu_bounds[0], self.nu_lower])
        hi = np.log([self.t_bounds[1], self.mu_bounds[1], self.mu_bounds[1]])
        return lo, hi

    def single_photon_box(self):
        return np.log([self.t_bounds[0]]), np.log([self.t_bounds[1]])


@dataclass(frozen=True)
class OptimizationResult:
    best: RatePoint
    trace: tuple = field(repr=False)
    evaluations: int = 0
    flagged: bool = False
    genes: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


def _decode_practical(u, lo, hi):
    x = np.exp(lo + u * (hi - lo))
    t, mu, nu = x[:, 0], x[:, 1], x[:, 2]
    nu = np.minimum(nu, mu * _NU_CAP)
    return t, mu, nu


def _encode_practical(t, mu, nu, lo, hi):
    x = np.log(np.column_stack([t, mu, nu]))
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def _evolve(objective, dim, cfg: OptimizerConfig, seed_pop=None):
    """Maximize ``objective(u) -> rates`` over the unit cube; returns (genes, value, trace, evals)."""
    children_rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)]
    n = cfg.population_size
    best_u, best_val = None, -math.inf
    trace = []
    evals = 0
    for r, rng in enumerate(children_rngs):
        pop = rng.random((n, dim))
        if r == 0 and seed_pop is not None:
            k = min(len(seed_pop), n // 2)
            pop[:k] = seed_pop[:k]
        fit = objective(pop)
        evals += n
        step = cfg.initial_step
        stall = 0
        gen_best = fit.max()
        for _ in range(cfg.generations):
            order = np.argsort(-fit, kind="stable")
            elites = pop[order[:_ELITES]]
            n_child = n - _ELITES
            # tournament selection, one pair of parents per child
            contenders = rng.integers(0, n, size=(2, n_child, cfg.tournament_size))
            winners = np.take_along_axis(contenders, np.argmax(fit[contenders], axis=-1)[..., None], axis=-1)[..., 0]
            p1, p2 = pop[winners[0]], pop[winners[1]]
            a = cfg.blend_alpha
            w = rng.uniform(-a, 1.0 + a, size=(n_child, dim))
            child = p1 + w * (p2 - p1)
            mutate = rng.random((n_child, dim)) < cfg.mutation_prob
            child = child + mutate * rng.normal(0.0, step, size=(n_child, dim))
            # reflect once, then clip
            child = np.where(child < 0, -child, child)
            child = np.where(child > 1, 2.0 - child, child)
            child = np.clip(child, 0.0, 1.0)
            child_fit = objective(child)
            evals += n_child
            pop = np.vstack([elites, child])
            fit = np.concatenate([fit[order[:_ELITES]], child_fit])
            new_best = fit.max()
            improved = new_best > gen_best
            step = min(step * 1.25, 0.3) if improved else max(step * 0.85, 1e-4)
            if new_best - gen_best > cfg.tolerance * abs(gen_best):
                stall = 0
            else:
                stall += 1
            gen_best = max(gen_best, new_best)
            if gen_best > best_val:
                best_val = gen_best
                best_u = pop[int(np.argmax(fit))].copy()
            trace.append(best_val)
            if stall >= cfg.patience:
                break
        if gen_best > best_val:
            best_val = gen_best
            best_u = pop[int(np.argmax(fit))].copy()
    return best_u, best_val, trace, evals


def optimize_at_distance(
    sys: SystemParams, cfg: OptimizerConfig, L_km: float, seed_params: Optional[Sequence[ProtocolParams]] = None
) -> OptimizationResult:
    """Maximize the practical key rate over ``(t, mu, nu)`` at distance ``L_km``.

    The reported ``best`` is re-evaluated through ``practical_rate`` so that it
    is identical to a direct evaluation at its own parameters. Beyond the
    cutoff every candidate is negative; the result then carries ``R = 0`` and
    ``flagged = True``.
    """
    s = sqrt_eta(sys, L_km)
    lo, hi = cfg.practical_box()

    def objective(u):
        return practical_rate_batch(sys, *_decode_practical(u, lo, hi), s)

    seed_pop = None
    if seed_params:
        seed_pop = np.vstack(
            [_encode_practical(p.t, p.mu, p.nu, lo, hi) for p in seed_params]
        )
    best_u, _, trace, evals = _evolve(objective, 3, cfg, seed_pop)
    t, mu, nu = (float(v[0]) for v in _decode_practical(best_u[None, :], lo, hi))
    pp = ProtocolParams(t=t, mu=mu, nu=nu)
    point = practical_rate(sys, pp, L_km)
    flagged = not point.R > 0
    if flagged:
        point = _replace_flag(point, "beyond_cutoff")
    return OptimizationResult(best=point, trace=tuple(trace), evaluations=evals, flagged=flagged, genes=best_u)


def optimize_single_photon(sys: SystemParams, cfg: OptimizerConfig, L_km: float, seed_t=None) -> OptimizationResult:
    """Maximize the single-photon protocol rate over ``t``."""
    s = sqrt_eta(sys, L_km)
    lo, hi = cfg.single_photon_box()

    def objective(u):
        return single_photon_rate_batch(sys, np.exp(lo + u[:, 0] * (hi - lo)), s)

    seed_pop = None
    if seed_t is not None:
        seed_pop = np.clip((np.log(np.atleast_1d(seed_t)) - lo) / (hi - lo), 0, 1)[:, None]
    best_u, _, trace, evals = _evolve(objective, 1, cfg, seed_pop)
    t = float(np.exp(lo + best_u[0] * (hi - lo))[0])
    point = single_photon_rate(sys, t, L_km)
    flagged = not point.R > 0
    if flagged:
        point = _replace_flag(point, "beyond_cutoff")
    return OptimizationResult(best=point, trace=tuple(trace), evaluations=evals, flagged=flagged, genes=best_u)


def _replace_flag(point: RatePoint, flag: str) -> RatePoint:
    from dataclasses import replace

    return replace(point, flag=flag)


def _optimize_one(args):
    sys, cfg, L, kind = args
    if kind == SINGLE_PHOTON:
        return optimize_single_photon(sys, cfg, L).best
    return optimize_at_distance(sys, cfg, L).best


def sweep(
    sys: SystemParams,
    cfg: OptimizerConfig,
    distances: Sequence[float],
    protocol_kind: str = PRACTICAL,
    warm_start: bool = True,
    workers: int = 1,
) -> list:
    """Optimized rate at every distance, in grid order.

    With ``warm_start`` the points run sequentially and each one seeds its
    first population with the previous optimum. Otherwise points are
    independent and may run on ``workers`` processes.
    """
    distances = [float(L) for L in distances]
    if any(b < a for a, b in zip(distances, distances[1:])):
        raise ValueError("distances must be sorted ascending")
    if protocol_kind not in (PRACTICAL, SINGLE_PHOTON):
        raise ValueError(f"unknown protocol kind {protocol_kind!r}")
    if not warm_start:
        jobs = [(sys, cfg, L, protocol_kind) for L in distances]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_optimize_one, jobs))
        return [_optimize_one(j) for j in jobs]

    points = []
    prev = None
    for L in distances:
        if protocol_kind == SINGLE_PHOTON:
            res = optimize_single_photon(sys, cfg, L, seed_t=None if prev is None else [prev.t])
        else:
            seeds = None if prev is None or prev.params is None else [prev.params]
            res = optimize_at_distance(sys, cfg, L, seed_params=seeds)
        points.append(res.best)
        if not res.flagged:
            prev = res.best
    return points
