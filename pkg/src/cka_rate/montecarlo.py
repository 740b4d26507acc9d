"""Pulse-level Monte Carlo of the three-party measurement.

Each trial draws the random global phases, encoded bits and photon numbers,
propagates them through loss and (for the X basis) the beam splitter, adds
dark counts, and applies the one-and-only-one-click rule. Counts become
frequency estimates that are compared against the closed forms in ``gains``.

Trials are cut into fixed-size blocks. Block ``i`` of experiment ``e`` draws
from a stream seeded by ``SeedSequence(seed, spawn_key=(e, i))``, so totals
depend only on ``(seed, trials)`` and not on how blocks are scheduled. Both
the numba kernels and the vectorized numpy path draw from Philox generators,
but they consume the streams in different orders, so the two paths agree
statistically rather than bit for bit.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from cka_rate import _accel
from cka_rate._accel import jit
from cka_rate.gains import (
    gain_table,
    gain_x_pair,
    gain_z_pair,
    single_photon_yields,
)
from cka_rate.model import ProtocolParams, SystemParams, p_pm, sqrt_eta

__all__ = [
    "SimEstimate",
    "TrialRecord",
    "simulate_gains",
    "simulate_single_photon_component",
    "analytic_counterparts",
    "compare",
    "trial_records",
    "write_trial_log",
]

BLOCK = 1 << 20
TWO_PI = 2.0 * math.pi

# stable experiment identifiers feed the seed tree
_EXP_Z, _EXP_X, _EXP_KEY, _EXP_PM, _EXP_SP = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class SimEstimate:
    name: str
    estimate: float
    std_error: float
    trials: int

    @classmethod
    def from_counts(cls, name, hits, n):
        if n <= 0:
            return cls(name, math.nan, math.nan, 0)
        p = hits / n
        return cls(name, p, math.sqrt(p * (1.0 - p) / n), int(n))


@dataclass(frozen=True)
class TrialRecord:
    basis_choice: str
    k_a: float
    k_b: float
    theta_a: float
    theta_b: float
    x_a: int
    x_b: int
    r: Optional[int]
    clicks: tuple
    accepted: bool


# ---------------------------------------------------------------- helpers shared by both paths


@jit
def _window(theta_a, theta_b, phi_ab, delta):
    """Phase-matching slice index: 0, 1, or -1 when outside both slices."""
    d = (theta_a - theta_b - phi_ab) % (2.0 * math.pi)
    if d <= delta or d >= 2.0 * math.pi - delta:
        return 0
    if abs(d - math.pi) <= delta:
        return 1
    return -1


def _window_np(theta_a, theta_b, phi_ab, delta):
    d = np.mod(theta_a - theta_b - phi_ab, TWO_PI)
    r = np.full(d.shape, -1, dtype=np.int64)
    r[np.abs(d - math.pi) <= delta] = 1
    r[(d <= delta) | (d >= TWO_PI - delta)] = 0
    return r


# ---------------------------------------------------------------- numba kernels


@jit
def _z_pair_kernel(rng, k_a, k_b, s, pd, n):
    d1 = 0
    d2 = 0
    for _ in range(n):
        na = rng.poisson(k_a * s) if k_a > 0 else 0
        nb = rng.poisson(k_b * s) if k_b > 0 else 0
        c1 = na > 0 or rng.random() < pd
        c2 = nb > 0 or rng.random() < pd
        if c1 and not c2:
            d1 += 1
        elif c2 and not c1:
            d2 += 1
    return d1, d2


@jit
def _x_outcome(rng, ia, ib, dphase, pd):
    """Clicks of D3 and D4 for coherent inputs of intensities ``ia``, ``ib`` at Charlie."""
    cross = 2.0 * math.sqrt(ia * ib) * math.cos(dphase)
    i3 = max(0.5 * (ia + ib + cross), 0.0)
    i4 = max(0.5 * (ia + ib - cross), 0.0)
    c3 = (i3 > 0 and rng.poisson(i3) > 0) or rng.random() < pd
    c4 = (i4 > 0 and rng.poisson(i4) > 0) or rng.random() < pd
    return c3, c4


@jit
def _x_pair_kernel(rng, k_a, k_b, s, pd, n):
    hits = 0
    for _ in range(n):
        ta = 2.0 * math.pi * rng.random()
        tb = 2.0 * math.pi * rng.random()
        xa = rng.random() < 0.5
        xb = rng.random() < 0.5
        dphase = (ta + math.pi * xa) - (tb + math.pi * xb)
        c3, c4 = _x_outcome(rng, k_a * s, k_b * s, dphase, pd)
        if c3 != c4:
            hits += 1
    return hits


@jit
def _z_key_kernel(rng, t, mu, s, pd, n):
    clicks = 0
    disagree = 0
    err_ac = 0
    err_bc = 0
    for _ in range(n):
        a_sends = rng.random() < t
        b_sends = rng.random() < t
        na = rng.poisson(mu * s) if a_sends else 0
        nb = rng.poisson(mu * s) if b_sends else 0
        c1 = na > 0 or rng.random() < pd
        c2 = nb > 0 or rng.random() < pd
        if c1 == c2:
            continue
        clicks += 1
        bit_a = 0 if a_sends else 1  # flipped
        bit_b = 1 if b_sends else 0
        bit_c = 0 if c1 else 1
        if bit_a != bit_b:
            disagree += 1
        if bit_a != bit_c:
            err_ac += 1
        if bit_b != bit_c:
            err_bc += 1
    return clicks, disagree, err_ac, err_bc


@jit
def _pm_kernel(rng, nu, s, pd, ed, delta, phi_ab, n):
    accepted = 0
    correct = 0
    wrong = 0
    errors = 0
    for _ in range(n):
        ta = 2.0 * math.pi * rng.random()
        tb = 2.0 * math.pi * rng.random()
        xa = 1 if rng.random() < 0.5 else 0
        xb = 1 if rng.random() < 0.5 else 0
        r = _window(ta, tb, phi_ab, delta)
        if r < 0:
            continue
        accepted += 1
        dphase = (ta + math.pi * xa) - (tb + phi_ab + math.pi * xb)
        c3, c4 = _x_outcome(rng, nu * s, nu * s, dphase, pd)
        if c3 == c4:
            continue
        xc = 0 if c3 else 1
        ok = xc == (xa ^ xb ^ r)
        if ok:
            correct += 1
        else:
            wrong += 1
        if rng.random() < ed:
            ok = not ok
        if not ok:
            errors += 1
    return accepted, correct, wrong, errors


@jit
def _sp_kernel(rng, s, pd, ed, delta, n):
    """Single-photon sector of two equal-intensity pulses: qubit interference at the beam splitter."""
    clicks = 0
    acc_clicks = 0
    errors = 0
    for _ in range(n):
        ta = 2.0 * math.pi * rng.random()
        tb = 2.0 * math.pi * rng.random()
        xa = 1 if rng.random() < 0.5 else 0
        xb = 1 if rng.random() < 0.5 else 0
        dphase = (ta + math.pi * xa) - (tb + math.pi * xb)
        arrived = rng.random() < s
        to_d3 = rng.random() < 0.5 * (1.0 + math.cos(dphase))
        c3 = (arrived and to_d3) or rng.random() < pd
        c4 = (arrived and not to_d3) or rng.random() < pd
        if c3 == c4:
            continue
        clicks += 1
        r = _window(ta, tb, 0.0, delta)
        if r < 0:
            continue
        acc_clicks += 1
        xc = 0 if c3 else 1
        ok = xc == (xa ^ xb ^ r)
        if rng.random() < ed:
            ok = not ok
        if not ok:
            errors += 1
    return clicks, acc_clicks, errors


# ---------------------------------------------------------------- numpy kernels


def _z_pair_trials(rng, k_a, k_b, s, pd, n):
    na = rng.poisson(k_a * s, n) if k_a > 0 else np.zeros(n, dtype=np.int64)
    nb = rng.poisson(k_b * s, n) if k_b > 0 else np.zeros(n, dtype=np.int64)
    c1 = (na > 0) | (rng.random(n) < pd)
    c2 = (nb > 0) | (rng.random(n) < pd)
    return c1, c2


def _z_pair_np(rng, k_a, k_b, s, pd, n):
    c1, c2 = _z_pair_trials(rng, k_a, k_b, s, pd, n)
    return int(np.count_nonzero(c1 & ~c2)), int(np.count_nonzero(c2 & ~c1))


def _x_outcome_np(rng, ia, ib, dphase, pd):
    cross = 2.0 * np.sqrt(ia * ib) * np.cos(dphase)
    i3 = np.maximum(0.5 * (ia + ib + cross), 0.0)
    i4 = np.maximum(0.5 * (ia + ib - cross), 0.0)
    n = dphase.shape[0]
    c3 = (rng.poisson(i3) > 0) | (rng.random(n) < pd)
    c4 = (rng.poisson(i4) > 0) | (rng.random(n) < pd)
    return c3, c4


def _x_pair_trials(rng, k_a, k_b, s, pd, n, phi_ab=0.0):
    ta = TWO_PI * rng.random(n)
    tb = TWO_PI * rng.random(n)
    xa = (rng.random(n) < 0.5).astype(np.int64)
    xb = (rng.random(n) < 0.5).astype(np.int64)
    dphase = (ta + math.pi * xa) - (tb + phi_ab + math.pi * xb)
    c3, c4 = _x_outcome_np(rng, k_a * s, k_b * s, dphase, pd)
    return ta, tb, xa, xb, c3, c4


def _x_pair_np(rng, k_a, k_b, s, pd, n):
    *_, c3, c4 = _x_pair_trials(rng, k_a, k_b, s, pd, n)
    return int(np.count_nonzero(c3 != c4))


def _z_key_np(rng, t, mu, s, pd, n):
    a_sends = rng.random(n) < t
    b_sends = rng.random(n) < t
    na = np.where(a_sends, rng.poisson(mu * s, n), 0)
    nb = np.where(b_sends, rng.poisson(mu * s, n), 0)
    c1 = (na > 0) | (rng.random(n) < pd)
    c2 = (nb > 0) | (rng.random(n) < pd)
    one = c1 != c2
    bit_a = np.where(a_sends, 0, 1)
    bit_b = np.where(b_sends, 1, 0)
    bit_c = np.where(c1, 0, 1)
    return (
        int(np.count_nonzero(one)),
        int(np.count_nonzero(one & (bit_a != bit_b))),
        int(np.count_nonzero(one & (bit_a != bit_c))),
        int(np.count_nonzero(one & (bit_b != bit_c))),
    )


def _pm_np(rng, nu, s, pd, ed, delta, phi_ab, n):
    ta, tb, xa, xb, c3, c4 = _x_pair_trials(rng, nu, nu, s, pd, n, phi_ab)
    r = _window_np(ta, tb, phi_ab, delta)
    acc = r >= 0
    one = acc & (c3 != c4)
    xc = np.where(c3, 0, 1)
    ok = xc == (xa ^ xb ^ np.maximum(r, 0))
    flip = rng.random(n) < ed
    err = one & (ok == flip)
    return (
        int(np.count_nonzero(acc)),
        int(np.count_nonzero(one & ok)),
        int(np.count_nonzero(one & ~ok)),
        int(np.count_nonzero(err)),
    )


def _sp_np(rng, s, pd, ed, delta, n):
    ta = TWO_PI * rng.random(n)
    tb = TWO_PI * rng.random(n)
    xa = (rng.random(n) < 0.5).astype(np.int64)
    xb = (rng.random(n) < 0.5).astype(np.int64)
    dphase = (ta + math.pi * xa) - (tb + math.pi * xb)
    arrived = rng.random(n) < s
    to_d3 = rng.random(n) < 0.5 * (1.0 + np.cos(dphase))
    c3 = (arrived & to_d3) | (rng.random(n) < pd)
    c4 = (arrived & ~to_d3) | (rng.random(n) < pd)
    one = c3 != c4
    r = _window_np(ta, tb, 0.0, delta)
    acc = one & (r >= 0)
    ok = np.where(c3, 0, 1) == (xa ^ xb ^ np.maximum(r, 0))
    flip = rng.random(n) < ed
    return int(np.count_nonzero(one)), int(np.count_nonzero(acc)), int(np.count_nonzero(acc & (ok == flip)))


# ---------------------------------------------------------------- block driver


def _block_seeds(seed, experiment, sub, trials):
    n_blocks = -(-trials // BLOCK)
    parent = np.random.SeedSequence(seed, spawn_key=(experiment, sub))
    sizes = [min(BLOCK, trials - i * BLOCK) for i in range(n_blocks)]
    return list(zip(parent.spawn(n_blocks), sizes))


def _run_blocks(numba_kernel, numpy_kernel, args, seed, experiment, sub, trials, backend, workers):
    backend = _accel.resolve(backend)
    blocks = _block_seeds(seed, experiment, sub, trials)

    def one(block):
        ss, size = block
        rng = np.random.Generator(np.random.Philox(ss))
        kernel = numba_kernel if backend == "numba" else numpy_kernel
        return kernel(rng, *args, size)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, blocks))
    else:
        results = [one(b) for b in blocks]
    results = [r if isinstance(r, tuple) else (r,) for r in results]
    return tuple(int(sum(col)) for col in zip(*results))


def _pair_label(k, mu, nu):
    if k == 0:
        return "0"
    return "mu" if k == mu else "nu"


def _pairs(pp):
    mu, nu = pp.mu, pp.nu
    z = [(0.0, 0.0), (mu, 0.0), (0.0, mu), (mu, mu), (nu, 0.0), (0.0, nu)]
    x = [(0.0, 0.0), (nu, 0.0), (0.0, nu), (mu, 0.0), (0.0, mu), (mu, mu), (nu, nu), (mu, nu)]
    return z, x


def _name(prefix, pair, pp):
    return f"{prefix}_{_pair_label(pair[0], pp.mu, pp.nu)}_{_pair_label(pair[1], pp.mu, pp.nu)}"


def simulate_gains(
    sys: SystemParams,
    pp: ProtocolParams,
    L_km: float,
    trials: int,
    seed: int,
    backend=None,
    workers: int = 1,
    phi_ab: float = 0.0,
) -> dict:
    """Frequency estimates of every gain and error rate, ``trials`` trials per experiment.

    Experiments: each Z-basis intensity pair, each X-basis pair with random
    phases, the Z-basis key-generation round at sending probability ``t``, and
    the phase-matched ``(nu, nu)`` X round (misalignment applied as an
    outcome flip with probability ``e_d_x``). Ratio quantities carry the
    number of conditioning events in ``trials``.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    s = sqrt_eta(sys, L_km)
    pd = sys.p_d
    out = {}
    zpairs, xpairs = _pairs(pp)
    for i, pair in enumerate(zpairs):
        d1, d2 = _run_blocks(_z_pair_kernel, _z_pair_np, (pair[0], pair[1], s, pd), seed, _EXP_Z, i, trials, backend, workers)
        est = SimEstimate.from_counts(_name("Qz", pair, pp), d1 + d2, trials)
        out[est.name] = est
    for i, pair in enumerate(xpairs):
        (hits,) = _run_blocks(_x_pair_kernel, _x_pair_np, (pair[0], pair[1], s, pd), seed, _EXP_X, i, trials, backend, workers)
        est = SimEstimate.from_counts(_name("Qx", pair, pp), hits, trials)
        out[est.name] = est

    clicks, disagree, ac, bc = _run_blocks(_z_key_kernel, _z_key_np, (pp.t, pp.mu, s, pd), seed, _EXP_KEY, 0, trials, backend, workers)
    out["Qc_z"] = SimEstimate.from_counts("Qc_z", clicks - disagree, trials)
    out["Qe_z"] = SimEstimate.from_counts("Qe_z", disagree, trials)
    out["E_z"] = SimEstimate.from_counts("E_z", disagree, clicks)
    out["E_AC"] = SimEstimate.from_counts("E_AC", ac, clicks)
    out["E_BC"] = SimEstimate.from_counts("E_BC", bc, clicks)

    acc, good, bad, err = _run_blocks(
        _pm_kernel, _pm_np, (pp.nu, s, pd, sys.e_d_x, sys.delta, phi_ab), seed, _EXP_PM, 0, trials, backend, workers
    )
    out["p_pm_accept"] = SimEstimate.from_counts("p_pm_accept", acc, trials)
    out["Qpm_c"] = SimEstimate.from_counts("Qpm_c", good, trials)
    out["Qpm_e"] = SimEstimate.from_counts("Qpm_e", bad, trials)
    out["Qpm"] = SimEstimate.from_counts("Qpm", good + bad, trials)
    out["Epm"] = SimEstimate.from_counts("Epm", err, good + bad)
    return out


def simulate_single_photon_component(
    sys: SystemParams, nu: float, L_km: float, trials: int, seed: int, backend=None, workers: int = 1
) -> dict:
    """True single-photon X yield and phase-matched error rate.

    Trials are drawn directly inside the one-photon sector of the two
    ``nu`` pulses, whose state ``(|10> + e^{i phase}|01>)/sqrt(2)`` does not
    depend on ``nu``; ``sector_probability`` reports ``2 nu e^{-2 nu}``.

    Raises
    ------
    RuntimeError
        When no trial falls inside a phase-matching slice with one click.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    s = sqrt_eta(sys, L_km)
    clicks, acc, err = _run_blocks(
        _sp_kernel, _sp_np, (s, sys.p_d, sys.e_d_x, sys.delta), seed, _EXP_SP, 0, trials, backend, workers
    )
    if acc == 0:
        raise RuntimeError("no phase-matched single-photon events; increase trials")
    return {
        "Y1x": SimEstimate.from_counts("Y1x", clicks, trials),
        "e1x": SimEstimate.from_counts("e1x", err, acc),
        "sector_probability": 2.0 * nu * math.exp(-2.0 * nu),
    }


def analytic_counterparts(sys: SystemParams, pp: ProtocolParams, L_km: float) -> dict:
    """Closed-form values under the same names ``simulate_gains`` uses."""
    s = sqrt_eta(sys, L_km)
    gt = gain_table(sys, pp, s)
    zpairs, xpairs = _pairs(pp)
    out = {_name("Qz", p, pp): gain_z_pair(sys, s, *p) for p in zpairs}
    out.update({_name("Qx", p, pp): gain_x_pair(sys, s, *p) for p in xpairs})
    out.update(
        Qc_z=gt.Q_c_z,
        Qe_z=gt.Q_e_z,
        E_z=gt.E_z,
        E_AC=gt.E_z_AC,
        E_BC=gt.E_z_BC,
        p_pm_accept=p_pm(sys.delta),
        Qpm_c=gt.Qx_pm_c,
        Qpm_e=gt.Qx_pm_e,
        Qpm=gt.Qx_pm_total,
        Epm=gt.Ex_pm,
    )
    return out


@dataclass(frozen=True)
class Comparison:
    name: str
    analytic: float
    estimate: float
    std_error: float
    z: float
    events: int


def compare(estimates: dict, analytic: dict) -> list:
    """z-scores of each estimate against its closed form.

    The standard error is taken under the closed-form value,
    ``sqrt(p (1-p) / n)``, so that quantities with no observed events still
    get a finite score. Ratios with no conditioning events get ``z = nan``.
    """
    rows = []
    for name, est in estimates.items():
        p0 = float(analytic[name])
        if est.trials == 0:
            rows.append(Comparison(name, p0, math.nan, math.nan, math.nan, 0))
            continue
        se = math.sqrt(max(p0 * (1.0 - p0), 0.0) / est.trials)
        diff = est.estimate - p0
        if se == 0.0:
            z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        else:
            z = diff / se
        rows.append(Comparison(name, p0, est.estimate, se, z, est.trials))
    return rows


# ---------------------------------------------------------------- trial log


def trial_records(
    sys: SystemParams, pp: ProtocolParams, L_km: float, trials: int, seed: int, basis: str = "X", pair=None
) -> Iterator[TrialRecord]:
    """Per-trial records of one experiment (numpy path), for inspection and logging.

    ``basis="X"`` runs the phase-matched round at ``pair`` (default ``(nu, nu)``);
    ``basis="Z"`` runs a fixed intensity pair (default ``(mu, 0)``).
    """
    s = sqrt_eta(sys, L_km)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(99,))))
    if basis == "Z":
        k_a, k_b = pair if pair is not None else (pp.mu, 0.0)
        c1, c2 = _z_pair_trials(rng, k_a, k_b, s, sys.p_d, trials)
        for i in range(trials):
            yield TrialRecord("Z", k_a, k_b, math.nan, math.nan, 0, 0, None, (bool(c1[i]), bool(c2[i]), False, False), bool(c1[i] != c2[i]))
        return
    if basis != "X":
        raise ValueError("basis must be 'Z' or 'X'")
    k_a, k_b = pair if pair is not None else (pp.nu, pp.nu)
    ta, tb, xa, xb, c3, c4 = _x_pair_trials(rng, k_a, k_b, s, sys.p_d, trials)
    r = _window_np(ta, tb, 0.0, sys.delta)
    for i in range(trials):
        ri = int(r[i])
        yield TrialRecord(
            "X", k_a, k_b, float(ta[i]), float(tb[i]), int(xa[i]), int(xb[i]),
            None if ri < 0 else ri, (False, False, bool(c3[i]), bool(c4[i])),
            bool(ri >= 0 and c3[i] != c4[i]),
        )


def write_trial_log(path, records, accepted_only: bool = True) -> int:
    """Write records as CSV with columns basis,k_a,k_b,theta_a,theta_b,clicks,accepted."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["basis", "k_a", "k_b", "theta_a", "theta_b", "clicks", "accepted"])
        for rec in records:
            if accepted_only and not rec.accepted:
                continue
            clicks = "".join("1" if c else "0" for c in rec.clicks)
            w.writerow([rec.basis_choice, repr(rec.k_a), repr(rec.k_b), repr(rec.theta_a), repr(rec.theta_b), clicks, int(rec.accepted)])
            n += 1
    return n
