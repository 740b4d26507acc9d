import csv
import math

import numpy as np
import pytest

from cka_rate import _accel
from cka_rate import montecarlo as mc
from cka_rate.model import DEFAULT_SYSTEM, ProtocolParams, p_pm
from cka_rate.montecarlo import (
    SimEstimate,
    analytic_counterparts,
    compare,
    simulate_gains,
    simulate_single_photon_component,
    trial_records,
    write_trial_log,
)

PROBE = ProtocolParams(t=0.3, mu=0.6, nu=0.2)
DARK_FREE = DEFAULT_SYSTEM.with_overrides(p_d=0.0)
LOSSLESS = DEFAULT_SYSTEM.with_overrides(p_d=0.0, eta_d=1.0, e_d_x=0.0)


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def test_from_counts():
    e = SimEstimate.from_counts("q", 25, 100)
    assert e.estimate == 0.25 and e.std_error == pytest.approx(math.sqrt(0.25 * 0.75 / 100))
    empty = SimEstimate.from_counts("q", 0, 0)
    assert math.isnan(empty.estimate) and empty.trials == 0


def test_vacuum_without_dark_counts_never_clicks(backend):
    est = simulate_gains(DARK_FREE, PROBE, 100, 20_000, seed=1, backend=backend)
    assert est["Qz_0_0"].estimate == 0.0 and est["Qx_0_0"].estimate == 0.0


@pytest.mark.parametrize("outcome", [mc._x_outcome, mc._x_outcome_np])
def test_balanced_in_phase_inputs_only_reach_d3(outcome):
    rng = _rng()
    n = 20_000
    if outcome is mc._x_outcome_np:
        c3, c4 = outcome(rng, 0.5, 0.5, np.zeros(n), 0.0)
        assert c3.sum() > 0 and c4.sum() == 0
        c3, c4 = outcome(rng, 0.5, 0.5, np.full(n, math.pi), 0.0)
        assert c3.sum() == 0 and c4.sum() > 0
    else:
        clicks = [outcome(rng, 0.5, 0.5, 0.0, 0.0) for _ in range(n)]
        assert any(c[0] for c in clicks) and not any(c[1] for c in clicks)
        clicks = [outcome(rng, 0.5, 0.5, math.pi, 0.0) for _ in range(n)]
        assert not any(c[0] for c in clicks) and any(c[1] for c in clicks)


def test_single_photon_without_noise_is_error_free(backend):
    # tiny window, no loss, no dark counts, no misalignment
    sys = LOSSLESS.with_overrides(delta=1e-3)
    out = simulate_single_photon_component(sys, 0.1, 0.0, 2_000_000, seed=3, backend=backend)
    assert out["e1x"].trials > 100 and out["e1x"].estimate == 0.0
    assert out["Y1x"].estimate == 1.0


def test_single_photon_raises_without_events():
    with pytest.raises(RuntimeError):
        simulate_single_photon_component(DEFAULT_SYSTEM, 0.1, 600, 10, seed=0)


def test_trials_must_be_positive():
    with pytest.raises(ValueError):
        simulate_gains(DEFAULT_SYSTEM, PROBE, 100, 0, seed=0)
    with pytest.raises(ValueError):
        simulate_single_photon_component(DEFAULT_SYSTEM, 0.1, 100, 0, seed=0)


def test_trial_records_reproducible():
    a = list(trial_records(DEFAULT_SYSTEM, PROBE, 50, 500, seed=4))
    b = list(trial_records(DEFAULT_SYSTEM, PROBE, 50, 500, seed=4))
    c = list(trial_records(DEFAULT_SYSTEM, PROBE, 50, 500, seed=5))
    assert a == b and a != c
    z = list(trial_records(DEFAULT_SYSTEM, PROBE, 50, 200, seed=4, basis="Z"))
    assert all(r.basis_choice == "Z" and r.accepted == (r.clicks[0] != r.clicks[1]) for r in z)
    with pytest.raises(ValueError):
        next(trial_records(DEFAULT_SYSTEM, PROBE, 50, 10, seed=0, basis="Y"))


def test_trial_records_accept_only_in_window():
    for r in trial_records(DEFAULT_SYSTEM, PROBE, 50, 5000, seed=7):
        d = (r.theta_a - r.theta_b) % (2 * math.pi)
        in_window = min(d, 2 * math.pi - d) <= DEFAULT_SYSTEM.delta or abs(d - math.pi) <= DEFAULT_SYSTEM.delta
        assert (r.r is not None) == in_window
        if r.accepted:
            assert r.clicks[2] != r.clicks[3]


def test_trial_log(tmp_path):
    recs = list(trial_records(DEFAULT_SYSTEM, PROBE, 0, 20_000, seed=8))
    path = tmp_path / "log.csv"
    n = write_trial_log(path, recs)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["basis", "k_a", "k_b", "theta_a", "theta_b", "clicks", "accepted"]
    assert n == len(rows) - 1 == sum(r.accepted for r in recs) > 0
    assert all(row[6] == "1" and len(row[5]) == 4 for row in rows[1:])
    assert write_trial_log(tmp_path / "all.csv", recs, accepted_only=False) == len(recs)


def test_same_seed_same_estimates(backend):
    a = simulate_gains(DEFAULT_SYSTEM, PROBE, 200, 30_000, seed=11, backend=backend)
    b = simulate_gains(DEFAULT_SYSTEM, PROBE, 200, 30_000, seed=11, backend=backend)
    c = simulate_gains(DEFAULT_SYSTEM, PROBE, 200, 30_000, seed=12, backend=backend)
    assert a == b and a != c


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_block_totals_independent_of_workers():
    args = (0.6, 0.0, 0.05, 1e-3)
    trials = 2 * mc.BLOCK + 1234
    one = mc._run_blocks(mc._z_pair_kernel, mc._z_pair_np, args, 5, 0, 0, trials, "numba", 1)
    three = mc._run_blocks(mc._z_pair_kernel, mc._z_pair_np, args, 5, 0, 0, trials, "numba", 3)
    assert one == three


def _z(a, b):
    se = math.hypot(a.std_error, b.std_error)
    return abs(a.estimate - b.estimate) / se if se > 0 else 0.0


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")
def test_backends_agree_statistically():
    a = simulate_gains(DEFAULT_SYSTEM, PROBE, 100, 200_000, seed=21, backend="numba")
    b = simulate_gains(DEFAULT_SYSTEM, PROBE, 100, 200_000, seed=21, backend="numpy")
    for name in a:
        assert _z(a[name], b[name]) < 5, name


def test_arm_swap_symmetry():
    est = simulate_gains(DEFAULT_SYSTEM, PROBE, 50, 400_000, seed=31)
    assert _z(est["Qz_mu_0"], est["Qz_0_mu"]) < 5
    assert _z(est["Qx_nu_0"], est["Qx_0_nu"]) < 5
    assert _z(est["E_AC"], est["E_BC"]) < 5


def test_acceptance_rate_matches_window_fraction():
    est = simulate_gains(DEFAULT_SYSTEM, PROBE, 100, 500_000, seed=41)
    p = p_pm(DEFAULT_SYSTEM.delta)
    se = math.sqrt(p * (1 - p) / 500_000)
    assert abs(est["p_pm_accept"].estimate - p) < 5 * se


def test_reference_phase_offset_is_corrected():
    sys = DEFAULT_SYSTEM.with_overrides(delta=math.pi / 6)
    est = simulate_gains(sys, PROBE, 20, 400_000, seed=51, phi_ab=1.3)
    ana = analytic_counterparts(sys, PROBE, 20)
    rows = {c.name: c for c in compare(est, ana)}
    for name in ("p_pm_accept", "Qpm_c", "Qpm_e", "Epm"):
        assert abs(rows[name].z) < 5, name


def test_standard_error_shrinks_as_inverse_root_n():
    small = simulate_gains(DEFAULT_SYSTEM, PROBE, 100, 40_000, seed=61)["Qz_mu_0"]
    big = simulate_gains(DEFAULT_SYSTEM, PROBE, 100, 640_000, seed=61)["Qz_mu_0"]
    assert big.std_error / small.std_error == pytest.approx(0.25, rel=0.05)


@pytest.mark.parametrize("L", [0, 300])
def test_closed_forms_agree_with_simulation(L):
    est = simulate_gains(DEFAULT_SYSTEM, PROBE, L, 1_000_000, seed=71)
    for c in compare(est, analytic_counterparts(DEFAULT_SYSTEM, PROBE, L)):
        if not math.isnan(c.z):
            assert abs(c.z) < 5, c


def test_compare_handles_empty_ratio():
    est = {"E_z": SimEstimate.from_counts("E_z", 0, 0)}
    (row,) = compare(est, {"E_z": 0.01})
    assert math.isnan(row.z) and row.events == 0
