"""Time the numba kernels against the pure-numpy path.

    python benchmarks/bench_backends.py [--candidates N] [--trials N] [--repeat N]

Covers the optimizer's population evaluation and each Monte Carlo kernel.
The first numba call of each kernel is made before timing so compilation is
not counted.
"""

import argparse
import time

import numpy as np

from cka_rate import _accel
from cka_rate import montecarlo as mc
from cka_rate.keyrate import practical_rate_batch
from cka_rate.model import DEFAULT_SYSTEM, sqrt_eta


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def rate_cases(n):
    rng = np.random.default_rng(0)
    t = rng.uniform(1e-3, 0.5, n)
    mu = rng.uniform(0.05, 1.5, n)
    nu = mu * rng.uniform(1e-4, 0.9, n)
    s = sqrt_eta(DEFAULT_SYSTEM, 300)
    return {
        "practical_rate_batch": lambda b: practical_rate_batch(DEFAULT_SYSTEM, t, mu, nu, s, backend=b),
    }


def mc_cases(trials):
    s = sqrt_eta(DEFAULT_SYSTEM, 100)
    pd, ed, delta = DEFAULT_SYSTEM.p_d, DEFAULT_SYSTEM.e_d_x, DEFAULT_SYSTEM.delta

    def runner(nb, npf, args):
        return lambda b: mc._run_blocks(nb, npf, args, 1, 0, 0, trials, b, 1)

    return {
        "mc z pair": runner(mc._z_pair_kernel, mc._z_pair_np, (0.5, 0.0, s, pd)),
        "mc x pair": runner(mc._x_pair_kernel, mc._x_pair_np, (0.5, 0.1, s, pd)),
        "mc z key round": runner(mc._z_key_kernel, mc._z_key_np, (0.1, 0.5, s, pd)),
        "mc phase matched": runner(mc._pm_kernel, mc._pm_np, (0.1, s, pd, ed, delta, 0.0)),
        "mc single photon": runner(mc._sp_kernel, mc._sp_np, (s, pd, ed, delta)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--candidates", type=int, default=200_000)
    ap.add_argument("--trials", type=int, default=2_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    cases = {**rate_cases(args.candidates), **mc_cases(args.trials)}
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, fn in cases.items():
        fn("numba")  # compile
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        print(f"{name:<22}{t_nb:>10.3f}{t_np:>10.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
