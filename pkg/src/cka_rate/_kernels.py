"""Scalar numba kernels for the practical key rate.

These restate the formulas of ``gains``, ``decoy`` and ``keyrate`` for one
candidate at a time so that a whole optimizer population is evaluated without
temporary arrays. ``tests/test_kernels.py`` pins them to the numpy path.
"""

import math

from cka_rate._accel import jit
from cka_rate.specfun import _erf_ratio_m1_scalar, _erfi_ratio_m1_scalar


@jit
def _click(pd, m):
    return -math.expm1(-m) + pd * math.exp(-m)


@jit
def _h(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@jit
def practical_rate_scalar(t, mu, nu, s, pd, ed, f, delta, marginal):
    u0 = pd
    um = _click(pd, mu * s)
    un = _click(pd, nu * s)
    # one-click splits (d1_only, d2_only) per input pair
    d00_1 = u0 * (1.0 - u0)
    d00_2 = (1.0 - u0) * u0
    dm0_1 = um * (1.0 - u0)
    dm0_2 = (1.0 - um) * u0
    d0m_1 = u0 * (1.0 - um)
    d0m_2 = (1.0 - u0) * um
    dmm_1 = um * (1.0 - um)
    dmm_2 = (1.0 - um) * um
    q00 = d00_1 + d00_2
    qm0 = dm0_1 + dm0_2
    q0m = d0m_1 + d0m_2
    qmm = dmm_1 + dmm_2
    qn0 = un * (1.0 - u0) + (1.0 - un) * u0

    w00 = (1.0 - t) * (1.0 - t)
    w10 = t * (1.0 - t)
    w11 = t * t
    q_c = w10 * (qm0 + q0m)
    q_e = w00 * q00 + w11 * qmm
    q = q_c + q_e
    if marginal:
        ac = w00 * d00_1 + w10 * dm0_2 + w10 * d0m_1 + w11 * dmm_2
        bc = w00 * d00_2 + w10 * dm0_2 + w10 * d0m_1 + w11 * dmm_1
        e_z = max(ac, bc) / q
    else:
        e_z = q_e / q

    coef = 0.5 * mu / (mu * nu - nu * nu)
    y1 = coef * (
        math.exp(nu) * 2.0 * qn0 - (nu * nu) / (mu * mu) * math.exp(mu) * 2.0 * qm0 - (mu * mu - nu * nu) / (mu * mu) * 2.0 * q00
    )
    if y1 < 0.0:
        y1 = 0.0

    pm = 2.0 * delta / math.pi
    a = nu * s
    e2a = math.exp(-2.0 * a)
    z = math.sqrt(0.5 * a) * delta
    pref = pm * (1.0 - pd)
    qc_pm = pref * (_erf_ratio_m1_scalar(z) - math.expm1(-2.0 * a) + pd * e2a)
    qe_pm = pref * e2a * (_erfi_ratio_m1_scalar(z) + pd)
    eq = ed * qc_pm + (1.0 - ed) * qe_pm
    y0x = 2.0 * (1.0 - pd) * pd
    if y1 > 0.0:
        e1 = (math.exp(2.0 * nu) * eq - 0.5 * pm * y0x) / (2.0 * nu * y1 * pm)
        if e1 < 0.0:
            e1 = 0.0
        elif e1 > 0.5:
            e1 = 0.5
    else:
        e1 = 0.5

    gross = 2.0 * t * (1.0 - t) * (math.exp(-mu) * q00 + mu * math.exp(-mu) * y1 * (1.0 - _h(e1)))
    return gross - q * f * _h(e_z)


@jit
def practical_rate_many(t, mu, nu, s, pd, ed, f, delta, marginal, out):
    for i in range(t.size):
        out[i] = practical_rate_scalar(t[i], mu[i], nu[i], s, pd, ed, f, delta, marginal)
