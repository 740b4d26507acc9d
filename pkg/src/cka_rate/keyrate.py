"""Asymptotic conference key rates of the practical and single-photon protocols."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from cka_rate import _accel
from cka_rate.decoy import y1_lower_bound_raw
from cka_rate.gains import (
    gain_x_pair,
    gain_z_pair,
    phase_matched_gains,
    single_photon_yields,
    single_photon_z_components,
    z_basis_components,
    z_basis_marginal_errors,
)
from cka_rate.model import TINY, ProtocolParams, SystemParams, binary_entropy, p_pm, sqrt_eta

__all__ = [
    "RatePoint",
    "practical_rate",
    "single_photon_rate",
    "practical_rate_batch",
    "single_photon_rate_batch",
    "practical_terms",
]

PRACTICAL = "practical"
SINGLE_PHOTON = "single_photon"


@dataclass(frozen=True)
class RatePoint:
    """One evaluated distance.

    ``R`` is clamped at zero; ``R_raw`` keeps the signed value. ``E_z`` is the
    Z error rate that error correction pays for (see ``SystemParams.ez_model``),
    so ``lambda_EC == Q_z_total * f * h(E_z)`` always holds.
    """

    L_km: float
    R: float
    protocol_kind: str
    t: float
    params: Optional[ProtocolParams]
    E_z: float
    e1_x_upper: float
    Y1_lower: float
    Q_z_total: float
    lambda_EC: float
    R_raw: float
    e1_x_raw: float
    flag: str

    @property
    def mu(self) -> float:
        return self.params.mu if self.params is not None else math.nan

    @property
    def nu(self) -> float:
        return self.params.nu if self.params is not None else math.nan


def _error_rate_for_ec(sys, e_pair, e_ac, e_bc):
    if sys.ez_model == "pairwise":
        return e_pair
    return np.maximum(e_ac, e_bc)


def practical_terms(sys: SystemParams, t, mu, nu, s, method="closed_form"):
    """Every intermediate of the practical rate, broadcast over ``(t, mu, nu, s)``.

    Returns a dict of arrays. Candidates must already satisfy ``0 < nu < mu``.
    """
    t = np.asarray(t, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    q_c, q_e = z_basis_components(sys, t, mu, s)
    q = q_c + q_e
    e_pair = q_e / q
    e_ac, e_bc = z_basis_marginal_errors(sys, t, mu, s)
    e_z = _error_rate_for_ec(sys, e_pair, e_ac, e_bc)

    y0z = gain_z_pair(sys, s, 0.0, 0.0)
    y0x = gain_x_pair(sys, s, 0.0, 0.0)
    y1_raw = y1_lower_bound_raw(
        2.0 * gain_z_pair(sys, s, mu, 0.0), 2.0 * gain_z_pair(sys, s, nu, 0.0), 2.0 * y0z, mu, nu
    )
    y1 = np.maximum(y1_raw, 0.0)

    pm = p_pm(sys.delta)
    qc_pm, qe_pm = phase_matched_gains(sys, nu, s, method=method)
    eq_pm = sys.e_d_x * qc_pm + (1.0 - sys.e_d_x) * qe_pm
    failed = ~(y1 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        e1_raw = (np.exp(2.0 * nu) * eq_pm - 0.5 * pm * y0x) / (2.0 * nu * np.where(failed, 1.0, y1) * pm)
    e1_raw = np.where(failed, np.nan, e1_raw)
    e1 = np.where(failed, 0.5, np.clip(e1_raw, 0.0, 0.5))

    lam = q * sys.f * binary_entropy(e_z)
    gross = 2.0 * t * (1.0 - t) * (np.exp(-mu) * y0z + mu * np.exp(-mu) * y1 * (1.0 - binary_entropy(e1)))
    return {
        "R_raw": gross - lam,
        "gross": gross,
        "Q_z": q,
        "E_z": e_z,
        "E_pair": e_pair,
        "E_AC": e_ac,
        "E_BC": e_bc,
        "Y1": y1,
        "Y1_raw": y1_raw,
        "e1": e1,
        "e1_raw": e1_raw,
        "lambda_EC": lam,
        "failed": failed,
    }


def _flag(R_raw, failed, e1_raw, values):
    if failed:
        return "estimation_failure"
    if not R_raw > 0:
        return "no_key"
    if any(0 < abs(v) < TINY for v in values):
        return "underflow"
    return "ok"


def _flush(x):
    return 0.0 if abs(x) < TINY else float(x)


def practical_rate(sys: SystemParams, pp: ProtocolParams, L_km: float, method="closed_form") -> RatePoint:
    """Key rate per pulse of the weak-coherent protocol at total distance ``L_km``."""
    s = sqrt_eta(sys, L_km)
    d = {k: v.item() if isinstance(v, np.ndarray) else v for k, v in practical_terms(sys, pp.t, pp.mu, pp.nu, s, method).items()}
    R_raw = float(d["R_raw"])
    return RatePoint(
        L_km=float(L_km),
        R=_flush(max(R_raw, 0.0)),
        protocol_kind=PRACTICAL,
        t=pp.t,
        params=pp,
        E_z=float(d["E_z"]),
        e1_x_upper=float(d["e1"]),
        Y1_lower=_flush(d["Y1"]),
        Q_z_total=_flush(d["Q_z"]),
        lambda_EC=_flush(d["lambda_EC"]),
        R_raw=R_raw,
        e1_x_raw=float(d["e1_raw"]),
        flag=_flag(R_raw, bool(d["failed"]), d["e1_raw"], (R_raw, d["Y1"], d["Q_z"])),
    )


def single_photon_terms(sys: SystemParams, t, s):
    t = np.asarray(t, dtype=float)
    y = single_photon_yields(sys, s)
    q_c, q_e, e_ac, e_bc = single_photon_z_components(sys, t, s)
    q = q_c + q_e
    e_pair = q_e / q
    e_z = _error_rate_for_ec(sys, e_pair, e_ac, e_bc)
    # X-basis errors of the ideal protocol: misalignment flips on photon-driven
    # clicks, coin-flip outcomes on dark-count-only clicks
    dark = (1.0 - s) * y.Y00_z
    signal = y.Y1_x - dark
    e1 = (sys.e_d_x * signal + 0.5 * dark) / y.Y1_x
    e1c = np.minimum(e1, 0.5)
    lam = q * sys.f * binary_entropy(e_z)
    gross = 2.0 * t * (1.0 - t) * y.Y1_z * (1.0 - binary_entropy(e1c))
    return {"R_raw": gross - lam, "Q_z": q, "E_z": e_z, "Y1": y.Y1_z, "e1": e1c, "e1_raw": e1, "lambda_EC": lam}


def single_photon_rate(sys: SystemParams, t: float, L_km: float) -> RatePoint:
    """Key rate per pulse of the ideal single-photon protocol; only ``t`` is free."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    s = sqrt_eta(sys, L_km)
    if t in (0.0, 1.0):
        R_raw = 0.0
        d = single_photon_terms(sys, 0.5, s)
        d["lambda_EC"] = 0.0
        flag = "no_key"
    else:
        d = single_photon_terms(sys, t, s)
        R_raw = float(d["R_raw"])
        flag = _flag(R_raw, False, d["e1_raw"], (R_raw, d["Q_z"]))
    return RatePoint(
        L_km=float(L_km),
        R=_flush(max(R_raw, 0.0)),
        protocol_kind=SINGLE_PHOTON,
        t=float(t),
        params=None,
        E_z=float(d["E_z"]),
        e1_x_upper=float(d["e1"]),
        Y1_lower=_flush(d["Y1"]),
        Q_z_total=_flush(d["Q_z"]),
        lambda_EC=_flush(d["lambda_EC"]),
        R_raw=R_raw,
        e1_x_raw=float(d["e1_raw"]),
        flag=flag,
    )


def practical_rate_batch(sys: SystemParams, t, mu, nu, s, backend=None):
    """Raw (signed) practical rates for a population of candidates at one transmittance."""
    t = np.ascontiguousarray(t, dtype=float)
    mu = np.ascontiguousarray(mu, dtype=float)
    nu = np.ascontiguousarray(nu, dtype=float)
    if _accel.resolve(backend) == "numba":
        from cka_rate._kernels import practical_rate_many

        out = np.empty_like(t)
        practical_rate_many(
            t, mu, nu, float(s), sys.p_d, sys.e_d_x, sys.f, sys.delta, sys.ez_model == "marginal", out
        )
        return out
    return np.asarray(practical_terms(sys, t, mu, nu, s)["R_raw"], dtype=float)


def single_photon_rate_batch(sys: SystemParams, t, s):
    return np.asarray(single_photon_terms(sys, np.asarray(t, dtype=float), s)["R_raw"], dtype=float)
