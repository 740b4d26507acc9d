"""Decoy-state bounds on the joint single-photon yield and phase error rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cka_rate.gains import gain_x_pair, gain_z_pair, x_basis_pm_statistics
from cka_rate.model import ProtocolParams, SystemParams, p_pm

__all__ = ["DecoyEstimate", "EstimationFailure", "y1_lower_bound", "y1_lower_bound_raw", "e1x_upper_bound", "e1x_upper_bound_raw", "decoy_estimate"]


class EstimationFailure(ValueError):
    """Raised when no single-photon statistics survive the decoy estimate."""


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def y1_lower_bound_raw(Q_mu, Q_nu, Q_0, mu, nu):
    """Unclamped decoy bound; may be negative when the channel carries no signal.

    ``Q_k`` are the two-user sums ``Q_{k0} + Q_{0k}``.
    """
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(nu >= mu) or np.any(nu <= 0):
        raise ValueError("decoy bound requires 0 < nu < mu")
    coef = 0.5 * mu / (mu * nu - nu * nu)
    inner = (
        np.exp(nu) * Q_nu
        - (nu * nu) / (mu * mu) * np.exp(mu) * Q_mu
        - (mu * mu - nu * nu) / (mu * mu) * Q_0
    )
    return _out(coef * inner)


def y1_lower_bound(Q_mu, Q_nu, Q_0, mu, nu):
    """Lower bound on the joint single-photon yield, clamped at zero."""
    return _out(np.maximum(y1_lower_bound_raw(Q_mu, Q_nu, Q_0, mu, nu), 0.0))


def e1x_upper_bound_raw(E_pm, Q_pm, Y0_x, Y1_x, nu, p_pm_val):
    """Unclamped phase-error bound ``(e^{2nu} E Q - p_pm Y0/2) / (2 nu Y1 p_pm)``."""
    Y1_x = np.asarray(Y1_x, dtype=float)
    if np.any(Y1_x <= 0):
        raise EstimationFailure("single-photon yield bound is zero; no phase-error estimate")
    if np.any((np.asarray(p_pm_val) <= 0) | (np.asarray(p_pm_val) > 1)):
        raise ValueError("p_pm must lie in (0, 1]")
    num = np.exp(2.0 * nu) * E_pm * Q_pm - 0.5 * p_pm_val * Y0_x
    return _out(num / (2.0 * nu * Y1_x * p_pm_val))


def e1x_upper_bound(E_pm, Q_pm, Y0_x, Y1_x, nu, p_pm_val):
    """Phase-error bound clamped to ``[0, 0.5]``; 0.5 means no extractable key."""
    return _out(np.clip(e1x_upper_bound_raw(E_pm, Q_pm, Y0_x, Y1_x, nu, p_pm_val), 0.0, 0.5))


@dataclass(frozen=True)
class DecoyEstimate:
    Y1_z_lower: float
    Y1_x_lower: float
    e1_x_upper: float
    e1_x_raw: float
    Y1_z_raw: float
    inputs_snapshot: dict = field(default_factory=dict, repr=False)

    @property
    def failed(self) -> bool:
        return not self.Y1_z_lower > 0


def decoy_estimate(sys: SystemParams, pp: ProtocolParams, sqrt_eta: float, method="closed_form") -> DecoyEstimate:
    """Run both decoy bounds on honest-channel analytic gains.

    The phase-error bound uses the Z-basis yield bound for ``Y1`` in both
    bases; the X-basis yield bound is kept for diagnostics. On estimation
    failure the phase error is reported as 0.5.
    """
    mu, nu = pp.mu, pp.nu
    snap = {
        "Qz_mu": 2.0 * gain_z_pair(sys, sqrt_eta, mu, 0.0),
        "Qz_nu": 2.0 * gain_z_pair(sys, sqrt_eta, nu, 0.0),
        "Qz_0": 2.0 * gain_z_pair(sys, sqrt_eta, 0.0, 0.0),
        "Qx_mu": 2.0 * gain_x_pair(sys, sqrt_eta, mu, 0.0),
        "Qx_nu": 2.0 * gain_x_pair(sys, sqrt_eta, nu, 0.0),
        "Qx_0": 2.0 * gain_x_pair(sys, sqrt_eta, 0.0, 0.0),
        "Y0_x": gain_x_pair(sys, sqrt_eta, 0.0, 0.0),
    }
    y1z_raw = y1_lower_bound_raw(snap["Qz_mu"], snap["Qz_nu"], snap["Qz_0"], mu, nu)
    y1z = max(y1z_raw, 0.0)
    y1x = y1_lower_bound(snap["Qx_mu"], snap["Qx_nu"], snap["Qx_0"], mu, nu)
    q_pm, e_pm = x_basis_pm_statistics(sys, pp, sqrt_eta, method=method)
    snap.update(Q_pm=q_pm, E_pm=e_pm)
    if y1z > 0:
        raw = e1x_upper_bound_raw(e_pm, q_pm, snap["Y0_x"], y1z, nu, p_pm(sys.delta))
        e1 = min(max(raw, 0.0), 0.5)
    else:
        raw, e1 = float("nan"), 0.5
    return DecoyEstimate(
        Y1_z_lower=y1z, Y1_x_lower=y1x, e1_x_upper=e1, e1_x_raw=raw, Y1_z_raw=y1z_raw, inputs_snapshot=snap
    )
