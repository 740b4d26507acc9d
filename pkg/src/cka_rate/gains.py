"""Closed-form gains, yields and error rates of the weak-coherent and single-photon protocols.

All functions broadcast over numpy arrays of intensities and transmittances.
They are written in forms that avoid ``1 - (1 - small)`` cancellation, which
matters because signal click probabilities at the longest distances sit
near ``1e-10`` next to dark counts of ``1e-8``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cka_rate.model import ProtocolParams, SystemParams, p_pm
from cka_rate.specfun import bessel_i0, erf_ratio_m1, erfi_ratio_m1

__all__ = [
    "GainTable",
    "SinglePhotonYields",
    "click_probability",
    "z_one_click_split",
    "gain_z_pair",
    "gain_x_pair",
    "z_basis_components",
    "z_basis_statistics",
    "z_basis_marginal_errors",
    "phase_matched_gains",
    "x_basis_pm_statistics",
    "single_photon_yields",
    "single_photon_z_components",
    "gain_table",
]


def _check_intensity(*ks):
    for k in ks:
        if np.any(np.asarray(k) < 0):
            raise ValueError("intensities must be non-negative")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def click_probability(p_d, mean_photons):
    """Threshold-detector click probability ``1 - (1-p_d) exp(-m)``."""
    m = np.asarray(mean_photons, dtype=float)
    return -np.expm1(-m) + p_d * np.exp(-m)


def z_one_click_split(sys: SystemParams, sqrt_eta, k_a, k_b):
    """Probabilities that only D1 or only D2 clicks for Z-basis inputs ``(k_a, k_b)``.

    Returns ``(d1_only, d2_only)``; their sum is the Z-basis gain.
    """
    _check_intensity(k_a, k_b)
    u1 = click_probability(sys.p_d, np.multiply(k_a, sqrt_eta))
    u2 = click_probability(sys.p_d, np.multiply(k_b, sqrt_eta))
    return u1 * (1.0 - u2), (1.0 - u1) * u2


def gain_z_pair(sys: SystemParams, sqrt_eta, k_a, k_b):
    """Z-basis gain ``(1-p_d)(e^{-k_a s} + e^{-k_b s}) - 2(1-p_d)^2 e^{-(k_a+k_b) s}``."""
    d1, d2 = z_one_click_split(sys, sqrt_eta, k_a, k_b)
    return _out(d1 + d2)


def _i0_minus_one(y):
    y = np.asarray(y, dtype=float)
    q = 0.25 * y * y
    small = q <= 0.25
    # series tail, 14 terms reach double precision for q <= 1/4
    term = q.copy()
    total = q.copy()
    for k in range(2, 16):
        term = term * q / (k * k)
        total = total + term
    big = np.where(small, 0.0, y)
    return np.where(small, total, bessel_i0(big) - 1.0)


def gain_x_pair(sys: SystemParams, sqrt_eta, k_a, k_b):
    """Phase-averaged X-basis gain.

    ``2(1-p_d) e^{-(k_a+k_b)s/2} [I0(sqrt(k_a k_b) s) - (1-p_d) e^{-(k_a+k_b)s/2}]``
    """
    _check_intensity(k_a, k_b)
    pd = sys.p_d
    half = 0.5 * (np.asarray(k_a, dtype=float) + np.asarray(k_b, dtype=float)) * sqrt_eta
    c = np.exp(-half)
    y = np.sqrt(np.multiply(k_a, k_b)) * sqrt_eta
    bracket = _i0_minus_one(y) + pd * c - np.expm1(-half)
    return _out(2.0 * (1.0 - pd) * c * bracket)


def z_basis_components(sys: SystemParams, t, mu, sqrt_eta):
    """Correct and incorrect Z-basis gains between Alice and Bob, ``(Q_c, Q_e)``."""
    t = np.asarray(t, dtype=float)
    q_mu0 = gain_z_pair(sys, sqrt_eta, mu, 0.0)
    q_0mu = gain_z_pair(sys, sqrt_eta, 0.0, mu)
    q_00 = gain_z_pair(sys, sqrt_eta, 0.0, 0.0)
    q_mumu = gain_z_pair(sys, sqrt_eta, mu, mu)
    q_c = t * (1 - t) * (q_mu0 + q_0mu)
    q_e = (1 - t) ** 2 * q_00 + t**2 * q_mumu
    return _out(q_c), _out(q_e)


def z_basis_statistics(sys: SystemParams, pp: ProtocolParams, sqrt_eta):
    """Sifted Z-basis gain and the Alice-Bob disagreement rate ``(Q^z, Q_e/Q^z)``.

    Raises
    ------
    ZeroDivisionError
        When the total gain vanishes (no light and no dark counts).
    """
    q_c, q_e = z_basis_components(sys, pp.t, pp.mu, sqrt_eta)
    q = np.asarray(q_c + q_e)
    if np.any(q <= 0):
        raise ZeroDivisionError("no Z-basis signal: total gain is zero")
    return _out(q), _out(q_e / q)


def _marginal_from_splits(t, splits):
    """Alice-Charlie and Bob-Charlie error numerators from per-input detector splits.

    ``splits`` maps ``"00", "10", "01", "11"`` (who sent the non-vacuum state)
    to ``(d1_only, d2_only)``. Alice's flipped bit is 0 when she sends light,
    Bob's bit is 1 when he does, Charlie reads D1 as 0 and D2 as 1.
    """
    w00, w10, w01, w11 = (1 - t) ** 2, t * (1 - t), (1 - t) * t, t**2
    ac = w00 * splits["00"][0] + w10 * splits["10"][1] + w01 * splits["01"][0] + w11 * splits["11"][1]
    bc = w00 * splits["00"][1] + w10 * splits["10"][1] + w01 * splits["01"][0] + w11 * splits["11"][0]
    return ac, bc


def z_basis_marginal_errors(sys: SystemParams, t, mu, sqrt_eta):
    """Marginal Z-basis error rates ``(E_AC, E_BC)`` with Charlie's bits as reference."""
    t = np.asarray(t, dtype=float)
    splits = {
        "00": z_one_click_split(sys, sqrt_eta, 0.0, 0.0),
        "10": z_one_click_split(sys, sqrt_eta, mu, 0.0),
        "01": z_one_click_split(sys, sqrt_eta, 0.0, mu),
        "11": z_one_click_split(sys, sqrt_eta, mu, mu),
    }
    ac, bc = _marginal_from_splits(t, splits)
    q_c, q_e = z_basis_components(sys, t, mu, sqrt_eta)
    q = q_c + q_e
    return _out(ac / q), _out(bc / q)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def _phase_mean(g, delta):
    """Mean of ``g(theta)`` over ``[0, delta]`` by 48-point Gauss-Legendre."""
    theta = 0.5 * delta * (_GL_NODES + 1.0)
    return 0.5 * np.sum(_GL_WEIGHTS * g(theta), axis=-1)


def phase_matched_gains(sys: SystemParams, nu, sqrt_eta, method="closed_form"):
    """Correct and incorrect phase-matched X gains for both users sending ``nu``.

    ``method="closed_form"`` uses the erf/erfi expressions obtained by
    expanding ``1 - cos(theta) ~ theta^2/2``; ``method="quadrature"`` integrates
    ``exp(-nu s (1 -/+ cos theta))`` over the slice directly. The two differ by
    the truncation of that expansion (relative ``~delta^2/20`` on the incorrect gain).
    """
    _check_intensity(nu)
    pd = sys.p_d
    delta = sys.delta
    pref = p_pm(delta) * (1.0 - pd)
    a = np.asarray(nu, dtype=float) * sqrt_eta
    e2a = np.exp(-2.0 * a)
    if method == "closed_form":
        z = np.sqrt(0.5 * a) * delta
        q_c = pref * (erf_ratio_m1(z) - np.expm1(-2.0 * a) + pd * e2a)
        q_e = pref * e2a * (erfi_ratio_m1(z) + pd)
    elif method == "quadrature":
        a_col = a[..., None]
        # e^{-a(1-cos)} - e^{-2a} = e^{-2a} expm1(a(1+cos)); 1-cos = 2 sin^2(theta/2)
        mean_c = _phase_mean(lambda th: np.expm1(a_col * (1.0 + np.cos(th))), delta)
        mean_e = _phase_mean(lambda th: np.expm1(2.0 * a_col * np.sin(0.5 * th) ** 2), delta)
        q_c = pref * e2a * (mean_c + pd)
        q_e = pref * e2a * (mean_e + pd)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _out(q_c), _out(q_e)


def x_basis_pm_statistics(sys: SystemParams, pp: ProtocolParams, sqrt_eta, method="closed_form"):
    """Phase-matched X-basis gain and error rate at intensities ``(nu, nu)``.

    The error rate mixes misalignment into the interference outcome:
    ``E = [e_d Q_c + (1 - e_d) Q_e] / (Q_c + Q_e)``.
    """
    q_c, q_e = phase_matched_gains(sys, pp.nu, sqrt_eta, method=method)
    q = np.asarray(q_c + q_e)
    ed = sys.e_d_x
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(q > 0, (ed * q_c + (1 - ed) * q_e) / np.where(q > 0, q, 1.0), 0.5)
    return _out(q), _out(e)


@dataclass(frozen=True)
class SinglePhotonYields:
    Y10_z: float
    Y01_z: float
    Y11_z: float
    Y00_z: float
    Y10_x: float
    Y01_x: float
    Y1_z: float
    Y1_x: float


def single_photon_yields(sys: SystemParams, sqrt_eta) -> SinglePhotonYields:
    """Yields of the ideal single-photon protocol, as the closed forms give them."""
    pd = sys.p_d
    loss = 1.0 - sqrt_eta
    y10 = 1.0 - (1.0 - pd) * (1.0 - 2.0 * pd) * loss
    y11 = 2.0 * (1.0 - pd) * loss * (1.0 - (1.0 - pd) * loss)
    y00 = 2.0 * pd * (1.0 - pd)
    y10x = 1.0 - (1.0 - pd) * (1.0 - 2.0 * pd) * loss
    return SinglePhotonYields(
        Y10_z=_out(y10),
        Y01_z=_out(y10),
        Y11_z=_out(y11),
        Y00_z=_out(y00),
        Y10_x=_out(y10x),
        Y01_x=_out(y10x),
        Y1_z=_out(0.5 * (y10 + y10)),
        Y1_x=_out(0.5 * (y10x + y10x)),
    )


def single_photon_z_components(sys: SystemParams, t, sqrt_eta):
    """Z-basis statistics of the single-photon protocol.

    Returns ``(Q_c, Q_e, E_AC, E_BC)``. Gains use the closed-form yields; the
    marginal error numerators come from the threshold-detector model of each
    Fock input since only totals are available in closed form.
    """
    t = np.asarray(t, dtype=float)
    y = single_photon_yields(sys, sqrt_eta)
    q_c = t * (1 - t) * (y.Y10_z + y.Y01_z)
    q_e = (1 - t) ** 2 * y.Y00_z + t**2 * y.Y11_z
    pd = sys.p_d
    lit = pd + (1.0 - pd) * sqrt_eta  # click probability of the detector a photon is routed to
    splits = {
        "00": (pd * (1 - pd), (1 - pd) * pd),
        "10": (lit * (1 - pd), (1 - lit) * pd),
        "01": (pd * (1 - lit), (1 - pd) * lit),
        "11": (lit * (1 - lit), (1 - lit) * lit),
    }
    ac, bc = _marginal_from_splits(t, splits)
    q = q_c + q_e
    return _out(q_c), _out(q_e), _out(ac / q), _out(bc / q)


@dataclass(frozen=True)
class GainTable:
    """Every analytic gain for one (system, protocol, transmittance) triple.

    ``Q_z_pair`` and ``Q_x_pair`` are keyed by ``(k_a, k_b)`` over the
    intensity pairs the protocol uses.
    """

    sqrt_eta: float
    Q_z_pair: dict = field(repr=False)
    Q_x_pair: dict = field(repr=False)
    Q_c_z: float
    Q_e_z: float
    Q_z_total: float
    E_z: float
    E_z_AC: float
    E_z_BC: float
    Qx_pm_c: float
    Qx_pm_e: float
    Qx_pm_total: float
    Ex_pm: float
    Y0_z: float
    Y0_x: float

    @property
    def E_z_marginal(self) -> float:
        return max(self.E_z_AC, self.E_z_BC)

    def qz(self, k_a, k_b) -> float:
        return self.Q_z_pair[(k_a, k_b)]

    def qx(self, k_a, k_b) -> float:
        return self.Q_x_pair[(k_a, k_b)]


def gain_table(sys: SystemParams, pp: ProtocolParams, sqrt_eta: float, method="closed_form") -> GainTable:
    ks = (0.0, pp.nu, pp.mu)
    pairs = [(a, b) for a in ks for b in ks]
    qz = {p: gain_z_pair(sys, sqrt_eta, *p) for p in pairs}
    qx = {p: gain_x_pair(sys, sqrt_eta, *p) for p in pairs}
    q_c, q_e = z_basis_components(sys, pp.t, pp.mu, sqrt_eta)
    e_ac, e_bc = z_basis_marginal_errors(sys, pp.t, pp.mu, sqrt_eta)
    c, e = phase_matched_gains(sys, pp.nu, sqrt_eta, method=method)
    q_pm, e_pm = x_basis_pm_statistics(sys, pp, sqrt_eta, method=method)
    q = q_c + q_e
    return GainTable(
        sqrt_eta=float(sqrt_eta),
        Q_z_pair=qz,
        Q_x_pair=qx,
        Q_c_z=q_c,
        Q_e_z=q_e,
        Q_z_total=q,
        E_z=q_e / q,
        E_z_AC=e_ac,
        E_z_BC=e_bc,
        Qx_pm_c=c,
        Qx_pm_e=e,
        Qx_pm_total=q_pm,
        Ex_pm=e_pm,
        Y0_z=qz[(0.0, 0.0)],
        Y0_x=qx[(0.0, 0.0)],
    )
