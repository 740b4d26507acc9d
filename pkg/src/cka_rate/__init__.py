"""Key-rate toolkit for three-party twin-field conference key agreement.

Closed-form gains of the weak-coherent protocol, decoy-state bounds, the
asymptotic key rate, a genetic optimizer over the free parameters, and a
pulse-level Monte Carlo used as an independent check.
"""

from cka_rate.decoy import DecoyEstimate, EstimationFailure, decoy_estimate, e1x_upper_bound, y1_lower_bound
from cka_rate.gains import GainTable, gain_table, phase_matched_gains, single_photon_yields
from cka_rate.keyrate import PRACTICAL, SINGLE_PHOTON, RatePoint, practical_rate, single_photon_rate
from cka_rate.model import DEFAULT_SYSTEM, ChannelPoint, ProtocolParams, SystemParams, binary_entropy, p_pm, sqrt_eta
from cka_rate.optimizer import OptimizationResult, OptimizerConfig, optimize_at_distance, optimize_single_photon, sweep
from cka_rate.specfun import bessel_i0, erf_im, erf_re

__version__ = "0.1.0"

__all__ = [
    "SystemParams",
    "ProtocolParams",
    "ChannelPoint",
    "DEFAULT_SYSTEM",
    "sqrt_eta",
    "binary_entropy",
    "p_pm",
    "erf_re",
    "erf_im",
    "bessel_i0",
    "GainTable",
    "gain_table",
    "phase_matched_gains",
    "single_photon_yields",
    "DecoyEstimate",
    "EstimationFailure",
    "decoy_estimate",
    "y1_lower_bound",
    "e1x_upper_bound",
    "RatePoint",
    "PRACTICAL",
    "SINGLE_PHOTON",
    "practical_rate",
    "single_photon_rate",
    "OptimizerConfig",
    "OptimizationResult",
    "optimize_at_distance",
    "optimize_single_photon",
    "sweep",
]
