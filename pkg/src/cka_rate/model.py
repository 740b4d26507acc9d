"""Parameter types, channel transmittance and the binary entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SystemParams",
    "ProtocolParams",
    "ChannelPoint",
    "DEFAULT_SYSTEM",
    "sqrt_eta",
    "binary_entropy",
    "p_pm",
    "TINY",
]

# values below this are flushed to zero in reported diagnostics
TINY = 1e-300

EZ_MODELS = ("marginal", "pairwise")


@dataclass(frozen=True)
class SystemParams:
    """Fixed experimental constants of the link.

    Attributes
    ----------
    eta_d : float
        Detector efficiency, in (0, 1].
    p_d : float
        Dark-count probability per detector per gate, in [0, 1).
    e_d_x : float
        X-basis misalignment rate, in [0, 0.5).
    alpha : float
        Fiber attenuation in dB/km, > 0.
    f : float
        Error-correction inefficiency, >= 1.
    delta : float
        Phase-slice half-width in radians, in (0, pi/4].
    ez_model : str
        How the Z-basis error rate entering error correction is formed.
        ``"marginal"`` takes the larger of the Alice-Charlie and Bob-Charlie
        error rates with Charlie's string as reference; ``"pairwise"`` uses the
        Alice-Bob disagreement rate ``Q_e/Q``.
    """

    eta_d: float = 0.56
    p_d: float = 1e-8
    e_d_x: float = 0.035
    alpha: float = 0.167
    f: float = 1.1
    delta: float = math.pi / 18
    ez_model: str = "marginal"

    def __post_init__(self):
        checks = [
            (0.0 < self.eta_d <= 1.0, "eta_d must lie in (0, 1]"),
            (0.0 <= self.p_d < 1.0, "p_d must lie in [0, 1)"),
            (0.0 <= self.e_d_x < 0.5, "e_d_x must lie in [0, 0.5)"),
            (self.alpha > 0.0, "alpha must be positive"),
            (self.f >= 1.0, "f must be >= 1"),
            (0.0 < self.delta <= math.pi / 4, "delta must lie in (0, pi/4]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(f"{msg}")
        if self.ez_model not in EZ_MODELS:
            raise ValueError(f"ez_model must be one of {EZ_MODELS}, got {self.ez_model!r}")
        for name in ("eta_d", "p_d", "e_d_x", "alpha", "f", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def with_overrides(self, **changes) -> "SystemParams":
        return replace(self, **changes)


DEFAULT_SYSTEM = SystemParams()


@dataclass(frozen=True)
class ProtocolParams:
    """Free variables optimized per distance: sending probability and intensities."""

    t: float
    mu: float
    nu: float

    def __post_init__(self):
        if not (0.0 < self.t < 1.0):
            raise ValueError(f"t must lie in (0, 1), got {self.t}")
        if not (self.mu > 0.0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not (0.0 < self.nu < self.mu):
            raise ValueError(f"decoy intensity must satisfy 0 < nu < mu, got nu={self.nu}, mu={self.mu}")


@dataclass(frozen=True)
class ChannelPoint:
    L_km: float
    sqrt_eta: float

    @classmethod
    def at(cls, sys: SystemParams, L_km: float) -> "ChannelPoint":
        return cls(float(L_km), sqrt_eta(sys, L_km))


def sqrt_eta(sys: SystemParams, L_km):
    """Per-arm transmittance ``eta_d * 10^(-alpha L / 20)`` for total distance ``L_km``.

    Each arm spans half the distance, so the per-arm channel loss in dB is
    ``alpha * L / 2``.
    """
    L = np.asarray(L_km, dtype=float)
    if np.any(L < 0) or not np.all(np.isfinite(L)):
        raise ValueError("distance must be finite and non-negative")
    out = sys.eta_d * 10.0 ** (-sys.alpha * L / 20.0)
    return float(out) if out.ndim == 0 else out


def binary_entropy(x):
    """Binary Shannon entropy in bits, with ``h(0) = h(1) = 0``."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError("binary entropy is defined on [0, 1]")
    inner = (arr > 0) & (arr < 1)
    safe = np.where(inner, arr, 0.5)
    h = -safe * np.log2(safe) - (1 - safe) * np.log2(1 - safe)
    out = np.where(inner, h, 0.0)
    return float(out) if out.ndim == 0 else out


def p_pm(delta):
    """Probability that uniformly random global phases land in a phase-matching slice."""
    d = np.asarray(delta, dtype=float)
    if np.any((d <= 0) | (d > math.pi / 4)) or np.any(np.isnan(d)):
        raise ValueError("delta must lie in (0, pi/4]")
    out = 2.0 * d / math.pi
    return float(out) if out.ndim == 0 else out
