"""Error function, imaginary error function and modified Bessel I0.

Each function has a scalar kernel (plain ``math``, compiled by numba) and a
vectorized numpy twin. The algorithms are the same on both paths:

* ``erf``: the all-positive series ``2x/sqrt(pi) exp(-x^2) sum (2x^2)^n/(2n+1)!!``
  for ``|x| <= 3``, the Laplace continued fraction for ``erfc`` beyond.
* ``erfi``: the power series ``2/sqrt(pi) sum x^(2n+1)/(n! (2n+1))`` for
  ``|x| <= 7``, the asymptotic expansion ``exp(x^2)/(x sqrt(pi)) sum (2k-1)!!/(2x^2)^k``
  beyond. ``erfi`` overflows double precision for ``|x| > 26.64`` and returns ``inf``.
* ``I0``: the power series ``sum (x^2/4)^k/(k!)^2`` for ``|x| <= 25``, the Hankel
  asymptotic expansion beyond.

The ``*_ratio_m1`` helpers return ``sqrt(pi) f(z)/(2z) - 1`` without the
cancellation that the direct expression suffers for small ``z``; the
phase-matched gains are written in terms of them.
"""

import math

import numpy as np

from cka_rate._accel import jit, resolve

__all__ = [
    "erf_re",
    "erf_im",
    "bessel_i0",
    "erf_ratio_m1",
    "erfi_ratio_m1",
]

_EPS = 1e-17
_TWO_OVER_SQRTPI = 2.0 / math.sqrt(math.pi)
_ERF_SERIES_MAX = 3.0
_ERFI_SERIES_MAX = 7.0
_I0_SERIES_MAX = 25.0
_MAX_TERMS = 4000


# ---------------------------------------------------------------- scalar kernels


@jit
def _erfc_cf(x):
    # modified Lentz on erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0
    tiny = 1e-300
    f = x
    c = x
    d = 0.0
    for k in range(1, 500):
        a = 0.5 * k
        d = x + a * d
        if d == 0.0:
            d = tiny
        c = x + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x * x) / (math.sqrt(math.pi) * f)


@jit
def _erf_scalar(x):
    ax = abs(x)
    if ax <= 3.0:
        x2 = 2.0 * ax * ax
        term = 1.0
        total = 1.0
        n = 0
        while term > 1e-17 * total and n < 4000:
            n += 1
            term *= x2 / (2 * n + 1)
            total += term
        val = 2.0 / math.sqrt(math.pi) * ax * math.exp(-ax * ax) * total
    elif ax < 6.5:
        val = 1.0 - _erfc_cf(ax)
    else:
        val = 1.0
    return -val if x < 0 else val


@jit
def _erfi_scalar(x):
    ax = abs(x)
    if ax <= 7.0:
        x2 = ax * ax
        a = ax
        total = ax
        n = 0
        while n < 4000:
            n += 1
            a *= x2 / n
            term = a / (2 * n + 1)
            total += term
            if term < 1e-17 * total:
                break
        val = 2.0 / math.sqrt(math.pi) * total
    else:
        inv = 1.0 / (2.0 * ax * ax)
        term = 1.0
        total = 1.0
        for k in range(1, 200):
            nxt = term * (2 * k - 1) * inv
            if nxt > term:
                break
            term = nxt
            total += term
            if term < 1e-17 * total:
                break
        val = math.exp(ax * ax) / (ax * math.sqrt(math.pi)) * total
    return -val if x < 0 else val


@jit
def _i0_scalar(x):
    ax = abs(x)
    if ax <= 25.0:
        q = 0.25 * ax * ax
        term = 1.0
        total = 1.0
        k = 0
        while k < 4000:
            k += 1
            term *= q / (k * k)
            total += term
            if term < 1e-17 * total:
                break
        return total
    term = 1.0
    total = 1.0
    for k in range(1, 200):
        nxt = term * (2 * k - 1) * (2 * k - 1) / (8.0 * k * ax)
        if nxt > term:
            break
        term = nxt
        total += term
        if term < 1e-17 * total:
            break
    return math.exp(ax) / math.sqrt(2.0 * math.pi * ax) * total


@jit
def _erfi_ratio_m1_scalar(z):
    # sqrt(pi) erfi(z)/(2z) - 1 = sum_{n>=1} z^(2n)/(n! (2n+1))
    z2 = z * z
    if z2 > 1.0:
        return math.sqrt(math.pi) * _erfi_scalar(z) / (2.0 * z) - 1.0
    a = 1.0
    total = 0.0
    for n in range(1, 200):
        a *= z2 / n
        term = a / (2 * n + 1)
        total += term
        if term < 1e-17 * total:
            break
    return total


@jit
def _erf_ratio_m1_scalar(z):
    # sqrt(pi) erf(z)/(2z) - 1 = sum_{n>=1} (-z^2)^n/(n! (2n+1)); alternating, only used for z^2 <= 1
    z2 = z * z
    if z2 > 1.0:
        return math.sqrt(math.pi) * _erf_scalar(z) / (2.0 * z) - 1.0
    a = 1.0
    total = 0.0
    for n in range(1, 200):
        a *= -z2 / n
        term = a / (2 * n + 1)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total


@jit
def _map_erf(x, out):
    for i in range(x.size):
        out[i] = _erf_scalar(x[i])


@jit
def _map_erfi(x, out):
    for i in range(x.size):
        out[i] = _erfi_scalar(x[i])


@jit
def _map_i0(x, out):
    for i in range(x.size):
        out[i] = _i0_scalar(x[i])


@jit
def _map_erf_ratio(x, out):
    for i in range(x.size):
        out[i] = _erf_ratio_m1_scalar(x[i])


@jit
def _map_erfi_ratio(x, out):
    for i in range(x.size):
        out[i] = _erfi_ratio_m1_scalar(x[i])


# ---------------------------------------------------------------- numpy twins


def _series_until_converged(first, step, total, active):
    """Add terms produced by ``step(term, n)`` until every active entry converged."""
    term = first
    n = 0
    while np.any(active) and n < _MAX_TERMS:
        n += 1
        term = np.where(active, step(term, n), 0.0)
        total = total + term
        active = active & (np.abs(term) >= _EPS * np.abs(total))
    return total


def _erf_np(x):
    ax = np.abs(x)
    out = np.ones_like(ax)
    low = ax <= _ERF_SERIES_MAX
    if np.any(low):
        a = ax[low]
        x2 = 2.0 * a * a
        total = _series_until_converged(
            np.ones_like(a), lambda term, n: term * x2 / (2 * n + 1), np.ones_like(a), a > 0
        )
        out[low] = _TWO_OVER_SQRTPI * a * np.exp(-a * a) * total
    mid = (ax > _ERF_SERIES_MAX) & (ax < 6.5)
    if np.any(mid):
        a = ax[mid]
        f = a.copy()
        c = a.copy()
        d = np.zeros_like(a)
        active = np.ones(a.shape, dtype=bool)
        for k in range(1, 500):
            coef = 0.5 * k
            d = np.where(active, a + coef * d, d)
            c = np.where(active, a + coef / c, c)
            d = np.where(active, 1.0 / d, d)
            delta = np.where(active, c * d, 1.0)
            f = f * delta
            active = active & (np.abs(delta - 1.0) >= 1e-16)
            if not np.any(active):
                break
        out[mid] = 1.0 - np.exp(-a * a) / (math.sqrt(math.pi) * f)
    return np.copysign(out, x)


def _erfi_np(x):
    ax = np.abs(x)
    out = np.empty_like(ax)
    low = ax <= _ERFI_SERIES_MAX
    if np.any(low):
        a0 = ax[low]
        x2 = a0 * a0
        # carry the un-divided coefficient x^(2n+1)/n! in the running state
        coef = a0.copy()
        total = a0.copy()
        active = a0 > 0
        n = 0
        while np.any(active) and n < _MAX_TERMS:
            n += 1
            coef = np.where(active, coef * x2 / n, coef)
            term = np.where(active, coef / (2 * n + 1), 0.0)
            total = total + term
            active = active & (term >= _EPS * total)
        out[low] = _TWO_OVER_SQRTPI * total
    high = ~low
    if np.any(high):
        a = ax[high]
        inv = 1.0 / (2.0 * a * a)
        term = np.ones_like(a)
        total = np.ones_like(a)
        active = np.ones(a.shape, dtype=bool)
        for k in range(1, 200):
            nxt = term * (2 * k - 1) * inv
            active = active & (nxt <= term)
            term = np.where(active, nxt, term)
            total = total + np.where(active, term, 0.0)
            active = active & (term >= _EPS * total)
            if not np.any(active):
                break
        with np.errstate(over="ignore"):
            out[high] = np.exp(a * a) / (a * math.sqrt(math.pi)) * total
    return np.copysign(out, x)


def _i0_np(x):
    ax = np.abs(x)
    out = np.empty_like(ax)
    low = ax <= _I0_SERIES_MAX
    if np.any(low):
        q = 0.25 * ax[low] ** 2
        out[low] = _series_until_converged(
            np.ones_like(q), lambda term, k: term * q / (k * k), np.ones_like(q), q > 0
        )
    high = ~low
    if np.any(high):
        a = ax[high]
        term = np.ones_like(a)
        total = np.ones_like(a)
        active = np.ones(a.shape, dtype=bool)
        for k in range(1, 200):
            nxt = term * (2 * k - 1) ** 2 / (8.0 * k * a)
            active = active & (nxt <= term)
            term = np.where(active, nxt, term)
            total = total + np.where(active, term, 0.0)
            active = active & (term >= _EPS * total)
            if not np.any(active):
                break
        with np.errstate(over="ignore"):
            out[high] = np.exp(a) / np.sqrt(2.0 * math.pi * a) * total
    return out


def _ratio_np(z, sign, direct):
    z2 = z * z
    out = np.empty_like(z)
    small = z2 <= 1.0
    if np.any(small):
        s2 = z2[small]
        total = np.zeros_like(s2)
        a = np.ones_like(s2)
        active = s2 > 0
        n = 0
        while np.any(active) and n < 200:
            n += 1
            a = np.where(active, a * sign * s2 / n, a)
            term = np.where(active, a / (2 * n + 1), 0.0)
            total = total + term
            active = active & (np.abs(term) >= _EPS * np.abs(total))
        out[small] = total
    big = ~small
    if np.any(big):
        zb = z[big]
        out[big] = math.sqrt(math.pi) * direct(zb) / (2.0 * zb) - 1.0
    return out


# ---------------------------------------------------------------- public API


def _apply(x, kernel_map, numpy_impl, backend):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("special functions require finite input")
    flat = np.ascontiguousarray(arr).reshape(-1)
    if resolve(backend) == "numba":
        out = np.empty_like(flat)
        kernel_map(flat, out)
    else:
        out = numpy_impl(flat)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def erf_re(x, backend=None):
    """Error function of a real argument."""
    return _apply(x, _map_erf, _erf_np, backend)


def erf_im(x, backend=None):
    """Imaginary error function ``erfi(x) = -i erf(ix)``; ``inf`` past ``|x| = 26.64``."""
    return _apply(x, _map_erfi, _erfi_np, backend)


def bessel_i0(x, backend=None):
    """Modified Bessel function of the first kind, order zero."""
    return _apply(x, _map_i0, _i0_np, backend)


def erf_ratio_m1(z, backend=None):
    """``sqrt(pi) erf(z)/(2z) - 1``, accurate as ``z -> 0`` (limit 0)."""
    return _apply(z, _map_erf_ratio, lambda v: _ratio_np(v, -1.0, _erf_np), backend)


def erfi_ratio_m1(z, backend=None):
    """``sqrt(pi) erfi(z)/(2z) - 1``, accurate as ``z -> 0`` (limit 0)."""
    return _apply(z, _map_erfi_ratio, lambda v: _ratio_np(v, 1.0, _erfi_np), backend)
