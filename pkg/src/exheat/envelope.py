"""Explicit comparison functions for heat kernels, Green functions and Riesz kernels.

Every function comes in two layers: a ``*_rho`` form taking the distances
rho(x), rho(y) and |x - y| directly (vectorized, used by scans), and a form
taking points plus a domain.  Logarithms are natural.  Heat envelopes also
have ``log_*`` variants so that scans at small t do not underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Domain

E = math.e


@dataclass(frozen=True)
class EnvelopeParams:
    """Implicit constants of a two-sided estimate: exp(-|x-y|^2/(c t)) and amplitude C."""

    c_gauss: float = 4.0
    amplitude: float = 1.0

    def __post_init__(self):
        if not (self.c_gauss > 0 and self.amplitude > 0):
            raise ValueError("envelope constants must be positive")


def _pair(x, y, domain: Domain):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return domain.rho(x), domain.rho(y), np.linalg.norm(x - y, axis=-1)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def _cap(r, scale):
    """min(r / scale, 1), the boundary factor."""
    return np.minimum(r / scale, 1.0)


# -- heat kernel ------------------------------------------------------------


def log_heat_envelope_2d_rho(t, rx, ry, dist, params: EnvelopeParams, form: str = "max"):
    """Log of the planar exterior heat envelope (``-inf`` where a rho vanishes).

    ``form="max"`` uses log(e + max(rho(x), rho(y))) in the denominator,
    ``form="x"`` uses rho(x) alone.
    """
    t, rx, ry, dist = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, rx, ry, dist)))
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    lx, ly = np.log(E + rx), np.log(E + ry)
    lden = np.log(E + np.maximum(rx, ry)) if form == "max" else lx
    sc = np.minimum(np.sqrt(t), 1.0)
    with np.errstate(divide="ignore"):
        bx = np.log(_cap(rx, sc))
        by = np.log(_cap(ry, sc))
    out = (math.log(params.amplitude) + np.log(lx) + np.log(ly) - np.log(t)
           - 2.0 * np.log(np.log(E + np.sqrt(t)) + lden) + bx + by
           - dist**2 / (params.c_gauss * t))
    return _scalar(out)


def heat_envelope_2d_rho(t, rx, ry, dist, params: EnvelopeParams, form: str = "max"):
    return _scalar(np.exp(log_heat_envelope_2d_rho(t, rx, ry, dist, params, form)))


def heat_envelope_2d(t, x, y, domain: Domain, params: EnvelopeParams):
    """Two-sided envelope of the planar exterior Dirichlet heat kernel."""
    rx, ry, d = _pair(x, y, domain)
    return heat_envelope_2d_rho(t, rx, ry, d, params)


def log_heat_envelope_hd_rho(t, rx, ry, dist, n: int, params: EnvelopeParams):
    if n < 3:
        raise ValueError("the n >= 3 envelope is used with n = 2; call heat_envelope_2d")
    t, rx, ry, dist = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, rx, ry, dist)))
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    sc = np.minimum(np.sqrt(t), 1.0)
    with np.errstate(divide="ignore"):
        out = (math.log(params.amplitude) - 0.5 * n * np.log(t) + np.log(_cap(rx, sc))
               + np.log(_cap(ry, sc)) - dist**2 / (params.c_gauss * t))
    return _scalar(out)


def heat_envelope_hd_rho(t, rx, ry, dist, n: int, params: EnvelopeParams):
    return _scalar(np.exp(log_heat_envelope_hd_rho(t, rx, ry, dist, n, params)))


def heat_envelope_hd(t, x, y, domain: Domain, n: int, params: EnvelopeParams):
    """Envelope in dimension n >= 3 (no logarithmic corrections)."""
    rx, ry, d = _pair(x, y, domain)
    return heat_envelope_hd_rho(t, rx, ry, d, n, params)


# -- Green function and Riesz kernels ---------------------------------------


def green_envelope_2d_rho(rx, ry, dist):
    rx, ry, dist = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (rx, ry, dist)))
    if np.any(dist <= 0):
        raise ValueError("Green envelope is singular at x = y")
    rmin = np.minimum(rx, ry)
    near = dist < np.minimum(rmin, 1.0)
    with np.errstate(divide="ignore"):
        b1 = 1.0 + np.log(np.where(near, rmin / dist, 1.0))
    b2 = np.minimum(rx, 1.0) * np.minimum(ry, 1.0) / np.minimum(dist**2, 1.0) * np.log(E + rmin)
    return _scalar(np.where(near, b1, b2))


def green_envelope_2d(x, y, domain: Domain):
    """Two-sided envelope of the planar exterior Green function.

    Ties at |x - y| = min(rho(x), rho(y), 1) use the far-field branch.
    """
    rx, ry, d = _pair(x, y, domain)
    return green_envelope_2d_rho(rx, ry, d)


def riesz_envelope_rho(rx, ry, dist, s: float, n: int):
    if not 0 < s < n:
        raise ValueError(f"s must lie in (0, {n})")
    rx, ry, dist = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (rx, ry, dist)))
    if np.any(dist <= 0):
        raise ValueError("Riesz envelope is singular at x = y")
    sc = np.minimum(dist, 1.0)
    out = dist ** (s - n) * _cap(rx, sc) * _cap(ry, sc)
    if n == 2:
        out = out * np.log(E + np.minimum(rx, ry)) / np.log(E + np.maximum(rx, ry))
    return _scalar(out)


def riesz_envelope(x, y, s: float, domain: Domain, n: int | None = None):
    """Upper envelope of the fractional Riesz kernel of the Dirichlet Laplacian."""
    n = domain.dim if n is None else n
    rx, ry, d = _pair(x, y, domain)
    return riesz_envelope_rho(rx, ry, d, s, n)


def whole_space_riesz(dist, s: float, n: int = 2):
    """Kernel of (-Delta)^{-s/2} on R^n: Gamma((n-s)/2) / (2^s pi^{n/2} Gamma(s/2)) |x-y|^{s-n}."""
    c = math.gamma((n - s) / 2) / (2**s * math.pi ** (n / 2) * math.gamma(s / 2))
    return _scalar(c * np.asarray(dist, dtype=float) ** (s - n))


# -- weighted geometry --------------------------------------------------------


def weighted_volume_rho(rx, r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radius must be positive")
    return _scalar(r**2 * (np.log(E + r) + np.log(E + np.asarray(rx, dtype=float))) ** 2)


def weighted_volume(x, r, domain: Domain):
    """Volume of B(x, r) for the harmonic-weight measure, up to constants."""
    return weighted_volume_rho(domain.rho(np.asarray(x, dtype=float)), r)


def phi_model_rho(rx):
    return _scalar(np.log(E + np.asarray(rx, dtype=float)))


def phi_model(x, domain: Domain):
    """log(e + rho(x)), the size of the harmonic weight."""
    return phi_model_rho(domain.rho(np.asarray(x, dtype=float)))


# -- kernel difference ---------------------------------------------------------


def difference_envelope_rho(t, rx, ry, dist, n: int, params: EnvelopeParams):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    q = np.asarray(dist, float) ** 2 + np.asarray(rx, float) ** 2 + np.asarray(ry, float) ** 2
    return _scalar(params.amplitude * t ** (-n / 2) * np.exp(-q / (params.c_gauss * t)))


def difference_envelope(t, x, y, domain: Domain, n: int, params: EnvelopeParams):
    """Bound for p - p_Omega, Gaussian in |x-y|^2 + rho(x)^2 + rho(y)^2."""
    rx, ry, d = _pair(x, y, domain)
    return difference_envelope_rho(t, rx, ry, d, n, params)
