"""Closed-form reference kernels.

Heat convention: u_t = Laplacian(u), so the free kernel is
(4 pi t)^{-n/2} exp(-|x-y|^2 / (4 t)) and Brownian increments have variance
2 dt per coordinate.  Every other module takes its Gaussian from here.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

# -- free and half-plane kernels ---------------------------------------------


def _sqdist(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return ((x - y) ** 2).sum(-1), x.shape[-1]


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def log_gauss_kernel(t, x, y, n: int | None = None):
    d2, dim = _sqdist(x, y)
    n = dim if n is None else n
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    return _out(-0.5 * n * np.log(4.0 * np.pi * t) - d2 / (4.0 * t))


def gauss_kernel(t, x, y, n: int | None = None):
    """Whole-space heat kernel for u_t = Laplacian(u)."""
    return _out(np.exp(log_gauss_kernel(t, x, y, n)))


def halfplane_survival(t, x, y):
    """exp-free form of 1 - p(t, x, ybar)/p(t, x, y) for the upper half-plane."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x[..., 1] < 0) or np.any(y[..., 1] < 0):
        raise ValueError("points must lie in the closed upper half-plane")
    return _out(-np.expm1(-x[..., 1] * y[..., 1] / np.asarray(t, dtype=float)))


def halfplane_kernel(t, x, y):
    """Dirichlet heat kernel of {x2 > 0} by the method of images."""
    return _out(gauss_kernel(t, x, y, 2) * halfplane_survival(t, x, y))


def log_halfplane_kernel(t, x, y):
    """log of halfplane_kernel, finite far into the Gaussian tail."""
    return _out(log_gauss_kernel(t, x, y, 2) + np.log(halfplane_survival(t, x, y)))


# -- exterior unit disk --------------------------------------------------------


def exterior_disk_green(x, y):
    """Green function of the exterior of the unit disk, (1/2pi) ln(|x - y*| |y| / |x - y|)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rx = np.linalg.norm(x, axis=-1)
    ry = np.linalg.norm(y, axis=-1)
    if np.any(rx < 1.0) or np.any(ry < 1.0):
        raise ValueError("points must lie outside the unit disk")
    d = np.linalg.norm(x - y, axis=-1)
    if np.any(d == 0):
        raise ValueError("Green function is singular at x = y")
    # |x - y*| |y| = | |y| x - y/|y| |
    num = np.linalg.norm(ry[..., None] * x - y / ry[..., None], axis=-1)
    return _out(np.log(num / d) / (2.0 * np.pi))


def exterior_disk_phi(x):
    """Harmonic weight of the exterior unit disk: 1 + ln|x|."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.any(r < 1.0):
        raise ValueError("points must satisfy |x| >= 1")
    return _out(1.0 + np.log(r))


# -- Bessel functions ----------------------------------------------------------

_SERIES_CUTOFF = 12.0


def _bessel_series(nu: int, z):
    """sum_k (-1)^k (z/2)^{2k+nu} / (k! (k+nu)!)."""
    h = 0.5 * z
    term = h**nu / math.factorial(nu)
    total = term.copy()
    q = -h * h
    for k in range(1, 80):
        term = term * q / (k * (k + nu))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _bessel_asymptotic(nu: int, z):
    """Hankel expansion, truncated at its smallest term."""
    mu = 4.0 * nu * nu
    p = np.ones_like(z)
    q = np.zeros_like(z)
    a = 1.0
    for k in range(1, 40):
        a_next = a * (mu - (2 * k - 1) ** 2) / (k * 8.0)
        term = a_next / z**k
        if np.max(np.abs(term)) > np.max(np.abs(a / z ** (k - 1))) and k > 2:
            break
        sign = (-1) ** (k // 2)
        if k % 2 == 0:
            p = p + sign * term
        else:
            q = q + sign * term
        a = a_next
    chi = z - (0.5 * nu + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


def _bessel(nu: int, z):
    z = np.asarray(z, dtype=float)
    az = np.abs(z)
    out = np.empty_like(az)
    small = az <= _SERIES_CUTOFF
    if np.any(small):
        out[small] = _bessel_series(nu, az[small])
    if np.any(~small):
        out[~small] = _bessel_asymptotic(nu, az[~small])
    if nu % 2 == 1:
        out = np.where(z < 0, -out, out)
    return _out(out)


def bessel_j0(z):
    """Bessel J0: power series for |z| <= 12, Hankel asymptotics beyond."""
    return _bessel(0, z)


def bessel_j1(z):
    """Bessel J1: power series for |z| <= 12, Hankel asymptotics beyond."""
    return _bessel(1, z)


def bessel_j0_first_zero() -> float:
    """First positive zero of J0 by Newton iteration (J0' = -J1)."""
    z = 2.4
    for _ in range(50):
        step = bessel_j0(z) / -bessel_j1(z)
        z -= step
        if abs(step) < 1e-15:
            break
    return z


J01 = bessel_j0_first_zero()


def disk_first_eigenpair() -> tuple[float, Callable]:
    """Ground state of the Dirichlet Laplacian on the unit disk: (j01^2, r -> J0(j01 r))."""

    def profile(r):
        return bessel_j0(J01 * np.asarray(r, dtype=float))

    return J01**2, profile
