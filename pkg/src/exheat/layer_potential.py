"""Harmonic weight phi of an exterior planar domain via boundary integrals.

Construction:
  u0(x) = (1 / (2 pi |dOmega|)) * integral of ln|y - x| over the boundary,
  u1    = bounded exterior harmonic function with u1 = u0 on the boundary,
  c0    = far-field slope of (u0 - u1) against ln|x|,
  phi   = 1 + (u0 - u1) / c0 in Omega, phi = 1 on the obstacle.

u1 is represented as a double-layer potential plus the constant completion
integral(mu), discretized by Nystrom on trapezoid nodes uniform in the curve
parameter.  Boundary values of u0 use Kress' product quadrature for the
logarithmic singularity.  Points close to the boundary are evaluated on a
finer node set (geometry is exact; the density is resampled spectrally).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import BoundaryTrace, Domain, ExteriorDomain, GeometryError, as_points

MAX_FINE_NODES = 2**18


class OrientationError(ValueError):
    """The far-field slope of u0 - u1 is not positive."""


class IllConditionedError(RuntimeError):
    def __init__(self, cond: float):
        super().__init__(f"boundary system is ill-conditioned (condition number {cond:.3e})")
        self.cond = cond


def _exterior(domain: Domain) -> ExteriorDomain:
    if not isinstance(domain, ExteriorDomain) or domain.dim != 2:
        raise GeometryError("layer potentials need a planar exterior domain")
    return domain


def _resample(values: np.ndarray, m_new: int) -> np.ndarray:
    """Trigonometric interpolation of periodic node values onto m_new uniform nodes."""
    m = len(values)
    if m_new == m:
        return values.copy()
    c = np.fft.rfft(values)
    if m % 2 == 0:
        c[-1] *= 0.5  # split the Nyquist mode symmetrically
    out = np.zeros(m_new // 2 + 1, dtype=complex)
    k = min(len(c), len(out))
    out[:k] = c[:k]
    return np.fft.irfft(out, n=m_new) * (m_new / m)


def _kress_weights(m: int) -> np.ndarray:
    """R[k] with integral ln(4 sin^2((t - s)/2)) f(s) ds ~ sum_j R[i - j] f_j."""
    if m % 2:
        raise GeometryError("Kress quadrature needs an even node count")
    k = np.arange(m)
    dt = 2.0 * np.pi * k / m
    ell = np.arange(1, m // 2)
    r = -(4.0 * np.pi / m) * (np.cos(np.outer(dt, ell)) / ell).sum(axis=1)
    return r - (4.0 * np.pi / m**2) * np.cos(np.pi * k)


def _fine_count(dist: np.ndarray, perimeter: float, m: int) -> np.ndarray:
    """Node count making the node spacing at most a quarter of the distance."""
    with np.errstate(divide="ignore"):
        need = 4.0 * perimeter / np.maximum(dist, 1e-300)
    exp = np.ceil(np.log2(np.maximum(need, m)))
    return np.minimum(2 ** exp.astype(np.int64), MAX_FINE_NODES)


def _log_potential(tr: BoundaryTrace, x: np.ndarray) -> np.ndarray:
    """sum_j ln|y_j - x| w_j for each row of x."""
    out = np.empty(len(x))
    for lo in range(0, len(x), 2048):
        xs = x[lo:lo + 2048]
        d = np.linalg.norm(xs[:, None, :] - tr.points[None, :, :], axis=-1)
        if np.any(d == 0):
            raise ValueError("target coincides with a quadrature node")
        out[lo:lo + 2048] = np.log(d) @ tr.weights
    return out


def _double_layer(tr: BoundaryTrace, dens: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Trapezoid double layer with density subtracted at the nearest node."""
    out = np.empty(len(x))
    for lo in range(0, len(x), 2048):
        xs = x[lo:lo + 2048]
        r = xs[:, None, :] - tr.points[None, :, :]
        r2 = (r**2).sum(-1)
        kern = (r * tr.normals[None, :, :]).sum(-1) / (2.0 * np.pi * r2)
        near = np.argmin(r2, axis=1)
        diff = dens[None, :] - dens[near][:, None]
        out[lo:lo + 2048] = (kern * diff) @ tr.weights
    return out


@dataclass
class ExteriorHarmonic:
    """Bounded harmonic function in the exterior given by a double-layer density."""

    domain: ExteriorDomain
    trace: BoundaryTrace
    density: np.ndarray
    cond: float

    @property
    def completion(self) -> float:
        return float(self.density @ self.trace.weights)

    def __call__(self, pts) -> np.ndarray:
        x = as_points(pts, 2)
        flat = x.reshape(-1, 2)
        out = np.zeros(len(flat))
        dist = self.domain.boundary_distance(flat)
        m = len(self.density)
        counts = _fine_count(dist, float(self.trace.weights.sum()), m)
        for mf in np.unique(counts):
            sel = counts == mf
            tr = self.trace if mf == m else self.domain.obstacle.trace(int(mf))
            dens = self.density if mf == m else _resample(self.density, int(mf))
            out[sel] = _double_layer(tr, dens, flat[sel])
        out += self.completion
        res = out.reshape(x.shape[:-1])
        return float(res) if res.ndim == 0 else res


def solve_exterior_dirichlet(domain: Domain, g, m: int = 256,
                             max_cond: float = 1e12) -> ExteriorHarmonic:
    """Bounded exterior harmonic extension of boundary data ``g``.

    ``g`` is a callable on boundary points or an array of node values.
    Boundary equation: mu/2 + D mu + integral(mu) = g.
    """
    dom = _exterior(domain)
    tr = dom.trace(m)
    gv = np.asarray(g(tr.points) if callable(g) else g, dtype=float)
    if gv.shape != (m,):
        raise ValueError("boundary data must have one value per node")
    r = tr.points[:, None, :] - tr.points[None, :, :]
    r2 = (r**2).sum(-1)
    np.fill_diagonal(r2, 1.0)
    kern = (r * tr.normals[None, :, :]).sum(-1) / (2.0 * np.pi * r2)
    np.fill_diagonal(kern, -tr.curvature / (4.0 * np.pi))
    a = 0.5 * np.eye(m) + (kern + 1.0) * tr.weights[None, :]
    cond = float(np.linalg.cond(a))
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedError(cond)
    mu = np.linalg.solve(a, gv)
    return ExteriorHarmonic(dom, tr, mu, cond)


def _u0_on_nodes(tr: BoundaryTrace) -> np.ndarray:
    m = len(tr.theta)
    sigma = tr.weights.sum()
    rk = _kress_weights(m)
    idx = (np.arange(m)[:, None] - np.arange(m)[None, :]) % m
    sing = 0.5 * rk[idx] @ tr.speed
    dth = tr.theta[None, :] - tr.theta[:, None]
    d = np.linalg.norm(tr.points[None, :, :] - tr.points[:, None, :], axis=-1)
    s = np.abs(2.0 * np.sin(0.5 * dth))
    np.fill_diagonal(s, 1.0)
    np.fill_diagonal(d, 1.0)
    lg = np.log(d / s)
    np.fill_diagonal(lg, np.log(tr.speed))
    smooth = lg @ tr.weights
    return (sing + smooth) / (2.0 * np.pi * sigma)


def single_layer_u0(domain: Domain, x, m: int = 1024) -> np.ndarray | float:
    """u0(x) by the trapezoid rule on ``m`` boundary nodes."""
    if m < 64:
        raise GeometryError("u0 needs at least 64 boundary nodes")
    dom = _exterior(domain)
    tr = dom.trace(m)
    pts = as_points(x, 2)
    res = _log_potential(tr, pts.reshape(-1, 2)) / (2.0 * np.pi * tr.weights.sum())
    res = res.reshape(pts.shape[:-1])
    return float(res) if res.ndim == 0 else res


def _u0_refined(dom: ExteriorDomain, m: int, flat: np.ndarray) -> np.ndarray:
    sigma = dom.obstacle.perimeter()
    out = np.empty(len(flat))
    counts = _fine_count(dom.boundary_distance(flat), sigma, m)
    for mf in np.unique(counts):
        sel = counts == mf
        out[sel] = _log_potential(dom.trace(int(mf)), flat[sel])
    return out / (2.0 * np.pi * sigma)


@dataclass
class HarmonicWeight:
    """Evaluable harmonic weight phi together with u0, u1 and c0."""

    domain: ExteriorDomain
    m: int
    u1: ExteriorHarmonic
    c0: float = field(default=float("nan"))

    def u0(self, pts) -> np.ndarray:
        x = as_points(pts, 2)
        res = _u0_refined(self.domain, self.m, x.reshape(-1, 2)).reshape(x.shape[:-1])
        return float(res) if res.ndim == 0 else res

    def w(self, pts) -> np.ndarray:
        """(u0 - u1)(x), the harmonic part of phi before normalization.

        Below the distance the finest node set resolves, w is interpolated
        linearly along the normal from its zero boundary value.
        """
        x = as_points(pts, 2)
        flat = x.reshape(-1, 2)
        d_min = 4.0 * self.domain.obstacle.perimeter() / MAX_FINE_NODES
        dist = self.domain.boundary_distance(flat)
        close = dist < d_min
        out = np.empty(len(flat))
        far = flat[~close]
        out[~close] = self.u0(far) - self.u1(far) if len(far) else []
        if np.any(close):
            th = self.domain.obstacle.nearest_parameter(flat[close])
            p, d1, _ = self.domain.obstacle.curve(th)
            nu = np.stack([d1[:, 1], -d1[:, 0]], -1) / np.hypot(d1[:, 0], d1[:, 1])[:, None]
            probe = p + d_min * nu
            out[close] = (dist[close] / d_min) * (self.u0(probe) - self.u1(probe))
        res = out.reshape(x.shape[:-1])
        return float(res) if res.ndim == 0 else res

    def phi(self, pts) -> np.ndarray:
        x = as_points(pts, 2)
        flat = x.reshape(-1, 2)
        out = np.ones(len(flat))
        inside = self.domain.rho(flat) > 0
        if np.any(inside):
            out[inside] = 1.0 + np.atleast_1d(self.w(flat[inside])) / self.c0
        res = out.reshape(x.shape[:-1])
        return float(res) if res.ndim == 0 else res

    __call__ = phi


def estimate_c0(weight: HarmonicWeight, radii: Sequence[float] | None = None,
                n_angles: int = 32) -> float:
    """Least-squares slope of (u0 - u1) against ln|x| over far-field circles."""
    diam = weight.domain.obstacle.diameter
    radii = [64 * diam, 128 * diam, 256 * diam] if radii is None else list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must increase")
    if max(radii) < 50 * diam:
        raise ValueError("largest radius must be at least 50 obstacle diameters")
    ang = 2.0 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
    pts = np.concatenate([r * np.stack([np.cos(ang), np.sin(ang)], -1) for r in radii])
    slope = np.polyfit(np.log(np.linalg.norm(pts, axis=-1)), weight.w(pts), 1)[0]
    if not slope > 0:
        raise OrientationError(f"far-field slope {slope:.6g} is not positive")
    return float(slope)


def build_phi(domain: Domain, m: int = 256, radii: Sequence[float] | None = None) -> HarmonicWeight:
    """Construct phi = 1 + (u0 - u1)/c0 for a planar exterior domain."""
    dom = _exterior(domain)
    tr = dom.trace(m)
    u1 = solve_exterior_dirichlet(dom, _u0_on_nodes(tr), m)
    hw = HarmonicWeight(dom, m, u1)
    hw.c0 = estimate_c0(hw, radii)
    return hw


def log_modulus_extension(domain: Domain, m: int = 256) -> Callable:
    """Independent check: u0 - u1 = (ln|x| - H[ln|y|](x)) / (2 pi).

    H is the bounded exterior extension of ln|y| (the origin lies in the
    obstacle), so this gives u0 - u1 without any single-layer quadrature.
    """
    dom = _exterior(domain)
    h = solve_exterior_dirichlet(dom, lambda p: np.log(np.linalg.norm(p, axis=-1)), m)

    def w(pts):
        x = as_points(pts, 2)
        return (np.log(np.linalg.norm(x, axis=-1)) - h(x)) / (2.0 * np.pi)

    return w
