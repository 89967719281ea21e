"""Obstacles, exterior (and bounded) domains, and the distance function rho.

Points are plain numpy arrays whose last axis holds the coordinates, so every
routine here accepts either a single point of shape ``(n,)`` or a batch of
shape ``(..., n)``.  Boundary points belong to the complement: ``rho == 0``
and ``contains`` is false there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class GeometryError(ValueError):
    """Invalid geometry or a request the geometry cannot satisfy."""


def as_points(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != dim:
        raise GeometryError(f"expected points with {dim} coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("non-finite coordinates")
    return arr


class BoundaryTrace(NamedTuple):
    """Quadrature nodes on a closed boundary curve.

    ``theta`` is the curve parameter of each node, ``normals`` point out of
    the obstacle (into the exterior domain) and ``weights`` are arclength
    weights of the periodic trapezoid rule.
    """

    theta: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    speed: np.ndarray
    curvature: np.ndarray


# --------------------------------------------------------------------------
# obstacles
# --------------------------------------------------------------------------


class Obstacle:
    """Bounded obstacle with a closed C^{1,1} boundary, containing the origin."""

    dim: int = 2

    def inside(self, pts: np.ndarray, closed: bool = True) -> np.ndarray:
        raise NotImplementedError

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    # Planar obstacles are described by a 2*pi periodic parametrization.
    def curve(self, theta: np.ndarray):
        """Return ``(P, P', P'')`` at parameter values ``theta``."""
        raise NotImplementedError

    def trace(self, m: int) -> BoundaryTrace:
        if self.dim != 2:
            raise GeometryError("boundary traces are only available in the plane")
        if m < 4:
            raise GeometryError(f"m={m} nodes is too few to resolve the boundary")
        theta = 2.0 * np.pi * np.arange(m) / m
        p, d1, d2 = self.curve(theta)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        normals = np.stack([d1[:, 1], -d1[:, 0]], axis=-1) / speed[:, None]
        curvature = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
        weights = speed * (2.0 * np.pi / m)
        return BoundaryTrace(theta, p, normals, weights, speed, curvature)

    def perimeter(self, m: int = 4096) -> float:
        return float(self.trace(m).weights.sum())

    def nearest_parameter(self, pts) -> np.ndarray:
        """Curve parameter of the boundary point closest to each point."""
        return self._curve_distance(as_points(pts, 2), with_theta=True)[1]

    def _curve_distance(self, pts: np.ndarray, n_seed: int = 128, chunk: int = 4096,
                        with_theta: bool = False):
        """Distance to the parametrized boundary by safeguarded Newton on theta.

        The squared distance is sampled on ``n_seed`` parameter values; the
        best sample brackets the minimizer and Newton iterations on the
        stationarity condition run inside that bracket, falling back to
        bisection whenever a step leaves it.
        """
        flat = pts.reshape(-1, 2)
        out = np.empty(len(flat))
        theta = np.empty(len(flat))
        seeds = 2.0 * np.pi * np.arange(n_seed) / n_seed
        ps, _, _ = self.curve(seeds)
        dtheta = 2.0 * np.pi / n_seed
        for lo in range(0, len(flat), chunk):
            x = flat[lo:lo + chunk]
            d2 = ((x[:, None, :] - ps[None, :, :]) ** 2).sum(-1)
            best = np.argmin(d2, axis=1)
            coarse = np.sqrt(d2[np.arange(len(x)), best])
            a = seeds[best] - dtheta
            b = seeds[best] + dtheta
            th = seeds[best].copy()

            def grad(theta):
                p, d1, dd = self.curve(theta)
                r = p - x
                g = (r * d1).sum(-1)
                gp = (d1 * d1).sum(-1) + (r * dd).sum(-1)
                return g, gp

            ga, _ = grad(a)
            for _ in range(60):
                g, gp = grad(th)
                # keep a sign-change bracket: g < 0 left of the minimizer
                left = np.sign(g) == np.sign(ga)
                a = np.where(left, th, a)
                ga = np.where(left, g, ga)
                b = np.where(left, b, th)
                with np.errstate(divide="ignore", invalid="ignore"):
                    step = th - g / gp
                ok = (gp > 0) & (step > a) & (step < b)
                new = np.where(ok, step, 0.5 * (a + b))
                if np.max(np.abs(new - th)) < 1e-14:
                    th = new
                    break
                th = new
            p, _, _ = self.curve(th)
            fine = np.hypot(*(p - x).T)
            out[lo:lo + chunk] = np.minimum(fine, coarse)
            theta[lo:lo + chunk] = np.where(fine <= coarse, th, seeds[best])
        if with_theta:
            return out.reshape(pts.shape[:-1]), np.mod(theta, 2.0 * np.pi).reshape(pts.shape[:-1])
        return out.reshape(pts.shape[:-1])


@dataclass(frozen=True)
class Disk(Obstacle):
    """Disk (n = 2) or ball (n = 3) of the given radius."""

    radius: float = 1.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("radius must be positive")
        if len(self.center) not in (2, 3):
            raise GeometryError("only n = 2 or n = 3 is supported")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.center)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def _r(self, pts):
        return np.linalg.norm(as_points(pts, self.dim) - np.asarray(self.center), axis=-1)

    def inside(self, pts, closed=True):
        r = self._r(pts)
        return r <= self.radius if closed else r < self.radius

    def boundary_distance(self, pts):
        return np.abs(self._r(pts) - self.radius)

    def curve(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        u = np.stack([c, s], axis=-1)
        du = np.stack([-s, c], axis=-1)
        return np.asarray(self.center[:2]) + self.radius * u, self.radius * du, -self.radius * u

    def nearest_parameter(self, pts):
        x = as_points(pts, 2) - np.asarray(self.center[:2])
        return np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * np.pi)

    def perimeter(self, m: int = 0) -> float:
        return 2.0 * math.pi * self.radius


@dataclass(frozen=True)
class Ellipse(Obstacle):
    """Origin-centred ellipse with semi-axes ``a >= b > 0`` along x and y."""

    a: float = 2.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise GeometryError("ellipse needs a >= b > 0")

    @property
    def diameter(self) -> float:
        return 2.0 * self.a

    def inside(self, pts, closed=True):
        x = as_points(pts, 2)
        q = (x[..., 0] / self.a) ** 2 + (x[..., 1] / self.b) ** 2
        return q <= 1.0 if closed else q < 1.0

    def boundary_distance(self, pts):
        return self._curve_distance(as_points(pts, 2))

    def curve(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        p = np.stack([self.a * c, self.b * s], axis=-1)
        d1 = np.stack([-self.a * s, self.b * c], axis=-1)
        return p, d1, -p


@dataclass(frozen=True)
class StarShaped(Obstacle):
    """Obstacle bounded by r = r(theta), a positive trigonometric polynomial.

    ``r(theta) = r0 + sum_k cos_coeffs[k-1] cos(k theta) + sin_coeffs[k-1] sin(k theta)``.
    A finite Fourier profile is smooth, hence C^{1,1}.
    """

    r0: float = 1.0
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))
        th = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
        if np.min(self.profile(th)[0]) <= 0:
            raise GeometryError("radial profile must stay positive")

    def profile(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = np.full_like(theta, self.r0)
        r1 = np.zeros_like(theta)
        r2 = np.zeros_like(theta)
        n = max(len(self.cos_coeffs), len(self.sin_coeffs))
        for k in range(1, n + 1):
            a = self.cos_coeffs[k - 1] if k <= len(self.cos_coeffs) else 0.0
            b = self.sin_coeffs[k - 1] if k <= len(self.sin_coeffs) else 0.0
            c, s = np.cos(k * theta), np.sin(k * theta)
            r += a * c + b * s
            r1 += k * (-a * s + b * c)
            r2 += -k * k * (a * c + b * s)
        return r, r1, r2

    @property
    def diameter(self) -> float:
        th = np.linspace(0.0, 2.0 * np.pi, 2048, endpoint=False)
        p, _, _ = self.curve(th)
        # bounded by twice the largest radius; exact enough for sizing grids
        return float(2.0 * np.max(np.hypot(p[:, 0], p[:, 1])))

    def inside(self, pts, closed=True):
        x = as_points(pts, 2)
        r = np.hypot(x[..., 0], x[..., 1])
        rb = self.profile(np.arctan2(x[..., 1], x[..., 0]))[0]
        return r <= rb if closed else r < rb

    def boundary_distance(self, pts):
        return self._curve_distance(as_points(pts, 2))

    def curve(self, theta):
        theta = np.asarray(theta, dtype=float)
        r, r1, r2 = self.profile(theta)
        c, s = np.cos(theta), np.sin(theta)
        u = np.stack([c, s], axis=-1)
        du = np.stack([-s, c], axis=-1)
        p = r[..., None] * u
        d1 = r1[..., None] * u + r[..., None] * du
        d2 = (r2 - r)[..., None] * u + 2.0 * r1[..., None] * du
        return p, d1, d2


# --------------------------------------------------------------------------
# domains
# --------------------------------------------------------------------------


class Domain:
    """Open set with distance-to-complement ``rho``."""

    dim: int = 2
    bounded: bool = False

    def rho(self, pts) -> np.ndarray:
        raise NotImplementedError

    def boundary_distance(self, pts) -> np.ndarray:
        """Distance to the boundary, also meaningful inside the complement."""
        raise NotImplementedError

    def contains(self, pts) -> np.ndarray:
        return self.rho(pts) > 0

    def extent(self) -> float:
        """Radius of a ball about the origin containing the boundary."""
        raise NotImplementedError


@dataclass(frozen=True)
class ExteriorDomain(Domain):
    """Complement of the closure of a bounded obstacle."""

    obstacle: Obstacle = field(default_factory=Disk)

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.obstacle.dim

    def rho(self, pts):
        x = as_points(pts, self.dim)
        d = self.obstacle.boundary_distance(x)
        return np.where(self.obstacle.inside(x, closed=True), 0.0, d)

    def boundary_distance(self, pts):
        return self.obstacle.boundary_distance(as_points(pts, self.dim))

    def extent(self) -> float:
        c = getattr(self.obstacle, "center", (0.0,))
        return 0.5 * self.obstacle.diameter + float(np.linalg.norm(c))

    def trace(self, m: int) -> BoundaryTrace:
        return self.obstacle.trace(m)


@dataclass(frozen=True)
class InteriorDomain(Domain):
    """Interior of an obstacle shape, used for bounded-domain checks."""

    shape: Obstacle = field(default_factory=Disk)
    bounded: bool = True

    @property
    def dim(self) -> int:  # type: ignore[override]
        return self.shape.dim

    def rho(self, pts):
        x = as_points(pts, self.dim)
        d = self.shape.boundary_distance(x)
        return np.where(self.shape.inside(x, closed=False), d, 0.0)

    def boundary_distance(self, pts):
        return self.shape.boundary_distance(as_points(pts, self.dim))

    def extent(self) -> float:
        return self.shape.diameter

    def trace(self, m: int) -> BoundaryTrace:
        return self.shape.trace(m)


@dataclass(frozen=True)
class HalfPlane(Domain):
    """Upper half-plane {x2 > 0}; the exact image formula applies."""

    def rho(self, pts):
        x = as_points(pts, 2)
        return np.maximum(x[..., 1], 0.0)

    def boundary_distance(self, pts):
        return np.abs(as_points(pts, 2)[..., 1])

    def extent(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Square(Domain):
    """Open axis-aligned square [origin, origin + side]^2."""

    side: float = 1.0
    origin: tuple = (0.0, 0.0)
    bounded: bool = True

    def _d(self, pts):
        x = as_points(pts, 2) - np.asarray(self.origin, dtype=float)
        return np.minimum(np.minimum(x[..., 0], self.side - x[..., 0]),
                          np.minimum(x[..., 1], self.side - x[..., 1]))

    def rho(self, pts):
        return np.maximum(self._d(pts), 0.0)

    def boundary_distance(self, pts):
        # exact inside; outside only the sign matters for our uses
        return np.abs(self._d(pts))

    def extent(self) -> float:
        return math.hypot(*(np.abs(np.asarray(self.origin)) + self.side))


# --------------------------------------------------------------------------
# functional interface
# --------------------------------------------------------------------------


def distance_to_obstacle(domain: Domain, x) -> np.ndarray | float:
    """rho(x) = dist(x, complement of the domain); zero on the obstacle closure."""
    r = domain.rho(x)
    return float(r) if np.ndim(r) == 0 else r


def contains(domain: Domain, x) -> np.ndarray | bool:
    c = domain.contains(x)
    return bool(c) if np.ndim(c) == 0 else c


def boundary_trace(domain: Domain, m: int) -> BoundaryTrace:
    """``m`` trapezoid nodes on the boundary, uniform in the curve parameter."""
    if not hasattr(domain, "trace"):
        raise GeometryError(f"{type(domain).__name__} has no closed boundary curve")
    return domain.trace(m)


def point_at_distance(domain: Domain, target: float, angle: float) -> np.ndarray:
    """Point on the ray from the origin at ``angle`` whose rho equals ``target``.

    For the half-plane the point is ``(angle, target)``: the horizontal
    coordinate is taken from ``angle`` since rays do not parametrize it.
    """
    if target <= 0:
        raise GeometryError("target distance must be positive")
    if isinstance(domain, HalfPlane):
        return np.array([float(angle), float(target)])
    if domain.bounded:
        raise GeometryError("rays from the origin are meant for exterior domains")
    u = np.array([math.cos(angle), math.sin(angle)] + [0.0] * (domain.dim - 2))
    lo, hi = 0.0, domain.extent() + target + 1.0
    while domain.rho(hi * u) < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if domain.rho(mid * u) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14 * hi:
            break
    return 0.5 * (lo + hi) * u


def parse_domain(text: str) -> Domain:
    """Parse a compact domain description.

    ``disk:R``, ``ball:R`` (3D), ``ellipse:a,b``, ``star:r0,a1,b1,a2,b2,...``,
    ``halfplane``, ``square[:side]`` and ``idisk:R`` / ``iellipse:a,b`` for the
    interior (bounded) versions.
    """
    name, _, rest = text.strip().partition(":")
    vals = [float(v) for v in rest.split(",") if v.strip()] if rest else []
    name = name.lower()
    try:
        if name == "disk":
            return ExteriorDomain(Disk(vals[0] if vals else 1.0))
        if name == "ball":
            return ExteriorDomain(Disk(vals[0] if vals else 1.0, (0.0, 0.0, 0.0)))
        if name == "ellipse":
            return ExteriorDomain(Ellipse(*vals) if vals else Ellipse())
        if name == "star":
            return ExteriorDomain(_star(vals))
        if name == "halfplane":
            return HalfPlane()
        if name == "square":
            return Square(vals[0] if vals else 1.0)
        if name == "idisk":
            return InteriorDomain(Disk(vals[0] if vals else 1.0))
        if name == "iellipse":
            return InteriorDomain(Ellipse(*vals) if vals else Ellipse())
    except (IndexError, TypeError) as exc:
        raise GeometryError(f"bad domain description {text!r}") from exc
    raise GeometryError(f"unknown domain kind {name!r}")


def _star(vals):
    if not vals:
        raise GeometryError("star needs at least r0")
    rest = vals[1:]
    if len(rest) % 2:
        raise GeometryError("star coefficients come in (cos, sin) pairs")
    return StarShaped(vals[0], tuple(rest[0::2]), tuple(rest[1::2]))
