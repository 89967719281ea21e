"""Harmonic-analysis numerics: weighted Schur tests, Hardy ratios,
Littlewood-Paley square functions, the semigroup difference kernel and the
f_R family separating the two fractional Laplacians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import comb, gamma as gamma_fn

from .geometry import Domain, ExteriorDomain, GeometryError, point_at_distance
from .spectral import (DiscreteOperator, PolarDiskOperator, build_operator, fourier_grid, fourier_multiplier,
                       fourier_wavenumbers, lattice_free_kernel)


class WindowError(ValueError):
    """Exponents outside the range where the estimate is claimed."""


class CoverageError(ValueError):
    """The dyadic range misses part of the spectrum of f."""


class ResolutionError(ValueError):
    pass


def conjugate(p: float) -> float:
    return p / (p - 1.0)


# --------------------------------------------------------------------------
# weighted Schur test
# --------------------------------------------------------------------------

HARDY_REGIONS = ("Ia", "Ib", "Ic", "Id", "IIa", "IIb", "IIc", "IId", "Ia_ball")
LP_REGIONS = ("whole",)


def exponent_window(kernel: str, region: str, p: float, s: float, n: int = 2) -> tuple[float, float] | None:
    """Open interval of admissible weight exponents, or None when no weight is used."""
    q = conjugate(p)
    if kernel == "lp_difference":
        return 0.0, min(q, p * s)
    if region in ("Ia", "Ib", "Ia_ball"):
        return None
    if region in ("Ic", "Id", "IId"):
        return p * (s - 1.0), q * (2.0 - s)
    if region in ("IIa", "IIb"):
        return p * s, min(q * (n - s), p * n)
    if region == "IIc":
        return p * s, q * (n - s)
    raise ValueError(f"unknown region {region!r}")


def mid_window(kernel: str, region: str, p: float, s: float, n: int = 2) -> float:
    win = exponent_window(kernel, region, p, s, n)
    if win is None:
        return 0.0
    lo, hi = win
    if not lo < hi:
        raise WindowError(f"empty exponent window for {kernel}/{region} at p={p}, s={s}")
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SchurKernelSpec:
    """Kernel, region and weight exponents for one weighted Schur test.

    For region IIc the weight is rho(x)^alpha2 / |y|^alpha; when ``alpha2`` is
    omitted it is placed mid-way in its own admissible interval.
    """

    kernel: str
    region: str
    p: float
    s: float
    alpha: float = 0.0
    alpha2: float | None = None
    n: int = 2

    def __post_init__(self):
        if self.kernel == "hardy_domain":
            if self.region not in HARDY_REGIONS:
                raise ValueError(f"unknown region {self.region!r}")
        elif self.kernel == "lp_difference":
            if self.region not in LP_REGIONS:
                raise ValueError("the difference kernel is tested on the whole product space")
        else:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.p > 1 or not 0 < self.s < self.n:
            raise WindowError("need p > 1 and 0 < s < n")
        win = exponent_window(self.kernel, self.region, self.p, self.s, self.n)
        if win is not None and not win[0] < self.alpha < win[1]:
            raise WindowError(f"alpha={self.alpha} outside ({win[0]:g}, {win[1]:g})")
        if self.region == "IIc":
            a2 = self.weight_alpha2
            if not (self.alpha - self.p < a2 < conjugate(self.p) * (2 - self.s)):
                raise WindowError("no admissible split of alpha for region IIc")

    @classmethod
    def mid(cls, kernel: str, region: str, p: float, s: float, n: int = 2) -> "SchurKernelSpec":
        return cls(kernel, region, p, s, mid_window(kernel, region, p, s, n), None, n)

    @property
    def weight_alpha2(self) -> float:
        if self.alpha2 is not None:
            return self.alpha2
        return 0.5 * (self.alpha - self.p + conjugate(self.p) * (2 - self.s))

    # kernel and log-weight as functions of the geometry of the pair
    def evaluate(self, rx, ry, r, nx, ny, bx):
        """(K, log w) on arrays; rx, ry distances to the obstacle, r = |x - y|,
        nx, ny = |x|, |y| and bx the boundary distance of x."""
        s, n, a = self.s, self.n, self.alpha
        if self.kernel == "lp_difference":
            k = np.where(ry > 0, ry**s * (rx * rx + ry * ry + r * r) ** (-(n + s) / 2), 0.0)
            with np.errstate(divide="ignore"):
                logw = a * (np.log(np.where(rx > 0, rx, bx)) - np.log(ry))
            return k, logw
        with np.errstate(divide="ignore", invalid="ignore"):
            inside = (rx > 0) & (ry > 0)
            reg = self.region
            near = r <= 1
            if reg == "Ia":
                m = near & (r <= np.minimum(rx, ry))
                k = rx**-s * r ** (s - n)
            elif reg == "Ia_ball":
                m = r <= rx
                k = rx**-s * r ** (s - n)
            elif reg == "Ib":
                m = near & (ry <= r) & (r <= rx)
                k = ry * rx**-s * r ** (s - n - 1)
            elif reg == "Ic":
                m = near & (rx <= r) & (r <= ry)
                k = rx ** (1 - s) * r ** (s - n - 1)
            elif reg == "Id":
                m = near & (r >= np.maximum(rx, ry))
                k = rx ** (1 - s) * ry * r ** (s - n - 2)
            elif reg == "IIa":
                m = ~near & (np.minimum(rx, ry) >= 1)
                k = rx**-s * r ** (s - n)
            elif reg == "IIb":
                m = ~near & (ry <= 1) & (rx >= 1)
                k = ry * rx**-s * r ** (s - n)
            elif reg == "IIc":
                m = ~near & (rx <= 1) & (ry >= 1)
                k = rx ** (1 - s) * r ** (s - n)
            else:
                m = ~near & (rx <= 1) & (ry <= 1)
                k = rx ** (1 - s) * ry * r ** (s - n)
            k = np.where(m & inside, k, 0.0)
            if reg in ("Ia", "Ib", "Ia_ball"):
                logw = np.zeros_like(k)
            elif reg in ("Ic", "Id"):
                logw = a * (np.log(rx) - np.log(r))
            elif reg in ("IIa", "IIb"):
                logw = a * (np.log(nx) - np.log(ny))
            elif reg == "IIc":
                logw = self.weight_alpha2 * np.log(rx) - a * np.log(ny)
            else:
                logw = a * (np.log(rx) - np.log(ny))
        return k, logw

    def ball_constant(self) -> float:
        """Closed form of the Ia_ball integral, |S^{n-1}| / s."""
        return 2.0 * math.pi ** (self.n / 2) / gamma_fn(self.n / 2) / self.s


@dataclass
class SchurResult:
    sup_first: float
    sup_second: float
    first: np.ndarray
    second: np.ndarray
    points: np.ndarray
    r_int: float

    @property
    def argsup_first(self) -> list:
        return self.points[int(np.argmax(self.first))].tolist()

    @property
    def argsup_second(self) -> list:
        return self.points[int(np.argmax(self.second))].tolist()


def default_sample_points(domain: Domain, count: int = 20, rho_range=(0.01, 5.0)) -> np.ndarray:
    """Points at log-spaced distances from the obstacle along golden-angle rays."""
    from .geometry import point_at_distance

    rhos = np.geomspace(*rho_range, count)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    return np.array([point_at_distance(domain, r, k * golden) for k, r in enumerate(rhos)])


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _radial_nodes(breaks: np.ndarray):
    """Gauss-Legendre nodes in log r on consecutive panels; weights include dr = r du."""
    lb = np.log(breaks)
    a, b = lb[:-1, None], lb[1:, None]
    u = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X
    w = 0.5 * (b - a) * _GL_W
    r = np.exp(u)
    return r.ravel(), (w * r).ravel()


def _power_fit(r, g):
    keep = g > 0
    if keep.sum() < 3:
        return None
    beta, logc = np.polyfit(np.log(r[keep]), np.log(g[keep]), 1)
    return beta, math.exp(logc)


def _polar_integral(func: Callable, center: np.ndarray, r_int: float, extra_breaks: Sequence[float],
                    r_min: float, n_theta: int) -> float:
    """Integral of func over the plane within radius r_int of center, with power-law
    corrections for r < r_min and r > r_int fitted on the first and last octaves."""
    k0 = math.floor(math.log2(r_min))
    k1 = math.floor(math.log2(r_int))
    breaks = {2.0**k for k in range(k0, k1 + 1)} | {r_int}
    breaks |= {b for b in extra_breaks if 2.0**k0 < b < r_int}
    breaks = np.array(sorted(breaks))
    r, wr = _radial_nodes(breaks)
    th = 2.0 * np.pi * (np.arange(n_theta) + 0.5) / n_theta
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    g = np.empty(r.size)
    chunk = max(1, 2**18 // n_theta)
    for i in range(0, r.size, chunk):
        rr = r[i:i + chunk]
        pts = center + rr[:, None, None] * e[None]
        vals = func(pts, rr[:, None])
        g[i:i + chunk] = vals.mean(axis=1) * 2.0 * np.pi * rr
    total = float(np.sum(g * wr))
    lo, hi = breaks[0], breaks[-1]
    head = _power_fit(r[r < 2 * lo], g[r < 2 * lo])
    if head is not None:
        beta, c = head
        if beta <= -1:
            return math.inf
        total += c * lo ** (beta + 1) / (beta + 1)
    sel = (r > hi / 4) & (g > 0)
    if sel.sum() >= 4:
        # g ~ c r^beta (1 + d/r): leading decay plus the first correction in 1/r
        A = np.stack([np.ones(sel.sum()), np.log(r[sel]), 1.0 / r[sel]], axis=1)
        (logc, beta, d), *_ = np.linalg.lstsq(A, np.log(g[sel]), rcond=None)
        if beta >= -1:
            return math.inf
        c = math.exp(logc)
        total += c * hi ** (beta + 1) / (-beta - 1) + c * d * hi**beta / (-beta)
    return total


def schur_integrals(spec: SchurKernelSpec, domain: Domain, points=None, r_int: float = 64.0,
                    n_theta: int = 1024, pmap=map) -> SchurResult:
    """Both Schur suprema over the sample points.

    first(x) = integral over y of w^{1/p} K, second(y) = integral over x of
    w^{-1/p'} K.  The free variable ranges over the domain, except for the
    difference kernel whose x-variable ranges over the whole plane.
    """
    if r_int < 8:
        raise ValueError("R_int must be at least 8")
    if domain.dim != 2 or not isinstance(domain, ExteriorDomain):
        raise GeometryError("Schur integrals are implemented for planar exterior domains")
    pts = default_sample_points(domain) if points is None else np.asarray(points, dtype=float)
    if np.any(domain.rho(pts) <= 0):
        raise GeometryError("sample points must lie in the domain")
    centroid = np.asarray(domain.obstacle.center, dtype=float) if hasattr(domain.obstacle, "center") \
        else np.zeros(2)
    p, q = spec.p, conjugate(spec.p)
    diam = domain.obstacle.diameter

    def integrals(z):
        rz = float(domain.rho(z))
        nz = float(np.linalg.norm(z - centroid))
        breaks = [rz, 1.0, rz + diam, 2.0 * rz, 0.5 * rz, nz]
        r_min = 1e-4 * min(rz, 1.0)

        def first(P, r):
            rp = domain.rho(P)
            k, lw = spec.evaluate(rz, rp, r, nz, np.linalg.norm(P - centroid, axis=-1), rz)
            with np.errstate(invalid="ignore", over="ignore"):
                return np.where(k > 0, k * np.exp(lw / p), 0.0)

        def second(P, r):
            rp = domain.rho(P)
            bp = domain.boundary_distance(P) if spec.kernel == "lp_difference" else rp
            if spec.kernel == "hardy_domain":
                rp = np.where(rp > 0, rp, 0.0)
            k, lw = spec.evaluate(rp, rz, r, np.linalg.norm(P - centroid, axis=-1), nz, bp)
            with np.errstate(invalid="ignore", over="ignore"):
                return np.where(k > 0, k * np.exp(-lw / q), 0.0)

        return (_polar_integral(first, z, r_int, breaks, r_min, n_theta),
                _polar_integral(second, z, r_int, breaks, r_min, n_theta))

    vals = np.array(list(pmap(integrals, list(pts))))
    return SchurResult(float(vals[:, 0].max()), float(vals[:, 1].max()), vals[:, 0], vals[:, 1],
                       pts, r_int)


# --------------------------------------------------------------------------
# Hardy inequalities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """Tensor-product bump prod (1 - u_i^2)^3, u = (x - center) / half_width."""

    center: tuple
    half_width: float

    def __call__(self, pts) -> np.ndarray:
        u = (np.asarray(pts, dtype=float) - np.asarray(self.center)) / self.half_width
        return np.prod(np.where(np.abs(u) < 1, (1 - u * u) ** 3, 0.0), axis=-1)

    def scaled(self, lam: float) -> "Bump":
        """x -> f(lam x)."""
        return Bump(tuple(np.asarray(self.center) / lam), self.half_width / lam)

    def support_clearance(self, domain: Domain) -> float:
        """Smallest distance to the obstacle over the support square."""
        c = np.asarray(self.center, dtype=float)
        g = np.linspace(-1, 1, 65) * self.half_width
        sq = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2) + c
        return float(domain.rho(sq).min())


def bump_family(domain: Domain, rhos=None, angle: float = 0.3) -> list[Bump]:
    """Bumps centred at the given distances from the obstacle, sized to stay inside."""
    from .geometry import point_at_distance

    rhos = np.geomspace(0.1, 5.0, 10) if rhos is None else rhos
    out = []
    for k, r in enumerate(rhos):
        c = point_at_distance(domain, float(r), angle + 0.7 * k)
        a = min(0.9 * float(r) / math.sqrt(2.0), 1.0)
        b = Bump(tuple(float(v) for v in c), a)
        while b.support_clearance(domain) <= 0:
            a *= 0.8
            b = Bump(b.center, a)
        out.append(b)
    return out


def _lp(values, weight, p):
    return float(np.sum(np.abs(values) ** p * weight) ** (1.0 / p))


def hardy_ratio_whole(f: Bump, s: float, p: float, domain: Domain | None = None,
                      box: float | None = None, M: int = 256) -> float:
    """||f / rho^s||_p / ||(-Laplacian)^{s/2} f||_p on the whole plane.

    Without a domain the weight is |x|^s (the pure Hardy inequality).  The
    denominator is computed on a periodic box of side ``box`` centred on f.
    """
    n = len(f.center)
    if not 0 < s < n / p:
        raise WindowError("need 0 < s < n/p")
    if domain is not None and f.support_clearance(domain) <= 0:
        raise GeometryError("f must be supported in the domain")
    L = 32.0 * f.half_width if box is None else box
    if L <= 4 * f.half_width:
        raise GeometryError("box too small for the support of f")
    pts = fourier_grid(L, M, n) + np.asarray(f.center)
    vals = f(pts)
    h = L / M
    rho = np.linalg.norm(pts, axis=-1) if domain is None else domain.rho(pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = _lp(np.where(vals != 0, vals / rho**s, 0.0), h**n, p)
    xi = fourier_wavenumbers(L, M, n)
    den = _lp(fourier_multiplier(vals, xi**s), h**n, p)
    return num / den


def hardy_ratio_domain(f, s: float, p: float, op) -> float:
    """||f / rho^s||_p / ||(-Laplacian_Omega)^{s/2} f||_p on a discrete operator."""
    n = 2 if isinstance(op, PolarDiskOperator) else op.dim
    if not 0 < s < min(n / p, 1.0 + 1.0 / p):
        raise WindowError("need 0 < s < min(n/p, 1 + 1/p)")
    vals = op.evaluate(f) if callable(f) else np.asarray(f, dtype=float)
    if isinstance(op, PolarDiskOperator):
        rho, rad = op.rho, np.broadcast_to(op.r[:, None], vals.shape)
        r_edge = op.r_trunc
    else:
        rho, rad = op.domain.rho(op.sites), np.linalg.norm(op.sites, axis=-1)
        r_edge = op.r_trunc if op.r_trunc is not None else math.inf
    if np.any((vals != 0) & (rad > 0.5 * r_edge)):
        raise GeometryError("f must be supported well inside the truncation radius")
    with np.errstate(divide="ignore", invalid="ignore"):
        num = op.norm(np.where(vals != 0, vals / rho**s, 0.0), p)
    den = op.norm(op.frac_power_apply(0.5 * s, vals), p)
    return num / den


# --------------------------------------------------------------------------
# Littlewood-Paley
# --------------------------------------------------------------------------


def lp_multiplier(xi, N: float, k: int) -> np.ndarray:
    """(exp(-|xi|^2/N^2) - exp(-4|xi|^2/N^2))^k."""
    z = (np.asarray(xi, dtype=float) / N) ** 2
    return (np.exp(-z) - np.exp(-4.0 * z)) ** k


def multiplier_sum(xi, s: float, k: int, Ns) -> np.ndarray:
    """sum_N N^{2s} m_N(xi)^2 / |xi|^{2s}."""
    xi = np.asarray(xi, dtype=float)
    return sum(N ** (2 * s) * lp_multiplier(xi, N, k) ** 2 for N in Ns) / xi ** (2 * s)


def _all_dyadic(lo: float = -60, hi: float = 60):
    return [2.0**j for j in range(int(lo), int(hi) + 1)]


def multiplier_band(s: float, k: int, octaves: int = 6, per_octave: int = 64) -> tuple[float, float]:
    """Extremes of the full dyadic multiplier sum over |xi| in [1, 2^octaves]."""
    if not 2 * k > s:
        raise ValueError("need 2k > s")
    xi = 2.0 ** np.linspace(0, octaves, octaves * per_octave + 1)
    vals = multiplier_sum(xi, s, k, _all_dyadic())
    return float(vals.min()), float(vals.max())


def dyadic_range(lo: float, hi: float) -> list[float]:
    return [2.0**j for j in range(int(math.floor(math.log2(lo))), int(math.ceil(math.log2(hi))) + 1)]


def lp_square_function(f: np.ndarray, s: float, p: float, k: int, Ns, L: float,
                       coverage: float = 1e-3) -> tuple[float, float]:
    """(||(-Laplacian)^{s/2} f||_p, ||(sum_N N^{2s} |P_N^k f|^2)^{1/2}||_p) on a periodic box."""
    if not 2 * k > s:
        raise ValueError("need 2k > s")
    f = np.asarray(f, dtype=float)
    M, n = f.shape[0], f.ndim
    h = L / M
    xi = fourier_wavenumbers(L, M, n)
    fh = np.fft.fftn(f)
    occ = (np.abs(fh) > 1e-12 * np.abs(fh).max()) & (xi > 0)
    if occ.any():
        part = multiplier_sum(xi[occ], s, k, Ns)
        full = multiplier_sum(xi[occ], s, k, _all_dyadic())
        if np.min(part / full) < 1.0 - coverage:
            raise CoverageError("the N range does not cover the spectrum of f")
    lhs = _lp(np.fft.ifftn(fh * xi**s).real, h**n, p)
    sq = np.zeros_like(f)
    for N in Ns:
        sq += N ** (2 * s) * np.fft.ifftn(fh * lp_multiplier(xi, N, k)).real ** 2
    return lhs, _lp(np.sqrt(sq), h**n, p)


def parseval_gap(f: np.ndarray, s: float, L: float) -> float:
    """Relative gap between ||(-Laplacian)^{s/2} f||_2^2 in space and in frequency."""
    f = np.asarray(f, dtype=float)
    M, n = f.shape[0], f.ndim
    h = L / M
    xi = fourier_wavenumbers(L, M, n)
    fh = np.fft.fftn(f)
    space = float(np.sum(np.fft.ifftn(fh * xi**s).real ** 2) * h**n)
    freq = float(np.sum(xi ** (2 * s) * np.abs(fh) ** 2) * h**n / M**n)
    return abs(space - freq) / freq


def band_limited_family(count: int, L: float, M: int, band: tuple[float, float],
                        rng: np.random.Generator) -> list[np.ndarray]:
    """Real random fields with Fourier support in the annulus band[0] <= |xi| <= band[1]."""
    xi = fourier_wavenumbers(L, M, 2)
    mask = (xi >= band[0]) & (xi <= band[1])
    out = []
    for _ in range(count):
        c = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) * mask
        f = np.fft.ifftn(c).real
        out.append(f / np.abs(f).max())
    return out


# --------------------------------------------------------------------------
# difference kernel K_N^k
# --------------------------------------------------------------------------


def truncation_margin(N: float, k: int) -> float:
    """Distance from a pair to the truncation circle that keeps reflections below 1e-8."""
    return math.sqrt(72.0 * 4 * k) / N


def difference_kernel_table(op: DiscreteOperator, N: float, ks: Sequence[int], pairs) -> dict:
    """K_N^k at the given pairs for several k, sharing one semigroup sweep per y.

    Returns {k: (values, brackets)} where brackets[:, j] = (p - p_Omega)((k + 3j) / N^2).
    """
    ks = sorted(set(int(k) for k in ks))
    kmax = ks[-1]
    if ks[0] < 1:
        raise ValueError("k must be a positive integer")
    if op.h > 1.0 / (4.0 * N):
        raise ResolutionError("lattice spacing must resolve the scale 1/N")
    pts = np.array([np.concatenate([np.asarray(x, float), np.asarray(y, float)]) for x, y in pairs])
    reach = np.linalg.norm(pts.reshape(len(pts), 2, -1), axis=-1).max()
    if op.r_trunc is not None and op.r_trunc - reach < truncation_margin(N, kmax):
        raise GeometryError("truncation radius too close to the pairs for this N")
    m_max = 4 * kmax
    times = np.arange(1, m_max + 1) / N**2
    free = np.empty((len(pairs), m_max))
    dom = np.zeros((len(pairs), m_max))
    by_y: dict[int, list[int]] = {}
    for idx, (x, y) in enumerate(pairs):
        by_y.setdefault(op.cell_of(y), []).append(idx)
    for jy, idxs in by_y.items():
        cols = op.kernel_columns(jy, times[0], times[-1], m_max)
        for idx in idxs:
            lx = np.rint(np.asarray(pairs[idx][0], dtype=float) / op.h).astype(int)
            ix = op._lookup.get(tuple(lx))
            if ix is not None:
                dom[idx] = cols[:, ix]
            free[idx] = lattice_free_kernel(times[:, None], (lx - op.lattice[jy])[None, :], op.h)
    out = {}
    for k in ks:
        sel = k + 3 * np.arange(k + 1) - 1
        coef = np.array([comb(k, j, exact=True) * (-1) ** j for j in range(k + 1)], dtype=float)
        br = free[:, sel] - dom[:, sel]
        out[k] = (br @ coef, br)
    return out


def lp_difference_kernel(op: DiscreteOperator, N: float, k: int, pairs, brackets: bool = False):
    """K_N^k(x, y) = [(P_N)^k - (P_N^Omega)^k](x, y) at the given lattice pairs.

    (P_N)^k expands binomially into semigroups at times (k + 3j) / N^2, j = 0..k.
    The whole-space part uses the free lattice kernel so both parts share the
    same discretization.  Pairs are (x, y) with y in the domain; x may lie in
    the obstacle, where the domain kernel vanishes.  With ``brackets`` the
    per-time differences p - p_Omega are returned as well, shape (pairs, k+1).
    """
    vals, br = difference_kernel_table(op, N, [k], pairs)[k]
    return (vals, br) if brackets else vals


def fit_difference_constants(values, scale, N: float, n: int = 2, safety: float = 2.0,
                             bins: int = 6) -> tuple[float, float]:
    """(C, c) with log|K| + c N^2 scale <= log(C N^n) over the samples.

    The decay rate is the least-squares slope through the per-bin maxima of
    log|K| against N^2 scale (near-cancelling samples would otherwise drag the
    fit), divided by ``safety`` so the bound carries over to unseen pairs.
    C is then the smallest constant admitted by the samples.  Zero values
    are ignored.
    """
    v = np.abs(np.asarray(values, dtype=float))
    keep = v > 0
    if keep.sum() < 2:
        raise ValueError("need at least two nonzero samples")
    lv, q = np.log(v[keep]), N * N * np.asarray(scale, dtype=float)[keep]
    edges = np.quantile(q, np.linspace(0, 1, min(bins, len(q)) + 1))
    idx = np.clip(np.searchsorted(edges, q, side="right") - 1, 0, len(edges) - 2)
    top = [(q[idx == b][np.argmax(lv[idx == b])], lv[idx == b].max()) for b in np.unique(idx)]
    qb, lb = np.array(top).T
    slope = np.polyfit(qb, lb, 1)[0] if len(qb) > 1 and np.ptp(qb) > 0 else 0.0
    c = max(-slope, 0.0) / safety
    logc = float(np.max(lv + c * q)) - n * math.log(N)
    return math.exp(logc), float(c)


def difference_bound_holds(values, scale, N: float, C: float, c: float, n: int = 2,
                           slack: float = 0.0) -> np.ndarray:
    """Per-sample check of |K| <= C N^n exp(-c N^2 scale) (log form, with additive slack)."""
    v = np.abs(np.asarray(values, dtype=float))
    with np.errstate(divide="ignore"):
        lhs = np.log(v) + c * N * N * np.asarray(scale)
    return lhs <= math.log(C) + n * math.log(N) + slack


def difference_scale(rx, ry, r):
    return np.asarray(rx) ** 2 + np.asarray(ry) ** 2 + np.asarray(r) ** 2


def difference_sample_pairs(domain: Domain, N: float, h: float, count: int, seed: int,
                            reach: float = 8.0) -> list:
    """Lattice pairs near the boundary at separations up to ``reach`` / N.

    Each y is shared by four x's, which keeps the number of semigroup sweeps
    small.  The x's may fall inside the obstacle.
    """
    rng = np.random.default_rng(seed)
    n_y = max(1, count // 4)
    out = []
    for _ in range(n_y):
        a = rng.uniform(0, 2 * np.pi)
        y = np.rint(point_at_distance(domain, rng.uniform(0.05, 0.5 * reach) / N, a) / h) * h
        for _ in range(count // n_y):
            b = rng.uniform(0, 2 * np.pi)
            x = y + rng.uniform(0, reach) / N * np.array([math.cos(b), math.sin(b)])
            out.append((np.rint(x / h) * h, y))
    return out


@dataclass
class DifferenceFit:
    N: float
    k: int
    C: float
    c: float
    held_out_ok: int
    held_out: int
    min_bracket: float
    pairs: list
    scale: np.ndarray
    values: np.ndarray

    @property
    def passed(self) -> bool:
        return self.held_out_ok == self.held_out


def difference_experiment(domain: Domain, N: float, ks: Sequence[int], count: int = 24, seed: int = 0,
                          margin: float = 2.0) -> list[DifferenceFit]:
    """Fit (C, c) for K_N^k on even-indexed sample pairs and test the odd ones.

    The held-out pairs must satisfy the bound with C enlarged by ``margin``.
    """
    h = 1.0 / (4 * N)
    pairs = difference_sample_pairs(domain, N, h, count, seed)
    reach = max(max(np.linalg.norm(x), np.linalg.norm(y)) for x, y in pairs)
    op = build_operator(domain, h, reach + truncation_margin(N, max(ks)) + h)
    tab = difference_kernel_table(op, N, ks, pairs)
    sc = np.array([difference_scale(domain.rho(x), domain.rho(y), np.linalg.norm(x - y)) for x, y in pairs])
    out = []
    for k in sorted(set(ks)):
        vals, br = tab[k]
        C, c = fit_difference_constants(vals[0::2], sc[0::2], N)
        ok = difference_bound_holds(vals[1::2], sc[1::2], N, margin * C, c)
        out.append(DifferenceFit(N, k, C, c, int(ok.sum()), len(ok), float(br.min()), pairs, sc, vals))
    return out


# --------------------------------------------------------------------------
# the f_R family
# --------------------------------------------------------------------------


def smoothstep5(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10 - 15 * u + 6 * u * u)


def cutoff_phi(r, R: float) -> np.ndarray:
    """log(R/|x|)/log R up to R/2, quintic fade in log|x| to zero at R."""
    r = np.asarray(r, dtype=float)
    u = np.log(np.maximum(r, 1e-300) / (R / 2)) / math.log(2.0)
    base = np.log(R / np.maximum(r, 1e-300)) / math.log(R)
    return np.where(r >= R, 0.0, base * (1.0 - smoothstep5(u)))


def f_R(r, R: float) -> np.ndarray:
    """Radial profile of f_R = phi_R log|x|, zero inside the unit disk."""
    r = np.asarray(r, dtype=float)
    return np.where(r > 1, cutoff_phi(r, R) * np.log(np.maximum(r, 1.0)), 0.0)


@dataclass
class CounterexampleResult:
    R: float
    domain_norm: float
    whole_norm: float


def counterexample_fR(R: float, s: float, p: float = 2.0, dlog: float = 0.004, h: float = 1.0 / 8,
                      trunc_factor: float = 2.0, box_factor: float = 4.0) -> CounterexampleResult:
    """Both fractional norms of f_R outside the unit disk.

    The domain norm uses the radial mode of the log-polar Dirichlet operator on
    1 < |x| < trunc_factor * R; the whole-plane norm uses an FFT box of side
    box_factor * R with spacing h.
    """
    if not 2.0 / p < s < 1.0 + 1.0 / p:
        raise WindowError("need 2/p < s < 1 + 1/p")
    if R <= 2:
        raise ValueError("need R > 2")
    if h > 1.0 / 8 or dlog > 1.0 / 8:
        raise ResolutionError("resolution coarser than 1/8 of the logarithmic scale")
    if trunc_factor < 2 or box_factor < 4:
        raise ValueError("truncation must reach 2R and the box 4R")
    op = PolarDiskOperator.for_resolution(1.0, trunc_factor * R, dlog, 2)
    prof = f_R(op.r, R)
    dom = op.radial_norm(op.radial_frac_power(0.5 * s, prof), p)
    L = box_factor * R
    M = 1 << int(math.ceil(math.log2(L / h)))
    pts = fourier_grid(L, M, 2)
    vals = f_R(np.linalg.norm(pts, axis=-1), R)
    xi = fourier_wavenumbers(L, M, 2)
    whole = _lp(fourier_multiplier(vals, xi**s), (L / M) ** 2, p)
    return CounterexampleResult(R, dom, whole)


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
