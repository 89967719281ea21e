"""Discrete Dirichlet Laplacians, heat semigroups and fractional powers.

``DiscreteOperator`` is the 5-point (7-point in 3D) negative Laplacian on the
lattice h*Z^n restricted to sites inside the domain (and inside the
truncation ball for exterior domains).  Sites are the lattice points
themselves, so a boundary lying on lattice lines (the square) is resolved
exactly.  Dense eigendecompositions are limited by ``cap``; semigroup
columns, resolvents and a few low eigenpairs use sparse direct methods and
work above the cap.

``PolarDiskOperator`` discretizes the exterior of an origin-centred disk in
(log r, theta): second-order differences in log r and an exact Fourier
treatment in theta.  Each angular mode is a symmetric tridiagonal problem,
which makes fractional powers cheap at resolutions the Cartesian operator
cannot reach.

``fourier_frac_laplacian`` is the whole-space (-Laplacian)^{s/2} on a
periodic box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import ive

from .geometry import Disk, Domain, ExteriorDomain, GeometryError, Square

DEFAULT_CAP = 20_000


class CapExceededError(RuntimeError):
    """A dense eigendecomposition was requested for too many cells."""


# --------------------------------------------------------------------------
# Cartesian lattice operator
# --------------------------------------------------------------------------


@dataclass
class DiscreteOperator:
    h: float
    dim: int
    sites: np.ndarray            # (N, dim) coordinates of active sites
    lattice: np.ndarray          # (N, dim) integer lattice coordinates
    matrix: sp.csr_matrix        # SPD negative Laplacian
    domain: Domain
    r_trunc: float | None = None
    outer: str = "dirichlet"
    cap: int = DEFAULT_CAP
    _lookup: dict = field(default_factory=dict, repr=False)
    _evals: np.ndarray | None = field(default=None, repr=False)
    _evecs: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def bounded(self) -> bool:
        return self.r_trunc is None

    # -- indexing -------------------------------------------------------

    def cell_of(self, point) -> int:
        """Index of the active site nearest to ``point``."""
        key = tuple(np.rint(np.asarray(point, dtype=float) / self.h).astype(int))
        if key not in self._lookup:
            raise GeometryError(f"no active cell at {point}")
        return self._lookup[key]

    def evaluate(self, func) -> np.ndarray:
        return np.asarray(func(self.sites), dtype=float)

    def norm(self, f, p: float = 2.0) -> float:
        a = np.abs(np.asarray(f))
        if math.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.cell_volume) ** (1.0 / p))

    def unit_vector(self, j: int) -> np.ndarray:
        e = np.zeros(self.n)
        e[j] = 1.0
        return e

    # -- spectra --------------------------------------------------------

    def eigendecompose(self):
        """Full dense eigendecomposition (ascending), cached."""
        if self._evals is None:
            if self.n > self.cap:
                raise CapExceededError(f"{self.n} cells exceed the dense cap {self.cap}")
            w, v = np.linalg.eigh(self.matrix.toarray())
            self._evals, self._evecs = w, v
        return self._evals, self._evecs

    @property
    def has_dense(self) -> bool:
        return self._evals is not None

    def eigenpairs(self, k: int):
        """Lowest ``k`` eigenpairs with unit l2 eigenvectors."""
        if self._evals is not None or (self.n <= self.cap and k > self.n // 4):
            w, v = self.eigendecompose()
            return w[:k], v[:, :k]
        w, v = spla.eigsh(self.matrix.tocsc(), k=k, sigma=0.0, which="LM")
        order = np.argsort(w)
        return w[order], v[:, order]

    def first_eigenpair(self):
        """(lambda_1, v_1) with v_1 > 0 normalized by sum v^2 h^n = 1."""
        w, v = self.eigenpairs(1)
        vec = v[:, 0] / math.sqrt(self.cell_volume)
        if vec.sum() < 0:
            vec = -vec
        return float(w[0]), vec

    # -- functional calculus ----------------------------------------------

    def semigroup_apply(self, t: float, f) -> np.ndarray:
        """exp(t Laplacian) f."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        f = np.asarray(f)
        if t == 0:
            return f.copy()
        if self._evals is not None:
            w, v = self._evals, self._evecs
            return v @ (np.exp(-w * t)[:, None] * (v.T @ f.reshape(self.n, -1))).reshape(f.shape)
        return spla.expm_multiply(-t * self.matrix, f)

    def frac_power_apply(self, sigma: float, f) -> np.ndarray:
        """(-Laplacian)^sigma f for sigma in [-2, 2]."""
        if not -2.0 <= sigma <= 2.0:
            raise ValueError("sigma must lie in [-2, 2]")
        f = np.asarray(f)
        if sigma == 0:
            return f.copy()
        if sigma == 1:
            return self.matrix @ f
        w, v = self.eigendecompose()
        coef = v.T @ f.reshape(self.n, -1)
        return (v @ (w[:, None] ** sigma * coef)).reshape(f.shape)

    def kernel_entry(self, t: float, i, j) -> np.ndarray | float:
        """p_Omega(t, x_i, x_j) in continuum normalization."""
        if t <= 0:
            raise ValueError("t must be positive")
        if self._evals is not None:
            w, v = self._evals, self._evecs
            vals = (v[np.atleast_1d(i)] * np.exp(-w * t)) @ v[np.atleast_1d(j)].T
            out = np.diagonal(vals) if np.ndim(i) else vals[0, 0]
            return out / self.cell_volume
        col = spla.expm_multiply(-t * self.matrix, self.unit_vector(int(j)))
        return col[i] / self.cell_volume

    def kernel_columns(self, j: int, start: float, stop: float, num: int) -> np.ndarray:
        """Columns p_Omega(t_k, ., x_j) at ``num`` equally spaced times, shape (num, N)."""
        e = self.unit_vector(j)
        if num == 1:
            return spla.expm_multiply(-start * self.matrix, e)[None, :] / self.cell_volume
        cols = spla.expm_multiply(-self.matrix, e, start=start, stop=stop, num=num, endpoint=True)
        return cols / self.cell_volume

    def green_column(self, j: int) -> np.ndarray:
        """Discrete Green function Gamma(., x_j) = (A^{-1})_{.j} / h^n."""
        return spla.spsolve(self.matrix.tocsc(), self.unit_vector(j)) / self.cell_volume

    def riesz_column(self, s: float, j: int) -> np.ndarray:
        """Kernel of (-Laplacian)^{-s/2} against x_j, via the dense spectrum."""
        return self.frac_power_apply(-0.5 * s, self.unit_vector(j)) / self.cell_volume


def _lattice_box(domain: Domain, h: float, r_trunc: float | None):
    dim = domain.dim
    if r_trunc is not None:
        k = int(math.ceil(r_trunc / h))
        axes = [np.arange(-k, k + 1)] * dim
    elif isinstance(domain, Square):
        lo = [int(math.floor(o / h)) for o in domain.origin]
        hi = [int(math.ceil((o + domain.side) / h)) for o in domain.origin]
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    else:
        k = int(math.ceil(domain.extent() / h)) + 1
        axes = [np.arange(-k, k + 1)] * dim
    return axes


def build_operator(domain: Domain, h: float, r_trunc: float | None = None,
                   cap: int = DEFAULT_CAP, outer: str = "dirichlet") -> DiscreteOperator:
    """Assemble the lattice Dirichlet Laplacian on Omega (intersected with B(0, r_trunc)).

    ``outer="neumann"`` replaces the Dirichlet condition on the truncation
    circle by a reflecting one, which keeps large-time mass and suits the
    (slowly decaying) planar Green function.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if outer not in ("dirichlet", "neumann"):
        raise ValueError("outer must be 'dirichlet' or 'neumann'")
    if domain.bounded:
        r_trunc = None
    else:
        if r_trunc is None:
            raise ValueError("exterior domains need a truncation radius")
        diam = 2.0 * domain.extent()
        if isinstance(domain, ExteriorDomain) and r_trunc <= 2.0 * diam:
            raise ValueError(f"r_trunc must exceed twice the obstacle diameter ({2 * diam})")
    dim = domain.dim
    axes = _lattice_box(domain, h, r_trunc)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    coords = mesh * h
    act = domain.rho(coords) > 0
    if r_trunc is not None:
        act &= np.linalg.norm(coords, axis=-1) < r_trunc
    lattice = mesh[act]
    if len(lattice) == 0:
        raise GeometryError("no active cells")
    sites = lattice * h
    shape = [len(a) for a in axes]
    offset = np.array([a[0] for a in axes])
    idx_grid = -np.ones(shape, dtype=np.int64)
    idx_grid[tuple((lattice - offset).T)] = np.arange(len(lattice))

    n = len(lattice)
    rows, cols = [], []
    diag = np.full(n, 2.0 * dim)
    for d in range(dim):
        for step in (-1, 1):
            nb = lattice.copy()
            nb[:, d] += step
            pos = nb - offset
            inside = np.all((pos >= 0) & (pos < np.array(shape)), axis=1)
            j = np.full(n, -1, dtype=np.int64)
            j[inside] = idx_grid[tuple(pos[inside].T)]
            ok = j >= 0
            rows.append(np.nonzero(ok)[0])
            cols.append(j[ok])
            if outer == "neumann":
                nb_xy = nb * h
                beyond = (~ok) & (np.linalg.norm(nb_xy, axis=-1) >= r_trunc) & (domain.rho(nb_xy) > 0)
                diag -= beyond
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    off = sp.csr_matrix((-np.ones(len(r)), (r, c)), shape=(n, n))
    mat = (off + sp.diags(diag)) / h**2
    lookup = {tuple(k): i for i, k in enumerate(map(tuple, lattice))}
    return DiscreteOperator(h, dim, sites, lattice, mat.tocsr(), domain, r_trunc, outer, cap, lookup)


def lattice_free_kernel(t: float, dx: np.ndarray, h: float) -> np.ndarray:
    """Heat kernel of the whole-lattice 5/7-point Laplacian, continuum normalized.

    ``dx`` holds integer lattice offsets with shape (..., dim).
    """
    dx = np.abs(np.asarray(dx))
    z = 2.0 * t / h**2
    return np.prod(ive(dx, z), axis=-1) / h ** dx.shape[-1]


# --------------------------------------------------------------------------
# polar operator for the exterior of a disk
# --------------------------------------------------------------------------


@dataclass
class PolarDiskOperator:
    """Dirichlet Laplacian on {a < |x| < r_trunc} in log-polar coordinates.

    Grid functions have shape (..., n_r, n_theta) with radii
    r_i = a exp(i * dlog), i = 1..n_r, and angles 2 pi j / n_theta.
    """

    a: float
    r_trunc: float
    n_r: int
    n_theta: int

    def __post_init__(self):
        if not (self.r_trunc > self.a > 0):
            raise ValueError("need 0 < a < r_trunc")
        if self.n_theta % 2:
            raise ValueError("n_theta must be even")
        self.dlog = math.log(self.r_trunc / self.a) / (self.n_r + 1)
        self.r = self.a * np.exp(self.dlog * np.arange(1, self.n_r + 1))
        self.theta = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def for_resolution(cls, a: float, r_trunc: float, dlog: float, n_theta: int):
        n_r = int(math.ceil(math.log(r_trunc / a) / dlog)) - 1
        return cls(a, r_trunc, n_r, n_theta)

    @property
    def points(self) -> np.ndarray:
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        return np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)

    @property
    def rho(self) -> np.ndarray:
        return np.broadcast_to((self.r - self.a)[:, None], (self.n_r, self.n_theta))

    def evaluate(self, func) -> np.ndarray:
        return np.asarray(func(self.points), dtype=float)

    @property
    def weights(self) -> np.ndarray:
        """Area weights r^2 dlog dtheta."""
        w = self.r**2 * self.dlog * (2.0 * np.pi / self.n_theta)
        return np.broadcast_to(w[:, None], (self.n_r, self.n_theta))

    def norm(self, f, p: float = 2.0) -> float:
        a = np.abs(np.asarray(f))
        if math.isinf(p):
            return float(a.max())
        return float((np.sum(a**p * self.weights, axis=(-2, -1))) ** (1.0 / p))

    def mode(self, m: int):
        """Eigenpairs of the symmetrized radial operator for angular mode m."""
        if m not in self._cache:
            r = self.r
            d = (2.0 / self.dlog**2 + m * m) / r**2
            e = -1.0 / (self.dlog**2 * r[:-1] * r[1:])
            w, v = sla.eigh_tridiagonal(d, e)
            if len(self._cache) < 64:
                self._cache[m] = (w, v)
            return w, v
        return self._cache[m]

    def _apply(self, fn, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        coef = np.fft.rfft(f, axis=-1)
        out = np.zeros_like(coef)
        floor = 1e-15 * np.max(np.abs(coef), initial=0.0)
        for m in range(coef.shape[-1]):
            c = coef[..., m]
            if np.max(np.abs(c)) <= floor:
                continue
            w, v = self.mode(m)
            cv = ((c * self.r) @ v) * fn(w)
            out[..., m] = (cv @ v.T) / self.r
        return np.fft.irfft(out, n=self.n_theta, axis=-1)

    def frac_power_apply(self, sigma: float, f) -> np.ndarray:
        """(-Laplacian)^sigma f, f of shape (..., n_r, n_theta)."""
        if not -2.0 <= sigma <= 2.0:
            raise ValueError("sigma must lie in [-2, 2]")
        return self._apply(lambda w: w**sigma, f)

    def semigroup_apply(self, t: float, f) -> np.ndarray:
        if t < 0:
            raise ValueError("t must be nonnegative")
        return self._apply(lambda w: np.exp(-w * t), f)

    def radial_frac_power(self, sigma: float, profile) -> np.ndarray:
        """(-Laplacian)^sigma of a radial function given by its values at ``self.r``."""
        w, v = self.mode(0)
        prof = np.asarray(profile, dtype=float)
        return (v @ (w**sigma * (v.T @ (self.r * prof)))) / self.r

    def radial_norm(self, profile, p: float = 2.0) -> float:
        a = np.abs(np.asarray(profile))
        return float((2.0 * np.pi * np.sum(a**p * self.r**2) * self.dlog) ** (1.0 / p))


def polar_operator(domain: Domain, r_trunc: float, dlog: float, n_theta: int) -> PolarDiskOperator:
    if not (isinstance(domain, ExteriorDomain) and isinstance(domain.obstacle, Disk)
            and domain.dim == 2 and not any(domain.obstacle.center)):
        raise GeometryError("the polar operator needs an origin-centred planar disk obstacle")
    return PolarDiskOperator.for_resolution(domain.obstacle.radius, r_trunc, dlog, n_theta)


# --------------------------------------------------------------------------
# whole-space Fourier calculus
# --------------------------------------------------------------------------


def fourier_grid(L: float, M: int, dim: int = 2) -> np.ndarray:
    """Cell coordinates of the periodic box [-L/2, L/2)^dim, shape (M,)*dim + (dim,)."""
    x = (np.arange(M) - M // 2) * (L / M)
    return np.stack(np.meshgrid(*([x] * dim), indexing="ij"), axis=-1)


def fourier_wavenumbers(L: float, M: int, dim: int = 2) -> np.ndarray:
    """|xi| on the FFT grid, xi = 2 pi k / L."""
    k = 2.0 * np.pi * np.fft.fftfreq(M, d=L / M)
    grids = np.meshgrid(*([k] * dim), indexing="ij")
    return np.sqrt(sum(g * g for g in grids))


def fourier_multiplier(f: np.ndarray, mult: np.ndarray) -> np.ndarray:
    out = np.fft.ifftn(np.fft.fftn(f) * mult)
    return out.real if np.isrealobj(f) else out


def fourier_frac_laplacian(f: np.ndarray, s: float, L: float, M: int | None = None) -> np.ndarray:
    """(-Laplacian)^{s/2} f on the periodic box of side L via the multiplier |xi|^s."""
    f = np.asarray(f)
    M = f.shape[0] if M is None else M
    if M & (M - 1) or any(n != M for n in f.shape):
        raise ValueError("f must live on an M^dim grid with M a power of two")
    if s == 0:
        return f.copy()
    xi = fourier_wavenumbers(L, M, f.ndim)
    with np.errstate(divide="ignore"):
        mult = np.where(xi > 0, xi**s, 0.0)
    return fourier_multiplier(f, mult)
