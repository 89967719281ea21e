"""Green functions and Riesz potentials by time integration of heat kernels.

Gamma(x, y) = int_0^inf p_Omega(t, x, y) dt and
(-Laplacian)^{-s/2}(x, y) = Gamma(s/2)^{-1} int_0^inf t^{s/2 - 1} p_Omega(t, x, y) dt.

Kernel sources supply p_Omega at arrays of times with an error bar.  The
integral runs over log-spaced nodes (trapezoid in log t).  Below t_min the
integrand is bounded by the free Gaussian, whose integral is added in
closed form.  Beyond t_max a planar tail a / (t log^2(b + sqrt t)) is fitted
on the last decade and integrated numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .bridge_mc import McConfig, ParallelMap, kernel_estimate
from .envelope import EnvelopeParams, difference_envelope_rho
from .exact_kernels import gauss_kernel
from .geometry import Domain
from .spectral import DiscreteOperator, build_operator


class TailFitError(RuntimeError):
    """The large-time tail could not be fitted to an integrable model."""


class EstimatorInconsistencyError(RuntimeError):
    """An estimate of p_Omega exceeds the free kernel beyond its error bar."""


@dataclass(frozen=True)
class QuadratureSpec:
    nodes_per_decade: int = 8
    t_min: float | None = None
    t_max: float | None = None
    tail: bool = True

    def __post_init__(self):
        if self.nodes_per_decade < 4:
            raise ValueError("need at least 4 nodes per decade")
        if self.t_min is not None and self.t_max is not None and not self.t_min < self.t_max:
            raise ValueError("t_min must be below t_max")

    def nodes(self, dist: float) -> np.ndarray:
        lo = self.t_min if self.t_min is not None else 1e-3 * dist**2
        hi = self.t_max if self.t_max is not None else 1e4 * (1.0 + dist**2)
        n = int(math.ceil(math.log10(hi / lo) * self.nodes_per_decade)) + 1
        return np.geomspace(lo, hi, n)

    def refined(self) -> "QuadratureSpec":
        return QuadratureSpec(2 * self.nodes_per_decade, self.t_min, self.t_max, self.tail)


# -- kernel sources -------------------------------------------------------------


class KernelSource:
    name = "abstract"
    #: largest time at which the source is trusted; later nodes use the tail model
    t_limit: float = math.inf

    def kernel(self, ts: np.ndarray, x, y) -> tuple[np.ndarray, np.ndarray]:
        """p_Omega(t, x, y) and absolute error bars at each time."""
        raise NotImplementedError

    def metadata(self) -> dict:
        return {"source": self.name}


@dataclass
class McSource(KernelSource):
    """Killed-bridge Monte Carlo; each time node gets its own seed stream.

    The half-space crossing factor is only accurate while the time step is
    small against the obstacle's curvature radius, so the step count grows
    with t to keep t / n_steps <= max_dt, up to ``max_steps``.  Times beyond
    ``max_steps * max_dt`` are left to the tail model.
    """

    domain: Domain
    cfg: McConfig = field(default_factory=McConfig)
    pmap: ParallelMap = map
    max_dt: float = 0.25
    max_steps: int = 1024
    name = "mc"

    @property
    def t_limit(self) -> float:  # type: ignore[override]
        return self.max_steps * self.max_dt

    def steps_for(self, t: float) -> int:
        return int(min(max(self.cfg.n_steps, math.ceil(t / self.max_dt)), self.max_steps))

    def kernel(self, ts, x, y):
        vals, errs = [], []
        for k, t in enumerate(np.atleast_1d(ts)):
            seed = int(np.random.SeedSequence(self.cfg.seed, spawn_key=(k,)).generate_state(1, np.uint64)[0])
            cfg = McConfig(self.cfg.n_paths, self.steps_for(float(t)), seed,
                           self.cfg.crossing_correction, self.cfg.block_size)
            est = kernel_estimate(self.domain, float(t), x, y, cfg, self.pmap)
            vals.append(est.mean)
            errs.append(est.stderr)
        return np.array(vals), np.array(errs)

    def metadata(self):
        return {"source": "mc", "n_paths": self.cfg.n_paths, "n_steps": self.cfg.n_steps,
                "max_dt": self.max_dt, "max_steps": self.max_steps, "seed": self.cfg.seed}


@dataclass
class ExactSource(KernelSource):
    """Closed-form kernel, e.g. the half-plane image formula."""

    fn: Callable
    label: str = "exact"
    log_fn: Callable | None = None
    name = "exact"

    def kernel(self, ts, x, y):
        ts = np.atleast_1d(ts)
        vals = np.array([self.fn(float(t), x, y) for t in ts])
        return vals, np.zeros_like(vals)

    def metadata(self):
        return {"source": "exact", "kernel": self.label}


@dataclass
class SpectralSource(KernelSource):
    """Lattice operator; time integrals are done exactly in the spectrum.

    The error bar is the change against the operator at twice the spacing.
    """

    op: DiscreteOperator
    coarse: DiscreteOperator | None = None
    name = "spectral"

    @classmethod
    def build(cls, domain: Domain, h: float, r_trunc: float | None, outer: str = "neumann",
              with_error: bool = True, cap: int | None = None):
        kw = {} if cap is None else {"cap": cap}
        op = build_operator(domain, h, r_trunc, outer=outer, **kw)
        coarse = build_operator(domain, 2 * h, r_trunc, outer=outer, **kw) if with_error else None
        return cls(op, coarse)

    def kernel(self, ts, x, y):
        ts = np.atleast_1d(ts)
        i, j = self.op.cell_of(x), self.op.cell_of(y)
        vals = np.array([self.op.kernel_entry(float(t), i, j) for t in ts])
        return vals, np.zeros_like(vals)

    def _pair_value(self, op: DiscreteOperator, x, y, fn) -> float:
        return float(fn(op, op.cell_of(y))[op.cell_of(x)])

    def green(self, x, y) -> tuple[float, float]:
        v = self._pair_value(self.op, x, y, lambda op, j: op.green_column(j))
        err = abs(v - self._pair_value(self.coarse, x, y, lambda op, j: op.green_column(j))) \
            if self.coarse is not None else 0.0
        return v, err

    def riesz(self, x, y, s: float) -> tuple[float, float]:
        v = self._pair_value(self.op, x, y, lambda op, j: op.riesz_column(s, j))
        err = abs(v - self._pair_value(self.coarse, x, y, lambda op, j: op.riesz_column(s, j))) \
            if self.coarse is not None else 0.0
        return v, err

    def metadata(self):
        return {"source": "spectral", "h": self.op.h, "r_trunc": self.op.r_trunc,
                "outer": self.op.outer, "cells": self.op.n}


# -- time quadrature -------------------------------------------------------------


@dataclass
class TimeSeries:
    """p_Omega(t, x, y) sampled on log-spaced times."""

    t: np.ndarray
    p: np.ndarray
    err: np.ndarray
    dist: float
    dim: int


def sample_kernel(source: KernelSource, x, y, quad: QuadratureSpec) -> TimeSeries:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dist = float(np.linalg.norm(x - y))
    if dist == 0:
        raise ValueError("x and y must differ")
    ts = quad.nodes(dist)
    ts = ts[ts <= source.t_limit * (1 + 1e-12)]
    if len(ts) < 2 * quad.nodes_per_decade:
        raise ValueError("the source's reliable time range is too short for this pair")
    p, e = source.kernel(ts, x, y)
    return TimeSeries(ts, np.asarray(p, float), np.asarray(e, float), dist, len(x))


def _trapezoid_log(t, f, ferr):
    """int f dt = int (t f) d(log t) by the trapezoid rule, with linear error propagation."""
    u = np.log(t)
    g = t * f
    w = np.zeros_like(u)
    du = np.diff(u)
    w[:-1] += 0.5 * du
    w[1:] += 0.5 * du
    return float(w @ g), float(math.sqrt(np.sum((w * t * ferr) ** 2)))


def fit_tail(t: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    """Fit t p(t) = a / log^2(b + sqrt t) on the given nodes, returning (a, b)."""
    ok = p > 0
    if ok.sum() < 3:
        raise TailFitError("not enough positive samples in the last decade")
    t, p = t[ok], p[ok]
    y = np.log(t * p)
    sq = np.sqrt(t)

    def resid(logb):
        ll = 2.0 * np.log(np.log(math.exp(logb) + sq))
        la = np.mean(y + ll)
        return float(np.sum((y + ll - la) ** 2)), la

    best = optimize.minimize_scalar(lambda lb: resid(lb)[0], bounds=(0.0, math.log(1e4)),
                                    method="bounded")
    la = resid(best.x)[1]
    return math.exp(la), math.exp(best.x)


def tail_integral(a: float, b: float, t0: float, power: float = 0.0) -> float:
    """int_{t0}^inf t^power a / (t log^2(b + sqrt t)) dt for power < 0 (or = 0)."""
    if power > 0:
        raise TailFitError("tail is not integrable")

    lb = math.log(b)

    def f(u):
        # log(b + e^{u/2}) without overflow
        hi, lo = max(lb, 0.5 * u), min(lb, 0.5 * u)
        return math.exp(power * u) * a / (hi + math.log1p(math.exp(lo - hi))) ** 2

    val, _ = integrate.quad(f, math.log(t0), np.inf, limit=200)
    return val


def _tail(ts: TimeSeries, power: float, nodes_per_decade: int) -> tuple[float, float]:
    """Fitted tail beyond the last node and its model uncertainty."""
    last = ts.t >= ts.t[-1] / 10.0
    prev = (ts.t >= ts.t[-1] / 100.0) & (ts.t <= ts.t[-1] / 10.0)
    t_end = float(ts.t[-1])
    if ts.dim >= 3:
        # power law a t^{-n/2} in higher dimensions
        a = float(np.mean(ts.p[last] * ts.t[last] ** (ts.dim / 2)))
        e = ts.dim / 2 - power - 1.0
        val = a * t_end ** (-e) / e
        return val, 0.1 * val
    a, b = fit_tail(ts.t[last], ts.p[last])
    val = tail_integral(a, b, t_end, power)
    try:
        a2, b2 = fit_tail(ts.t[prev], ts.p[prev])
        alt = tail_integral(a2, b2, t_end, power)
    except TailFitError:
        alt = val
    return val, abs(val - alt)


def green_numeric(domain: Domain, x, y, source: KernelSource,
                  quad: QuadratureSpec | None = None) -> tuple[float, float]:
    """Green function Gamma_Omega(x, y) with an error estimate."""
    quad = QuadratureSpec() if quad is None else quad
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_pair(domain, x, y)
    if isinstance(source, SpectralSource):
        return source.green(x, y)
    ts = sample_kernel(source, x, y, quad)
    if ts.dim != 2:
        raise ValueError("the Green function is computed in the plane only")
    val, err = _trapezoid_log(ts.t, ts.p, ts.err)
    head = special.exp1(ts.dist**2 / (4.0 * ts.t[0])) / (4.0 * math.pi)
    val += head
    err += head
    if quad.tail:
        tv, te = _tail(ts, 0.0, quad.nodes_per_decade)
        val += tv
        err += te
    return val, err


def riesz_numeric(domain: Domain, x, y, s: float, source: KernelSource,
                  quad: QuadratureSpec | None = None, series: TimeSeries | None = None
                  ) -> tuple[float, float]:
    """Kernel of (-Laplacian_Omega)^{-s/2} at (x, y) with an error estimate.

    A precomputed ``series`` can be passed to reuse kernel samples across s.
    """
    quad = QuadratureSpec() if quad is None else quad
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if not 0 < s < n:
        raise ValueError(f"s must lie in (0, {n})")
    _check_pair(domain, x, y)
    if isinstance(source, SpectralSource):
        return source.riesz(x, y, s)
    ts = sample_kernel(source, x, y, quad) if series is None else series
    g = math.gamma(s / 2)
    w = ts.t ** (s / 2 - 1)
    val, err = _trapezoid_log(ts.t, w * ts.p, w * ts.err)
    # below t_min: int_0^{t0} t^{s/2-1} (4 pi t)^{-n/2} e^{-r^2/4t} dt in closed form
    a = n / 2 - s / 2
    z = ts.dist**2 / (4.0 * ts.t[0])
    head = (4.0 * math.pi) ** (-n / 2) * (ts.dist**2 / 4.0) ** (-a) * special.gammaincc(a, z) * math.gamma(a) \
        if a > 0 else 0.0
    val += head
    err += head
    if quad.tail:
        tv, te = _tail(ts, s / 2 - 1, quad.nodes_per_decade)
        val += tv
        err += te
    return val / g, err / g


def whole_space_riesz_numeric(x, y, s: float, quad: QuadratureSpec | None = None) -> float:
    """Same quadrature applied to the free Gaussian (reference for p_Omega <= p)."""
    quad = QuadratureSpec() if quad is None else quad
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    dist = float(np.linalg.norm(x - y))
    a = n / 2 - s / 2
    return (4.0 * math.pi) ** (-n / 2) * (dist**2 / 4.0) ** (-a) * math.gamma(a) / math.gamma(s / 2)


def tail_exponent(ts: TimeSeries, t_from: float) -> float:
    """gamma in t p(t) ~ A / log^gamma(t) fitted on t >= t_from."""
    sel = (ts.t >= t_from) & (ts.p > 0)
    slope = np.polyfit(np.log(np.log(ts.t[sel])), np.log(ts.t[sel] * ts.p[sel]), 1)[0]
    return float(-slope)


def _check_pair(domain: Domain, x, y):
    if np.array_equal(x, y):
        raise ValueError("x and y must differ")
    if not (domain.rho(x) > 0 and domain.rho(y) > 0):
        raise ValueError("x and y must lie in the domain")


# -- kernel difference -------------------------------------------------------------


def difference_check(domain: Domain, t: float, x, y, params: EnvelopeParams,
                     source: KernelSource) -> float:
    """(p - p_Omega) / difference envelope; raises if p_Omega > p beyond 3 error bars."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = gauss_kernel(t, x, y)
    pv, pe = source.kernel(np.array([t]), x, y)
    diff = p - float(pv[0])
    if diff < -3.0 * float(pe[0]) - 1e-15 * p:
        raise EstimatorInconsistencyError(f"p_Omega exceeds p by {-diff:.3e} (stderr {pe[0]:.3e})")
    env = difference_envelope_rho(t, domain.rho(x), domain.rho(y), np.linalg.norm(x - y), len(x), params)
    return max(diff, 0.0) / env
