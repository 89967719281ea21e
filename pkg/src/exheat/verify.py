"""Ratio scans: numerical kernels against their explicit envelopes."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bridge_mc import McConfig, survival_probability
from .envelope import (EnvelopeParams, green_envelope_2d_rho, log_heat_envelope_2d_rho,
                       log_heat_envelope_hd_rho, riesz_envelope_rho)
from .exact_kernels import log_gauss_kernel
from .geometry import Domain, point_at_distance
from .potentials import (ExactSource, KernelSource, McSource, QuadratureSpec, SpectralSource,
                         green_numeric, riesz_numeric, sample_kernel)
from .spectral import DiscreteOperator

PAIRING_RULES = ("diagonal", "radial", "antipodal")


class InsufficientPrecisionError(RuntimeError):
    """Every scan point was excluded for noise."""


@dataclass(frozen=True)
class ScanGrid:
    """Times x base points x pairing rules.

    Base points are (rho target, angle) and are resolved on rays from the
    origin.  Pairing rules: ``diagonal`` (y = x), ``radial`` (y further out on
    the same ray with rho(y) = 2 rho(x) + 1) and ``antipodal`` (same rho,
    opposite angle).
    """

    ts: tuple
    base_points: tuple
    pairing: tuple = PAIRING_RULES

    def __post_init__(self):
        if not self.ts or not self.base_points or not self.pairing:
            raise ValueError("scan grid must be nonempty")
        bad = set(self.pairing) - set(PAIRING_RULES)
        if bad:
            raise ValueError(f"unknown pairing rules {sorted(bad)}")

    def pairs(self, domain: Domain) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for rho, ang in self.base_points:
            x = point_at_distance(domain, rho, ang)
            for rule in self.pairing:
                if rule == "diagonal":
                    y = x
                elif rule == "radial":
                    y = point_at_distance(domain, 2.0 * rho + 1.0, ang)
                else:
                    y = point_at_distance(domain, rho, ang + math.pi)
                out.append((rule, x, y))
        return out

    def points(self, domain: Domain):
        for t in self.ts:
            for rule, x, y in self.pairs(domain):
                yield float(t), rule, x, y


@dataclass
class RatioReport:
    """Extrema of numeric / envelope ratios over a scan.

    For two-sided heat scans ``ratio_max`` is taken over the upper-envelope
    ratios and ``ratio_min`` over the lower-envelope ratios.
    """

    quantity: str
    ratio_min: float
    ratio_max: float
    argmin: dict
    argmax: dict
    n_points: int
    n_excluded: int
    source: dict
    table: list = field(default_factory=list)
    columns: tuple = ()

    @property
    def spread(self) -> float:
        return self.ratio_max / self.ratio_min

    @property
    def excluded_fraction(self) -> float:
        return self.n_excluded / self.n_points if self.n_points else 0.0

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.ratio_min and self.ratio_max <= hi

    def to_dict(self) -> dict:
        d = asdict(self)
        d["columns"] = list(self.columns)
        d["spread"] = self.spread
        return d


def _coords(v) -> list:
    return [float(c) for c in np.atleast_1d(v)]


def _report(quantity, rows, columns, lo_key, hi_key, n_excluded, source) -> RatioReport:
    used = [r for r in rows if not r["excluded"]]
    if not used:
        raise InsufficientPrecisionError(f"all {len(rows)} points of the {quantity} scan were excluded")
    i_min = min(range(len(used)), key=lambda i: used[i][lo_key])
    i_max = max(range(len(used)), key=lambda i: used[i][hi_key])

    def where(r):
        return {k: r[k] for k in ("t", "x", "y", "rule") if k in r}

    table = [[r[c] for c in columns] for r in rows]
    return RatioReport(quantity, float(used[i_min][lo_key]), float(used[i_max][hi_key]),
                       where(used[i_min]), where(used[i_max]), len(rows), n_excluded, source,
                       table, tuple(columns))


# -- heat kernel --------------------------------------------------------------


def log_kernel(source, domain: Domain, t: float, x, y) -> tuple[float, float]:
    """log p_Omega(t, x, y) and its relative error from a kernel source."""
    if isinstance(source, McSource):
        cfg = source.cfg
        cfg = McConfig(cfg.n_paths, source.steps_for(t), cfg.seed, cfg.crossing_correction, cfg.block_size)
        est = survival_probability(domain, t, x, y, cfg, source.pmap)
        if est.mean <= 0:
            return -math.inf, math.inf
        return log_gauss_kernel(t, x, y) + math.log(est.mean), est.stderr / est.mean
    if isinstance(source, ExactSource) and source.log_fn is not None:
        return float(source.log_fn(t, x, y)), 0.0
    p, e = source.kernel(np.array([t]), x, y)
    if p[0] <= 0:
        return -math.inf, math.inf
    return math.log(p[0]), float(e[0] / p[0])


def _exp(v: float) -> float:
    # ratios of far pairs against a much faster Gaussian overflow; they are infinite for reporting
    return math.exp(v) if v < 709.0 else math.inf


def scan_heat(domain: Domain, grid: ScanGrid, source: KernelSource, upper: EnvelopeParams,
              lower: EnvelopeParams, max_rel_err: float = 0.2) -> RatioReport:
    """Two-sided heat-kernel scan: ratio_up against ``upper``, ratio_low against ``lower``."""
    rows = []
    n = domain.dim
    for t, rule, x, y in grid.points(domain):
        rx, ry = float(domain.rho(x)), float(domain.rho(y))
        dist = float(np.linalg.norm(x - y))
        lp, rel = log_kernel(source, domain, t, x, y)
        if n == 2:
            le_up = log_heat_envelope_2d_rho(t, rx, ry, dist, upper)
            le_lo = log_heat_envelope_2d_rho(t, rx, ry, dist, lower)
        else:
            le_up = log_heat_envelope_hd_rho(t, rx, ry, dist, n, upper)
            le_lo = log_heat_envelope_hd_rho(t, rx, ry, dist, n, lower)
        excluded = not (rel <= max_rel_err)
        rows.append({"t": t, "rule": rule, "x": _coords(x), "y": _coords(y), "rho_x": rx, "rho_y": ry,
                     "log_kernel": lp, "rel_err": rel,
                     "ratio_up": _exp(lp - le_up) if not excluded else math.nan,
                     "ratio_low": _exp(lp - le_lo) if not excluded else math.nan,
                     "excluded": excluded})
    n_ex = sum(r["excluded"] for r in rows)
    cols = ("t", "rule", "x", "y", "rho_x", "rho_y", "log_kernel", "rel_err", "ratio_low", "ratio_up",
            "excluded")
    meta = dict(source.metadata(), c_up=upper.c_gauss, c_low=lower.c_gauss,
                amplitude_up=upper.amplitude, amplitude_low=lower.amplitude)
    return _report("heat", rows, cols, "ratio_low", "ratio_up", n_ex, meta)


# -- Green function and Riesz potentials -------------------------------------------


GreenFn = Callable[[np.ndarray, np.ndarray], tuple]


def scan_green(domain: Domain, pairs: Sequence, source, quad: QuadratureSpec | None = None,
               label: str | None = None) -> RatioReport:
    """Green function against its two-sided envelope.

    ``source`` is a kernel source or a callable (x, y) -> value or (value, error).
    """
    rows = []
    for x, y in pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.array_equal(x, y):
            raise ValueError("coincident pair in a Green scan")
        if isinstance(source, SpectralSource):
            val, err = source.green(x, y)
        elif isinstance(source, KernelSource):
            val, err = green_numeric(domain, x, y, source, quad)
        else:
            out = source(x, y)
            val, err = out if isinstance(out, tuple) else (out, 0.0)
        rx, ry = float(domain.rho(x)), float(domain.rho(y))
        env = float(green_envelope_2d_rho(rx, ry, np.linalg.norm(x - y)))
        rows.append({"x": _coords(x), "y": _coords(y), "rho_x": rx, "rho_y": ry, "value": float(val),
                     "error": float(err), "envelope": env, "ratio": float(val) / env, "excluded": False})
    cols = ("x", "y", "rho_x", "rho_y", "value", "error", "envelope", "ratio")
    meta = source.metadata() if isinstance(source, KernelSource) else {"source": label or "callable"}
    return _report("green", rows, cols, "ratio", "ratio", 0, meta)


def scan_riesz(domain: Domain, pairs: Sequence, s: float, source, quad: QuadratureSpec | None = None,
               series: dict | None = None) -> RatioReport:
    """Riesz kernel against its upper envelope; the minimum is informational.

    Pairs touching the boundary (zero envelope) are skipped and counted as
    excluded.  ``series`` may map pair index to precomputed kernel samples.
    """
    n = domain.dim
    if not 0 < s < n:
        raise ValueError(f"s must lie in (0, {n})")
    rows = []
    for k, (x, y) in enumerate(pairs):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rx, ry = float(domain.rho(x)), float(domain.rho(y))
        row = {"x": _coords(x), "y": _coords(y), "rho_x": rx, "rho_y": ry}
        if rx == 0 or ry == 0:
            rows.append(dict(row, value=0.0, error=0.0, envelope=0.0, ratio=math.nan, excluded=True))
            continue
        if isinstance(source, SpectralSource):
            val, err = source.riesz(x, y, s)
        elif isinstance(source, KernelSource):
            ts = None if series is None else series.get(k)
            val, err = riesz_numeric(domain, x, y, s, source, quad, series=ts)
        else:
            val, err = source(x, y, s)
        env = float(riesz_envelope_rho(rx, ry, np.linalg.norm(x - y), s, n))
        rows.append(dict(row, value=float(val), error=float(err), envelope=env, ratio=float(val) / env,
                         excluded=False))
    n_ex = sum(r["excluded"] for r in rows)
    cols = ("x", "y", "rho_x", "rho_y", "value", "error", "envelope", "ratio", "excluded")
    meta = dict(source.metadata() if isinstance(source, KernelSource) else {"source": "callable"}, s=s)
    return _report("riesz", rows, cols, "ratio", "ratio", n_ex, meta)


def sample_pairs(source: KernelSource, pairs: Sequence, quad: QuadratureSpec) -> dict:
    """Kernel samples per pair, reusable across several Riesz orders."""
    return {k: sample_kernel(source, x, y, quad) for k, (x, y) in enumerate(pairs)}


# -- harmonic weight and eigenfunction ---------------------------------------------------


def scan_phi(domain: Domain, weight, points) -> RatioReport:
    """phi(x) / log(e + rho(x)) over the given points."""
    pts = np.asarray(points, dtype=float)
    phi = np.atleast_1d(weight(pts) if callable(weight) else weight.phi(pts))
    rho = np.atleast_1d(domain.rho(pts))
    ratio = phi / np.log(math.e + rho)
    rows = [{"x": _coords(p), "rho_x": float(r), "phi": float(f), "ratio": float(q), "excluded": False}
            for p, r, f, q in zip(pts, rho, phi, ratio)]
    return _report("phi", rows, ("x", "rho_x", "phi", "ratio"), "ratio", "ratio", 0, {"source": "layer"})


def scan_eigenfunction(op: DiscreteOperator, domain: Domain | None = None,
                       collar: float = 3.0) -> RatioReport:
    """v1 / rho over cells with rho > collar * h."""
    if not op.bounded:
        raise ValueError("the eigenfunction scan needs a bounded-domain operator")
    domain = op.domain if domain is None else domain
    lam, v = op.first_eigenpair()
    rho = domain.rho(op.sites)
    sel = rho > collar * op.h
    ratio = v[sel] / rho[sel]
    rows = [{"x": _coords(p), "rho_x": float(r), "v1": float(a), "ratio": float(q), "excluded": False}
            for p, r, a, q in zip(op.sites[sel], rho[sel], v[sel], ratio)]
    return _report("eigenfunction", rows, ("x", "rho_x", "v1", "ratio"), "ratio", "ratio", 0,
                   {"source": "spectral", "h": op.h, "cells": op.n, "lambda1": lam})


# -- constant fitting ----------------------------------------------------------------


def fit_gaussian_bound(log_values: np.ndarray, q: np.ndarray, log_scale: np.ndarray,
                       log_err: np.ndarray | None = None, safety: float = 2.0) -> tuple[float, float]:
    """Fit (C, c) with log_values <= log C + log_scale - q / c.

    The Gaussian width c is a least-squares estimate widened by ``safety``;
    C is the smallest constant admitted by the samples.  ``log_err``
    (relative errors) is added to the data so the bound covers the error bars.
    """
    lv = np.asarray(log_values) + (0.0 if log_err is None else np.asarray(log_err))
    y = lv - np.asarray(log_scale)
    q = np.asarray(q, dtype=float)
    slope = np.polyfit(q, y, 1)[0] if np.ptp(q) > 0 else 0.0
    c = safety / -slope if slope < 0 else math.inf
    logc = float(np.max(y + (q / c if math.isfinite(c) else 0.0)))
    return math.exp(logc), c


def green_pairs(domain: Domain, count: int = 1000, seed: int = 0,
                rho_range=(1e-3, 1e3)) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic pairs with log-uniform distances to the obstacle and random angles.

    The spread covers near and far points and both close and distant pairs,
    so every regime of the two-sided Green bound is visited.
    """
    rng = np.random.default_rng(seed)
    lo, hi = np.log(rho_range)
    out = []
    while len(out) < count:
        rx, ry = np.exp(rng.uniform(lo, hi, 2))
        a = rng.uniform(0, 2 * np.pi)
        b = a + rng.choice([rng.normal(0, 0.05), rng.uniform(-np.pi, np.pi)])
        x = point_at_distance(domain, float(rx), float(a))
        y = point_at_distance(domain, float(ry), float(b))
        if np.linalg.norm(x - y) > 1e-9:
            out.append((x, y))
    return out


def riesz_pairs(domain: Domain, rhos: Sequence[float]) -> list[tuple[np.ndarray, np.ndarray]]:
    """For each rho a radial pair and a pair a quarter turn apart."""
    out = []
    for r in rhos:
        x = point_at_distance(domain, r, 0.0)
        out.append((x, point_at_distance(domain, 2 * r + 1, 0.0)))
        out.append((x, point_at_distance(domain, r, 0.5 * math.pi)))
    return out
