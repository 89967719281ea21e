"""Monte Carlo for Dirichlet heat kernels via killed Brownian bridges.

p_Omega(t, x, y) = p(t, x, y) * P[bridge from x to y over [0, t] stays in Omega].
The bridge is sampled at ``n_steps`` uniform times.  A path dies if a node
leaves the domain; otherwise each segment contributes the half-space
no-crossing probability 1 - exp(-d_i d_{i+1} / delta), with d = rho(node).
That factor is exact for the half-plane and uses variance 2 delta per
coordinate, matching the generator Laplacian(u).

Paths are processed in fixed-size blocks, each with its own counter-based
Philox stream keyed by (seed, block index).  Block results are merged in
block order, so the estimate is bit-identical for any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .exact_kernels import gauss_kernel
from .geometry import Domain

ParallelMap = Callable[[Callable, Iterable], Iterable]


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 20_000
    n_steps: int = 64
    seed: int = 0
    crossing_correction: bool = True
    block_size: int = 4096

    def __post_init__(self):
        if self.n_paths < 1000:
            raise ValueError("n_paths must be at least 1000")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class KernelEstimate:
    mean: float
    stderr: float
    n_paths: int
    n_steps: int

    @property
    def rel_err(self) -> float:
        return self.stderr / self.mean if self.mean > 0 else math.inf


@dataclass
class Accumulator:
    """Mergeable (sum, sum of squares, count) of per-path weights."""

    total: float = 0.0
    total_sq: float = 0.0
    count: int = 0

    def merge(self, other: "Accumulator") -> "Accumulator":
        return Accumulator(self.total + other.total, self.total_sq + other.total_sq,
                           self.count + other.count)

    def mean_stderr(self) -> tuple[float, float]:
        n = self.count
        mean = self.total / n
        var = max(self.total_sq - n * mean * mean, 0.0) / max(n - 1, 1)
        return mean, math.sqrt(var / n)


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def bridge_weights(domain: Domain, t: float, x, y, n_steps: int, n: int,
                   rng: np.random.Generator, crossing_correction: bool = True) -> np.ndarray:
    """Survival weights of ``n`` independent bridges from x to y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dim = x.shape[-1]
    delta = t / n_steps
    pos = np.broadcast_to(x, (n, dim)).copy()
    d_prev = np.full(n, float(domain.rho(x)))
    w = np.ones(n)
    for k in range(1, n_steps):
        rem = t - (k - 1) * delta
        z = rng.standard_normal((n, dim))
        pos += (delta / rem) * (y - pos) + math.sqrt(2.0 * delta * (rem - delta) / rem) * z
        d = domain.rho(pos)
        if crossing_correction:
            w *= -np.expm1(-d_prev * d / delta)
        else:
            w *= d > 0
        d_prev = d
    if crossing_correction:
        w *= -np.expm1(-d_prev * float(domain.rho(y)) / delta)
    return w


def _check(domain: Domain, t: float, x, y):
    if not t > 0:
        raise ValueError("t must be positive")
    if not (domain.rho(np.asarray(x, float)) > 0 and domain.rho(np.asarray(y, float)) > 0):
        raise ValueError("x and y must lie in the open domain")


def survival_probability(domain: Domain, t: float, x, y, cfg: McConfig,
                         pmap: ParallelMap = map) -> KernelEstimate:
    """Probability that the bridge from x to y over [0, t] avoids the obstacle."""
    _check(domain, t, x, y)
    n_blocks = -(-cfg.n_paths // cfg.block_size)

    def run(b: int) -> Accumulator:
        n = min(cfg.block_size, cfg.n_paths - b * cfg.block_size)
        w = bridge_weights(domain, t, x, y, cfg.n_steps, n, block_generator(cfg.seed, b),
                           cfg.crossing_correction)
        return Accumulator(float(w.sum()), float((w * w).sum()), n)

    acc = Accumulator()
    for part in pmap(run, range(n_blocks)):
        acc = acc.merge(part)
    mean, se = acc.mean_stderr()
    return KernelEstimate(mean, se, acc.count, cfg.n_steps)


def kernel_estimate(domain: Domain, t: float, x, y, cfg: McConfig,
                    pmap: ParallelMap = map) -> KernelEstimate:
    """Estimate of p_Omega(t, x, y): free Gaussian times survival probability."""
    surv = survival_probability(domain, t, x, y, cfg, pmap)
    g = gauss_kernel(t, x, y)
    return KernelEstimate(g * surv.mean, g * surv.stderr, surv.n_paths, surv.n_steps)
