"""Exponent calculus and a small Picard iteration for the cubic-type NLS
i u_t = -Laplacian_Omega u +- |u|^p u outside a disk.

States live in a truncated Dirichlet eigenbasis; the linear flow is exact
(phases exp(-i lambda t)) and the Duhamel term is a trapezoid rule on the
time nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import Disk, ExteriorDomain
from .spectral import build_operator


class SmallnessError(ValueError):
    """The linear flow of the data is not small enough."""


class NonContractionError(RuntimeError):
    pass


def as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float):
        return Fraction(v).limit_denominator(10**6)
    return Fraction(v)


@dataclass(frozen=True)
class StrichartzExponents:
    """Exact exponents; ``q_tilde`` is None when it is infinite (q_tilde' = 1)."""

    n: int
    s: Fraction
    p: Fraction
    q: Fraction
    r: Fraction
    q_tilde_conj: Fraction
    r_tilde_conj: Fraction

    @property
    def q_tilde(self) -> Fraction | None:
        return None if self.q_tilde_conj == 1 else self.q_tilde_conj / (self.q_tilde_conj - 1)

    @property
    def r_tilde(self) -> Fraction | None:
        return None if self.r_tilde_conj == 1 else self.r_tilde_conj / (self.r_tilde_conj - 1)

    def identities(self) -> dict[str, bool]:
        n, s = Fraction(self.n), self.s
        inv_qt = 0 if self.q_tilde is None else 1 / self.q_tilde
        inv_rt = 0 if self.r_tilde is None else 1 / self.r_tilde
        return {
            "scaling_qr": 2 / self.q + n / self.r == n / 2,
            "scaling_tilde": 2 * inv_qt + n * inv_rt == n / 2,
            "q_tilde_relation": self.q == (1 + self.p) * self.q_tilde_conj,
            "r_tilde_relation": self.r / self.r_tilde_conj == 4 * (n - s * self.r) / (n * (n - 2 * s)) + 1,
            "q_above_2": self.q > 2,
            "q_tilde_above_2": self.q_tilde is None or self.q_tilde > 2,
            "r_window": 2 < self.r < n / s,
            "critical": s == n / 2 - 2 / self.p,
        }

    def as_text(self) -> str:
        return (f"p={self.p} q={self.q} r={self.r} "
                f"q̃′={self.q_tilde_conj} r̃′={self.r_tilde_conj}")


def exponents(n: int, s) -> StrichartzExponents:
    """Exponents of the H^s-critical problem in exact rational arithmetic."""
    s = as_fraction(s)
    n = int(n)
    if n == 2 and not 0 < s < 1:
        raise ValueError("s must lie in (0, 1) in the plane")
    if not 0 < s < Fraction(n, 2):
        raise ValueError("need 0 < s < n/2")
    nn = Fraction(n)
    p = 4 / (nn - 2 * s)
    r = (2 * nn * nn + 2 * (4 - 2 * s) * nn) / (nn * nn - 2 * s * nn + 8 * s)
    q = 2 / (nn / 2 - nn / r)
    qtc = q / (1 + p)
    rtc = r / (4 * (nn - s * r) / (nn * (nn - 2 * s)) + 1)
    ex = StrichartzExponents(n, s, p, q, r, qtc, rtc)
    bad = [k for k, ok in ex.identities().items() if not ok]
    if bad:
        raise ArithmeticError(f"exponent identities fail: {bad}")
    if n == 2:
        planar = (4 / (2 - 2 * s), (3 - s) / (1 - s), (6 - 2 * s) / (1 + s))
        if (p, q, r) != planar:
            raise ArithmeticError("general formulas disagree with the planar ones")
    return ex


# --------------------------------------------------------------------------
# discretization
# --------------------------------------------------------------------------


@dataclass
class NlsModel:
    """Truncated Dirichlet eigenbasis on a lattice annulus plus a time grid."""

    lam: np.ndarray          # (K,) eigenvalues
    basis: np.ndarray        # (cells, K), sum basis^2 h^2 = 1 per column
    h: float
    times: np.ndarray

    @property
    def cell_area(self) -> float:
        return self.h**2

    @property
    def n_modes(self) -> int:
        return len(self.lam)

    def with_times(self, times) -> "NlsModel":
        return NlsModel(self.lam, self.basis, self.h, np.asarray(times, dtype=float))

    def refined(self) -> "NlsModel":
        """Twice the time resolution, keeping the existing nodes."""
        t = self.times
        mid = 0.5 * (t[1:] + t[:-1])
        return self.with_times(np.sort(np.concatenate([t, mid])))

    def to_grid(self, coef: np.ndarray) -> np.ndarray:
        return coef @ self.basis.T

    def project(self, values: np.ndarray) -> np.ndarray:
        return (values @ self.basis) * self.cell_area


def build_model(r_in: float = 1.0, r_out: float = 8.0, h: float = 0.25, n_modes: int = 400,
                t_end: float = 0.5, n_times: int = 64) -> NlsModel:
    if n_modes > 400:
        raise ValueError("at most 400 modes")
    dom = ExteriorDomain(Disk(r_in))
    op = build_operator(dom, h, r_out, outer="dirichlet")
    w, v = op.eigendecompose()
    if len(w) < n_modes:
        raise ValueError("not enough cells for the requested number of modes")
    return NlsModel(w[:n_modes].copy(), v[:, :n_modes] / h, h, np.linspace(0.0, t_end, n_times))


@dataclass
class NlsState:
    coef: np.ndarray          # (n_times, K) complex
    times: np.ndarray
    s: float = 0.0
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        t = np.asarray(self.times)
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must start at 0 and increase")
        if not np.all(np.isfinite(self.coef)):
            raise ValueError("nonfinite state")

    def __sub__(self, other: "NlsState") -> "NlsState":
        return NlsState(self.coef - other.coef, self.times, self.s)


@dataclass(frozen=True)
class MixedNorm:
    q: float
    r: float
    value: float


def _time_norm(g: np.ndarray, times: np.ndarray, q: float) -> float:
    if math.isinf(q):
        return float(g.max())
    return float(np.trapezoid(g**q, times) ** (1.0 / q))


def mixed_norm(state: NlsState, sigma: float, q, r, model: NlsModel) -> MixedNorm:
    """|| (-Laplacian)^{sigma/2} u ||_{L^q_t L^r_x} over the state's time grid."""
    q, r = float(q), float(r)
    coef = state.coef * model.lam ** (0.5 * sigma) if sigma else state.coef
    a = np.abs(model.to_grid(coef))
    inner = a.max(axis=1) if math.isinf(r) else (np.sum(a**r, axis=1) * model.cell_area) ** (1.0 / r)
    return MixedNorm(q, r, _time_norm(inner, state.times, q))


def linear_flow(model: NlsModel, c0: np.ndarray, s: float = 0.0) -> NlsState:
    ph = np.exp(-1j * np.outer(model.times, model.lam))
    return NlsState(ph * c0[None, :], model.times, s)


def _cumtrapz(f: np.ndarray, t: np.ndarray) -> np.ndarray:
    dt = np.diff(t)[:, None]
    inc = 0.5 * dt * (f[1:] + f[:-1])
    return np.concatenate([np.zeros_like(f[:1]), np.cumsum(inc, axis=0)])


def picard_step(u: NlsState, c0: np.ndarray, exps: StrichartzExponents, sign: int,
                model: NlsModel) -> NlsState:
    """Phi(u) = exp(it Laplacian) u0 -+ i int_0^t exp(i(t - tau) Laplacian) |u|^p u dtau."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    t = model.times
    vals = model.to_grid(u.coef)
    p = float(exps.p)
    nonlin = model.project(np.abs(vals) ** p * vals)
    duh = _cumtrapz(np.exp(1j * np.outer(t, model.lam)) * nonlin, t)
    coef = np.exp(-1j * np.outer(t, model.lam)) * (c0[None, :] - sign * 1j * duh)
    return NlsState(coef, t, u.s)


def distance(u: NlsState, v: NlsState, exps: StrichartzExponents, model: NlsModel) -> float:
    return mixed_norm(u - v, 0.0, exps.q, exps.r, model).value


def strichartz_norm(u: NlsState, exps: StrichartzExponents, model: NlsModel) -> float:
    return mixed_norm(u, float(exps.s), exps.q, exps.r, model).value


@dataclass
class PicardResult:
    state: NlsState
    iterations: int
    residual: float
    norm: float
    linear_norm: float
    history: list


def picard_solve(c0: np.ndarray, exps: StrichartzExponents, sign: int, model: NlsModel, eta: float,
                 max_iter: int = 50, tol: float = 1e-8) -> PicardResult:
    """Fixed point of the Duhamel map, started from the linear flow.

    Stops when d(u_{k+1}, u_k) < tol * ||u_{k+1}||_{L^q L^r}.
    """
    lin = linear_flow(model, c0, float(exps.s))
    lin_norm = strichartz_norm(lin, exps, model)
    if lin_norm > eta:
        raise SmallnessError(f"linear flow norm {lin_norm:.3e} exceeds eta={eta:.3e}")
    u, hist = lin, []
    for it in range(1, max_iter + 1):
        nxt = picard_step(u, c0, exps, sign, model)
        d = distance(nxt, u, exps, model)
        hist.append(d)
        scale = mixed_norm(nxt, 0.0, exps.q, exps.r, model).value
        u = nxt
        if d <= tol * scale:
            return PicardResult(u, it, d, strichartz_norm(u, exps, model), lin_norm, hist)
        if len(hist) >= 3 and hist[-1] > 0.9 * hist[-2] and hist[-2] > 0.9 * hist[-3]:
            raise NonContractionError(f"iterates stopped contracting (ratio {hist[-1] / hist[-2]:.3f})")
    raise NonContractionError(f"no convergence in {max_iter} iterations (last step {hist[-1]:.3e})")


# --------------------------------------------------------------------------
# contraction experiments
# --------------------------------------------------------------------------


def ground_state_data(model: NlsModel, exps: StrichartzExponents, target: float) -> np.ndarray:
    """c0 = eps * v1 with the linear-flow norm equal to ``target``."""
    c0 = np.zeros(model.n_modes, dtype=complex)
    c0[0] = 1.0
    unit = strichartz_norm(linear_flow(model, c0, float(exps.s)), exps, model)
    return c0 * (target / unit)


def random_state(model: NlsModel, exps: StrichartzExponents, norm: float,
                 rng: np.random.Generator, n_active: int = 40) -> NlsState:
    """Random smooth-in-space state with ||(-Laplacian)^{s/2} u||_{L^q L^r} = norm."""
    k = min(n_active, model.n_modes)
    shape = (len(model.times), model.n_modes)
    coef = np.zeros(shape, dtype=complex)
    damp = 1.0 / (1.0 + model.lam[:k])
    coef[:, :k] = (rng.standard_normal((shape[0], k)) + 1j * rng.standard_normal((shape[0], k))) * damp
    st = NlsState(coef, model.times, float(exps.s))
    return NlsState(coef * (norm / strichartz_norm(st, exps, model)), model.times, float(exps.s))


def contraction_factors(model: NlsModel, exps: StrichartzExponents, eta: float, sign: int = 1,
                        n_pairs: int = 5, seed: int = 0) -> np.ndarray:
    """d(Phi u, Phi v) / d(u, v) for random pairs with norms in (eta, 2 eta]."""
    rng = np.random.default_rng(seed)
    c0 = ground_state_data(model, exps, 0.5 * eta)
    out = []
    for _ in range(n_pairs):
        u = random_state(model, exps, 2 * eta * rng.uniform(0.5, 1.0), rng)
        v = random_state(model, exps, 2 * eta * rng.uniform(0.5, 1.0), rng)
        fu, fv = picard_step(u, c0, exps, sign, model), picard_step(v, c0, exps, sign, model)
        out.append(distance(fu, fv, exps, model) / distance(u, v, exps, model))
    return np.array(out)


def pin_eta(model: NlsModel, exps: StrichartzExponents, sign: int = 1, threshold: float = 0.5,
            seed: int = 0, j_range=(-12, 8)) -> tuple[float, float]:
    """Largest dyadic eta whose worst measured contraction factor is at most ``threshold``."""
    for j in range(j_range[1], j_range[0] - 1, -1):
        eta = 2.0**j
        f = contraction_factors(model, exps, eta, sign, seed=seed).max()
        if f <= threshold:
            return eta, float(f)
    raise NonContractionError("no dyadic eta in range gives a contraction")
