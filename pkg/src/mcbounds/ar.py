"""Autoregression with a contraction map: overlap, coupling, explicit bound.

The chain is X_{k+1} = g(X_k) + Z_k on the real line with g Lipschitz of
constant L < 1 and noise density q.  Pairs farther apart than delta share
the noise draw (so their distance contracts by L per step); pairs within
delta regenerate jointly with probability eps(delta) given by the worst
row overlap.  prop6_bound evaluates the resulting explicit TV bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .chain import FiniteKernel
from .coupling import CoupledState, CouplingRunResult

__all__ = [
    "NoiseSpec",
    "ARModel",
    "gaussian_noise",
    "linear_map",
    "tanh_map",
    "model_from_names",
    "eps_delta",
    "prop6_bound",
    "prop6_curve",
    "ar_coupled_step",
    "run_ar_coupling",
    "simulate_ar_paths",
    "discretize_ar",
    "threshold_gap_lower_bound",
]

QUAD_TOL = 1e-8
AR_REJECT_CAP = 10**6


@dataclass(frozen=True)
class NoiseSpec:
    """Noise density with a sampler and optional closed-form machinery.

    pdf and cdf must accept floats or arrays; sampler(rng, size) draws from
    the density.  unimodal_symmetric declares the shape property that makes
    the worst overlap over a distance-delta pair occur at the extreme shift.
    """

    pdf: Callable
    sampler: Callable
    cdf: Callable | None = None
    unimodal_symmetric: bool = True
    name: str = "custom"


def gaussian_noise(sigma: float = 1.0) -> NoiseSpec:
    sig = float(sigma)
    if sig <= 0.0:
        raise ValueError(f"sigma must be positive, got {sig}")
    norm = sig * math.sqrt(2.0 * math.pi)

    def pdf(z):
        return np.exp(-0.5 * (np.asarray(z, dtype=float) / sig) ** 2) / norm

    def sampler(rng, size=None):
        return rng.normal(0.0, sig, size)

    def cdf(z):
        return special.ndtr(np.asarray(z, dtype=float) / sig)

    return NoiseSpec(pdf=pdf, sampler=sampler, cdf=cdf, unimodal_symmetric=True,
                     name=f"gauss:{sig:g}")


def linear_map(a: float) -> tuple[Callable, float, str]:
    a = float(a)
    if not abs(a) < 1.0:
        raise ValueError(f"linear coefficient must satisfy |a| < 1, got {a}")
    return (lambda x: a * np.asarray(x, dtype=float)), abs(a), f"linear:{a:g}"


def tanh_map(a: float) -> tuple[Callable, float, str]:
    a = float(a)
    if not abs(a) < 1.0:
        raise ValueError(f"tanh coefficient must satisfy |a| < 1, got {a}")
    return (lambda x: a * np.tanh(np.asarray(x, dtype=float))), abs(a), f"tanh:{a:g}"


@dataclass(frozen=True)
class ARModel:
    """g, its Lipschitz constant L, the noise, and the pair (delta, lam).

    Requires L < lam < 1; the noise density must integrate to one within
    1e-8 (checked by quadrature at construction).
    """

    g: Callable
    L: float
    noise: NoiseSpec
    delta: float
    lam: float
    name: str = "custom"

    def __post_init__(self):
        if not 0.0 <= self.L < 1.0:
            raise ValueError(f"L must lie in [0,1), got {self.L}")
        if not self.L < self.lam < 1.0:
            raise ValueError(f"lambda must lie in (L, 1) = ({self.L}, 1), got {self.lam}")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        total, err = integrate.quad(lambda z: float(self.noise.pdf(z)), -np.inf, np.inf)
        if abs(total - 1.0) > QUAD_TOL:
            raise ValueError(f"noise density integrates to {total}, not 1 within {QUAD_TOL}")


def model_from_names(g_name: str, noise_name: str, delta: float, lam: float) -> ARModel:
    """Build a model from 'linear:a' / 'tanh:a' and 'gauss:sigma' specs."""
    kind, _, arg = g_name.partition(":")
    if kind == "linear":
        g, L, gname = linear_map(float(arg))
    elif kind == "tanh":
        g, L, gname = tanh_map(float(arg))
    else:
        raise ValueError(f"unknown map spec {g_name!r}; use 'linear:a' or 'tanh:a'")
    nkind, _, narg = noise_name.partition(":")
    if nkind != "gauss":
        raise ValueError(f"unknown noise spec {noise_name!r}; use 'gauss:sigma'")
    noise = gaussian_noise(float(narg))
    return ARModel(g=g, L=L, noise=noise, delta=float(delta), lam=float(lam),
                   name=f"{gname}+{noise.name}")


def _l1_shift_distance(pdf: Callable, u: float) -> tuple[float, float]:
    """Integral of |q(z-u) - q(z)| dz with the symmetric-unimodal kink at u/2."""
    f = lambda z: abs(float(pdf(z - u)) - float(pdf(z)))
    left, e1 = integrate.quad(f, -np.inf, u / 2.0, epsabs=QUAD_TOL / 2)
    right, e2 = integrate.quad(f, u / 2.0, np.inf, epsabs=QUAD_TOL / 2)
    return left + right, e1 + e2


def _overlap_at_shift(noise: NoiseSpec, u: float) -> float:
    """Row overlap 1 - (1/2) integral |q(z-u) - q(z)| dz at shift u."""
    if u == 0.0:
        return 1.0
    if noise.cdf is not None and noise.unimodal_symmetric:
        return float(2.0 * noise.cdf(-u / 2.0))
    val, err = _l1_shift_distance(noise.pdf, u)
    if err > QUAD_TOL:
        raise ArithmeticError(f"overlap quadrature achieved {err:.3g}, needed {QUAD_TOL}")
    return 1.0 - 0.5 * val


def eps_delta(m: ARModel) -> float:
    """Worst one-step overlap over pairs at distance <= delta.

    For unimodal symmetric noise the worst pair sits at shift u = L delta;
    the quadrature value is cross-checked against the closed form
    2 cdf(-u/2) when a cdf is declared (agreement 1e-6 enforced).
    Otherwise the minimum overlap over a 10^4-point shift grid is taken.
    """
    u = m.L * m.delta
    if u == 0.0:
        return 1.0
    if m.noise.unimodal_symmetric:
        val, err = _l1_shift_distance(m.noise.pdf, u)
        if err > QUAD_TOL:
            raise ArithmeticError(f"overlap quadrature achieved {err:.3g}, needed {QUAD_TOL}")
        eps = 1.0 - 0.5 * val
        if m.noise.cdf is not None:
            closed = float(2.0 * m.noise.cdf(-u / 2.0))
            if abs(eps - closed) > 1e-6:
                raise ArithmeticError(
                    f"quadrature overlap {eps} disagrees with closed form {closed} beyond 1e-6"
                )
        return eps
    shifts = np.linspace(0.0, u, 10**4)
    lo, hi = _density_support(m.noise.pdf, u)
    z = np.linspace(lo, hi + u, 2**15 + 1)
    qz = m.noise.pdf(z)
    worst = 0.0
    for s in shifts[1:]:
        diff = np.abs(m.noise.pdf(z - s) - qz)
        worst = max(worst, float(np.trapezoid(diff, z)))
    return 1.0 - 0.5 * worst


def _density_support(pdf: Callable, pad: float) -> tuple[float, float]:
    # expand until the tails are numerically negligible
    r = 8.0
    for _ in range(40):
        if float(pdf(-r)) < 1e-16 and float(pdf(r)) < 1e-16:
            return -r - pad, r + pad
        r *= 2.0
    return -r, r


def prop6_bound(m: ARModel, n: int, j: int, cross_moment: float = 1.0,
                eps: float | None = None) -> float:
    """Explicit TV bound 2(1-eps)^j 1(j<=n) + 2 lam^n B^(j-1) cross_moment.

    B = 1 v ((1 + L delta - eps)/lam); requires the radius condition
    delta > (1-lam)/(lam-L) so that the shared-noise drift really
    contracts outside the coupling set.
    """
    threshold = (1.0 - m.lam) / (m.lam - m.L)
    if not m.delta > threshold:
        raise ValueError(
            f"radius condition violated: delta must exceed (1-lambda)/(lambda-L) = {threshold:.6g}, got {m.delta}"
        )
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 1 <= j <= n + 1:
        raise ValueError("j must lie in {1..n+1}")
    if cross_moment < 1.0:
        raise ValueError("cross_moment is 1 + mean initial distance, so it must be >= 1")
    e = eps_delta(m) if eps is None else float(eps)
    B = max(1.0, (1.0 + m.L * m.delta - e) / m.lam)
    head = 2.0 * (1.0 - e) ** j if j <= n else 0.0
    return head + 2.0 * m.lam**n * B ** (j - 1) * cross_moment


def prop6_curve(m: ARModel, n_max: int, cross_moment: float = 1.0):
    """j-optimized bound per horizon: list of (n, j_star, value)."""
    e = eps_delta(m)
    out = []
    for n in range(1, n_max + 1):
        best_j, best = 1, prop6_bound(m, n, 1, cross_moment, eps=e)
        for j in range(2, n + 2):
            val = prop6_bound(m, n, j, cross_moment, eps=e)
            if val < best:
                best_j, best = j, val
        out.append((n, best_j, best))
    return out


def _sample_nu(m: ARModel, gx: float, gxp: float, rng: np.random.Generator) -> float:
    """Draw from the normalized row minimum via mixture accept-reject."""
    q = m.noise.pdf
    for _ in range(AR_REJECT_CAP):
        center = gx if rng.random() < 0.5 else gxp
        y = center + float(m.noise.sampler(rng))
        a, b = float(q(y - gx)), float(q(y - gxp))
        den = 0.5 * (a + b)
        if den > 0.0 and rng.random() * den < min(a, b):
            return y
    raise ArithmeticError(f"joint-regeneration accept-reject exceeded {AR_REJECT_CAP} proposals")


def _sample_residual(m: ARModel, g_own: float, g_other: float, eps_set: float,
                     overlap: float, rng: np.random.Generator) -> float:
    """Draw from (P(x,.) - eps nu)/(1 - eps) by thinning plain proposals."""
    q = m.noise.pdf
    for _ in range(AR_REJECT_CAP):
        y = g_own + float(m.noise.sampler(rng))
        qo = float(q(y - g_own))
        if qo <= 0.0:
            continue
        ratio = eps_set * min(qo, float(q(y - g_other))) / (overlap * qo)
        if rng.random() >= ratio:
            return y
    raise ArithmeticError(f"residual accept-reject exceeded {AR_REJECT_CAP} proposals")


def ar_coupled_step(s: CoupledState, m: ARModel, rng: np.random.Generator,
                    eps: float | None = None) -> CoupledState:
    """One coupled transition of the autoregression pair.

    Outside the radius-delta set both coordinates add one shared noise draw,
    contracting their distance by at least L.  Inside, a coin with bias
    eps(delta) triggers a joint draw from the normalized row minimum (bell
    rings); on tails each coordinate moves by its own residual law.
    Merged pairs keep moving together.
    """
    gx = float(m.g(s.x))
    if s.bell == 1:
        y = gx + float(m.noise.sampler(rng))
        return CoupledState(y, y, 1)
    gxp = float(m.g(s.x_prime))
    if abs(s.x - s.x_prime) > m.delta:
        z = float(m.noise.sampler(rng))
        return CoupledState(gx + z, gxp + z, 0)
    eps_set = eps_delta(m) if eps is None else float(eps)
    if rng.random() < eps_set:
        y = _sample_nu(m, gx, gxp, rng)
        return CoupledState(y, y, 1)
    overlap = _overlap_at_shift(m.noise, abs(gx - gxp))
    x_new = _sample_residual(m, gx, gxp, eps_set, overlap, rng)
    xp_new = _sample_residual(m, gxp, gx, eps_set, overlap, rng)
    return CoupledState(x_new, xp_new, 0)


def run_ar_coupling(m: ARModel, x0: float, x0_prime: float, horizon: int,
                    replicas: int, seed: int) -> CouplingRunResult:
    """Replicated pair coupling: merge-time histogram and TV upper estimates.

    The coin bias eps(delta) is computed once and reused for every step.
    Deterministic for fixed seed; replicas are simulated sequentially from
    one counter-based stream.
    """
    if horizon < 1 or replicas < 1:
        raise ValueError("horizon and replicas must be >= 1")
    eps = eps_delta(m)
    rng = np.random.Generator(np.random.Philox(key=seed))
    T = np.full(replicas, horizon + 1, dtype=np.int64)
    for r in range(replicas):
        s = CoupledState(float(x0), float(x0_prime), 0)
        for k in range(1, horizon + 1):
            s = ar_coupled_step(s, m, rng, eps=eps)
            if s.bell == 1:
                T[r] = k
                break
    t_counts = np.bincount(T, minlength=horizon + 2)[1: horizon + 1]
    survivors = replicas - np.cumsum(t_counts)
    p = survivors / replicas
    # add-half adjusted standard error, matching run_coupling
    p_adj = (survivors + 0.5) / (replicas + 1.0)
    se = np.sqrt(p_adj * (1.0 - p_adj) / (replicas + 1.0))
    return CouplingRunResult(
        replicas=replicas,
        horizon=horizon,
        t_counts=tuple(int(c) for c in t_counts),
        censored=int(np.sum(T > horizon)),
        p_uncoupled=tuple(float(v) for v in p),
        se=tuple(float(v) for v in se),
        tv_upper=tuple(float(2.0 * v) for v in p),
    )


def simulate_ar_paths(m: ARModel, x0: float, n: int, replicas: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Final positions of independent plain AR trajectories from x0."""
    x = np.full(replicas, float(x0))
    for _ in range(n):
        x = np.asarray(m.g(x), dtype=float) + m.noise.sampler(rng, replicas)
    return x


def discretize_ar(m: ARModel, lo: float = -10.0, hi: float = 10.0,
                  points: int = 2001) -> tuple[FiniteKernel, np.ndarray]:
    """Exact-in-rows grid chain: cell j gets the noise mass of its interval.

    Boundary cells absorb the tails, so rows are exactly stochastic; needs
    a declared noise cdf.
    """
    if m.noise.cdf is None:
        raise ValueError("grid discretization needs a noise cdf")
    grid = np.linspace(lo, hi, points)
    mid = 0.5 * (grid[1:] + grid[:-1])
    edges = np.concatenate(([-np.inf], mid, [np.inf]))
    centers = np.asarray(m.g(grid), dtype=float)
    cdf_vals = m.noise.cdf(edges[None, :] - centers[:, None])
    rows = np.diff(cdf_vals, axis=1)
    return FiniteKernel(states=tuple(float(x) for x in grid), rows=rows), grid


def threshold_gap_lower_bound(m: ARModel, x0: float, x0_prime: float, n: int,
                              replicas: int, seed: int,
                              thresholds: np.ndarray | None = None) -> float:
    """Monte Carlo TV floor: best threshold-indicator gap minus 3 SE.

    Simulates the two marginal chains independently, scans indicator
    functionals 1(x <= t), and subtracts three binomial standard errors
    pointwise before taking the maximum.
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    xs = np.sort(simulate_ar_paths(m, x0, n, replicas, rng))
    ys = np.sort(simulate_ar_paths(m, x0_prime, n, replicas, rng))
    if thresholds is None:
        lo = min(xs[0], ys[0])
        hi = max(xs[-1], ys[-1])
        thresholds = np.linspace(lo, hi, 401)
    f1 = np.searchsorted(xs, thresholds, side="right") / replicas
    f2 = np.searchsorted(ys, thresholds, side="right") / replicas
    se = np.sqrt(f1 * (1.0 - f1) / replicas + f2 * (1.0 - f2) / replicas)
    return float(np.max(np.abs(f1 - f2) - 3.0 * se))
