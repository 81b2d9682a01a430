"""Bell-variable coupling: simulation, exact tail oracles, identity checks.

Couples two copies of a finite chain through a shared regeneration draw on
a certified coupling set.  Provides a scalar reference stepper, a vectorized
replicated simulator with a counter-based RNG for bit-reproducibility, exact
propagation oracles for the never-coupled mass, and exact path-space
verification of the survival-weight identity (coin enumeration on one side,
residual product chain with multiplicative weights on the other).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .chain import (
    FiniteKernel,
    FiniteSignedMeasure,
    MinorizationCertificate,
    build_product_pstar,
    propagate,
)

__all__ = [
    "CoupledState",
    "CouplingConfig",
    "CouplingRunResult",
    "MarginalReport",
    "coupled_step",
    "run_coupling",
    "exact_uncoupled_mass",
    "weighted_identity_tables",
    "weighted_identity_check",
    "marginal_consistency_check",
]

MAX_PATH_COUNT = 10**7


@dataclass(frozen=True)
class CoupledState:
    """Pair of chain positions plus the bell flag marking a merged pair."""

    x: int
    x_prime: int
    bell: int

    def __post_init__(self):
        if self.bell not in (0, 1):
            raise ValueError(f"bell must be 0 or 1, got {self.bell}")
        if self.bell == 1 and self.x != self.x_prime:
            raise ValueError("bell=1 requires equal coordinates")


@dataclass(frozen=True)
class CouplingConfig:
    """Finite-chain coupling setup: kernel, certificate, coin schedule, seed.

    eps is the per-step coin bias: None uses the certified epsilon at every
    step, a scalar uses that constant, and a sequence gives step k (1-based)
    the bias eps[k-1].  Each bias must stay within the certified overlap so
    residual rows remain nonnegative.
    """

    kernel: FiniteKernel
    cert: MinorizationCertificate
    eps: float | tuple | None = None
    residual_strategy: str = "categorical"
    seed: int = 0

    def __post_init__(self):
        self.cert.check_against(self.kernel)
        if self.residual_strategy != "categorical":
            raise ValueError(
                f"unknown residual strategy {self.residual_strategy!r} for finite kernels"
            )
        eps = self.eps
        if eps is not None:
            if np.ndim(eps) == 0:
                eps = float(eps)
                self._check_eps(eps)
            else:
                eps = tuple(float(e) for e in eps)
                for e in eps:
                    self._check_eps(e)
            object.__setattr__(self, "eps", eps)

    def _check_eps(self, e: float) -> None:
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"eps must lie in [0,1], got {e}")
        if e > self.cert.epsilon + 1e-12:
            raise ValueError(
                f"eps {e} exceeds the certified overlap {self.cert.epsilon}"
            )

    def eps_at(self, k: int) -> float:
        """Coin bias for step k (1-based)."""
        if self.eps is None:
            return self.cert.epsilon
        if isinstance(self.eps, tuple):
            if k < 1 or k > len(self.eps):
                raise ValueError(f"step {k} outside the eps schedule of length {len(self.eps)}")
            return self.eps[k - 1]
        return self.eps


@dataclass(frozen=True)
class CouplingRunResult:
    """Aggregates of a replicated coupling run.

    t_counts[k-1] counts replicas that merged exactly at step k; censored
    counts those still apart at the horizon.  p_uncoupled[n-1] estimates the
    probability the pair is still apart after n steps, with its binomial
    standard error and the implied TV upper estimate 2 p.
    """

    replicas: int
    horizon: int
    t_counts: tuple[int, ...]
    censored: int
    p_uncoupled: tuple[float, ...]
    se: tuple[float, ...]
    tv_upper: tuple[float, ...]

    def rows(self):
        return zip(range(1, self.horizon + 1), self.p_uncoupled, self.se, self.tv_upper)


def _residual_row(row: np.ndarray, nu_vec: np.ndarray, eps_k: float) -> np.ndarray:
    # float error can push entries a hair below zero; clip like the product
    # kernel construction does
    return np.clip((row - eps_k * nu_vec) / (1.0 - eps_k), 0.0, None)


def _sample_index(cum_row: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cum_row, u, side="right")), cum_row.size - 1)


def coupled_step(s: CoupledState, cfg: CouplingConfig, k: int, rng: np.random.Generator) -> CoupledState:
    """One transition of the coupled pair; k is the 1-based step index.

    Merged pairs move together.  Unmerged pairs in the coupling set flip a
    coin with bias eps_at(k): heads draws the shared regeneration law and
    rings the bell, tails draws each coordinate from its residual row.
    Outside the set the coordinates move independently.
    """
    rows = cfg.kernel.rows
    size = cfg.kernel.size
    if not (0 <= s.x < size and 0 <= s.x_prime < size):
        raise ValueError(f"state {s} out of range for {size} states")
    if s.bell == 1:
        z = _sample_index(np.cumsum(rows[s.x]), rng.random())
        return CoupledState(z, z, 1)
    pair = (s.x, s.x_prime)
    if pair in cfg.cert.coupling_set:
        eps_k = cfg.eps_at(k)
        if rng.random() < eps_k:
            nu_vec = cfg.cert.nu[pair]
            z = _sample_index(np.cumsum(nu_vec), rng.random())
            return CoupledState(z, z, 1)
        # eps_k = 1 never reaches here: the coin is certain heads
        nu_vec = cfg.cert.nu[pair]
        r1 = np.cumsum(_residual_row(rows[s.x], nu_vec, eps_k))
        r2 = np.cumsum(_residual_row(rows[s.x_prime], nu_vec, eps_k))
        return CoupledState(_sample_index(r1, rng.random()), _sample_index(r2, rng.random()), 0)
    x_new = _sample_index(np.cumsum(rows[s.x]), rng.random())
    xp_new = _sample_index(np.cumsum(rows[s.x_prime]), rng.random())
    return CoupledState(x_new, xp_new, 0)


def _probability_vector(xi: FiniteSignedMeasure, size: int, name: str) -> np.ndarray:
    v = xi.values
    if v.size != size:
        raise ValueError(f"{name} has {v.size} entries but the kernel has {size} states")
    if np.any(v < -1e-15) or abs(v.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a probability vector")
    v = np.clip(v, 0.0, None)
    return v / v.sum()


def _cum_rows(rows: np.ndarray) -> np.ndarray:
    c = np.cumsum(rows, axis=-1)
    c[..., -1] = 1.0
    return c


def _step_tables(cfg: CouplingConfig, eps_k: float):
    """Per-pair cumulative rows for the shared draw and both residuals."""
    size = cfg.kernel.size
    nu_cum = np.ones((size * size, size))
    res1_cum = np.ones((size * size, size))
    res2_cum = np.ones((size * size, size))
    for (i, j) in cfg.cert.coupling_set:
        nu_vec = cfg.cert.nu[(i, j)]
        p = i * size + j
        nu_cum[p] = _cum_rows(nu_vec)
        if eps_k < 1.0:
            res1_cum[p] = _cum_rows(_residual_row(cfg.kernel.rows[i], nu_vec, eps_k))
            res2_cum[p] = _cum_rows(_residual_row(cfg.kernel.rows[j], nu_vec, eps_k))
    return nu_cum, res1_cum, res2_cum


def _simulate_paths(cfg: CouplingConfig, xi: FiniteSignedMeasure, xi_prime: FiniteSignedMeasure,
                    horizon: int, replicas: int):
    """Vectorized coupled trajectories; returns (T, x_final, xp_final).

    RNG layout (counter-based generator keyed by the seed, so runs are
    bit-identical): one uniform array per initial coordinate, then per step
    the triple (coin, first move, second move); replica r always consumes
    lane r of each array.
    """
    size = cfg.kernel.size
    p_init = _probability_vector(xi, size, "xi")
    pp_init = _probability_vector(xi_prime, size, "xi_prime")
    if isinstance(cfg.eps, tuple) and len(cfg.eps) < horizon:
        raise ValueError(f"eps schedule of length {len(cfg.eps)} does not cover horizon {horizon}")
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    x = np.searchsorted(_cum_rows(p_init), rng.random(replicas), side="right").astype(np.int64)
    xp = np.searchsorted(_cum_rows(pp_init), rng.random(replicas), side="right").astype(np.int64)
    np.clip(x, 0, size - 1, out=x)
    np.clip(xp, 0, size - 1, out=xp)
    inset = np.zeros(size * size, dtype=bool)
    for (i, j) in cfg.cert.coupling_set:
        inset[i * size + j] = True
    p_cum = _cum_rows(cfg.kernel.rows.copy())
    bell = np.zeros(replicas, dtype=bool)
    T = np.full(replicas, horizon + 1, dtype=np.int64)
    cached_eps = None
    tables = None
    for k in range(1, horizon + 1):
        eps_k = cfg.eps_at(k)
        if tables is None or eps_k != cached_eps:
            tables = _step_tables(cfg, eps_k)
            cached_eps = eps_k
        nu_cum, res1_cum, res2_cum = tables
        u_coin = rng.random(replicas)
        u1 = rng.random(replicas)
        u2 = rng.random(replicas)
        pair_idx = x * size + xp
        active_in = ~bell & inset[pair_idx]
        heads = active_in & (u_coin < eps_k)
        tails = active_in & ~heads
        outside = ~bell & ~inset[pair_idx]
        new_x = x.copy()
        new_xp = xp.copy()
        if np.any(bell):
            idx = np.flatnonzero(bell)
            draw = _gather_sample(p_cum, x[idx], u1[idx])
            new_x[idx] = draw
            new_xp[idx] = draw
        if np.any(heads):
            idx = np.flatnonzero(heads)
            draw = _gather_sample(nu_cum, pair_idx[idx], u1[idx])
            new_x[idx] = draw
            new_xp[idx] = draw
            T[idx] = k
        if np.any(tails):
            idx = np.flatnonzero(tails)
            new_x[idx] = _gather_sample(res1_cum, pair_idx[idx], u1[idx])
            new_xp[idx] = _gather_sample(res2_cum, pair_idx[idx], u2[idx])
        if np.any(outside):
            idx = np.flatnonzero(outside)
            new_x[idx] = _gather_sample(p_cum, x[idx], u1[idx])
            new_xp[idx] = _gather_sample(p_cum, xp[idx], u2[idx])
        bell = bell | heads
        x, xp = new_x, new_xp
    return T, x, xp


def _gather_sample(cum_table: np.ndarray, row_idx: np.ndarray, u: np.ndarray) -> np.ndarray:
    rows = cum_table[row_idx]
    out = (u[:, None] >= rows).sum(axis=1)
    return np.minimum(out, cum_table.shape[-1] - 1)


def run_coupling(cfg: CouplingConfig, xi: FiniteSignedMeasure, xi_prime: FiniteSignedMeasure,
                 horizon: int, replicas: int) -> CouplingRunResult:
    """Replicated coupling run: merge-time histogram and TV upper estimates.

    Deterministic for fixed (config, seed, horizon, replicas): the simulator
    uses a counter-based generator with a fixed draw layout.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    T, _, _ = _simulate_paths(cfg, xi, xi_prime, horizon, replicas)
    t_counts = np.bincount(T, minlength=horizon + 2)[1 : horizon + 1]
    censored = int(np.sum(T > horizon))
    survivors = replicas - np.cumsum(t_counts)
    p = survivors / replicas
    # add-half adjusted standard error: stays positive at zero counts, where
    # the plug-in estimate degenerates and understates the uncertainty
    p_adj = (survivors + 0.5) / (replicas + 1.0)
    se = np.sqrt(p_adj * (1.0 - p_adj) / (replicas + 1.0))
    return CouplingRunResult(
        replicas=replicas,
        horizon=horizon,
        t_counts=tuple(int(c) for c in t_counts),
        censored=censored,
        p_uncoupled=tuple(float(v) for v in p),
        se=tuple(float(v) for v in se),
        tv_upper=tuple(float(2.0 * v) for v in p),
    )


def _eps_for_step(cert: MinorizationCertificate, eps, k: int) -> float:
    if eps is None:
        return cert.epsilon
    if np.ndim(eps) == 0:
        return float(eps)
    return float(eps[k - 1])


def _uncoupled_matrix(kernel: FiniteKernel, cert: MinorizationCertificate, eps_k: float) -> np.ndarray:
    """Transition matrix of the still-apart pair block (bell stays 0).

    Coupling-set rows carry the tails weight (1-eps) times the residual
    product; other rows are the independent product.
    """
    size = kernel.size
    rows = kernel.rows
    M = np.empty((size * size, size * size))
    for i in range(size):
        for j in range(size):
            M[i * size + j] = np.outer(rows[i], rows[j]).ravel()
    for (i, j) in cert.coupling_set:
        if eps_k == 0.0:
            continue
        if eps_k == 1.0:
            M[i * size + j] = 0.0
            continue
        nu_vec = cert.nu[(i, j)]
        r1 = _residual_row(rows[i], nu_vec, eps_k)
        r2 = _residual_row(rows[j], nu_vec, eps_k)
        M[i * size + j] = (1.0 - eps_k) * np.outer(r1, r2).ravel()
    return M


def exact_uncoupled_mass(kernel: FiniteKernel, cert: MinorizationCertificate,
                         xi: FiniteSignedMeasure, xi_prime: FiniteSignedMeasure,
                         n: int, eps=None) -> np.ndarray:
    """Exact P(pair still apart after k steps) for k = 0..n."""
    cert.check_against(kernel)
    size = kernel.size
    v = np.outer(
        _probability_vector(xi, size, "xi"), _probability_vector(xi_prime, size, "xi_prime")
    ).ravel()
    out = [1.0]
    for k in range(1, n + 1):
        v = v @ _uncoupled_matrix(kernel, cert, _eps_for_step(cert, eps, k))
        out.append(float(v.sum()))
    return np.asarray(out)


def weighted_identity_tables(kernel: FiniteKernel, cert: MinorizationCertificate,
                             xi: FiniteSignedMeasure, xi_prime: FiniteSignedMeasure,
                             n: int, eps=None) -> tuple[np.ndarray, np.ndarray]:
    """Exact path tables of both sides of the survival-weight identity.

    Entry (z_0, ..., z_n) of the left table is the bell-chain probability of
    that still-apart pair path (coin enumerated: tails factors appear on
    coupling-set visits).  The right table weights the residual product
    chain by the accumulated survival factors (1 - eps_k) per coupling-set
    visit.  Equality entrywise makes both sides agree for every path
    functional.
    """
    cert.check_against(kernel)
    size = kernel.size
    n_pairs = size * size
    if n_pairs ** (n + 1) > MAX_PATH_COUNT:
        raise ValueError(
            f"path table would hold {n_pairs ** (n + 1)} entries; limit is {MAX_PATH_COUNT}"
        )
    init = np.outer(
        _probability_vector(xi, size, "xi"), _probability_vector(xi_prime, size, "xi_prime")
    ).ravel()
    inset = np.zeros(n_pairs, dtype=bool)
    for (i, j) in cert.coupling_set:
        inset[i * size + j] = True

    lhs = init.copy()
    rhs = init.copy()
    for k in range(1, n + 1):
        eps_k = _eps_for_step(cert, eps, k)
        m_lhs = _uncoupled_matrix(kernel, cert, eps_k)
        m_rhs = _pstar_matrix(kernel, cert, eps_k) * np.where(inset, 1.0 - eps_k, 1.0)[:, None]
        lhs = lhs[..., None] * m_lhs
        rhs = rhs[..., None] * m_rhs
    return lhs, rhs


def _pstar_matrix(kernel: FiniteKernel, cert: MinorizationCertificate, eps_k: float) -> np.ndarray:
    """Residual product chain matrix, built through the product-kernel path
    so the identity check exercises an independent construction."""
    size = kernel.size
    if eps_k == 0.0:
        M = np.empty((size * size, size * size))
        for i in range(size):
            for j in range(size):
                M[i * size + j] = np.outer(kernel.rows[i], kernel.rows[j]).ravel()
        return M
    if eps_k == 1.0:
        # zero survival weight multiplies these rows; content is irrelevant,
        # use the independent product to keep the matrix stochastic
        M = np.empty((size * size, size * size))
        for i in range(size):
            for j in range(size):
                M[i * size + j] = np.outer(kernel.rows[i], kernel.rows[j]).ravel()
        return M
    cert_k = MinorizationCertificate(
        coupling_set=cert.coupling_set, epsilon=eps_k, nu=dict(cert.nu)
    )
    return build_product_pstar(kernel, cert_k).kernel.rows


def weighted_identity_check(kernel: FiniteKernel, cert: MinorizationCertificate,
                            xi: FiniteSignedMeasure, xi_prime: FiniteSignedMeasure,
                            n: int, phi: Callable | None = None,
                            eps=None) -> tuple[float, float, float]:
    """Evaluate both sides of the survival-weight identity for one functional.

    phi maps a path (tuple of (x, x') index pairs, length n+1) to a real;
    None means the constant functional 1, whose left side is the probability
    the pair is still apart at time n.
    """
    lhs_t, rhs_t = weighted_identity_tables(kernel, cert, xi, xi_prime, n, eps=eps)
    if phi is None:
        lhs, rhs = float(lhs_t.sum()), float(rhs_t.sum())
        return lhs, rhs, abs(lhs - rhs)
    size = kernel.size
    lhs = rhs = 0.0
    for idx in np.ndindex(lhs_t.shape):
        path = tuple(divmod(z, size) for z in idx)
        w = phi(path)
        if w != 0.0:
            lhs += w * lhs_t[idx]
            rhs += w * rhs_t[idx]
    return float(lhs), float(rhs), abs(float(lhs) - float(rhs))


@dataclass(frozen=True)
class MarginalReport:
    """Marginal-law consistency of the coupled construction.

    exact_gap_* are sup-norm gaps between the exact bell-chain marginal and
    the plain n-step law; p_value_* are chi-square p-values of the simulated
    marginals against the same law (None when no replicas were run).
    """

    exact_gap_x: float
    exact_gap_xp: float
    p_value_x: float | None
    p_value_xp: float | None
    passed: bool


def _exact_bell_marginals(kernel: FiniteKernel, cert: MinorizationCertificate,
                          xi: FiniteSignedMeasure, xi_prime: FiniteSignedMeasure,
                          n: int, eps=None) -> tuple[np.ndarray, np.ndarray]:
    size = kernel.size
    v0 = np.outer(
        _probability_vector(xi, size, "xi"), _probability_vector(xi_prime, size, "xi_prime")
    ).ravel()
    v1 = np.zeros(size)
    for k in range(1, n + 1):
        eps_k = _eps_for_step(cert, eps, k)
        inflow = np.zeros(size)
        for (i, j) in cert.coupling_set:
            inflow += v0[i * size + j] * eps_k * cert.nu[(i, j)]
        v1 = v1 @ kernel.rows + inflow
        v0 = v0 @ _uncoupled_matrix(kernel, cert, eps_k)
    grid = v0.reshape(size, size)
    return grid.sum(axis=1) + v1, grid.sum(axis=0) + v1


def _chi_square_p(counts: np.ndarray, probs: np.ndarray) -> float:
    """Chi-square goodness-of-fit p-value with low-expectation bins merged."""
    total = counts.sum()
    expected = probs * total
    order = np.argsort(expected)[::-1]
    obs_bins, exp_bins = [], []
    spill_obs = spill_exp = 0.0
    for i in order:
        if expected[i] >= 5.0:
            obs_bins.append(float(counts[i]))
            exp_bins.append(float(expected[i]))
        else:
            spill_obs += float(counts[i])
            spill_exp += float(expected[i])
    if spill_exp > 0.0:
        if spill_exp >= 5.0 or not exp_bins:
            obs_bins.append(spill_obs)
            exp_bins.append(spill_exp)
        else:
            obs_bins[-1] += spill_obs
            exp_bins[-1] += spill_exp
    if len(exp_bins) < 2:
        return 1.0
    obs = np.asarray(obs_bins)
    exp = np.asarray(exp_bins)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return float(stats.chi2.sf(stat, df=len(exp_bins) - 1))


def marginal_consistency_check(cfg: CouplingConfig, xi: FiniteSignedMeasure,
                               xi_prime: FiniteSignedMeasure, n: int,
                               replicas: int = 0,
                               significance: float = 0.001) -> MarginalReport:
    """Check that each coupled coordinate obeys the plain n-step law.

    Exact part: propagate the full bell chain and compare each marginal to
    the direct n-step propagation (tolerance 1e-10).  Monte Carlo part (when
    replicas > 0): chi-square test of the simulated time-n marginals at the
    given significance.
    """
    exact_x, exact_xp = _exact_bell_marginals(cfg.kernel, cfg.cert, xi, xi_prime, n, eps=cfg.eps)
    ref_x = propagate(xi, cfg.kernel, n).values
    ref_xp = propagate(xi_prime, cfg.kernel, n).values
    gap_x = float(np.max(np.abs(exact_x - ref_x)))
    gap_xp = float(np.max(np.abs(exact_xp - ref_xp)))
    p_x = p_xp = None
    if replicas > 0:
        _, x_fin, xp_fin = _simulate_paths(cfg, xi, xi_prime, n, replicas)
        size = cfg.kernel.size
        p_x = _chi_square_p(np.bincount(x_fin, minlength=size), ref_x)
        p_xp = _chi_square_p(np.bincount(xp_fin, minlength=size), ref_xp)
    passed = gap_x <= 1e-10 and gap_xp <= 1e-10
    if p_x is not None:
        passed = passed and p_x >= significance and p_xp >= significance
    return MarginalReport(gap_x, gap_xp, p_x, p_xp, passed)
