"""Explicit convergence bounds from minorization and drift constants.

Closed-form total-variation and f-norm bounds for homogeneous and
time-varying Markov chains, the log-decay rate certificate, and the
translation of univariate drift constants into bivariate ones.  All
functions are pure and return raw formula values; nothing is clamped
at the trivial TV ceiling of 2 (callers may clamp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

__all__ = [
    "HomogeneousBoundInput",
    "SConditionInput",
    "InhomogeneousSchedule",
    "BoundCurve",
    "RateBound",
    "Theorem5Result",
    "bound_tv_homog",
    "bound_f_homog",
    "optimize_j",
    "bound_curve_homog",
    "rate_bound",
    "derive_S_params",
    "theorem5_bounds",
    "extremal_subset_product",
    "bound_inhom",
    "optimize_j_inhom",
    "bound_curve_inhom",
]

Which = Literal["tv", "f"]

# Direct float arithmetic is kept below these thresholds; past them the
# products lambda^n * B^(j-1) are evaluated in log space to dodge
# overflow/underflow artifacts (notably 0 * inf).
LOG_SPACE_N = 200
LOG_SPACE_B = 10.0

_EXP_OVERFLOW = 709.0  # just under log(float max)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _exp_safe(logv: float) -> float:
    if logv > _EXP_OVERFLOW:
        return math.inf
    return math.exp(logv)


def _uses_log_space(n: int, b_max: float) -> bool:
    return n > LOG_SPACE_N or b_max > LOG_SPACE_B


@dataclass(frozen=True)
class HomogeneousBoundInput:
    """Constants feeding the homogeneous two-term bounds.

    epsilon: per-visit coupling probability on the coupling set.
    lam: geometric drift factor, strictly inside (0, 1).
    b: drift offset collected on the coupling set.
    B: growth factor of the weighted residual on the coupling set, >= 1.
    v0: initial pair weight (the product initial law applied to the
        pair weight function), >= 1.
    """

    epsilon: float
    lam: float
    b: float
    B: float
    v0: float

    def __post_init__(self) -> None:
        _require(0.0 < self.epsilon <= 1.0, "epsilon must lie in (0,1]")
        _require(0.0 < self.lam < 1.0, "lambda must lie in (0,1)")
        _require(self.b >= 0.0, "b must be >= 0")
        _require(self.B >= 1.0, "B must be >= 1")
        _require(self.v0 >= 1.0, "v0 must be >= 1")


@dataclass(frozen=True)
class SConditionInput:
    """Univariate drift constants at level c, plus initial weights.

    Requires the stability condition (S): lambda_c + b_c/(1+c) < 1.
    sup_rv is the supremum of the residual-weighted drift over the small
    set; when None a conservative surrogate is derived from the drift
    constants themselves.
    """

    epsilon: float
    lambda_c: float
    b_c: float
    c: float
    xi_v: float
    xi_prime_v: float
    sup_rv: float | None = None

    def __post_init__(self) -> None:
        _require(0.0 < self.epsilon <= 1.0, "epsilon must lie in (0,1]")
        _require(0.0 < self.lambda_c < 1.0, "lambda_c must lie in (0,1)")
        _require(self.b_c >= 0.0, "b_c must be >= 0")
        _require(self.c >= 1.0, "c must be >= 1")
        _require(self.xi_v >= 1.0, "xi_v must be >= 1")
        _require(self.xi_prime_v >= 1.0, "xi_prime_v must be >= 1")
        _require(
            self.lambda_c + self.b_c / (1.0 + self.c) < 1.0,
            "stability condition (S) violated: lambda_c + b_c/(1+c) must be < 1",
        )


@dataclass(frozen=True)
class InhomogeneousSchedule:
    """Per-step constants of a time-varying chain; step k uses entry k.

    All four sequences must share one length; entries are validated to
    the same ranges as the homogeneous input (with the boundary values
    0 and 1 admitted where harmless).
    """

    eps_seq: tuple[float, ...]
    lambda_seq: tuple[float, ...]
    b_seq: tuple[float, ...]
    B_seq: tuple[float, ...]
    v0: float

    def __post_init__(self) -> None:
        for name in ("eps_seq", "lambda_seq", "b_seq", "B_seq"):
            object.__setattr__(self, name, tuple(float(x) for x in getattr(self, name)))
        k = len(self.eps_seq)
        _require(k >= 1, "schedule must have at least one step")
        _require(
            len(self.lambda_seq) == k and len(self.b_seq) == k and len(self.B_seq) == k,
            "schedule sequences must share one length",
        )
        _require(all(0.0 <= e <= 1.0 for e in self.eps_seq), "eps_seq entries must lie in [0,1]")
        _require(all(0.0 <= l <= 1.0 for l in self.lambda_seq), "lambda_seq entries must lie in [0,1]")
        _require(all(b >= 0.0 for b in self.b_seq), "b_seq entries must be >= 0")
        _require(all(B >= 1.0 for B in self.B_seq), "B_seq entries must be >= 1")
        _require(self.v0 >= 1.0, "v0 must be >= 1")

    def __len__(self) -> int:
        return len(self.eps_seq)


@dataclass(frozen=True)
class BoundCurve:
    """Optimized bound values over a horizon range, one row per n."""

    n: tuple[int, ...]
    j_star_tv: tuple[int, ...]
    tv_bound: tuple[float, ...]
    j_star_f: tuple[int, ...]
    f_bound: tuple[float, ...]

    def rows(self):
        return zip(self.n, self.j_star_tv, self.tv_bound, self.j_star_f, self.f_bound)


def _check_nj(n: int, j: int) -> None:
    _require(n >= 1, "n must be >= 1")
    _require(1 <= j <= n + 1, "j must lie in {1..n+1}")


def _drift_tail(lam: float, n: int, B: float, k: int, weight: float) -> float:
    """lam^n * B^k * weight, switching to log space past the thresholds."""
    if _uses_log_space(n, B):
        if lam == 0.0 or weight == 0.0:
            return 0.0
        return _exp_safe(n * math.log(lam) + k * math.log(B) + math.log(weight))
    return lam**n * B**k * weight


def bound_tv_homog(inp: HomogeneousBoundInput, n: int, j: int) -> float:
    """Two-term TV bound at horizon n with coupling-attempt budget j.

    Returns the raw formula value (it may exceed the trivial ceiling 2):
    2(1-eps)^j 1(j<=n) + 2 lam^n B^(j-1) v0.
    """
    _check_nj(n, j)
    head = 2.0 * (1.0 - inp.epsilon) ** j if j <= n else 0.0
    return head + 2.0 * _drift_tail(inp.lam, n, inp.B, j - 1, inp.v0)


def bound_f_homog(inp: HomogeneousBoundInput, n: int, j: int) -> float:
    """Weighted-norm analogue of bound_tv_homog.

    2(1-eps)^j (b/(1-lam) + lam^n v0) 1(j<=n) + 2 lam^n B^(j-1) v0.
    """
    _check_nj(n, j)
    tail = _drift_tail(inp.lam, n, inp.B, j - 1, inp.v0)
    if j <= n:
        lam_n_v0 = _drift_tail(inp.lam, n, 1.0, 0, inp.v0)
        head = 2.0 * (1.0 - inp.epsilon) ** j * (inp.b / (1.0 - inp.lam) + lam_n_v0)
    else:
        head = 0.0
    return head + 2.0 * tail


def optimize_j(inp: HomogeneousBoundInput, n: int, which: Which = "tv") -> tuple[int, float]:
    """Exhaustively minimize the chosen bound over j in {1..n+1}.

    Returns (j_star, value); ties resolve to the smallest j.
    """
    _require(which in ("tv", "f"), "which must be 'tv' or 'f'")
    fn = bound_tv_homog if which == "tv" else bound_f_homog
    best_j, best = 1, fn(inp, n, 1)
    for j in range(2, n + 2):
        val = fn(inp, n, j)
        if val < best:
            best_j, best = j, val
    return best_j, best


def bound_curve_homog(inp: HomogeneousBoundInput, n_max: int, n_min: int = 1) -> BoundCurve:
    """j-optimized TV and f bounds for every horizon in [n_min, n_max]."""
    _require(1 <= n_min <= n_max, "need 1 <= n_min <= n_max")
    ns, jt, tv, jf, fv = [], [], [], [], []
    for n in range(n_min, n_max + 1):
        j_tv, v_tv = optimize_j(inp, n, "tv")
        j_f, v_f = optimize_j(inp, n, "f")
        ns.append(n)
        jt.append(j_tv)
        tv.append(v_tv)
        jf.append(j_f)
        fv.append(v_f)
    return BoundCurve(tuple(ns), tuple(jt), tuple(tv), tuple(jf), tuple(fv))


@dataclass(frozen=True)
class RateBound:
    """Certified asymptotic decay rate of log(bound)/n.

    rate is negative (a decay exponent per step).  balanced marks the
    branch where the coupling and drift terms trade off; in that branch
    witness_j(n) is the index realizing the rate at horizon n.
    """

    rate: float
    epsilon: float
    lam: float
    M: float
    balanced: bool

    def witness_j(self, n: int) -> int | None:
        if not self.balanced:
            return None
        gap = math.log((self.M - self.epsilon) / self.lam) - math.log1p(-self.epsilon)
        return math.floor(-math.log(self.lam) * n / gap)


def rate_bound(epsilon: float, lam: float, M: float) -> RateBound:
    """Decay-rate certificate from (epsilon, lam, M), M = sup pair drift.

    Rate is -log(lam) log(1-eps) / (log((M-eps)/lam) - log(1-eps)) when
    (M-eps)/lam >= 1, else log(lam); epsilon = 1 degenerates to log(lam).
    """
    _require(0.0 < epsilon <= 1.0, "epsilon must lie in (0,1]")
    _require(0.0 < lam < 1.0, "lambda must lie in (0,1)")
    _require(M >= epsilon, "M must be >= epsilon")
    log_lam = math.log(lam)
    if epsilon < 1.0 and (M - epsilon) / lam >= 1.0:
        gap = math.log((M - epsilon) / lam) - math.log1p(-epsilon)
        rate = -log_lam * math.log1p(-epsilon) / gap
        return RateBound(rate, epsilon, lam, M, balanced=True)
    return RateBound(log_lam, epsilon, lam, M, balanced=False)


def derive_S_params(lambda_c: float, b_c: float, c: float, epsilon: float) -> tuple[float, float]:
    """Translate univariate drift constants at level c into a bivariate pair.

    lambda = lambda_c + b_c/(1+c);
    b = (c eps lambda_c/(1-eps) - c b_c/(1+c)) v 0 + (b_c - eps)/(1-eps).
    """
    _require(0.0 < lambda_c < 1.0, "lambda_c must lie in (0,1)")
    _require(b_c >= 0.0, "b_c must be >= 0")
    _require(c >= 1.0, "c must be >= 1")
    _require(0.0 <= epsilon < 1.0, "epsilon must lie in [0,1) for this translation")
    lam = lambda_c + b_c / (1.0 + c)
    if lam >= 1.0:
        raise ValueError(
            f"stability condition (S) violated: lambda_c + b_c/(1+c) = {lam:.6g} >= 1"
        )
    gain = c * epsilon * lambda_c / (1.0 - epsilon) - c * b_c / (1.0 + c)
    b = max(gain, 0.0) + (b_c - epsilon) / (1.0 - epsilon)
    return lam, b


@dataclass(frozen=True)
class Theorem5Result:
    """Bounds evaluated from univariate drift constants, plus the derived
    intermediates for inspection."""

    tv_bound: float
    f_bound: float
    lam: float
    b: float
    B: float
    sup_rv: float
    surrogate_used: bool
    clamped: bool


def theorem5_bounds(inp: SConditionInput, n: int, j: int) -> Theorem5Result:
    """TV and f bounds driven directly by univariate drift constants.

    Derives (lam, b) via derive_S_params and B = 1 v ((1-eps)/lam sup_rv);
    when sup_rv is not supplied the surrogate
    (lambda_c c + b_c - eps)/(1-eps) is used, clamped at 0 (flagged) if
    it comes out negative.
    """
    _check_nj(n, j)
    lam, b = derive_S_params(inp.lambda_c, inp.b_c, inp.c, inp.epsilon)
    if inp.sup_rv is None:
        sup_rv = (inp.lambda_c * inp.c + inp.b_c - inp.epsilon) / (1.0 - inp.epsilon)
        surrogate_used = True
    else:
        sup_rv = float(inp.sup_rv)
        surrogate_used = False
    clamped = sup_rv < 0.0
    if clamped:
        sup_rv = 0.0
    B = max(1.0, (1.0 - inp.epsilon) / lam * sup_rv)
    weight = inp.xi_v + inp.xi_prime_v
    tail = _drift_tail(lam, n, B, j - 1, weight)
    if j <= n:
        survive = 2.0 * (1.0 - inp.epsilon) ** j
        tv_head = survive
        f_head = survive * (b / (1.0 - lam) + _drift_tail(lam, n, 1.0, 0, weight) / 2.0)
    else:
        tv_head = f_head = 0.0
    return Theorem5Result(
        tv_bound=tv_head + tail,
        f_bound=f_head + tail,
        lam=lam,
        b=b,
        B=B,
        sup_rv=sup_rv,
        surrogate_used=surrogate_used,
        clamped=clamped,
    )


def extremal_subset_product(values: Sequence[float], j: int) -> float:
    """Largest product over j-element subsets of nonnegative values.

    Equals the product of the j largest entries; j = 0 gives the empty
    product 1.
    """
    vals = np.asarray(values, dtype=float)
    _require(vals.ndim == 1, "values must be one-dimensional")
    _require(bool(np.all(vals >= 0.0)), "values must be >= 0")
    _require(0 <= j <= vals.size, "j must lie in {0..len(values)}")
    if j == 0:
        return 1.0
    top = np.sort(vals)[::-1][:j]
    if _uses_log_space(vals.size, float(top[0])):
        with np.errstate(divide="ignore"):
            return _exp_safe(float(np.sum(np.log(top))))
    return float(np.prod(top))


def _dn(lams: Sequence[float], bs: Sequence[float], v0: float) -> float:
    # forward recurrence d <- lam_k d + b_k; algebraically the full
    # sum-of-products expansion, without ever forming it
    d = v0
    for lam_k, b_k in zip(lams, bs):
        d = lam_k * d + b_k
    return d


def _inhom_tail(lams: Sequence[float], Bs: Sequence[float], j_minus_1: int, v0: float) -> float:
    """(prod lams) * B_(j-1,n) * v0 computed jointly (log space past thresholds)."""
    n = len(lams)
    b_max = max(Bs) if Bs else 1.0
    if _uses_log_space(n, b_max):
        top = np.sort(np.asarray(Bs, dtype=float))[::-1][:j_minus_1]
        with np.errstate(divide="ignore"):
            log_lam = float(np.sum(np.log(np.asarray(lams, dtype=float))))
            log_b = float(np.sum(np.log(top)))
        if math.isinf(log_lam) and log_lam < 0:
            return 0.0
        return _exp_safe(log_lam + log_b + math.log(v0))
    prod_lam = float(np.prod(np.asarray(lams, dtype=float)))
    return prod_lam * extremal_subset_product(Bs, j_minus_1) * v0


def bound_inhom(s: InhomogeneousSchedule, n: int, j: int, which: Which = "tv") -> float:
    """Time-varying two-term bound at horizon n with attempt budget j.

    TV: 2 (1-eps)_(j,n) 1(j<=n) + 2 (prod lam_k) B_(j-1,n) v0, where
    (1-eps)_(j,n) and B_(j-1,n) are extremal j-subset products over the
    first n steps.  The f variant multiplies the first term by D_n from
    the recurrence D_0 = v0, D_(k+1) = lam_k D_k + b_k.
    """
    _require(which in ("tv", "f"), "which must be 'tv' or 'f'")
    _require(n >= 1, "n must be >= 1")
    _require(len(s) >= n, "schedule must cover n steps")
    _require(1 <= j <= n + 1, "j must lie in {1..n+1}")
    eps = s.eps_seq[:n]
    lams = s.lambda_seq[:n]
    tail = 2.0 * _inhom_tail(lams, s.B_seq[:n], j - 1, s.v0)
    if j > n:
        return tail
    survive = extremal_subset_product([1.0 - e for e in eps], j)
    if which == "tv":
        return 2.0 * survive + tail
    return 2.0 * survive * _dn(lams, s.b_seq[:n], s.v0) + tail


def optimize_j_inhom(s: InhomogeneousSchedule, n: int, which: Which = "tv") -> tuple[int, float]:
    """Exhaustive j-minimization of bound_inhom; smallest j wins ties."""
    _require(n >= 1, "n must be >= 1")
    best_j, best = 1, bound_inhom(s, n, 1, which)
    for j in range(2, n + 2):
        val = bound_inhom(s, n, j, which)
        if val < best:
            best_j, best = j, val
    return best_j, best


def bound_curve_inhom(s: InhomogeneousSchedule, n_max: int, n_min: int = 1) -> BoundCurve:
    """j-optimized time-varying bounds for every horizon in [n_min, n_max]."""
    _require(1 <= n_min <= n_max, "need 1 <= n_min <= n_max")
    _require(len(s) >= n_max, "schedule must cover n_max steps")
    ns, jt, tv, jf, fv = [], [], [], [], []
    for n in range(n_min, n_max + 1):
        j_tv, v_tv = optimize_j_inhom(s, n, "tv")
        j_f, v_f = optimize_j_inhom(s, n, "f")
        ns.append(n)
        jt.append(j_tv)
        tv.append(v_tv)
        jf.append(j_f)
        fv.append(v_f)
    return BoundCurve(tuple(ns), tuple(jt), tuple(tv), tuple(jf), tuple(fv))
