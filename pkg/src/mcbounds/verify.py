"""Randomized certified-chain verification suites.

Builds seeded finite chains carrying a minorization certificate, drift data
for the paired kernel, and derived bound inputs, then checks the whole
pipeline against exact propagation oracles and Monte Carlo runs: bound
domination, rate certification, the exact coupling identity, consistency of
the derived stability constants, and coupling-simulation validity.  Shared
by the test suite and the command-line checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import HomogeneousBoundInput, derive_S_params, optimize_j, rate_bound
from .chain import (
    DegenerateMinorizationError,
    DriftResult,
    DriftViolationError,
    FiniteKernel,
    MinorizationCertificate,
    ProductKernel,
    WeightFunction,
    build_product_pstar,
    delta_measure,
    extract_minorization,
    pair_mean_weight,
    sup_pstar_weight,
    verify_drift,
)
from .coupling import CouplingConfig, run_coupling, weighted_identity_tables

__all__ = [
    "SuiteInstance",
    "CheckResult",
    "DistanceCurves",
    "SUITE_SEED",
    "build_suite",
    "exact_distance_curves",
    "coupled_sup_on_set",
    "check_domination",
    "check_rate",
    "check_identity",
    "check_s_consistency",
    "check_coupling",
    "run_verification",
]

SUITE_SEED = 20260815
_SIZES = (2, 3, 4, 5, 6)


@dataclass(frozen=True)
class SuiteInstance:
    """One certified random chain with every derived quantity the checks need."""

    index: int
    kernel: FiniteKernel
    weight: WeightFunction
    small_set: frozenset
    uni_drift: DriftResult
    cert: MinorizationCertificate
    pstar: ProductKernel
    pair_weight: WeightFunction
    pair_drift: DriftResult
    pair_level: float
    bound_input: HomogeneousBoundInput
    x0: int
    x0_prime: int

    @property
    def size(self) -> int:
        return self.kernel.size

    @property
    def s_capacity(self) -> float:
        """c in the stability condition: the coupling set is {Vbar <= 1 + c}."""
        return self.pair_level - 1.0

    @property
    def satisfies_S(self) -> bool:
        return self.uni_drift.lam + self.uni_drift.b / (1.0 + self.s_capacity) < 1.0


_ROW_BITS = 30


def _exact_stochastic(rows: np.ndarray) -> np.ndarray:
    """Round rows to multiples of 2**-_ROW_BITS that sum to exactly 1.

    Float-normalized rows sum to 1 only within rounding error, which leaves
    a ~1e-16 mass defect; under exact propagation that defect sits in an
    eigenvalue-one direction and floors the marginal gap near 1e-16 forever.
    Snapping each row to dyadic rationals with an exact common denominator
    keeps the kernel honestly stochastic in exact arithmetic.
    """
    scale = 1 << _ROW_BITS
    ints = np.floor(rows * scale).astype(np.int64)
    ints[np.arange(rows.shape[0]), rows.argmax(axis=1)] += scale - ints.sum(axis=1)
    if (ints <= 0).any():
        raise ValueError("row entry too small to quantize")
    return ints / float(scale)


def build_suite(count: int = 20, seed: int = SUITE_SEED) -> list[SuiteInstance]:
    """Seeded random chains kept only when both drift checks certify lam < 1.

    Sizes cycle through 2..6 so small state spaces are always represented.
    Rows are normalized gamma draws with a positivity floor, weights are
    shifted gamma draws with minimum exactly 1, and both the small set and
    the coupling set are level sets of the weight.
    """
    rng = np.random.default_rng(seed)
    out: list[SuiteInstance] = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 400 * count:
            raise RuntimeError("suite generation failed to certify enough chains")
        size = _SIZES[len(out) % len(_SIZES)]
        # cycle spiky rows / near-uniform rows / contractive rows so hard-mixing,
        # strongly stable, and sharply drifting instances are all represented
        family = len(out) % 3
        v = rng.gamma(1.0, 2.0 if family == 0 else 2.5, size)
        v = np.maximum(1.0 + v - v.min(), 1.0)
        if family == 2:
            # rows pull toward low-weight states, giving strong pair drift
            raw = np.exp(-1.2 * (v[None, :] - v.min())) + 0.02 + 0.05 * rng.random((size, size))
        else:
            raw = rng.gamma(0.6 if family == 0 else 3.0, 1.0, (size, size)) + 1e-3
        kernel = FiniteKernel(states=tuple(range(size)),
                              rows=_exact_stochastic(raw / raw.sum(axis=1, keepdims=True)))
        weight = WeightFunction(v)
        vbar = (v[:, None] + v[None, :]) / 2.0
        q = rng.uniform(0.3, 0.7) if family == 0 else rng.uniform(0.75, 0.95)
        level = max(2.0, float(np.quantile(vbar, q)))
        pairs = {(i, j) for i in range(size) for j in range(size) if vbar[i, j] <= level}
        small_set = frozenset(i for i in range(size) if v[i] <= level)
        if len(small_set) == size or not small_set:
            continue
        try:
            uni = verify_drift(kernel, weight, small_set)
            cert = extract_minorization(kernel, pairs)
            if cert.epsilon >= 1.0 - 1e-9:
                continue
            pstar = build_product_pstar(kernel, cert)
            pw = pair_mean_weight(weight)
            flat = {i * size + j for (i, j) in pairs}
            if len(flat) == size * size:
                continue
            pair_drift = verify_drift(pstar, pw, flat)
        except (DriftViolationError, DegenerateMinorizationError):
            continue
        B = max(1.0, (1.0 - cert.epsilon) / pair_drift.lam * sup_pstar_weight(pstar, pw))
        x0 = int(np.argmax(v))
        x0p = int(np.argmin(v))
        if x0 == x0p:
            x0p = (x0 + 1) % size
        bound_input = HomogeneousBoundInput(
            epsilon=cert.epsilon,
            lam=pair_drift.lam,
            b=pair_drift.b,
            B=B,
            v0=float(vbar[x0, x0p]),
        )
        out.append(SuiteInstance(
            index=len(out), kernel=kernel, weight=weight, small_set=small_set,
            uni_drift=uni, cert=cert, pstar=pstar, pair_weight=pw,
            pair_drift=pair_drift, pair_level=level, bound_input=bound_input,
            x0=x0, x0_prime=x0p,
        ))
    return out


@dataclass(frozen=True)
class CheckResult:
    """One named check: worst signed violation (positive = failure margin)."""

    name: str
    passed: bool
    worst: float
    detail: str

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed),
                "worst": float(self.worst), "detail": self.detail}


def _dyadic_ints(values) -> tuple[list[int], int]:
    """Exact integer numerators and a common power-of-two denominator exponent.

    Every double is an integer times a power of two, so this loses nothing.
    """
    ratios = [float(x).as_integer_ratio() for x in values]
    shift = max(d.bit_length() - 1 for _, d in ratios)
    return [num << (shift - (d.bit_length() - 1)) for num, d in ratios], shift


@dataclass(frozen=True)
class DistanceCurves:
    """Exact marginal-gap norms for n = 1..n_max, with their logarithms.

    Computed in exact big-integer arithmetic, so values below the float
    cancellation floor (mass rounding stalls plain propagation near 1e-16)
    are still correct; the log arrays stay finite far past float underflow.
    """

    tv: np.ndarray
    fn: np.ndarray
    tv_log: np.ndarray
    fn_log: np.ndarray


def exact_distance_curves(inst: SuiteInstance, n_max: int) -> DistanceCurves:
    """Exact TV and f-norm gaps between the two marginals for n = 1..n_max."""
    size = inst.size
    flat, shift = _dyadic_ints(inst.kernel.rows.ravel())
    R = [flat[i * size:(i + 1) * size] for i in range(size)]
    W, wshift = _dyadic_ints(inst.weight.values)
    log2 = math.log(2.0)
    v = [0] * size
    v[inst.x0] = 1
    v[inst.x0_prime] = -1
    tv = np.empty(n_max)
    fn = np.empty(n_max)
    tv_log = np.empty(n_max)
    fn_log = np.empty(n_max)
    denom_bits = 0
    for n in range(1, n_max + 1):
        v = [sum(v[i] * R[i][j] for i in range(size)) for j in range(size)]
        denom_bits += shift
        tv_num = sum(abs(x) for x in v)
        fn_num = sum(W[j] * abs(v[j]) for j in range(size))
        tv_log[n - 1] = math.log(tv_num) - denom_bits * log2 if tv_num else -math.inf
        fn_log[n - 1] = (math.log(fn_num) - (denom_bits + wshift) * log2
                         if fn_num else -math.inf)
        tv[n - 1] = math.exp(tv_log[n - 1]) if tv_log[n - 1] > -745.0 else 0.0
        fn[n - 1] = math.exp(fn_log[n - 1]) if fn_log[n - 1] > -745.0 else 0.0
    return DistanceCurves(tv=tv, fn=fn, tv_log=tv_log, fn_log=fn_log)


def check_domination(instances: Sequence[SuiteInstance], n_max: int = 50,
                     tol: float = 1e-9) -> CheckResult:
    """Optimized TV and f bounds dominate the exact gaps for all n <= n_max."""
    worst = -np.inf
    where = ""
    for inst in instances:
        curves = exact_distance_curves(inst, n_max)
        for n in range(1, n_max + 1):
            _, tv_bound = optimize_j(inst.bound_input, n, which="tv")
            _, f_bound = optimize_j(inst.bound_input, n, which="f")
            for label, exact, bound in (("tv", curves.tv[n - 1], tv_bound),
                                        ("f", curves.fn[n - 1], f_bound)):
                gap = exact - bound
                if gap > worst:
                    worst = gap
                    where = f"chain {inst.index} {label} at n={n}"
    return CheckResult(name="domination", passed=worst <= tol,
                       worst=float(worst), detail=where or "no instances")


def coupled_sup_on_set(inst: SuiteInstance) -> float:
    """Exact sup over the coupling set of the full coupled kernel on Vbar.

    The coupled kernel on the set regenerates with the certificate's epsilon
    (landing on the diagonal, where the pair weight equals V) and otherwise
    moves by the residual product, which is what pstar stores there.
    """
    eps = inst.cert.epsilon
    V = inst.weight.values
    pw = inst.pair_weight.values
    n = inst.size
    best = -np.inf
    for (i, j) in inst.cert.coupling_set:
        nu_v = float(np.dot(inst.cert.nu[(i, j)], V))
        residual_v = float(inst.pstar.kernel.rows[i * n + j] @ pw)
        best = max(best, eps * nu_v + (1.0 - eps) * residual_v)
    return best


def check_rate(instances: Sequence[SuiteInstance], n: int = 200,
               slack: float = 0.01) -> CheckResult:
    """(1/n) log of the exact f-norm gap is below the certified decay rate."""
    worst = -np.inf
    where = ""
    for inst in instances:
        curves = exact_distance_curves(inst, n)
        lhs = curves.fn_log[-1] / n
        inp = inst.bound_input
        rb = rate_bound(inp.epsilon, inp.lam, coupled_sup_on_set(inst))
        gap = lhs - rb.rate
        if gap > worst:
            worst = gap
            where = f"chain {inst.index}: lhs={lhs:.6g} rate={rb.rate:.6g}"
    return CheckResult(name="rate", passed=worst <= slack, worst=float(worst), detail=where)


def check_identity(instances: Sequence[SuiteInstance], n_max: int = 4,
                   tol: float = 1e-10, max_size: int = 4) -> CheckResult:
    """Exact path-functional identity on every small chain, both eps modes.

    Compares the full uncoupled-path tensors, which is equivalent to testing
    every indicator path functional at once.
    """
    worst = -np.inf
    where = ""
    tested = 0
    for inst in instances:
        if inst.size > max_size:
            continue
        tested += 1
        xi = delta_measure(inst.size, inst.x0)
        xi_p = delta_measure(inst.size, inst.x0_prime)
        eps0 = inst.cert.epsilon
        for n in range(1, n_max + 1):
            schedules = (None, tuple(eps0 / (k + 1.0) for k in range(n)))
            for eps in schedules:
                lhs, rhs = weighted_identity_tables(inst.kernel, inst.cert, xi, xi_p, n, eps=eps)
                gap = float(np.max(np.abs(lhs - rhs)))
                if gap > worst:
                    worst = gap
                    where = f"chain {inst.index} n={n} eps={'const' if eps is None else 'varying'}"
    if tested == 0:
        return CheckResult(name="identity", passed=False, worst=np.inf, detail="no small chains")
    return CheckResult(name="identity", passed=worst <= tol, worst=float(worst), detail=where)


def check_s_consistency(instances: Sequence[SuiteInstance], tol: float = 1e-9) -> CheckResult:
    """Derived stability constants upper-bound the paired kernel drift.

    For every instance satisfying the stability condition, the derived
    (lam, b) must satisfy P* Vbar <= lam Vbar + b on the coupling set and
    P* Vbar <= lam Vbar off it, within tol.
    """
    worst = -np.inf
    where = ""
    tested = 0
    for inst in instances:
        if not inst.satisfies_S:
            continue
        tested += 1
        lam_d, b_d = derive_S_params(inst.uni_drift.lam, inst.uni_drift.b,
                                     inst.s_capacity, inst.cert.epsilon)
        kv = inst.pstar.kernel.rows @ inst.pair_weight.values
        allow = lam_d * inst.pair_weight.values
        n = inst.size
        inset = np.zeros(n * n, dtype=bool)
        for (i, j) in inst.pstar.coupling_set:
            inset[i * n + j] = True
        excess = kv - allow - np.where(inset, b_d, 0.0)
        gap = float(np.max(excess))
        if gap > worst:
            worst = gap
            where = f"chain {inst.index}: lam={lam_d:.6g} b={b_d:.6g}"
    detail = f"{tested} instances satisfied the stability condition; worst at {where}"
    return CheckResult(name="s-consistency", passed=(tested > 0 and worst <= tol),
                       worst=float(worst), detail=detail)


def check_coupling(instances: Sequence[SuiteInstance], n_max: int = 20,
                   replicas: int = 10 ** 5, base_seed: int = 711) -> CheckResult:
    """Simulated 2 P(T > n) plus three standard errors dominates exact TV."""
    worst = -np.inf
    where = ""
    for inst in instances:
        cfg = CouplingConfig(kernel=inst.kernel, cert=inst.cert, seed=base_seed + inst.index)
        xi = delta_measure(inst.size, inst.x0)
        xi_p = delta_measure(inst.size, inst.x0_prime)
        res = run_coupling(cfg, xi, xi_p, horizon=n_max, replicas=replicas)
        curves = exact_distance_curves(inst, n_max)
        for n in range(1, n_max + 1):
            upper = res.tv_upper[n - 1] + 3.0 * (2.0 * res.se[n - 1])
            gap = curves.tv[n - 1] - upper
            if gap > worst:
                worst = gap
                where = f"chain {inst.index} at n={n}"
    return CheckResult(name="coupling", passed=worst <= 0.0, worst=float(worst), detail=where)


def run_verification(count: int = 20, seed: int = SUITE_SEED, n_max: int = 50,
                     replicas: int = 10 ** 4, with_coupling: bool = True) -> list[CheckResult]:
    """Run every suite check; used by the CLI selftest and finite verifier."""
    instances = build_suite(count=count, seed=seed)
    results = [
        check_domination(instances, n_max=n_max),
        check_rate(instances),
        check_identity(instances),
        check_s_consistency(instances),
    ]
    if with_coupling:
        results.append(check_coupling(instances, replicas=replicas))
    return results
