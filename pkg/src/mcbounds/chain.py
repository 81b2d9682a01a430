"""Finite-state Markov kernels, signed measures, and coupling certificates.

This module holds the exact linear-algebra substrate used everywhere else:
measure propagation, weighted norms, stationary distributions, extraction of
minorization (overlap) certificates from kernel rows, geometric drift
verification, and construction of the product-space kernel that couples two
copies of a chain through a shared regeneration component.

Total variation convention: ``f_norm`` with the unit weight assigns a
difference of probability measures a value in ``[0, 2]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "DegenerateMinorizationError",
    "DriftViolationError",
    "ReducibleChainError",
    "FiniteSignedMeasure",
    "WeightFunction",
    "FiniteKernel",
    "ProductKernel",
    "MinorizationCertificate",
    "DriftCertificate",
    "DriftResult",
    "propagate",
    "f_norm",
    "tv_norm",
    "stationary",
    "extract_minorization",
    "verify_drift",
    "build_product_pstar",
    "pair_mean_weight",
    "sup_pstar_weight",
    "delta_measure",
    "uniform_measure",
    "unit_weight",
]

ROW_SUM_TOL = 1e-12


class DegenerateMinorizationError(ValueError):
    """A requested coupling pair has zero row overlap, so epsilon = 0."""


class DriftViolationError(ValueError):
    """No geometric contraction off the small set (max ratio >= 1)."""

    def __init__(self, message: str, ratio: float, state_index: int):
        super().__init__(message)
        self.ratio = ratio
        self.state_index = state_index


class ReducibleChainError(ValueError):
    """The kernel is not irreducible; no unique stationary law exists."""


def _as_float_vector(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class FiniteSignedMeasure:
    """Signed measure on a finite state space, stored as a dense vector."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_float_vector(self.values, "measure values"))

    @property
    def size(self) -> int:
        return self.values.size

    def mass(self) -> float:
        return float(self.values.sum())

    def __sub__(self, other: "FiniteSignedMeasure") -> "FiniteSignedMeasure":
        if other.size != self.size:
            raise ValueError("measure dimension mismatch")
        return FiniteSignedMeasure(self.values - other.values)


@dataclass(frozen=True)
class WeightFunction:
    """Pointwise weight, constrained to be >= 1 everywhere."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.values, "weight values")
        if np.any(arr < 1.0):
            bad = int(np.argmin(arr))
            raise ValueError(f"weight must be >= 1 everywhere; value {arr[bad]} at index {bad}")
        object.__setattr__(self, "values", arr)

    @property
    def size(self) -> int:
        return self.values.size


def delta_measure(size: int, index: int) -> FiniteSignedMeasure:
    """Point mass at ``index`` on a space of ``size`` states."""
    if not 0 <= index < size:
        raise ValueError(f"index {index} out of range for {size} states")
    v = np.zeros(size)
    v[index] = 1.0
    return FiniteSignedMeasure(v)


def uniform_measure(size: int) -> FiniteSignedMeasure:
    return FiniteSignedMeasure(np.full(size, 1.0 / size))


def unit_weight(size: int) -> WeightFunction:
    return WeightFunction(np.ones(size))


@dataclass(frozen=True)
class FiniteKernel:
    """Row-stochastic transition matrix with labelled states.

    Rows must be entrywise nonnegative and sum to one within ``1e-12``.
    """

    states: tuple
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
            raise ValueError(f"kernel rows must be square, got shape {rows.shape}")
        states = tuple(self.states)
        if len(states) != rows.shape[0]:
            raise ValueError(
                f"state count {len(states)} does not match matrix size {rows.shape[0]}"
            )
        if not np.all(np.isfinite(rows)):
            raise ValueError("kernel rows contain non-finite entries")
        if np.any(rows < -ROW_SUM_TOL):
            i, j = np.unravel_index(int(np.argmin(rows)), rows.shape)
            raise ValueError(f"negative transition probability {rows[i, j]} at ({i}, {j})")
        sums = rows.sum(axis=1)
        worst = int(np.argmax(np.abs(sums - 1.0)))
        if abs(sums[worst] - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"row {worst} sums to {sums[worst]}, not 1 within {ROW_SUM_TOL}")
        rows = np.clip(rows, 0.0, None)
        rows.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "rows", rows)

    @property
    def size(self) -> int:
        return len(self.states)

    def to_json(self) -> str:
        return json.dumps({"states": list(self.states), "rows": self.rows.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FiniteKernel":
        data = json.loads(text)
        if set(data) != {"states", "rows"}:
            raise ValueError(f"kernel JSON must have exactly keys 'states' and 'rows', got {sorted(data)}")
        return cls(states=tuple(data["states"]), rows=np.asarray(data["rows"], dtype=float))


@dataclass(frozen=True)
class ProductKernel:
    """Kernel on ordered pairs of base states.

    ``kernel.states`` are pairs ``(x, y)`` of base labels, indexed by
    ``i * n + j`` where ``n`` is the base size.
    """

    base: FiniteKernel
    kernel: FiniteKernel
    coupling_set: frozenset = field(default_factory=frozenset)
    epsilon: float = 0.0

    def __post_init__(self):
        n = self.base.size
        if self.kernel.size != n * n:
            raise ValueError("product kernel size must be the square of the base size")

    def pair_index(self, i: int, j: int) -> int:
        n = self.base.size
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"pair ({i}, {j}) out of range")
        return i * n + j

    def pair_of(self, index: int) -> tuple:
        n = self.base.size
        return divmod(index, n)

    @property
    def size(self) -> int:
        return self.kernel.size


def _underlying(kernel) -> FiniteKernel:
    return kernel.kernel if isinstance(kernel, ProductKernel) else kernel


def propagate(xi: FiniteSignedMeasure, kernel, n: int) -> FiniteSignedMeasure:
    """Push ``xi`` through ``n`` steps of the kernel by vector-matrix products.

    Mass is conserved by row stochasticity; each step is checked to ``1e-12``.
    """
    base = _underlying(kernel)
    if xi.size != base.size:
        raise ValueError(f"measure has {xi.size} entries but kernel has {base.size} states")
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ValueError(f"step count must be a nonnegative integer, got {n}")
    v = xi.values
    for _ in range(n):
        before = v.sum()
        v = v @ base.rows
        if abs(v.sum() - before) > ROW_SUM_TOL * max(1.0, abs(before)):
            raise ArithmeticError("mass drifted by more than 1e-12 in one propagation step")
    return FiniteSignedMeasure(v)


def f_norm(mu: FiniteSignedMeasure, f: WeightFunction) -> float:
    """Weighted norm sup over |phi| <= f of |mu(phi)|, i.e. sum_x f(x) |mu(x)|."""
    if f.size != mu.size:
        raise ValueError(f"weight has {f.size} entries but measure has {mu.size}")
    return float(np.dot(f.values, np.abs(mu.values)))


def tv_norm(mu: FiniteSignedMeasure) -> float:
    """Total variation with the unit weight: in [0, 2] for probability differences."""
    return f_norm(mu, unit_weight(mu.size))


def _is_irreducible(rows: np.ndarray) -> bool:
    n = rows.shape[0]
    reach = (rows > 0.0) | np.eye(n, dtype=bool)
    # boolean closure by repeated squaring
    steps = max(1, int(math.ceil(math.log2(max(n, 2)))))
    for _ in range(steps):
        reach = reach | (reach @ reach)
    return bool(reach.all())


def stationary(kernel, max_power_iters: int = 10 ** 6) -> FiniteSignedMeasure:
    """Unique stationary probability of an irreducible kernel.

    Solves the balance equations directly and falls back to power iteration
    (capped at ``max_power_iters``) if the solve does not reach residual
    ``1e-12`` in l1.
    """
    base = _underlying(kernel)
    rows = base.rows
    if not _is_irreducible(rows):
        raise ReducibleChainError("kernel is reducible; stationary law is not unique")
    n = base.size
    A = rows.T - np.eye(n)
    A[0, :] = 1.0
    rhs = np.zeros(n)
    rhs[0] = 1.0
    pi = None
    try:
        candidate = np.linalg.solve(A, rhs)
        if np.all(np.isfinite(candidate)):
            candidate = np.clip(candidate, 0.0, None)
            total = candidate.sum()
            if total > 0:
                candidate = candidate / total
                if np.abs(candidate @ rows - candidate).sum() <= 1e-12:
                    pi = candidate
    except np.linalg.LinAlgError:
        pi = None
    if pi is None:
        v = np.full(n, 1.0 / n)
        for _ in range(max_power_iters):
            nxt = v @ rows
            if np.abs(nxt - v).sum() <= 1e-13:
                v = nxt
                break
            v = nxt
        if np.abs(v @ rows - v).sum() > 1e-12:
            raise ReducibleChainError("stationary solve did not converge to 1e-12")
        pi = v / v.sum()
    return FiniteSignedMeasure(pi)


@dataclass(frozen=True)
class MinorizationCertificate:
    """Common-overlap certificate for a set of ordered state pairs.

    For every pair ``(i, j)`` in ``coupling_set`` the kernel rows satisfy
    ``min(P[i, y], P[j, y]) >= epsilon * nu[(i, j)][y]`` up to ``1e-12``,
    where each ``nu`` is a probability vector.
    """

    coupling_set: frozenset
    epsilon: float
    nu: Mapping[tuple, np.ndarray]

    def __post_init__(self):
        pairs = frozenset((int(i), int(j)) for i, j in self.coupling_set)
        if not pairs:
            raise ValueError("coupling set must be nonempty")
        eps = float(self.epsilon)
        if not (0.0 < eps <= 1.0):
            raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
        nu = {}
        for pair in pairs:
            if pair not in self.nu:
                raise ValueError(f"missing nu vector for pair {pair}")
            vec = _as_float_vector(self.nu[pair], f"nu[{pair}]")
            if np.any(vec < -1e-15) or abs(vec.sum() - 1.0) > 1e-9:
                raise ValueError(f"nu[{pair}] is not a probability vector")
            vec = np.clip(vec, 0.0, None)
            vec.setflags(write=False)
            nu[pair] = vec
        object.__setattr__(self, "coupling_set", pairs)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "nu", nu)

    def check_against(self, kernel: FiniteKernel, tol: float = 1e-12) -> None:
        """Raise if the minorization inequality fails for some pair."""
        for (i, j) in sorted(self.coupling_set):
            lower = self.epsilon * self.nu[(i, j)]
            gap = np.min(np.minimum(kernel.rows[i], kernel.rows[j]) - lower)
            if gap < -tol:
                raise ValueError(
                    f"minorization fails for pair ({i}, {j}): min row mass short by {-gap}"
                )


@dataclass(frozen=True)
class DriftResult:
    """Smallest certified contraction rate and offset for a given small set."""

    lam: float
    b: float
    vacuous: bool = False


@dataclass(frozen=True)
class DriftCertificate:
    """Asserts (K V)(z) <= lam * V(z) + b * 1_C(z) for a kernel K."""

    weight: WeightFunction
    lam: float
    b: float
    small_set: frozenset

    def __post_init__(self):
        lam = float(self.lam)
        b = float(self.b)
        if not (0.0 <= lam < 1.0):
            raise ValueError(f"lam must lie in [0, 1), got {lam}")
        if b < 0.0:
            raise ValueError(f"b must be nonnegative, got {b}")
        object.__setattr__(self, "small_set", frozenset(int(s) for s in self.small_set))
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "b", b)

    def check_against(self, kernel, tol: float = 1e-12) -> None:
        base = _underlying(kernel)
        if self.weight.size != base.size:
            raise ValueError("weight dimension does not match kernel")
        kv = base.rows @ self.weight.values
        bound = self.lam * self.weight.values
        idx = np.fromiter(self.small_set, dtype=int) if self.small_set else np.array([], dtype=int)
        if idx.size:
            bound = bound.copy()
            bound[idx] += self.b
        worst = float(np.max(kv - bound))
        if worst > tol:
            z = int(np.argmax(kv - bound))
            raise ValueError(f"drift inequality fails at state {z} by {worst}")


def extract_minorization(kernel: FiniteKernel, pairs: Iterable[tuple]) -> MinorizationCertificate:
    """Best common-overlap certificate for the given ordered pairs.

    Per pair, overlap = sum_y min(P[i, y], P[j, y]) and nu is the normalized
    minimum row. epsilon is the smallest overlap across the set, so one coin
    bias works for every pair.
    """
    pair_list = sorted({(int(i), int(j)) for i, j in pairs})
    if not pair_list:
        raise ValueError("no pairs supplied")
    n = kernel.size
    nu = {}
    eps = math.inf
    for (i, j) in pair_list:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"pair ({i}, {j}) out of range for {n} states")
        m = np.minimum(kernel.rows[i], kernel.rows[j])
        overlap = float(m.sum())
        if overlap <= 0.0:
            raise DegenerateMinorizationError(
                f"pair ({i}, {j}) has zero overlap; epsilon = 0, no shared regeneration"
            )
        nu[(i, j)] = m / overlap
        eps = min(eps, overlap)
    return MinorizationCertificate(coupling_set=frozenset(pair_list), epsilon=eps, nu=nu)


def verify_drift(kernel, weight: WeightFunction, small_set: Iterable[int]) -> DriftResult:
    """Tightest (lam, b) such that K V <= lam V + b 1_C, or raise on violation.

    lam is the largest ratio (K V)/V off the set; if that is >= 1 there is no
    geometric drift and ``DriftViolationError`` is raised. When the set covers
    the whole space the off-set constraint is vacuous and lam = 0 is returned
    with ``vacuous=True``.
    """
    base = _underlying(kernel)
    V = weight.values
    if V.size != base.size:
        raise ValueError(f"weight has {V.size} entries but kernel has {base.size} states")
    C = frozenset(int(s) for s in small_set)
    for s in C:
        if not 0 <= s < base.size:
            raise ValueError(f"small-set state {s} out of range")
    kv = base.rows @ V
    outside = np.array([z for z in range(base.size) if z not in C], dtype=int)
    if outside.size == 0:
        b_min = float(np.max(kv))
        return DriftResult(lam=0.0, b=b_min, vacuous=True)
    ratios = kv[outside] / V[outside]
    lam_min = float(np.max(ratios))
    if lam_min >= 1.0:
        z = int(outside[int(np.argmax(ratios))])
        raise DriftViolationError(
            f"no geometric drift: (KV)/V = {lam_min} at state {z}", lam_min, z
        )
    inside = np.fromiter(C, dtype=int)
    b_min = max(0.0, float(np.max(kv[inside] - lam_min * V[inside])))
    return DriftResult(lam=lam_min, b=b_min, vacuous=False)


def build_product_pstar(kernel: FiniteKernel, cert: MinorizationCertificate) -> ProductKernel:
    """Joint kernel on pairs: independent product off the coupling set,
    product of residual rows on it.

    Residual row: R[x] = (P[x] - epsilon * nu) / (1 - epsilon). Requires
    epsilon < 1 and the certificate to hold against ``kernel``.
    """
    eps = cert.epsilon
    if eps >= 1.0:
        raise ValueError("epsilon = 1 leaves no residual; the coupling is deterministic")
    cert.check_against(kernel)
    n = kernel.size
    rows = np.empty((n * n, n * n))
    for i in range(n):
        for j in range(n):
            if (i, j) in cert.coupling_set:
                nu = cert.nu[(i, j)]
                ri = np.clip((kernel.rows[i] - eps * nu) / (1.0 - eps), 0.0, None)
                rj = np.clip((kernel.rows[j] - eps * nu) / (1.0 - eps), 0.0, None)
                rows[i * n + j] = np.outer(ri, rj).ravel()
            else:
                rows[i * n + j] = np.outer(kernel.rows[i], kernel.rows[j]).ravel()
    pair_states = tuple((kernel.states[i], kernel.states[j]) for i in range(n) for j in range(n))
    return ProductKernel(
        base=kernel,
        kernel=FiniteKernel(states=pair_states, rows=rows),
        coupling_set=frozenset(cert.coupling_set),
        epsilon=eps,
    )


def pair_mean_weight(weight: WeightFunction) -> WeightFunction:
    """Additive pair weight (V(x) + V(y)) / 2 on the product space."""
    V = weight.values
    return WeightFunction(((V[:, None] + V[None, :]) / 2.0).ravel())


def sup_pstar_weight(pstar: ProductKernel, pair_weight: WeightFunction) -> float:
    """Max of (P* W)(z) over pairs z in the coupling set.

    On the coupling set P* is the residual product, so this is the quantity
    that drives the bound constant B.
    """
    if pair_weight.size != pstar.size:
        raise ValueError("pair weight dimension does not match product kernel")
    kv = pstar.kernel.rows @ pair_weight.values
    n = pstar.base.size
    idx = [i * n + j for (i, j) in pstar.coupling_set]
    if not idx:
        raise ValueError("product kernel has an empty coupling set")
    return float(np.max(kv[idx]))
