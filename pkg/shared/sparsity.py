"""
Sparsity Set Module
Hard-thresholding projection onto {w : ||w||_0 <= s}, support
bookkeeping, the projected-gradient map and its optimality residual,
and an exhaustive best-subset oracle for small instances
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Optional, Tuple

import numpy as np

from shared.errors import ContractViolation, NumericError, OracleScaleError

if TYPE_CHECKING:
    from shared.model import LinearState, Model, OracleCounter

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10 ** 5


def _check_indices(indices: np.ndarray, n: int) -> None:
    if indices.size:
        if indices[0] < 0 or indices[-1] >= n:
            raise ContractViolation(f"index out of range for ambient dimension {n}")
        if np.any(np.diff(indices) <= 0):
            raise ContractViolation("indices must be strictly increasing")


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Sorted, unique column indices J selecting a coordinate subspace"""
    indices: np.ndarray

    def __post_init__(self):
        indices = np.array(self.indices, dtype=np.intp).reshape(-1)
        if indices.size and (indices[0] < 0 or np.any(np.diff(indices) <= 0)):
            raise ContractViolation("support indices must be sorted, unique and nonnegative")
        indices.flags.writeable = False
        object.__setattr__(self, 'indices', indices)

    @classmethod
    def of(cls, J: Any, n: int) -> 'SupportSet':
        support = J if isinstance(J, SupportSet) else cls(np.asarray(J, dtype=np.intp))
        _check_indices(support.indices, n)
        return support

    def __len__(self) -> int:
        return int(self.indices.size)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SupportSet) and same_support(self, other)

    def __hash__(self) -> int:
        return hash(tuple(self.indices.tolist()))

    def __repr__(self) -> str:
        return f"SupportSet({self.indices.tolist()})"


@dataclass(frozen=True, eq=False)
class SparseIterate:
    """
    An s-sparse iterate w stored as (support, values) inside R^n.

    Values on the support may be exactly zero, so an iterate can live on a
    full selected set J even when some of its coordinates vanish.
    """
    support: np.ndarray
    values: np.ndarray
    ambient_dim: int

    def __post_init__(self):
        support = np.array(self.support, dtype=np.intp).reshape(-1)
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if support.size != values.size:
            raise ContractViolation(f"{support.size} indices but {values.size} values")
        _check_indices(support, self.ambient_dim)
        support.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, 'support', support)
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, n: int) -> 'SparseIterate':
        return cls(np.zeros(0, dtype=np.intp), np.zeros(0), n)

    @classmethod
    def from_dense(cls, dense: Any, support: Any = None) -> 'SparseIterate':
        dense = np.asarray(dense, dtype=np.float64).reshape(-1)
        if support is None:
            support = np.flatnonzero(dense)
        support = np.asarray(getattr(support, 'indices', support), dtype=np.intp)
        return cls(support, dense[support], dense.size)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.ambient_dim)
        dense[self.support] = self.values
        return dense

    def values_on(self, J: Any) -> np.ndarray:
        """Coordinates of w at the indices J (zero where w has no entry)"""
        idx = np.asarray(getattr(J, 'indices', J), dtype=np.intp)
        if np.array_equal(idx, self.support):
            return self.values.copy()
        out = np.zeros(idx.size)
        if self.support.size == 0 or idx.size == 0:
            return out
        pos = np.minimum(np.searchsorted(self.support, idx), self.support.size - 1)
        hit = self.support[pos] == idx
        out[hit] = self.values[pos[hit]]
        return out

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.values))

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class ProjectionOutcome:
    """Result of hard thresholding: the point, the chosen s indices, and whether the choice was forced"""
    point: SparseIterate
    selected: SupportSet
    unique: bool


def project_topk(v: Any, s: int) -> ProjectionOutcome:
    """
    Euclidean projection onto the s-sparse set by keeping the s largest magnitudes.

    Ties at the s-th magnitude are broken toward the lowest index, which
    makes the projection a deterministic single-valued map.

    Args:
        v: Dense vector in R^n
        s: Sparsity level (>= 1)

    Returns:
        ProjectionOutcome whose selected set always has min(s, n) indices
    """
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    n = v.size
    if s < 1:
        raise ContractViolation(f"sparsity level must be >= 1, got {s}")
    if s >= n:
        everything = np.arange(n, dtype=np.intp)
        return ProjectionOutcome(SparseIterate(everything, v, n), SupportSet(everything), True)

    magnitudes = np.abs(v)
    threshold = np.partition(magnitudes, n - s)[n - s]
    above = np.flatnonzero(magnitudes > threshold)
    tied = np.flatnonzero(magnitudes == threshold)
    needed = s - above.size
    chosen = np.sort(np.concatenate([above, tied[:needed]]))

    return ProjectionOutcome(
        point=SparseIterate(chosen, v[chosen], n),
        selected=SupportSet(chosen),
        unique=bool(tied.size == needed)
    )


def restrict(w: SparseIterate, J: Any) -> SparseIterate:
    """Restriction of w to J: keep the coordinates of w inside J, stored on all of J"""
    support = SupportSet.of(J, w.ambient_dim)
    return SparseIterate(support.indices, w.values_on(support), w.ambient_dim)


def same_support(a: SupportSet, b: SupportSet) -> bool:
    """True iff both selections pick the same indices"""
    return np.array_equal(a.indices, b.indices)


def gradient_projection(state: 'LinearState', grad: np.ndarray, lam: float, s: int) -> ProjectionOutcome:
    """Projection of the gradient step w - lam * grad onto the s-sparse set"""
    shifted = state.w.to_dense() - lam * grad
    if not np.all(np.isfinite(shifted)):
        raise NumericError("gradient step produced non-finite values")
    return project_topk(shifted, s)


def pg_step(
    model: 'Model',
    state: 'LinearState',
    lam: float,
    s: int,
    grad: Optional[np.ndarray] = None,
    counters: Optional['OracleCounter'] = None,
    outcome: Optional[ProjectionOutcome] = None
) -> Tuple['LinearState', ProjectionOutcome]:
    """
    One projected-gradient step w+ = P(w - lam * grad f(w)), P keeping the s largest magnitudes.

    Args:
        model: Loss model
        state: Cached state at w
        lam: Step size in (0, 1/L)
        s: Sparsity level
        grad: Full gradient at w if the caller already holds it
        counters: Optional run counters
        outcome: Projection of the gradient step if already computed

    Returns:
        (state at w+, built from scratch; projection outcome)
    """
    if outcome is None:
        if grad is None:
            grad = model.full_gradient(state, counters)
        outcome = gradient_projection(state, grad, lam, s)
    return model.make_state(outcome.point, counters), outcome


def residual(
    model: 'Model',
    state: 'LinearState',
    lam: float,
    s: int,
    grad: Optional[np.ndarray] = None,
    counters: Optional['OracleCounter'] = None,
    outcome: Optional[ProjectionOutcome] = None
) -> float:
    """
    Scaled fixed-point gap of the projected-gradient map:
    ||w - P(w - lam g)|| / (1 + ||w|| + lam ||g||).
    """
    if lam <= 0:
        raise ContractViolation(f"step size must be positive, got {lam}")
    if grad is None:
        grad = model.full_gradient(state, counters)
    if outcome is None:
        outcome = gradient_projection(state, grad, lam, s)
    w = state.w.to_dense()
    gap = float(np.linalg.norm(w - outcome.point.to_dense()))
    return gap / (1.0 + float(np.linalg.norm(w)) + lam * float(np.linalg.norm(grad)))


def brute_force_best_subset(
    model: 'Model',
    s: int,
    limit: int = BRUTE_FORCE_LIMIT
) -> Tuple[SupportSet, SparseIterate, float]:
    """
    Global minimizer of f over s-sparse vectors by enumerating every support of size s.

    Raises:
        OracleScaleError: If C(n, s) exceeds the enumeration limit
    """
    n = model.n
    size = min(s, n)
    count = math.comb(n, size)
    if count > limit:
        raise OracleScaleError(f"C({n}, {size}) = {count} subsets exceeds the limit {limit}")

    best: Optional[Tuple[SupportSet, SparseIterate, float]] = None
    for combo in itertools.combinations(range(n), size):
        J = SupportSet(np.asarray(combo, dtype=np.intp))
        values, f = model.restricted_minimize(J)
        if best is None or f < best[2]:
            best = (J, SparseIterate(J.indices, values, n), f)

    logger.debug(f"Best subset {best[0]} with f*={best[2]:.12g} over {count} supports")
    return best
