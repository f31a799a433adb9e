"""
Subspace Newton Module
Truncated Newton on the restriction f_J: preconditioned conjugate gradient
with an adaptive model-decrease stopping rule, Armijo backtracking and an
optional gradient-scaled damping term
"""
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional, Tuple

import numpy as np

from config import config
from shared.errors import ConfigError, ContractViolation, NumericError
from shared.sparsity import SparseIterate, SupportSet, restrict

if TYPE_CHECKING:
    from shared.model import LinearState, Model, OracleCounter

logger = logging.getLogger(__name__)

# linear residual below this fraction of ||g|| counts as an exact solve
EXACT_SOLVE_RTOL = 1e-14


@dataclass
class NewtonParams:
    """
    Parameters of the SSN stage.

    Args:
        t_steps: Newton steps per call
        beta: Armijo shrink factor
        sigma2: Armijo decrease constant
        max_cg: PCG iteration cap (None = |J|)
        damping: Optional (c, rho) adding c * ||grad f_J||^rho * I
        alpha_min_ls: Smallest Armijo step before declaring failure
        cg_rule: Apply the adaptive PCG stopping rule
        grad_tol: Stop early once ||grad f_J|| falls below this
        precond_floor: Lower bound on Jacobi diagonal entries
    """
    t_steps: int = config.SOLVER_T_NEWTON
    beta: float = config.SOLVER_BETA_ARMIJO
    sigma2: float = config.SOLVER_SIGMA2_ARMIJO
    max_cg: Optional[int] = None
    damping: Optional[Tuple[float, float]] = None
    alpha_min_ls: float = config.SOLVER_ALPHA_MIN_LS
    cg_rule: bool = True
    grad_tol: float = config.NEWTON_GRAD_TOL
    precond_floor: float = config.PRECOND_FLOOR

    def __post_init__(self):
        if self.t_steps < 1:
            raise ConfigError(f"t_steps must be >= 1, got {self.t_steps}")
        if not (0.0 < self.beta < 1.0 and 0.0 < self.sigma2 < 1.0):
            raise ConfigError("beta and sigma2 must lie in (0, 1)")
        if self.max_cg is not None and self.max_cg < 1:
            raise ConfigError(f"max_cg must be >= 1, got {self.max_cg}")
        if self.damping is not None:
            c, rho = self.damping
            if c <= 0 or not 0.0 < rho <= 1.0:
                raise ConfigError(f"damping needs c > 0 and rho in (0, 1], got {self.damping}")


@dataclass
class CgStats:
    """
    PCG bookkeeping.

    terminated_by is one of: rule (adaptive criterion), max_iter (cap),
    exact (linear residual vanished), curvature (flat direction met).
    """
    iterations: int = 0
    q_final: float = 0.0
    terminated_by: str = "exact"


@dataclass
class NewtonOutcome:
    """Result of ssn_steps"""
    point: SparseIterate
    state: 'LinearState'
    status: str
    cg: CgStats = field(default_factory=CgStats)
    steps: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def pcg_solve(
    hvp_operator: Callable[[np.ndarray], np.ndarray],
    g: np.ndarray,
    precond_diag: np.ndarray,
    params: NewtonParams
) -> Tuple[np.ndarray, CgStats]:
    """
    Approximately solve H p = -g with Jacobi-preconditioned CG from p = 0.

    Tracks the quadratic model Q_i = <g, p_i> + <p_i, H p_i>/2 through
    Q_i = (<g, p_i> + <p_i, H p_i + g>)/2 and stops once i >= 1 and
    (Q_i - Q_{i-1}) / (Q_i / i) <= min(0.5, sqrt(<g, M^-1 g>)), or at max_cg.

    Args:
        hvp_operator: v -> H v for a symmetric positive semidefinite H
        g: Right-hand side (restricted gradient)
        precond_diag: Diagonal of the preconditioner M
        params: Newton parameters (max_cg, cg_rule, precond_floor)

    Returns:
        (direction p, CgStats)

    Raises:
        NumericError: If an intermediate quantity is not finite
    """
    g = np.asarray(g, dtype=np.float64)
    size = g.size
    max_cg = params.max_cg if params.max_cg is not None else size
    p = np.zeros(size)
    g_norm = float(np.linalg.norm(g))
    if size == 0 or g_norm == 0.0:
        return p, CgStats(0, 0.0, "exact")

    m_inv = 1.0 / np.maximum(np.asarray(precond_diag, dtype=np.float64), params.precond_floor)
    threshold = min(0.5, math.sqrt(float(g @ (m_inv * g))))

    r = -g.copy()
    z = m_inv * r
    direction = z.copy()
    rz = float(r @ z)
    q_prev = q = 0.0

    for i in range(1, max_cg + 1):
        hd = hvp_operator(direction)
        curvature = float(direction @ hd)
        if not math.isfinite(curvature):
            raise NumericError("non-finite curvature in PCG")
        if curvature <= 0.0:
            return p, CgStats(i - 1, q, "curvature")

        alpha = rz / curvature
        p += alpha * direction
        r -= alpha * hd
        q_prev, q = q, 0.5 * (float(g @ p) - float(p @ r))
        if not math.isfinite(q):
            raise NumericError("non-finite model value in PCG")

        if np.linalg.norm(r) <= EXACT_SOLVE_RTOL * g_norm:
            return p, CgStats(i, q, "exact")
        # ratio is +inf when Q_i = 0
        if params.cg_rule and q != 0.0 and (q - q_prev) / (q / i) <= threshold:
            return p, CgStats(i, q, "rule")

        z = m_inv * r
        rz_next = float(r @ z)
        direction = z + (rz_next / rz) * direction
        rz = rz_next

    return p, CgStats(max_cg, q, "max_iter")


def armijo_search(
    model: 'Model',
    state: 'LinearState',
    J: SupportSet,
    grad_J: np.ndarray,
    p: np.ndarray,
    params: NewtonParams
) -> Optional[Tuple[float, 'LinearState']]:
    """
    Backtracking for f_J(w + beta^i p) <= f_J(w) + sigma2 beta^i <grad f_J, p>.

    Each trial reuses z = Xw and X_{:,J} p, so it costs O(m).

    Returns:
        (alpha, state at the accepted point), or None when p is not a
        descent direction or alpha falls below alpha_min_ls
    """
    slope = float(np.dot(grad_J, p))
    if not slope < 0.0:
        return None

    Xp = model.data.X.matvec_cols(J, p)
    base = state.w.values_on(J)
    alpha = 1.0
    while alpha >= params.alpha_min_ls:
        point = SparseIterate(J.indices, base + alpha * p, state.w.ambient_dim)
        try:
            trial = model.state_from_z(point, state.z + alpha * Xp)
        except NumericError:
            trial = None
        if trial is not None and trial.f <= state.f + params.sigma2 * alpha * slope:
            return alpha, trial
        alpha *= params.beta
    return None


def damped_operator(
    model: 'Model',
    state: 'LinearState',
    J: SupportSet,
    damping: Optional[Tuple[float, float]],
    grad_norm: float,
    counters: Optional['OracleCounter'] = None
) -> Tuple[Callable[[np.ndarray], np.ndarray], np.ndarray]:
    """
    Newton operator on J, shifted by c * ||grad_J||^rho when damping is set.

    Returns:
        (v -> (H_J + shift I) v, Jacobi diagonal of the same operator)
    """
    shift = 0.0
    if damping is not None:
        c, rho = damping
        shift = c * grad_norm ** rho

    def operator(v: np.ndarray) -> np.ndarray:
        return model.hvp_restricted(state, J, v, counters) + shift * v

    diagonal = model.data.X.col_weighted_sqnorms(J, state.gsecond) + model.loss.mu + shift
    return operator, diagonal


def ssn_steps(
    model: 'Model',
    J: SupportSet,
    w_start: SparseIterate,
    params: NewtonParams,
    state: Optional['LinearState'] = None,
    counters: Optional['OracleCounter'] = None
) -> NewtonOutcome:
    """
    Run t_steps truncated Newton steps on f restricted to the coordinates in J.

    Coordinates outside J stay exactly zero. Every Hessian-vector product
    increments counters.hessian_products.

    Args:
        model: Loss model
        J: Support defining the subspace
        w_start: Starting point with supp(w_start) inside J
        params: Newton parameters
        state: Cached state at w_start, if already stored on J
        counters: Optional run counters

    Returns:
        NewtonOutcome with status "ok" or "failed"
    """
    J = SupportSet.of(J, model.n)
    outside = np.setdiff1d(w_start.support, J.indices)
    if outside.size and np.any(w_start.values_on(outside) != 0.0):
        raise ContractViolation("starting point has nonzeros outside J")

    if state is None or not np.array_equal(state.w.support, J.indices):
        state = model.make_state(restrict(w_start, J), counters)

    totals = CgStats()
    steps = 0
    for _ in range(params.t_steps):
        grad = model.restricted_gradient(state, J)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= params.grad_tol:
            break

        operator, diagonal = damped_operator(model, state, J, params.damping, grad_norm, counters)
        try:
            p, stats = pcg_solve(operator, grad, diagonal, params)
        except NumericError as e:
            logger.warning(f"SSN failed on |J|={len(J)}: {str(e)}")
            return NewtonOutcome(state.w, state, "failed", totals, steps)

        totals = CgStats(totals.iterations + stats.iterations, stats.q_final, stats.terminated_by)
        logger.debug(
            f"PCG: {stats.iterations} iterations, Q={stats.q_final:.3e}, stop={stats.terminated_by}"
        )

        accepted = armijo_search(model, state, J, grad, p, params)
        if accepted is None:
            logger.warning(f"SSN line search failed on |J|={len(J)} (||grad||={grad_norm:.3e})")
            return NewtonOutcome(state.w, state, "failed", totals, steps)
        _, state = accepted
        steps += 1

    return NewtonOutcome(state.w, state, "ok", totals, steps)
