"""
Solvers Module
Outer algorithms for l0-constrained ERM: projected gradient (IHT),
projected gradient with spectral extrapolation, and their subspace
identification variants that switch to truncated Newton once the
selected support has settled
"""
import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import numpy as np

from config import config
from shared.errors import ConfigError, ContractViolation, NumericError
from shared.model import LinearState, Model, OracleCounter
from shared.observer_pattern import Observer, TraceRecorder, TraceSubject
from shared.sparsity import (
    ProjectionOutcome,
    SparseIterate,
    SupportSet,
    gradient_projection,
    pg_step,
    residual,
    restrict,
    same_support,
)
from shared.subspace_newton import NewtonParams, ssn_steps

logger = logging.getLogger(__name__)

# curvature at or below this along d means the exact spectral step is undefined
CURVATURE_FLOOR = 1e-300

_ALIASES = {"pg+": "pg_plus", "apg+": "apg_plus"}


class Algorithm(Enum):
    """Outer algorithm selector"""
    PG = "pg"
    APG = "apg"
    PG_PLUS = "pg_plus"
    APG_PLUS = "apg_plus"

    @classmethod
    def parse(cls, name: str) -> 'Algorithm':
        key = name.strip().lower()
        try:
            return cls(_ALIASES.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown algorithm '{name}'")

    @property
    def extrapolates(self) -> bool:
        return self in (Algorithm.APG, Algorithm.APG_PLUS)

    @property
    def identifies(self) -> bool:
        return self in (Algorithm.PG_PLUS, Algorithm.APG_PLUS)


class InnerMode(Enum):
    """Step used by the identification meta-loop while the support is still moving"""
    PLAIN = "plain"
    EXTRAPOLATE = "extrapolate"


class SpectralMode(Enum):
    BB = "bb"
    EXACT = "exact"


class StepType(Enum):
    PG = "pg"
    EXTRAPOLATED = "extrapolated"
    NEWTON = "newton"
    NEWTON_FAILED = "newton_failed"


class SolveStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    NUMERIC_ERROR = "numeric_error"


@dataclass
class SolverConfig:
    """
    Every tunable of the outer algorithms.

    lam=None selects LAMBDA_SCALE / L with L from Model.lipschitz_estimate.
    unchanged_threshold is the number of consecutive iterations with an
    unchanged selected support after which the Newton stage engages.
    """
    algorithm: Algorithm = Algorithm.PG
    s: int = 1
    lam: Optional[float] = None
    eta: float = config.SOLVER_ETA
    sigma: float = config.SOLVER_SIGMA
    epsilon_zeta: float = config.SOLVER_EPSILON_ZETA
    alpha_min: float = config.SOLVER_ALPHA_MIN
    alpha_max: float = config.SOLVER_ALPHA_MAX
    unchanged_threshold: int = config.SOLVER_S_THRESHOLD
    t_newton: int = config.SOLVER_T_NEWTON
    beta_armijo: float = config.SOLVER_BETA_ARMIJO
    sigma2_armijo: float = config.SOLVER_SIGMA2_ARMIJO
    eps_hat: float = config.SOLVER_TOL
    max_iter: int = config.SOLVER_MAX_ITER
    max_backtracks: int = config.SOLVER_MAX_BACKTRACKS
    spectral_mode: SpectralMode = SpectralMode(config.SOLVER_SPECTRAL_MODE)
    damping: Optional[Tuple[float, float]] = None
    refresh_period: int = config.SOLVER_REFRESH_PERIOD
    alpha_min_ls: float = config.SOLVER_ALPHA_MIN_LS

    def __post_init__(self):
        if isinstance(self.algorithm, str):
            self.algorithm = Algorithm.parse(self.algorithm)
        if isinstance(self.spectral_mode, str):
            try:
                self.spectral_mode = SpectralMode(self.spectral_mode.lower())
            except ValueError:
                raise ConfigError(f"unknown spectral mode '{self.spectral_mode}'")

        if self.s < 1:
            raise ConfigError(f"sparsity level must be >= 1, got {self.s}")
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"step size must be positive, got {self.lam}")
        for name in ("eta", "sigma", "beta_armijo", "sigma2_armijo"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")
        if not 0.0 < self.alpha_min <= self.alpha_max:
            raise ConfigError(f"need 0 < alpha_min <= alpha_max, got [{self.alpha_min}, {self.alpha_max}]")
        if self.eps_hat < 0 or self.max_iter < 0:
            raise ConfigError("eps_hat and max_iter must be nonnegative")
        if self.max_backtracks < 1 or self.refresh_period < 1:
            raise ConfigError("max_backtracks and refresh_period must be >= 1")
        if self.unchanged_threshold < 1:
            raise ConfigError(f"unchanged_threshold must be >= 1, got {self.unchanged_threshold}")
        # validates t_newton, damping and the Armijo constants
        self.newton_params()

    def newton_params(self) -> NewtonParams:
        return NewtonParams(
            t_steps=self.t_newton,
            beta=self.beta_armijo,
            sigma2=self.sigma2_armijo,
            damping=self.damping,
            alpha_min_ls=self.alpha_min_ls
        )


@dataclass(frozen=True)
class TraceRecord:
    """One outer iteration, evaluated at the anchor point z^k"""
    k: int
    step_type: StepType
    f: float
    residual: float
    t_k: float
    support_changed: bool
    ge_cum: int
    cg_cum: int

    def as_row(self) -> List[object]:
        return [
            self.k, self.step_type.value, repr(self.f), repr(self.residual),
            repr(self.t_k), str(self.support_changed).lower(), self.ge_cum, self.cg_cum
        ]


@dataclass
class SolveResult:
    """Final iterate, cost counters and the complete trace of one run"""
    w: SparseIterate
    f: float
    residual: float
    iterations: int
    ge: int
    cg: int
    wall_time: float
    status: SolveStatus
    trace: List[TraceRecord] = field(default_factory=list)
    selected: Optional[SupportSet] = None
    unique: bool = False
    lam: float = 0.0
    lipschitz: Optional[float] = None

    @property
    def converged(self) -> bool:
        return self.status is SolveStatus.CONVERGED


@dataclass(frozen=True)
class GateDecision:
    passed: bool
    zeta: float = 0.0


def extrapolation_gate(
    prev_outcome: Optional[ProjectionOutcome],
    cur_outcome: Optional[ProjectionOutcome],
    grad_J: np.ndarray,
    d: np.ndarray,
    epsilon_zeta: float = config.SOLVER_EPSILON_ZETA
) -> GateDecision:
    """
    Decide whether w^k - w^{k-1} is worth extrapolating along.

    Passes only when both iterates select the same support, d != 0 and the
    cosine zeta = -<d, grad_J> / (||d|| ||grad_J||) is at least epsilon_zeta.
    """
    if prev_outcome is None or cur_outcome is None:
        return GateDecision(False)
    if not same_support(prev_outcome.selected, cur_outcome.selected):
        return GateDecision(False)
    d_norm = float(np.linalg.norm(d))
    g_norm = float(np.linalg.norm(grad_J))
    if d_norm == 0.0 or g_norm == 0.0:
        return GateDecision(False)
    zeta = -float(np.dot(d, grad_J)) / (d_norm * g_norm)
    if not math.isfinite(zeta) or zeta < epsilon_zeta:
        return GateDecision(False, zeta)
    return GateDecision(True, zeta)


def spectral_step_bb(
    s_vec: np.ndarray,
    r_vec: np.ndarray,
    grad_J: np.ndarray,
    d: np.ndarray
) -> Optional[float]:
    """
    Barzilai-Borwein extrapolation length.

    alpha = <s, s> / <s, r>, t_hat = -alpha <grad, d> / ||d||^2.

    Returns:
        t_hat, or None when <s, r> <= 0
    """
    sr = float(np.dot(s_vec, r_vec))
    d_norm_sq = float(np.dot(d, d))
    if not sr > 0.0 or d_norm_sq == 0.0:
        return None
    alpha = float(np.dot(s_vec, s_vec)) / sr
    return -alpha * float(np.dot(grad_J, d)) / d_norm_sq


def spectral_step_exact(
    model: Model,
    state: LinearState,
    Xd: np.ndarray,
    grad_dot_d: float,
    d_norm_sq: float
) -> Optional[float]:
    """
    One-dimensional Newton step along d: -<grad, d> / <hess d, d>.

    Returns:
        t_hat, or None when the curvature along d vanishes
    """
    curvature = model.directional_curvature(state, Xd, d_norm_sq)
    if not curvature > CURVATURE_FLOOR:
        return None
    return -grad_dot_d / curvature


def safeguard_step(
    t_hat: float,
    grad_J: np.ndarray,
    d: np.ndarray,
    zeta: float,
    solver_config: SolverConfig
) -> float:
    """Clip t_hat to [c alpha_min, c alpha_max] with c = ||grad_J|| / (zeta ||d||)"""
    c = float(np.linalg.norm(grad_J)) / (zeta * float(np.linalg.norm(d)))
    return float(np.clip(t_hat, c * solver_config.alpha_min, c * solver_config.alpha_max))


def backtrack_extrapolation(
    model: Model,
    state_k: LinearState,
    state_prev: LinearState,
    d_norm_sq: float,
    t_hat: float,
    solver_config: SolverConfig,
    counters: Optional[OracleCounter] = None
) -> Optional[Tuple[float, LinearState]]:
    """
    Shrink t = eta^i t_hat until f(w + t d) <= f(w) - sigma t^2 ||d||^2.

    Trials recycle the cached z vectors and never touch the gradient.

    Returns:
        (t, state at w^k + t d), or None after max_backtracks failed trials
    """
    t = t_hat
    for _ in range(solver_config.max_backtracks):
        try:
            candidate = model.update_extrapolated(
                state_k, state_prev, t, solver_config.refresh_period, counters
            )
        except NumericError:
            candidate = None
        if candidate is not None and candidate.f <= state_k.f - solver_config.sigma * t * t * d_norm_sq:
            return t, candidate
        t *= solver_config.eta
    return None


class SubsetSolver:
    """
    One run of the outer loop.

    Each iteration k builds an anchor z^k (w^k itself, an extrapolated point
    or a Newton point), evaluates one full gradient there, records the
    trace, checks the residual and then takes w^{k+1} = P(z^k - lam grad).
    """

    def __init__(
        self,
        model: Model,
        solver_config: SolverConfig,
        extrapolate: bool,
        identify: bool,
        observers: Optional[Iterable[Observer]] = None
    ):
        self.model = model
        self.config = solver_config
        self.extrapolate = extrapolate
        self.identify = identify
        self.counters = OracleCounter()
        self.subject = TraceSubject()
        self.recorder = TraceRecorder()
        self.subject.attach(self.recorder)
        for observer in observers or ():
            self.subject.attach(observer)

    def run(self, w0: Optional[SparseIterate] = None) -> SolveResult:
        model, cfg, counters = self.model, self.config, self.counters
        lipschitz = None
        lam = cfg.lam
        if lam is None:
            lipschitz = model.lipschitz_estimate()
            lam = config.LAMBDA_SCALE / lipschitz
        if w0 is None:
            w0 = SparseIterate.zeros(model.n)
        if w0.nonzero_count() > cfg.s:
            raise ContractViolation(f"starting point has {w0.nonzero_count()} nonzeros, s={cfg.s}")

        name = cfg.algorithm.value
        logger.info(f"Starting {name}: m={model.m}, n={model.n}, s={cfg.s}, lambda={lam:.6g}")
        started = time.perf_counter()

        status = SolveStatus.MAX_ITER
        anchor: Optional[LinearState] = None
        outcome: Optional[ProjectionOutcome] = None
        res = math.inf
        try:
            state = model.make_state(w0, counters)
            anchor = state
            prev_state: Optional[LinearState] = None
            prev_outcome: Optional[ProjectionOutcome] = None
            cur_outcome: Optional[ProjectionOutcome] = None
            unchanged = 0

            for k in range(cfg.max_iter + 1):
                support_changed = False
                if prev_outcome is not None:
                    same = same_support(prev_outcome.selected, cur_outcome.selected)
                    support_changed = not same
                    unchanged = unchanged + 1 if same else 0

                step_type, t_k, anchor = StepType.PG, 0.0, state
                if self.identify and unchanged >= cfg.unchanged_threshold:
                    anchor, step_type = self._newton(state, cur_outcome.selected)
                    if step_type is StepType.NEWTON_FAILED:
                        unchanged = 0
                elif self.extrapolate and prev_state is not None:
                    accepted = self._extrapolate(prev_state, state, prev_outcome, cur_outcome)
                    if accepted is not None:
                        t_k, anchor = accepted
                        step_type = StepType.EXTRAPOLATED

                grad = model.full_gradient(anchor, counters)
                outcome = gradient_projection(anchor, grad, lam, cfg.s)
                res = residual(model, anchor, lam, cfg.s, grad=grad, outcome=outcome)
                self.subject.iteration_completed(TraceRecord(
                    k=k,
                    step_type=step_type,
                    f=anchor.f,
                    residual=res,
                    t_k=t_k,
                    support_changed=support_changed,
                    ge_cum=counters.gradient_evals,
                    cg_cum=counters.hessian_products
                ))

                if res < cfg.eps_hat:
                    status = SolveStatus.CONVERGED
                    break
                if k == cfg.max_iter:
                    break

                new_state, _ = pg_step(model, anchor, lam, cfg.s, outcome=outcome, counters=counters)
                prev_state, state = state, new_state
                prev_outcome, cur_outcome = cur_outcome, outcome
        except NumericError as e:
            status = SolveStatus.NUMERIC_ERROR
            logger.error(f"{name} stopped on a numeric error: {str(e)}")

        wall_time = time.perf_counter() - started
        trace = list(self.recorder.records)
        if anchor is None:
            w, f = w0, math.nan
        else:
            w, f = anchor.w, anchor.f
        if trace:
            res = trace[-1].residual

        result = SolveResult(
            w=w,
            f=f,
            residual=res,
            iterations=len(trace),
            ge=counters.gradient_evals,
            cg=counters.hessian_products,
            wall_time=wall_time,
            status=status,
            trace=trace,
            selected=outcome.selected if outcome is not None else None,
            unique=outcome.unique if outcome is not None else False,
            lam=lam,
            lipschitz=lipschitz
        )
        log = logger.info if result.converged else logger.warning
        log(
            f"{name} finished: status={status.value}, iterations={result.iterations}, "
            f"GE={result.ge}, CG={result.cg}, f={f:.10g}, residual={res:.3e}, time={wall_time:.3f}s"
        )
        return result

    def _newton(self, state: LinearState, selected: SupportSet) -> Tuple[LinearState, StepType]:
        start = restrict(state.w, selected)
        outcome = ssn_steps(
            self.model, selected, start, self.config.newton_params(),
            state=state, counters=self.counters
        )
        if outcome.ok:
            return outcome.state, StepType.NEWTON
        return state, StepType.NEWTON_FAILED

    def _extrapolate(
        self,
        prev_state: LinearState,
        state: LinearState,
        prev_outcome: Optional[ProjectionOutcome],
        cur_outcome: ProjectionOutcome
    ) -> Optional[Tuple[float, LinearState]]:
        model, cfg = self.model, self.config
        if prev_outcome is None or not same_support(prev_outcome.selected, cur_outcome.selected):
            return None

        J = cur_outcome.selected
        d = state.w.values - prev_state.w.values
        grad_J = model.restricted_gradient(state, J)
        gate = extrapolation_gate(prev_outcome, cur_outcome, grad_J, d, cfg.epsilon_zeta)
        if not gate.passed:
            return None

        d_norm_sq = float(d @ d)
        if cfg.spectral_mode is SpectralMode.EXACT:
            t_hat = spectral_step_exact(model, state, state.z - prev_state.z, float(grad_J @ d), d_norm_sq)
        else:
            r_vec = grad_J - model.restricted_gradient(prev_state, J)
            t_hat = spectral_step_bb(d, r_vec, grad_J, d)
        if t_hat is None:
            return None

        t_hat = safeguard_step(t_hat, grad_J, d, gate.zeta, cfg)
        accepted = backtrack_extrapolation(model, state, prev_state, d_norm_sq, t_hat, cfg, self.counters)
        if accepted is None:
            logger.debug(f"Extrapolation rejected after {cfg.max_backtracks} trials (t_hat={t_hat:.3e})")
        return accepted


def pg_plus_meta(
    model: Model,
    solver_config: SolverConfig,
    inner: InnerMode = InnerMode.PLAIN,
    w0: Optional[SparseIterate] = None,
    observers: Optional[Iterable[Observer]] = None
) -> SolveResult:
    """
    Identification meta-loop: count iterations with an unchanged selected
    support and, once the count reaches unchanged_threshold, anchor the next
    projected-gradient step at t_newton SSN steps on that support.

    Args:
        model: Loss model
        solver_config: Solver parameters
        inner: PLAIN (PG+) or EXTRAPOLATE (APG+) while the support still moves
        w0: Starting point (default zero)
        observers: Extra trace observers

    Returns:
        SolveResult
    """
    solver = SubsetSolver(
        model, solver_config,
        extrapolate=inner is InnerMode.EXTRAPOLATE,
        identify=True,
        observers=observers
    )
    return solver.run(w0)


def solve(
    model: Model,
    solver_config: SolverConfig,
    w0: Optional[SparseIterate] = None,
    observers: Optional[Iterable[Observer]] = None
) -> SolveResult:
    """
    Run the algorithm named in solver_config from w0 (default zero).

    Args:
        model: Loss model
        solver_config: Solver parameters
        w0: Feasible starting point
        observers: Extra trace observers

    Returns:
        SolveResult with the complete trace
    """
    algorithm = solver_config.algorithm
    if algorithm.identifies:
        inner = InnerMode.EXTRAPOLATE if algorithm.extrapolates else InnerMode.PLAIN
        return pg_plus_meta(model, solver_config, inner, w0, observers)
    solver = SubsetSolver(
        model, solver_config,
        extrapolate=algorithm.extrapolates,
        identify=False,
        observers=observers
    )
    return solver.run(w0)
