"""
Loss Model Module
Linear empirical risk f(w) = sum_i g_i(x_i^T w) + (mu/2)||w||^2 with
objective, gradient and Hessian oracles restricted to column subsets,
plus the cached linear state that lets extrapolation trials run in O(m)
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Tuple

import numpy as np
from scipy.special import expit

from config import config
from shared.dataio import Dataset, Task
from shared.errors import ConfigError, ContractViolation, NumericError
from shared.sparsity import SparseIterate, SupportSet

logger = logging.getLogger(__name__)


class LossVariant(Enum):
    """Per-instance loss g_i"""
    LEAST_SQUARES = "ls"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class LossSpec:
    """
    Loss variant and ridge weight.

    LeastSquares: g_i(z) = (z - y_i)^2 / 2, mu = 0.
    Logistic: g_i(z) = log(1 + exp(-y_i z)), ridge (mu/2)||w||^2.
    """
    variant: LossVariant
    mu: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.mu) or self.mu < 0:
            raise ConfigError(f"mu must be finite and nonnegative, got {self.mu}")
        if self.variant is LossVariant.LEAST_SQUARES and self.mu != 0.0:
            raise ConfigError("least squares carries no ridge term (mu must be 0)")

    @classmethod
    def least_squares(cls) -> 'LossSpec':
        return cls(LossVariant.LEAST_SQUARES, 0.0)

    @classmethod
    def logistic(cls, mu: float = None) -> 'LossSpec':
        return cls(LossVariant.LOGISTIC, config.LOGISTIC_MU if mu is None else mu)

    @property
    def curvature_bound(self) -> float:
        """sup g'' over the real line"""
        return 1.0 if self.variant is LossVariant.LEAST_SQUARES else 0.25

    @property
    def task(self) -> Task:
        return Task.REGRESSION if self.variant is LossVariant.LEAST_SQUARES else Task.CLASSIFICATION

    def values(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.variant is LossVariant.LEAST_SQUARES:
            return 0.5 * (z - y) ** 2
        # log(1 + exp(-a)) without overflow
        return np.logaddexp(0.0, -y * z)

    def derivatives(self, z: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self.variant is LossVariant.LEAST_SQUARES:
            return z - y, np.ones_like(z)
        a = y * z
        return -y * expit(-a), expit(a) * expit(-a)


@dataclass
class OracleCounter:
    """Per-run cost counters (GE, CG and full design-matrix passes)"""
    gradient_evals: int = 0
    hessian_products: int = 0
    matrix_passes: int = 0

    def snapshot(self) -> Tuple[int, int, int]:
        return self.gradient_evals, self.hessian_products, self.matrix_passes


@dataclass
class LinearState:
    """
    Cached quantities at an iterate w: z = Xw, f(w), g'(z) and g''(z).

    Single-owner value; never shared between concurrent solves.
    """
    w: SparseIterate
    z: np.ndarray
    f: float
    gprime: np.ndarray
    gsecond: np.ndarray
    updates_since_refresh: int = 0


@dataclass(frozen=True)
class Model:
    """Dataset plus loss; immutable and shareable across threads"""
    data: Dataset
    loss: LossSpec

    def __post_init__(self):
        if self.data.task is not self.loss.task:
            raise ConfigError(
                f"task mismatch: {self.loss.variant.value} loss on {self.data.task.value} data"
            )

    @property
    def n(self) -> int:
        return self.data.cols

    @property
    def m(self) -> int:
        return self.data.rows

    def state_from_z(self, w: SparseIterate, z: np.ndarray, updates: int = 0) -> LinearState:
        """Fill f and derivative caches for an iterate whose z = Xw is already known"""
        y = self.data.y
        with np.errstate(over='ignore', invalid='ignore'):
            f = float(np.sum(self.loss.values(z, y)))
            if self.loss.mu:
                f += 0.5 * self.loss.mu * float(w.values @ w.values)
        if not math.isfinite(f):
            raise NumericError(f"objective is not finite ({f})")
        gprime, gsecond = self.loss.derivatives(z, y)
        return LinearState(w, z, f, gprime, gsecond, updates)

    def make_state(self, w: SparseIterate, counters: Optional[OracleCounter] = None) -> LinearState:
        """
        Build the cached state at w from scratch.

        Args:
            w: Iterate with ambient dimension n
            counters: Optional run counters (one matrix pass)

        Returns:
            LinearState with z = X_{:,supp(w)} w computed exactly
        """
        if w.ambient_dim != self.n:
            raise ContractViolation(f"iterate lives in R^{w.ambient_dim}, model in R^{self.n}")
        z = self.data.X.matvec_cols(w.support, w.values)
        if counters is not None:
            counters.matrix_passes += 1
        return self.state_from_z(w, z)

    def full_gradient(self, state: LinearState, counters: Optional[OracleCounter] = None) -> np.ndarray:
        """grad f = X^T g'(z) + mu w; counts one gradient evaluation"""
        grad = self.data.X.rmatvec(state.gprime)
        if self.loss.mu:
            grad[state.w.support] += self.loss.mu * state.w.values
        if counters is not None:
            counters.gradient_evals += 1
            counters.matrix_passes += 1
        return grad

    def restricted_gradient(self, state: LinearState, J: Any) -> np.ndarray:
        """(grad f)_J at the cost of the nonzeros in columns J"""
        grad = self.data.X.transpose_matvec_cols(J, state.gprime)
        if self.loss.mu:
            grad += self.loss.mu * state.w.values_on(J)
        return grad

    def hvp_restricted(
        self,
        state: LinearState,
        J: Any,
        v: Any,
        counters: Optional[OracleCounter] = None
    ) -> np.ndarray:
        """(X^T diag(g'') X_{:,J} v)_J + mu v"""
        v = np.asarray(v, dtype=np.float64)
        X = self.data.X
        Xv = X.matvec_cols(J, v)
        out = X.transpose_matvec_cols(J, state.gsecond * Xv)
        if self.loss.mu:
            out += self.loss.mu * v
        if counters is not None:
            counters.hessian_products += 1
        return out

    def directional_curvature(self, state: LinearState, Xd: np.ndarray, d_norm_sq: float) -> float:
        """<grad^2 f(w) d, d> from a precomputed Xd"""
        return float(np.sum(state.gsecond * Xd * Xd)) + self.loss.mu * d_norm_sq

    def update_extrapolated(
        self,
        state_k: LinearState,
        state_prev: LinearState,
        t: float,
        refresh_period: int = None,
        counters: Optional[OracleCounter] = None
    ) -> LinearState:
        """
        State at w^k + t (w^k - w^{k-1}) from the two cached z vectors.

        Both iterates must share the same support. The z vector is formed as
        a linear combination in O(m); after refresh_period consecutive such
        updates it is recomputed from scratch to bound drift.
        """
        if not np.array_equal(state_k.w.support, state_prev.w.support):
            raise ContractViolation("extrapolation needs both iterates on the same support")
        refresh_period = config.SOLVER_REFRESH_PERIOD if refresh_period is None else refresh_period

        wk, wp = state_k.w, state_prev.w
        values = wk.values + t * (wk.values - wp.values)
        point = SparseIterate(wk.support, values, wk.ambient_dim)
        updates = state_k.updates_since_refresh + 1
        if updates > refresh_period:
            logger.debug(f"Refreshing cached z after {updates - 1} recycled updates")
            return self.make_state(point, counters)

        z = state_k.z + t * (state_k.z - state_prev.z)
        return self.state_from_z(point, z, updates)

    def lipschitz_estimate(
        self,
        tol: float = None,
        max_iter: int = None,
        safety: float = None
    ) -> float:
        """
        Upper estimate of the gradient Lipschitz constant.

        L = lambda_max(X X^T) * sup g'' + mu, with lambda_max from power
        iteration on v -> X (X^T v) started at the normalized all-ones vector,
        then scaled by a safety factor against underestimation.
        """
        tol = config.LIPSCHITZ_TOL if tol is None else tol
        max_iter = config.LIPSCHITZ_MAX_ITER if max_iter is None else max_iter
        safety = config.LIPSCHITZ_SAFETY if safety is None else safety

        X = self.data.X
        if X.nnz == 0:
            raise NumericError("design matrix has no nonzeros; Lipschitz constant undefined")

        eigenvalue = self._power_iteration(np.ones(self.m), tol, max_iter)
        if eigenvalue == 0.0:
            # all-ones start orthogonal to range(X)
            start = np.random.default_rng(config.DEFAULT_SEED).standard_normal(self.m)
            eigenvalue = self._power_iteration(start, tol, max_iter)

        L = (eigenvalue * self.loss.curvature_bound + self.loss.mu) * safety
        logger.info(f"Lipschitz estimate L={L:.6g} (lambda_max={eigenvalue:.6g})")
        return L

    def _power_iteration(self, start: np.ndarray, tol: float, max_iter: int) -> float:
        X = self.data.X
        v = start / np.linalg.norm(start)
        previous = 0.0
        eigenvalue = 0.0
        for it in range(max_iter):
            xtv = X.rmatvec(v)
            eigenvalue = float(xtv @ xtv)
            u = X.matvec(xtv)
            norm_u = np.linalg.norm(u)
            if norm_u == 0.0:
                break
            if it > 0 and abs(eigenvalue - previous) <= tol * eigenvalue:
                break
            v = u / norm_u
            previous = eigenvalue
        return eigenvalue

    def restricted_minimize(
        self,
        J: Any,
        grad_tol: float = 1e-12,
        max_iter: int = 200
    ) -> Tuple[np.ndarray, float]:
        """
        Minimize f over the coordinates in J with dense linear algebra (reference solver).

        Least squares uses a minimum-norm least-squares solve; logistic uses
        Newton's method with Armijo backtracking until ||grad f_J|| <= grad_tol.

        Returns:
            (values on J, objective value)
        """
        support = SupportSet.of(J, self.n)
        XJ = self.data.X.dense_columns(support)
        y = self.data.y

        if self.loss.variant is LossVariant.LEAST_SQUARES:
            values = np.linalg.lstsq(XJ, y, rcond=None)[0]
        else:
            values = self._logistic_newton(XJ, y, grad_tol, max_iter)

        point = SparseIterate(support.indices, values, self.n)
        return values, self.state_from_z(point, XJ @ values).f

    def _logistic_newton(self, XJ: np.ndarray, y: np.ndarray, grad_tol: float, max_iter: int) -> np.ndarray:
        mu = self.loss.mu
        values = np.zeros(XJ.shape[1])

        def objective(v: np.ndarray) -> float:
            return float(np.sum(self.loss.values(XJ @ v, y))) + 0.5 * mu * float(v @ v)

        f = objective(values)
        for _ in range(max_iter):
            gprime, gsecond = self.loss.derivatives(XJ @ values, y)
            grad = XJ.T @ gprime + mu * values
            if np.linalg.norm(grad) <= grad_tol:
                break
            hessian = XJ.T @ (gsecond[:, None] * XJ) + mu * np.eye(XJ.shape[1])
            step = np.linalg.lstsq(hessian, -grad, rcond=None)[0]
            slope = float(grad @ step)
            if slope >= 0:
                break
            alpha = 1.0
            while alpha > 1e-16:
                trial = objective(values + alpha * step)
                if trial <= f + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                break
            values = values + alpha * step
            f = trial
        return values
