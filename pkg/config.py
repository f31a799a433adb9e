"""
Configuration module for the sparse subset-selection solvers
"""
import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Base configuration class"""

    # Outer loop (stopping rule and iteration cap)
    SOLVER_MAX_ITER = int(os.getenv('SOLVER_MAX_ITER', 10000))
    SOLVER_TOL = float(os.getenv('SOLVER_TOL', 1e-6))

    # Extrapolation (sufficient decrease, cosine test, safeguard)
    SOLVER_ETA = float(os.getenv('SOLVER_ETA', 0.5))
    SOLVER_SIGMA = float(os.getenv('SOLVER_SIGMA', 0.05))
    SOLVER_EPSILON_ZETA = float(os.getenv('SOLVER_EPSILON_ZETA', 1e-20))
    SOLVER_ALPHA_MIN = float(os.getenv('SOLVER_ALPHA_MIN', 1.0))
    SOLVER_ALPHA_MAX = float(os.getenv('SOLVER_ALPHA_MAX', 100.0))
    SOLVER_MAX_BACKTRACKS = int(os.getenv('SOLVER_MAX_BACKTRACKS', 50))
    SOLVER_SPECTRAL_MODE = os.getenv('SOLVER_SPECTRAL_MODE', 'exact')
    SOLVER_REFRESH_PERIOD = int(os.getenv('SOLVER_REFRESH_PERIOD', 100))

    # Subspace identification + Newton stage
    SOLVER_S_THRESHOLD = int(os.getenv('SOLVER_S_THRESHOLD', 5))
    SOLVER_T_NEWTON = int(os.getenv('SOLVER_T_NEWTON', 1))
    SOLVER_BETA_ARMIJO = float(os.getenv('SOLVER_BETA_ARMIJO', 0.5))
    SOLVER_SIGMA2_ARMIJO = float(os.getenv('SOLVER_SIGMA2_ARMIJO', 0.001))
    SOLVER_ALPHA_MIN_LS = float(os.getenv('SOLVER_ALPHA_MIN_LS', 1e-10))
    NEWTON_GRAD_TOL = float(os.getenv('NEWTON_GRAD_TOL', 1e-12))
    PRECOND_FLOOR = float(os.getenv('PRECOND_FLOOR', 1e-12))

    # Loss and step size
    LOGISTIC_MU = float(os.getenv('LOGISTIC_MU', 1e-10))
    LIPSCHITZ_TOL = float(os.getenv('LIPSCHITZ_TOL', 1e-3))
    LIPSCHITZ_MAX_ITER = int(os.getenv('LIPSCHITZ_MAX_ITER', 500))
    LIPSCHITZ_SAFETY = float(os.getenv('LIPSCHITZ_SAFETY', 1.001))
    LAMBDA_SCALE = float(os.getenv('LAMBDA_SCALE', 0.999))

    # Benchmark harness
    BENCH_THREADS = int(os.getenv('BENCH_THREADS', 1))
    DEFAULT_SEED = int(os.getenv('DEFAULT_SEED', 0))
    SPLIT_FRACTION = float(os.getenv('SPLIT_FRACTION', 0.8))

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')


config = Config()
