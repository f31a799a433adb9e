"""
Benchmark Service
Runs grids of independent solves (algorithms x sparsity levels x
tolerances) on a worker pool and returns the outcomes in grid order
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from config import config
from shared.dataio import Dataset
from shared.metrics import evaluate
from shared.model import Model
from shared.solvers import SolveResult, SolverConfig, solve

logger = logging.getLogger(__name__)


@dataclass
class RunRequest:
    """
    One cell of a benchmark grid.

    Args:
        solver_config: Configuration of the solve
        labels: Extra CSV cells identifying the cell (fraction, tolerance, ...)
    """
    solver_config: SolverConfig
    labels: Dict[str, Any] = field(default_factory=dict)


@dataclass
class RunOutcome:
    """Result of one grid cell; result is None when the run raised"""
    request: RunRequest
    result: Optional[SolveResult] = None
    metric: float = float('nan')
    error: Optional[str] = None

    @property
    def converged(self) -> bool:
        return self.result is not None and self.result.converged

    @property
    def cpu_seconds(self) -> float:
        return self.result.wall_time if self.result is not None else 0.0

    @property
    def ge(self) -> int:
        return self.result.ge if self.result is not None else 0

    @property
    def cg(self) -> int:
        return self.result.cg if self.result is not None else 0


class BenchWorker:
    """
    Worker pool executing independent solves.
    The Model is shared read-only; every solve owns its state and trace.
    """

    def __init__(self, model: Model, eval_dataset: Optional[Dataset] = None, threads: int = None):
        """
        Initialize the worker.

        Args:
            model: Training model shared by all runs
            eval_dataset: Data the metric column is computed on (defaults to the training data)
            threads: Number of concurrent solves
        """
        self.model = model
        self.eval_dataset = eval_dataset if eval_dataset is not None else model.data
        self.threads = max(1, threads or config.BENCH_THREADS)

    def run_all(self, requests: Sequence[RunRequest]) -> List[RunOutcome]:
        """
        Execute every request.

        Returns:
            Outcomes in the order of requests, whatever the completion order
        """
        logger.info(f"Running {len(requests)} solves on {self.threads} worker(s)")
        if self.threads == 1:
            return [self._run_one(request) for request in requests]
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            return list(executor.map(self._run_one, requests))

    def _run_one(self, request: RunRequest) -> RunOutcome:
        """Handle a single grid cell; failures are logged and recorded"""
        cfg = request.solver_config
        name = cfg.algorithm.value
        try:
            result = solve(self.model, cfg)
        except Exception as e:
            error_msg = str(e)
            logger.error(f"Run {name} s={cfg.s} {request.labels} failed: {error_msg}")
            return RunOutcome(request, error=error_msg)

        logger.info(
            f"{name} s={cfg.s} {request.labels}: GE={result.ge} CG={result.cg} "
            f"time={result.wall_time:.3f}s status={result.status.value}"
        )
        try:
            metric = evaluate(result.w, self.eval_dataset, self.model.data.task)
        except Exception as e:
            # the solve stands; only the metric cell is missing
            logger.warning(f"Metric for {name} s={cfg.s} {request.labels} unavailable: {str(e)}")
            return RunOutcome(request, result, error=str(e))
        return RunOutcome(request, result, metric)
