"""
Prediction metrics for a fitted sparse linear model
"""
import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from shared.dataio import Dataset, Task
from shared.errors import ContractViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricsReport:
    """
    Held-out quality plus the cost of the run that produced the model.

    metric is prediction accuracy in [0, 1] for classification and mean
    squared error for regression.
    """
    task: Task
    metric: float
    f: float
    residual: float
    iterations: int
    ge: int
    cg: int
    wall_time: float

    @property
    def metric_name(self) -> str:
        return "accuracy" if self.task is Task.CLASSIFICATION else "mse"

    def summary(self) -> str:
        return (
            f"{self.metric_name}={self.metric:.6g} f={self.f:.10g} residual={self.residual:.3e} "
            f"iterations={self.iterations} GE={self.ge} CG={self.cg} time={self.wall_time:.3f}s"
        )


def evaluate(w: Any, dataset: Dataset, task: Task) -> float:
    """
    Accuracy (sign(0) counts as +1) or MSE of w on dataset.

    Raises:
        ContractViolation: If the dataset width differs from dim(w)
    """
    if w.ambient_dim != dataset.cols:
        raise ContractViolation(f"model has {w.ambient_dim} features, test data has {dataset.cols}")
    if dataset.rows == 0:
        raise ContractViolation("cannot evaluate on an empty dataset")
    scores = dataset.X.matvec_cols(w.support, w.values)
    if task is Task.CLASSIFICATION:
        predicted = np.where(scores >= 0.0, 1.0, -1.0)
        return float(np.mean(predicted == dataset.y))
    return float(np.mean((dataset.y - scores) ** 2))


def predict_metrics(result: Any, test_dataset: Dataset, task: Task) -> MetricsReport:
    """
    Build the MetricsReport of a SolveResult on held-out data.

    Args:
        result: SolveResult
        test_dataset: Evaluation data
        task: Regression or classification

    Returns:
        MetricsReport
    """
    metric = evaluate(result.w, test_dataset, task)
    logger.debug(f"Evaluated on {test_dataset.rows} rows: {metric:.6g}")
    return MetricsReport(
        task=task,
        metric=metric,
        f=result.f,
        residual=result.residual,
        iterations=result.iterations,
        ge=result.ge,
        cg=result.cg,
        wall_time=result.wall_time
    )
