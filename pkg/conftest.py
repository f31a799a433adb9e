"""
Shared fixtures: small dense-backed instances for both losses
"""
from pathlib import Path

import numpy as np
import pytest

from shared.dataio import Dataset, DesignMatrix
from shared.model import LossSpec, Model

DATA_DIR = Path(__file__).parent / "data"


def dense_model(X, y, loss: LossSpec = None) -> Model:
    """Model over a dense design matrix"""
    loss = loss or LossSpec.least_squares()
    return Model(Dataset(DesignMatrix.from_dense(np.asarray(X, dtype=float)), np.asarray(y, dtype=float), loss.task), loss)


def random_ls_model(rng, m: int, n: int, density: float = 1.0) -> Model:
    X = rng.standard_normal((m, n))
    if density < 1.0:
        X *= rng.random((m, n)) < density
    y = rng.standard_normal(m)
    return dense_model(X, y)


def random_logistic_model(rng, m: int, n: int, mu: float = 0.1, density: float = 1.0) -> Model:
    X = rng.standard_normal((m, n))
    if density < 1.0:
        X *= rng.random((m, n)) < density
    y = np.where(rng.standard_normal(m) >= 0, 1.0, -1.0)
    return dense_model(X, y, LossSpec.logistic(mu))


def planted_ls_model(rng, m: int, n: int, support, noise: float = 0.01) -> Model:
    """Regression instance with a planted sparse signal on well-separated columns"""
    X = rng.standard_normal((m, n)) / np.sqrt(m)
    w = np.zeros(n)
    w[list(support)] = 3.0 + rng.random(len(support))
    y = X @ w + noise * rng.standard_normal(m)
    return dense_model(X, y)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def identity_model():
    """X = I_2, y = (3, 1), least squares"""
    return dense_model(np.eye(2), [3.0, 1.0])


@pytest.fixture
def tiny_ls_path():
    return str(DATA_DIR / "tiny_ls.svm")


@pytest.fixture
def tiny_logistic_path():
    return str(DATA_DIR / "tiny_logistic.svm")


@pytest.fixture(params=["ls", "logistic"])
def small_model(request, rng):
    if request.param == "ls":
        return random_ls_model(rng, 20, 8)
    return random_logistic_model(rng, 20, 8)
