"""
LIBSVM Data Module
Parses LIBSVM text into an immutable column-compressed design matrix and
provides the column-restricted kernels every solver relies on
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, List, Optional, TextIO, Tuple

import numpy as np
from scipy import sparse

from config import config
from shared.errors import ConfigError, ContractViolation, ParseError

logger = logging.getLogger(__name__)


class Task(Enum):
    """Learning task implied by the labels"""
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


def _readonly(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


def _index_array(J: Any) -> np.ndarray:
    """Accept a SupportSet (anything with .indices) or a plain index sequence"""
    return np.asarray(getattr(J, 'indices', J), dtype=np.intp).reshape(-1)


class DesignMatrix:
    """
    Immutable m x n sparse matrix stored column-major (CSC).

    Every hot kernel touches a subset of columns, so column-compressed
    storage keeps their cost proportional to the nonzeros of those columns.
    """

    def __init__(self, matrix: Any):
        csc = sparse.csc_matrix(matrix, dtype=np.float64, copy=True)
        csc.eliminate_zeros()
        csc.sort_indices()
        if not np.all(np.isfinite(csc.data)):
            raise ContractViolation("design matrix contains non-finite values")
        self._csc = csc

    @classmethod
    def from_dense(cls, dense: Any) -> 'DesignMatrix':
        return cls(sparse.csc_matrix(np.atleast_2d(np.asarray(dense, dtype=np.float64))))

    @property
    def rows(self) -> int:
        return self._csc.shape[0]

    @property
    def cols(self) -> int:
        return self._csc.shape[1]

    @property
    def nnz(self) -> int:
        return int(self._csc.nnz)

    @property
    def col_ptr(self) -> np.ndarray:
        return _readonly(self._csc.indptr)

    @property
    def row_idx(self) -> np.ndarray:
        return _readonly(self._csc.indices)

    @property
    def values(self) -> np.ndarray:
        return _readonly(self._csc.data)

    def to_dense(self) -> np.ndarray:
        return self._csc.toarray()

    def _columns(self, J: Any) -> np.ndarray:
        idx = _index_array(J)
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.cols:
                raise ContractViolation(f"column index out of range for n={self.cols}")
            if np.any(np.diff(idx) <= 0):
                raise ContractViolation("column indices must be strictly increasing")
        return idx

    def matvec_cols(self, J: Any, v: Any) -> np.ndarray:
        """
        Compute X[:, J] @ v.

        Args:
            J: Sorted column indices (SupportSet or sequence)
            v: Coefficients, one per index in J

        Returns:
            Dense vector of length m
        """
        idx = self._columns(J)
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        if v.size != idx.size:
            raise ContractViolation(f"expected {idx.size} coefficients, got {v.size}")
        if idx.size == 0:
            return np.zeros(self.rows)
        return np.asarray(self._csc[:, idx] @ v).reshape(-1)

    def transpose_matvec_cols(self, J: Any, u: Any) -> np.ndarray:
        """Compute (X^T u)_J without touching columns outside J"""
        idx = self._columns(J)
        u = self._row_vector(u)
        if idx.size == 0:
            return np.zeros(0)
        return np.asarray(self._csc[:, idx].T @ u).reshape(-1)

    def col_weighted_sqnorms(self, J: Any, wts: Any) -> np.ndarray:
        """Return sum_i wts_i * X[i, j]^2 for every j in J (Jacobi diagonal)"""
        idx = self._columns(J)
        wts = self._row_vector(wts)
        if np.any(wts < 0):
            raise ContractViolation("row weights must be nonnegative")
        if idx.size == 0:
            return np.zeros(0)
        sub = self._csc[:, idx]
        return np.asarray(sub.multiply(sub).T @ wts).reshape(-1)

    def rmatvec(self, u: Any) -> np.ndarray:
        """Full adjoint X^T u"""
        return np.asarray(self._csc.T @ self._row_vector(u)).reshape(-1)

    def matvec(self, w: Any) -> np.ndarray:
        """Full product X w for a dense w of length n"""
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if w.size != self.cols:
            raise ContractViolation(f"expected a vector of length {self.cols}, got {w.size}")
        return np.asarray(self._csc @ w).reshape(-1)

    def dense_columns(self, J: Any) -> np.ndarray:
        """X[:, J] as a dense m x |J| array"""
        return self._csc[:, self._columns(J)].toarray()

    def take_rows(self, rows: Any) -> 'DesignMatrix':
        return DesignMatrix(self._csc[np.asarray(rows, dtype=np.intp), :])

    def row_major(self) -> sparse.csr_matrix:
        return self._csc.tocsr()

    def _row_vector(self, u: Any) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        if u.size != self.rows:
            raise ContractViolation(f"expected a vector of length {self.rows}, got {u.size}")
        return u

    def __repr__(self) -> str:
        return f"DesignMatrix(m={self.rows}, n={self.cols}, nnz={self.nnz})"


@dataclass(frozen=True)
class Dataset:
    """Design matrix, labels and the task the labels describe"""
    X: DesignMatrix
    y: np.ndarray
    task: Task

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if y.size != self.X.rows:
            raise ContractViolation(f"{y.size} labels for {self.X.rows} rows")
        if not np.all(np.isfinite(y)):
            raise ContractViolation("labels must be finite")
        if self.task is Task.CLASSIFICATION and not np.all(np.abs(y) == 1.0):
            raise ContractViolation("classification labels must be exactly +1 or -1")
        object.__setattr__(self, 'y', _readonly(y))

    @property
    def rows(self) -> int:
        return self.X.rows

    @property
    def cols(self) -> int:
        return self.X.cols

    def take_rows(self, rows: Any) -> 'Dataset':
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.X.take_rows(rows), self.y[rows], self.task)


@dataclass(frozen=True)
class LabelPolicy:
    """
    Maps raw LIBSVM labels onto the task's label space.

    Regression passes labels through. Classification maps the larger of the
    two distinct raw labels to +1 and the other to -1; once fitted on the
    training file the same positive label is reused for the test file.
    """
    task: Task
    positive: Optional[float] = None

    @classmethod
    def regression(cls) -> 'LabelPolicy':
        return cls(Task.REGRESSION)

    @classmethod
    def classification(cls, positive: Optional[float] = None) -> 'LabelPolicy':
        return cls(Task.CLASSIFICATION, positive)

    def fit(self, raw: np.ndarray) -> 'LabelPolicy':
        if self.task is Task.REGRESSION or self.positive is not None:
            return self
        distinct = np.unique(raw)
        if distinct.size > 2:
            raise ConfigError(
                f"task mismatch: classification needs two distinct labels, found {distinct.size}"
            )
        if distinct.size == 2:
            return LabelPolicy(self.task, float(distinct[-1]))
        if distinct.size == 1 and distinct[0] > 0:
            return LabelPolicy(self.task, float(distinct[0]))
        return LabelPolicy(self.task, 1.0)

    def apply(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        if self.task is Task.REGRESSION:
            return raw.copy()
        policy = self.fit(raw)
        negatives = np.unique(raw[raw != policy.positive])
        if negatives.size > 1:
            raise ConfigError(
                f"task mismatch: labels {negatives.tolist()} cannot all map to -1"
            )
        return np.where(raw == policy.positive, 1.0, -1.0)


@dataclass
class _RawTable:
    rows: List[int]
    cols: List[int]
    vals: List[float]
    labels: List[float]
    width: int

    @property
    def m(self) -> int:
        return len(self.labels)


def _parse_number(token: str, what: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"malformed {what} {token!r}", lineno)
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what} {token!r}", lineno)
    return value


def _scan(stream: Iterable[str]) -> _RawTable:
    """Read LIBSVM lines into coordinate lists; indices converted to 0-based"""
    table = _RawTable([], [], [], [], 0)
    for lineno, raw_line in enumerate(stream, start=1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = 0.0
        if ':' not in tokens[0]:
            label = _parse_number(tokens[0], "label", lineno)
            tokens = tokens[1:]

        row = table.m
        seen = set()
        for token in tokens:
            idx_text, sep, val_text = token.partition(':')
            if not sep:
                raise ParseError(f"malformed token {token!r}", lineno)
            try:
                idx = int(idx_text)
            except ValueError:
                raise ParseError(f"malformed index {idx_text!r}", lineno)
            if idx <= 0:
                raise ParseError(f"feature index must be >= 1, got {idx}", lineno)
            if idx in seen:
                raise ParseError(f"duplicate feature index {idx}", lineno)
            seen.add(idx)
            value = _parse_number(val_text, "value", lineno)

            table.rows.append(row)
            table.cols.append(idx - 1)
            table.vals.append(value)
            table.width = max(table.width, idx)
        table.labels.append(label)
    return table


def _build(table: _RawTable, width: int, policy: LabelPolicy) -> Dataset:
    matrix = sparse.csc_matrix(
        (np.asarray(table.vals, dtype=np.float64),
         (np.asarray(table.rows, dtype=np.intp), np.asarray(table.cols, dtype=np.intp))),
        shape=(table.m, width)
    )
    y = policy.apply(np.asarray(table.labels, dtype=np.float64))
    return Dataset(DesignMatrix(matrix), y, policy.task)


def parse_libsvm(
    text_stream: Iterable[str],
    label_policy: LabelPolicy,
    min_width: int = 0
) -> Dataset:
    """
    Parse LIBSVM text into a Dataset.

    Args:
        text_stream: Iterable of lines ("label idx:val idx:val ...")
        label_policy: How raw labels map to the task's label space
        min_width: Lower bound for the number of columns n

    Returns:
        Dataset with n = max(largest index seen, min_width)

    Raises:
        ParseError: On malformed tokens, non-positive indices, duplicates
            or non-finite values (message carries the line number)
    """
    table = _scan(text_stream)
    return _build(table, max(table.width, min_width), label_policy.fit(np.asarray(table.labels)))


def write_libsvm(dataset: Dataset, text_stream: TextIO) -> None:
    """Serialize a Dataset as LIBSVM text with 1-based indices"""
    csr = dataset.X.row_major()
    for i in range(dataset.rows):
        start, end = csr.indptr[i], csr.indptr[i + 1]
        features = " ".join(
            f"{j + 1}:{v:.17g}" for j, v in zip(csr.indices[start:end], csr.data[start:end])
        )
        label = f"{dataset.y[i]:.17g}"
        text_stream.write(f"{label} {features}\n" if features else f"{label}\n")


def load_libsvm(path: str, label_policy: LabelPolicy, min_width: int = 0) -> Dataset:
    with open(path, 'r') as handle:
        dataset = parse_libsvm(handle, label_policy, min_width)
    logger.info(f"Loaded {path}: m={dataset.rows}, n={dataset.cols}, nnz={dataset.X.nnz}")
    return dataset


def load_pair(
    train_path: str,
    test_path: Optional[str],
    label_policy: LabelPolicy
) -> Tuple[Dataset, Optional[Dataset]]:
    """
    Load a training file and optional test file in one joint pass.

    Both files share n = the largest feature index seen in either, and the
    test labels use the label mapping fitted on the training labels.
    """
    with open(train_path, 'r') as handle:
        train_table = _scan(handle)
    test_table = None
    if test_path:
        with open(test_path, 'r') as handle:
            test_table = _scan(handle)

    width = max(train_table.width, test_table.width if test_table else 0)
    policy = label_policy.fit(np.asarray(train_table.labels))
    train = _build(train_table, width, policy)
    logger.info(f"Loaded {train_path}: m={train.rows}, n={train.cols}, nnz={train.X.nnz}")

    test = None
    if test_table is not None:
        test = _build(test_table, width, policy)
        logger.info(f"Loaded {test_path}: m={test.rows}, n={test.cols}, nnz={test.X.nnz}")
    return train, test


def split_train_test(
    dataset: Dataset,
    fraction: float = None,
    seed: int = None
) -> Tuple[Dataset, Dataset]:
    """
    Deterministically shuffle rows and split them.

    Args:
        dataset: Dataset to split (m >= 2)
        fraction: Share of rows in the first part, strictly inside (0, 1)
        seed: Shuffle seed

    Returns:
        (first part with ceil(fraction * m) rows, remaining rows)
    """
    fraction = config.SPLIT_FRACTION if fraction is None else fraction
    seed = config.DEFAULT_SEED if seed is None else seed
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    if dataset.rows < 2:
        raise ContractViolation("need at least two rows to split")

    order = np.random.default_rng(seed).permutation(dataset.rows)
    cut = math.ceil(fraction * dataset.rows)
    if cut >= dataset.rows:
        raise ConfigError(
            f"split fraction {fraction} leaves none of the {dataset.rows} rows held out"
        )
    return dataset.take_rows(order[:cut]), dataset.take_rows(order[cut:])


def make_synthetic(
    m: int,
    n: int,
    k_true: int,
    task: Task = Task.REGRESSION,
    noise: float = 0.01,
    seed: int = None
) -> Dataset:
    """
    Planted sparse model with a Gaussian design of unit-norm columns.

    Regression labels are X w + noise, classification labels sign(X w + noise)
    with sign(0) = +1.
    """
    if not 1 <= k_true <= n:
        raise ConfigError(f"k_true must lie in [1, {n}], got {k_true}")
    rng = np.random.default_rng(config.DEFAULT_SEED if seed is None else seed)
    dense = rng.standard_normal((m, n))
    dense /= np.linalg.norm(dense, axis=0, keepdims=True)

    w_true = np.zeros(n)
    planted = rng.choice(n, size=k_true, replace=False)
    w_true[planted] = rng.choice([-1.0, 1.0], size=k_true) * (1.0 + np.abs(rng.standard_normal(k_true)))

    signal = dense @ w_true + noise * rng.standard_normal(m)
    y = signal if task is Task.REGRESSION else np.where(signal >= 0, 1.0, -1.0)
    return Dataset(DesignMatrix.from_dense(dense), y, task)
