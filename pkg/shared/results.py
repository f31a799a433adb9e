"""
Results Storage Module
Persists solve results (JSON), benchmark tables (CSV) and reloads stored
results so they can be re-evaluated against the data
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

from shared.errors import ContractViolation
from shared.sparsity import SparseIterate

logger = logging.getLogger(__name__)

RESULT_FIELDS = ["n", "s", "support", "values", "f", "residual", "iterations", "ge", "cg", "status"]

BENCH_COLUMNS = ["dataset", "algorithm", "s", "cpu_seconds", "ge", "cg", "metric", "converged"]
TRANSITION_COLUMNS = ["fraction", "s", "algorithm", "cpu_seconds", "ge", "cg", "converged", "clamped"]
TOLERANCE_COLUMNS = ["tolerance", "algorithm", "cpu_seconds", "ge", "cg", "metric", "converged"]

PathLike = Union[str, Path]


class ResultStore:
    """
    File-backed storage for solver outputs.
    Every document is written in full; nothing is appended in place.
    """

    def save_result(self, path: PathLike, result: Any, s: int) -> Dict[str, Any]:
        """
        Write a SolveResult as a JSON document.

        Args:
            path: Destination file
            result: SolveResult
            s: Sparsity level the run used

        Returns:
            The document that was written
        """
        w = result.w
        document = {
            'n': int(w.ambient_dim),
            's': int(s),
            'support': [int(i) for i in w.support],
            'values': [float(v) for v in w.values],
            'f': float(result.f),
            'residual': float(result.residual),
            'iterations': int(result.iterations),
            'ge': int(result.ge),
            'cg': int(result.cg),
            'status': result.status.value
        }
        with open(path, 'w') as handle:
            json.dump(document, handle, indent=2)
        logger.info(f"Saved result to {path}")
        return document

    def load_result(self, path: PathLike) -> Dict[str, Any]:
        """
        Read a result document back.

        Returns:
            The stored fields plus 'w', the iterate as a SparseIterate

        Raises:
            ContractViolation: If a required field is missing
        """
        with open(path) as handle:
            document = json.load(handle)
        missing = [name for name in RESULT_FIELDS if name not in document]
        if missing:
            raise ContractViolation(f"result file {path} lacks fields {missing}")
        document['w'] = SparseIterate(document['support'], document['values'], document['n'])
        logger.debug(f"Loaded result from {path}")
        return document

    def write_table(self, path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
        """
        Write a CSV table with a fixed column order.

        Returns:
            Number of data rows written
        """
        written = 0
        with open(path, 'w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ContractViolation(f"row has {len(row)} cells, header has {len(header)}")
                writer.writerow(row)
                written += 1
        logger.info(f"Wrote {written} rows to {path}")
        return written

    def read_table(self, path: PathLike) -> List[Dict[str, str]]:
        with open(path, newline='') as handle:
            return list(csv.DictReader(handle))


# Global result store instance
result_store = ResultStore()
