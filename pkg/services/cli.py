"""
Command-Line Service
Solves single instances, benchmarks algorithms on one sparsity level,
sweeps sparsity and tolerance grids, and generates synthetic data
"""
import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from config import config
from services.bench_service import BenchWorker, RunRequest
from shared.dataio import Dataset, LabelPolicy, Task, load_pair, make_synthetic, split_train_test, write_libsvm
from shared.errors import ConfigError, SubsetSelectionError
from shared.metrics import predict_metrics
from shared.model import LossSpec, Model
from shared.observer_pattern import CsvTraceObserver, LoggingTraceObserver
from shared.results import (
    BENCH_COLUMNS,
    TOLERANCE_COLUMNS,
    TRANSITION_COLUMNS,
    result_store,
)
from shared.solvers import Algorithm, SolveStatus, SolverConfig, solve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2


def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _name_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _flag(value: bool) -> str:
    return "true" if value else "false"


@dataclass
class RunSpec:
    """Everything a command needs, resolved from the command line"""
    command: str
    data_path: Optional[str] = None
    test_path: Optional[str] = None
    loss: str = "ls"
    mu: Optional[float] = None
    s: Optional[int] = None
    s_frac: Optional[float] = None
    s_grid: List[float] = field(default_factory=list)
    tol_grid: List[float] = field(default_factory=list)
    algorithms: List[str] = field(default_factory=list)
    tol: float = config.SOLVER_TOL
    max_iter: int = config.SOLVER_MAX_ITER
    spectral: str = config.SOLVER_SPECTRAL_MODE
    seed: int = config.DEFAULT_SEED
    split: float = config.SPLIT_FRACTION
    trace_path: Optional[str] = None
    out_path: Optional[str] = None
    table_path: Optional[str] = None
    threads: int = config.BENCH_THREADS
    rows: int = 50
    cols: int = 200
    k_true: int = 5
    task: str = "regression"
    noise: float = 0.01

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunSpec':
        known = {name for name in cls.__dataclass_fields__}
        values = {key: value for key, value in vars(args).items() if key in known and value is not None}
        return cls(**values)

    def loss_spec(self) -> LossSpec:
        if self.loss == "ls":
            return LossSpec.least_squares()
        if self.loss == "logistic":
            return LossSpec.logistic(self.mu)
        raise ConfigError(f"unknown loss '{self.loss}'")

    def label_policy(self) -> LabelPolicy:
        return LabelPolicy.regression() if self.loss == "ls" else LabelPolicy.classification()

    def parsed_algorithms(self) -> List[Algorithm]:
        if not self.algorithms:
            raise ConfigError("no algorithm given")
        return [Algorithm.parse(name) for name in self.algorithms]

    def solver_config(self, algorithm: Algorithm, s: int, tol: float = None) -> SolverConfig:
        return SolverConfig(
            algorithm=algorithm,
            s=s,
            eps_hat=self.tol if tol is None else tol,
            max_iter=self.max_iter,
            spectral_mode=self.spectral
        )


def resolve_sparsity(m: int, n: int, s: Optional[int] = None, fraction: Optional[float] = None) -> Tuple[int, bool]:
    """
    Turn an absolute count or a fraction of m into a sparsity level.

    Returns:
        (s clamped into [1, n], whether clamping to n happened)
    """
    if s is None and fraction is None:
        raise ConfigError("give either --s or --s-frac")
    if s is None:
        if fraction <= 0:
            raise ConfigError(f"sparsity fraction must be positive, got {fraction}")
        s = max(1, math.ceil(fraction * m))
    if s < 1:
        raise ConfigError(f"sparsity level must be >= 1, got {s}")
    if s > n:
        logger.warning(f"Sparsity level {s} exceeds n={n}; clamped")
        return n, True
    return s, False


def load_data(spec: RunSpec) -> Tuple[Dataset, Optional[Dataset]]:
    """
    Load training (and test) data; without a test file the training rows
    are split unless --split is 1 or more.
    """
    if not spec.data_path:
        raise ConfigError("--data is required")
    train, test = load_pair(spec.data_path, spec.test_path, spec.label_policy())
    if test is None and spec.split < 1.0:
        train, test = split_train_test(train, spec.split, spec.seed)
        logger.info(f"Split {spec.data_path}: {train.rows} training rows, {test.rows} held out")
    if test is not None and test.rows == 0:
        logger.warning(f"Test file {spec.test_path} has no rows; metrics use the training data")
        test = None
    return train, test


def cmd_solve(spec: RunSpec) -> int:
    """Run one algorithm at one sparsity level"""
    algorithms = spec.parsed_algorithms()
    if len(algorithms) != 1:
        raise ConfigError(f"solve runs exactly one algorithm, got {len(algorithms)}")
    train, test = load_data(spec)
    model = Model(train, spec.loss_spec())
    s, _ = resolve_sparsity(model.m, model.n, spec.s, spec.s_frac)
    solver_config = spec.solver_config(algorithms[0], s)

    observers = [LoggingTraceObserver(every=100)]
    trace_handle = open(spec.trace_path, "w", newline="") if spec.trace_path else None
    try:
        if trace_handle is not None:
            observers.append(CsvTraceObserver(trace_handle))
        result = solve(model, solver_config, observers=observers)
    finally:
        if trace_handle is not None:
            trace_handle.close()

    if spec.out_path:
        result_store.save_result(spec.out_path, result, s)
    if test is not None:
        report = predict_metrics(result, test, train.task)
        print(report.summary())

    if result.status is SolveStatus.CONVERGED:
        return EXIT_OK
    if result.status is SolveStatus.MAX_ITER:
        return EXIT_MAX_ITER
    return EXIT_ERROR


def _write_rows(spec: RunSpec, header: Sequence[str], rows: List[list]) -> None:
    if spec.table_path:
        result_store.write_table(spec.table_path, header, rows)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(str(cell) for cell in row))


def _build_worker(spec: RunSpec) -> Tuple[BenchWorker, Model]:
    train, test = load_data(spec)
    model = Model(train, spec.loss_spec())
    return BenchWorker(model, test, spec.threads), model


def cmd_bench(spec: RunSpec) -> int:
    """Compare algorithms on one dataset and sparsity level"""
    algorithms = spec.parsed_algorithms()
    worker, model = _build_worker(spec)
    s, _ = resolve_sparsity(model.m, model.n, spec.s, spec.s_frac)
    requests = [RunRequest(spec.solver_config(algorithm, s)) for algorithm in algorithms]
    outcomes = worker.run_all(requests)

    dataset = Path(spec.data_path).stem
    rows = [
        [dataset, o.request.solver_config.algorithm.value, s, f"{o.cpu_seconds:.6f}",
         o.ge, o.cg, repr(o.metric), _flag(o.converged)]
        for o in outcomes
    ]
    _write_rows(spec, BENCH_COLUMNS, rows)
    return EXIT_OK


def cmd_transition(spec: RunSpec) -> int:
    """Sweep sparsity fractions for every algorithm"""
    algorithms = spec.parsed_algorithms()
    if not spec.s_grid:
        raise ConfigError("--s-grid is required")
    worker, model = _build_worker(spec)

    requests = []
    for fraction in spec.s_grid:
        s, clamped = resolve_sparsity(model.m, model.n, fraction=fraction)
        for algorithm in algorithms:
            requests.append(RunRequest(
                spec.solver_config(algorithm, s),
                {'fraction': fraction, 'clamped': clamped}
            ))
    outcomes = worker.run_all(requests)

    rows = [
        [o.request.labels['fraction'], o.request.solver_config.s, o.request.solver_config.algorithm.value,
         f"{o.cpu_seconds:.6f}", o.ge, o.cg, _flag(o.converged), _flag(o.request.labels['clamped'])]
        for o in outcomes
    ]
    _write_rows(spec, TRANSITION_COLUMNS, rows)
    return EXIT_OK


def cmd_tolerance(spec: RunSpec) -> int:
    """Sweep the residual tolerance for every algorithm at one sparsity level"""
    algorithms = spec.parsed_algorithms()
    if not spec.tol_grid:
        raise ConfigError("--tol-grid is required")
    worker, model = _build_worker(spec)
    s, _ = resolve_sparsity(model.m, model.n, spec.s, spec.s_frac)

    requests = [
        RunRequest(spec.solver_config(algorithm, s, tol=tol), {'tolerance': tol})
        for tol in spec.tol_grid
        for algorithm in algorithms
    ]
    outcomes = worker.run_all(requests)

    rows = [
        [o.request.labels['tolerance'], o.request.solver_config.algorithm.value, f"{o.cpu_seconds:.6f}",
         o.ge, o.cg, repr(o.metric), _flag(o.converged)]
        for o in outcomes
    ]
    _write_rows(spec, TOLERANCE_COLUMNS, rows)
    return EXIT_OK


def cmd_generate(spec: RunSpec) -> int:
    """Write a synthetic planted-support instance in LIBSVM format"""
    if not spec.out_path:
        raise ConfigError("--out is required")
    try:
        task = Task(spec.task)
    except ValueError:
        raise ConfigError(f"unknown task '{spec.task}'")
    dataset = make_synthetic(spec.rows, spec.cols, spec.k_true, task, spec.noise, spec.seed)
    with open(spec.out_path, "w") as handle:
        write_libsvm(dataset, handle)
    logger.info(f"Wrote {dataset.rows}x{dataset.cols} {task.value} instance to {spec.out_path}")
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "transition": cmd_transition,
    "tolerance": cmd_tolerance,
    "generate": cmd_generate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", dest="log_level", default=None,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--seed", type=int, default=None, help="Seed for splits and synthetic data")
    common.add_argument("--out", dest="out_path", default=None, help="Result JSON (solve) or LIBSVM file (generate)")

    runs = argparse.ArgumentParser(add_help=False)
    runs.add_argument("--data", dest="data_path", required=True, help="Training LIBSVM file")
    runs.add_argument("--test", dest="test_path", default=None, help="Test LIBSVM file")
    runs.add_argument("--loss", choices=["ls", "logistic"], default="ls")
    runs.add_argument("--mu", type=float, default=None, help="Ridge weight of the logistic loss")
    sparsity = runs.add_mutually_exclusive_group()
    sparsity.add_argument("--s", type=int, default=None, help="Sparsity level")
    sparsity.add_argument("--s-frac", dest="s_frac", type=float, default=None,
                          help="Sparsity level as ceil(F * m)")
    sparsity.add_argument("--s-grid", dest="s_grid", type=_float_list, default=None,
                          help="Comma-separated fractions of m (transition)")
    runs.add_argument("--alg", dest="algorithms", type=_name_list, default=None,
                      help="Comma-separated algorithms: pg, apg, pg_plus, apg_plus")
    runs.add_argument("--tol", type=float, default=None, help="Residual tolerance")
    runs.add_argument("--tol-grid", dest="tol_grid", type=_float_list, default=None,
                      help="Comma-separated tolerances (tolerance)")
    runs.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    runs.add_argument("--spectral", choices=["exact", "bb"], default=None)
    runs.add_argument("--split", type=float, default=None,
                      help="Training share when no --test is given; 1 keeps every row")
    runs.add_argument("--trace", dest="trace_path", default=None, help="Per-iteration trace CSV (solve)")
    runs.add_argument("--table", dest="table_path", default=None, help="Output CSV table")
    runs.add_argument("--threads", type=int, default=None, help="Concurrent solves")

    parser = argparse.ArgumentParser(description="Sparsity-constrained ERM solvers")
    commands = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "bench", "transition", "tolerance"):
        commands.add_parser(name, parents=[common, runs], help=HANDLERS[name].__doc__)

    generate = commands.add_parser("generate", parents=[common], help=cmd_generate.__doc__)
    generate.add_argument("--rows", type=int, default=None)
    generate.add_argument("--cols", type=int, default=None)
    generate.add_argument("--k-true", dest="k_true", type=int, default=None)
    generate.add_argument("--task", choices=["regression", "classification"], default=None)
    generate.add_argument("--noise", type=float, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the command-line service"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors, which is reserved for the iteration cap
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    logging.basicConfig(
        level=getattr(logging, args.log_level or config.LOG_LEVEL),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    spec = RunSpec.from_args(args)
    try:
        return HANDLERS[spec.command](spec)
    except (SubsetSelectionError, OSError) as e:
        logger.error(f"{spec.command} failed: {str(e)}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
