"""
Tests for the command-line service, the benchmark worker and the
prediction metrics
"""
import csv
import math

import numpy as np
import pytest

from config import config
from conftest import dense_model
from services import bench_service
from services.bench_service import BenchWorker, RunRequest
from services.cli import EXIT_ERROR, EXIT_MAX_ITER, EXIT_OK, main, resolve_sparsity
from shared.dataio import Dataset, DesignMatrix, LabelPolicy, Task, load_libsvm
from shared.errors import ConfigError, ContractViolation, NumericError
from shared.metrics import evaluate, predict_metrics
from shared.model import LossSpec, Model
from shared.observer_pattern import TRACE_COLUMNS
from shared.results import BENCH_COLUMNS, RESULT_FIELDS, TOLERANCE_COLUMNS, TRANSITION_COLUMNS, result_store
from shared.solvers import Algorithm, SolverConfig, solve
from shared.sparsity import SparseIterate, residual


class TestSolveCommand:
    def test_result_file_reproduces_objective_and_residual(self, tiny_ls_path, tmp_path):
        out = tmp_path / "result.json"
        trace = tmp_path / "trace.csv"
        code = main(["solve", "--data", tiny_ls_path, "--alg", "apg+", "--s", "2", "--split", "1",
                     "--out", str(out), "--trace", str(trace)])
        assert code == EXIT_OK

        stored = result_store.load_result(out)
        assert set(stored) - {"w"} == set(RESULT_FIELDS)
        assert stored["status"] == "converged"
        assert len(stored["support"]) == 2

        model = Model(load_libsvm(tiny_ls_path, LabelPolicy.regression()), LossSpec.least_squares())
        lam = config.LAMBDA_SCALE / model.lipschitz_estimate()
        state = model.make_state(stored["w"])
        assert state.f == pytest.approx(stored["f"], rel=1e-10, abs=1e-12)
        assert residual(model, state, lam, stored["s"]) == pytest.approx(stored["residual"], rel=1e-6, abs=1e-10)

    def test_trace_file_has_one_gradient_per_row(self, tiny_ls_path, tmp_path):
        trace = tmp_path / "trace.csv"
        main(["solve", "--data", tiny_ls_path, "--alg", "apg", "--s", "2", "--split", "1",
              "--trace", str(trace)])
        with open(trace, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            rows = list(reader)
        assert header == TRACE_COLUMNS
        assert rows
        ge = [int(row[TRACE_COLUMNS.index("ge_cum")]) for row in rows]
        assert ge == list(range(1, len(rows) + 1))
        assert [int(row[0]) for row in rows] == list(range(len(rows)))

    def test_iteration_cap_gives_distinct_exit_code(self, tiny_ls_path, tmp_path):
        out = tmp_path / "capped.json"
        code = main(["solve", "--data", tiny_ls_path, "--alg", "pg", "--s", "2", "--split", "1",
                     "--tol", "1e-15", "--max-iter", "1", "--out", str(out)])
        assert code == EXIT_MAX_ITER
        stored = result_store.load_result(out)
        assert stored["status"] == "max_iter"
        assert stored["iterations"] == 2

    def test_reports_held_out_metric(self, tiny_ls_path, capsys):
        code = main(["solve", "--data", tiny_ls_path, "--test", tiny_ls_path, "--alg", "pg", "--s", "2"])
        assert code == EXIT_OK
        assert "mse=" in capsys.readouterr().out

    def test_missing_file(self, tmp_path):
        assert main(["solve", "--data", str(tmp_path / "absent.svm"), "--alg", "pg", "--s", "1"]) == EXIT_ERROR

    def test_loss_incompatible_with_labels(self, tiny_ls_path):
        assert main(["solve", "--data", tiny_ls_path, "--loss", "logistic", "--alg", "pg", "--s", "2"]) == EXIT_ERROR

    def test_two_algorithms_rejected(self, tiny_ls_path):
        assert main(["solve", "--data", tiny_ls_path, "--alg", "pg,apg", "--s", "2"]) == EXIT_ERROR

    def test_unknown_algorithm_rejected(self, tiny_ls_path):
        assert main(["solve", "--data", tiny_ls_path, "--alg", "newton", "--s", "2"]) == EXIT_ERROR

    @pytest.mark.parametrize("argv", [
        ["solve", "--alg", "pg", "--bogus"],
        ["optimize", "--data", "x.svm"],
        [],
    ])
    def test_usage_errors_do_not_share_the_iteration_cap_code(self, argv):
        code = main(argv)
        assert code == EXIT_ERROR
        assert code != EXIT_MAX_ITER

    def test_logistic_solve(self, tiny_logistic_path, tmp_path):
        out = tmp_path / "logistic.json"
        code = main(["solve", "--data", tiny_logistic_path, "--loss", "logistic", "--mu", "0.01",
                     "--alg", "pg_plus", "--s", "2", "--split", "1", "--out", str(out)])
        assert code == EXIT_OK
        assert result_store.load_result(out)["residual"] < 1e-6


class TestBenchCommand:
    def test_one_row_per_algorithm(self, tiny_ls_path, tmp_path):
        table = tmp_path / "bench.csv"
        code = main(["bench", "--data", tiny_ls_path, "--alg", "pg,apg,pg_plus", "--s", "2", "--split", "1",
                     "--table", str(table)])
        assert code == EXIT_OK

        rows = result_store.read_table(table)
        assert len(rows) == 3
        assert list(rows[0]) == BENCH_COLUMNS
        assert [row["algorithm"] for row in rows] == ["pg", "apg", "pg_plus"]
        for row in rows:
            assert row["dataset"] == "tiny_ls"
            assert row["converged"] == "true"
            assert int(row["ge"]) >= 1
            assert float(row["metric"]) >= 0.0

    def test_table_printed_without_table_path(self, tiny_ls_path, capsys):
        main(["bench", "--data", tiny_ls_path, "--alg", "pg", "--s", "2", "--split", "1"])
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == ",".join(BENCH_COLUMNS)
        assert len(lines) == 2

    def test_empty_algorithm_list(self, tiny_ls_path):
        assert main(["bench", "--data", tiny_ls_path, "--alg", "", "--s", "2"]) == EXIT_ERROR

    def test_split_without_held_out_rows_is_a_config_error(self, tiny_ls_path, tmp_path):
        table = tmp_path / "bench.csv"
        code = main(["bench", "--data", tiny_ls_path, "--alg", "pg,apg", "--s", "2", "--split", "0.95",
                     "--table", str(table)])
        assert code == EXIT_ERROR
        assert not table.exists()


class TestTransitionCommand:
    def test_grid_rows(self, tiny_ls_path, tmp_path):
        table = tmp_path / "transition.csv"
        code = main(["transition", "--data", tiny_ls_path, "--alg", "pg,apg", "--s-grid", "0.2,0.4",
                     "--split", "1", "--table", str(table)])
        assert code == EXIT_OK

        rows = result_store.read_table(table)
        assert list(rows[0]) == TRANSITION_COLUMNS
        cells = [(row["fraction"], row["s"], row["algorithm"]) for row in rows]
        assert cells == [("0.2", "3", "pg"), ("0.2", "3", "apg"), ("0.4", "5", "pg"), ("0.4", "5", "apg")]
        assert all(row["clamped"] == "false" for row in rows)

    def test_levels_above_n_are_clamped(self, tiny_ls_path, tmp_path):
        table = tmp_path / "clamped.csv"
        main(["transition", "--data", tiny_ls_path, "--alg", "pg", "--s-grid", "0.5",
              "--split", "1", "--table", str(table)])
        (row,) = result_store.read_table(table)
        assert row["s"] == "5"
        assert row["clamped"] == "true"

    def test_grid_is_required(self, tiny_ls_path):
        assert main(["transition", "--data", tiny_ls_path, "--alg", "pg"]) == EXIT_ERROR


class TestToleranceCommand:
    def test_rows_follow_grid_order(self, tiny_ls_path, tmp_path):
        table = tmp_path / "tolerance.csv"
        code = main(["tolerance", "--data", tiny_ls_path, "--alg", "pg,apg_plus", "--s", "2",
                     "--tol-grid", "1e-2,1e-8", "--split", "1", "--table", str(table)])
        assert code == EXIT_OK

        rows = result_store.read_table(table)
        assert list(rows[0]) == TOLERANCE_COLUMNS
        assert [(float(r["tolerance"]), r["algorithm"]) for r in rows] == [
            (1e-2, "pg"), (1e-2, "apg_plus"), (1e-8, "pg"), (1e-8, "apg_plus")
        ]
        loose, tight = int(rows[0]["ge"]), int(rows[2]["ge"])
        assert loose <= tight

    def test_grid_is_required(self, tiny_ls_path):
        assert main(["tolerance", "--data", tiny_ls_path, "--alg", "pg", "--s", "2"]) == EXIT_ERROR


class TestGenerateCommand:
    def test_writes_loadable_instance(self, tmp_path):
        out = tmp_path / "synthetic.svm"
        code = main(["generate", "--out", str(out), "--rows", "20", "--cols", "30", "--k-true", "3",
                     "--task", "classification", "--seed", "4"])
        assert code == EXIT_OK
        dataset = load_libsvm(str(out), LabelPolicy.classification())
        assert (dataset.rows, dataset.cols) == (20, 30)

    def test_output_is_required(self):
        assert main(["generate", "--rows", "5"]) == EXIT_ERROR


class TestResolveSparsity:
    def test_fraction_rounds_up(self):
        assert resolve_sparsity(12, 10, fraction=0.2) == (3, False)

    def test_absolute_level_clamped(self):
        assert resolve_sparsity(12, 4, s=7) == (4, True)

    @pytest.mark.parametrize("s, fraction", [(None, None), (0, None), (None, -0.1)])
    def test_invalid_levels(self, s, fraction):
        with pytest.raises(ConfigError):
            resolve_sparsity(12, 10, s, fraction)


class TestMetrics:
    def test_perfect_separator(self):
        data = Dataset(DesignMatrix.from_dense([[1.0], [-1.0], [2.0]]), np.array([1.0, -1.0, 1.0]),
                       Task.CLASSIFICATION)
        assert evaluate(SparseIterate([0], [1.0], 1), data, Task.CLASSIFICATION) == 1.0

    def test_zero_model_predicts_positive_class(self):
        data = Dataset(DesignMatrix.from_dense(np.eye(2)), np.array([1.0, -1.0]), Task.CLASSIFICATION)
        assert evaluate(SparseIterate.zeros(2), data, Task.CLASSIFICATION) == 0.5

    def test_exact_interpolation_has_zero_mse(self):
        data = Dataset(DesignMatrix.from_dense(np.eye(2)), np.array([3.0, 1.0]), Task.REGRESSION)
        assert evaluate(SparseIterate([0, 1], [3.0, 1.0], 2), data, Task.REGRESSION) == 0.0

    def test_width_mismatch(self):
        data = Dataset(DesignMatrix.from_dense(np.eye(2)), np.array([3.0, 1.0]), Task.REGRESSION)
        with pytest.raises(ContractViolation):
            evaluate(SparseIterate.zeros(3), data, Task.REGRESSION)

    def test_report_carries_run_counters(self, identity_model):
        result = solve(identity_model, SolverConfig(Algorithm.PG, 1))
        report = predict_metrics(result, identity_model.data, Task.REGRESSION)
        assert report.metric == pytest.approx(0.5)
        assert (report.iterations, report.ge, report.cg) == (result.iterations, result.ge, result.cg)
        assert report.metric_name == "mse"
        assert "mse=0.5" in report.summary()


class TestBenchWorker:
    @pytest.fixture
    def model(self, rng):
        return dense_model(rng.standard_normal((20, 10)), rng.standard_normal(20))

    def test_outcomes_follow_request_order(self, model):
        requests = [
            RunRequest(SolverConfig(algorithm, s), {'cell': index})
            for index, (s, algorithm) in enumerate(
                (s, algorithm) for s in (1, 3, 5) for algorithm in Algorithm
            )
        ]
        outcomes = BenchWorker(model, threads=4).run_all(requests)
        assert [o.request for o in outcomes] == requests
        assert all(o.error is None for o in outcomes)
        assert all(math.isfinite(o.metric) for o in outcomes)

    def test_parallel_runs_match_serial_runs(self, model):
        requests = [RunRequest(SolverConfig(Algorithm.APG, s)) for s in (2, 4, 6)]
        serial = BenchWorker(model, threads=1).run_all(requests)
        parallel = BenchWorker(model, threads=3).run_all(requests)
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.result.w.to_dense(), b.result.w.to_dense())
            assert a.ge == b.ge

    def test_failed_run_is_recorded(self, model, monkeypatch):
        real_solve = bench_service.solve

        def flaky_solve(model, cfg):
            if cfg.s == 2:
                raise NumericError("overflow in objective")
            return real_solve(model, cfg)

        monkeypatch.setattr(bench_service, "solve", flaky_solve)
        outcomes = BenchWorker(model, threads=2).run_all(
            [RunRequest(SolverConfig(Algorithm.PG, s)) for s in (1, 2, 3)]
        )
        assert [o.error is None for o in outcomes] == [True, False, True]
        failed = outcomes[1]
        assert failed.error == "overflow in objective"
        assert not failed.converged
        assert (failed.ge, failed.cg, failed.cpu_seconds) == (0, 0, 0.0)
        assert math.isnan(failed.metric)

    def test_metric_failure_keeps_the_solve(self, model, monkeypatch):
        def broken_evaluate(w, dataset, task):
            raise ContractViolation("evaluation set has no rows")

        monkeypatch.setattr(bench_service, "evaluate", broken_evaluate)
        outcome, = BenchWorker(model, threads=1).run_all([RunRequest(SolverConfig(Algorithm.APG, 3))])
        assert outcome.result is not None
        assert outcome.converged
        assert outcome.ge > 0
        assert math.isnan(outcome.metric)
        assert outcome.error == "evaluation set has no rows"
