"""
Tests for LIBSVM parsing, the column-restricted kernels and data utilities
"""
import io

import numpy as np
import pytest

from shared.dataio import (
    Dataset,
    DesignMatrix,
    LabelPolicy,
    Task,
    load_libsvm,
    load_pair,
    make_synthetic,
    parse_libsvm,
    split_train_test,
    write_libsvm,
)
from shared.errors import ConfigError, ContractViolation, ParseError


def parse(text, policy=None, min_width=0):
    return parse_libsvm(io.StringIO(text), policy or LabelPolicy.regression(), min_width)


class TestParseLibsvm:
    def test_basic_regression_file(self):
        dataset = parse("1.5 1:2 3:-1\n-0.5 2:4\n")
        assert dataset.rows == 2
        assert dataset.cols == 3
        assert dataset.X.nnz == 3
        np.testing.assert_array_equal(dataset.X.to_dense(), [[2, 0, -1], [0, 4, 0]])
        np.testing.assert_array_equal(dataset.y, [1.5, -0.5])

    def test_min_width_pads_columns(self):
        dataset = parse("1 1:1\n", min_width=5)
        assert dataset.cols == 5

    def test_comments_and_blank_lines_are_skipped(self):
        dataset = parse("# header\n\n2 1:1 # trailing\n")
        assert dataset.rows == 1
        np.testing.assert_array_equal(dataset.y, [2.0])

    def test_unlabeled_line_gets_zero_label(self):
        dataset = parse("1:3 2:4\n")
        np.testing.assert_array_equal(dataset.y, [0.0])

    def test_empty_row_is_kept(self):
        dataset = parse("1 1:1\n0\n")
        assert dataset.rows == 2
        assert dataset.X.nnz == 1

    @pytest.mark.parametrize("text, line", [
        ("1 1:1\n1 0:2\n", 2),
        ("1 1:1 1:2\n", 1),
        ("1 a:1\n", 1),
        ("1 1:x\n", 1),
        ("1 1:nan\n", 1),
        ("1 12\n", 1),
    ])
    def test_malformed_input_reports_line(self, text, line):
        with pytest.raises(ParseError) as excinfo:
            parse(text)
        assert excinfo.value.line == line
        assert f"line {line}" in str(excinfo.value)

    def test_classification_labels_map_to_plus_minus_one(self):
        dataset = parse("2 1:1\n1 1:-1\n2 2:1\n", LabelPolicy.classification())
        assert dataset.task is Task.CLASSIFICATION
        np.testing.assert_array_equal(dataset.y, [1, -1, 1])

    def test_classification_with_many_labels_is_task_mismatch(self):
        with pytest.raises(ConfigError, match="task mismatch"):
            parse("0.1 1:1\n0.2 1:2\n0.3 1:3\n", LabelPolicy.classification())

    def test_write_then_parse_preserves_values(self):
        original = parse("0.1 1:0.30000000000000004 4:-2.5\n-3 2:1e-300\n")
        buffer = io.StringIO()
        write_libsvm(original, buffer)
        restored = parse(buffer.getvalue())
        np.testing.assert_array_equal(restored.X.to_dense(), original.X.to_dense())
        np.testing.assert_array_equal(restored.y, original.y)


class TestLoadFiles:
    def test_load_bundled_instance(self, tiny_ls_path):
        dataset = load_libsvm(tiny_ls_path, LabelPolicy.regression())
        assert dataset.rows == 12
        assert dataset.cols == 5

    def test_load_pair_agrees_on_width_and_labels(self, tmp_path):
        train = tmp_path / "train.svm"
        test = tmp_path / "test.svm"
        train.write_text("5 1:1\n3 2:1\n")
        test.write_text("3 4:1\n5 1:1\n")
        train_set, test_set = load_pair(str(train), str(test), LabelPolicy.classification())
        assert train_set.cols == test_set.cols == 4
        np.testing.assert_array_equal(train_set.y, [1, -1])
        np.testing.assert_array_equal(test_set.y, [-1, 1])

    def test_load_pair_without_test(self, tiny_ls_path):
        train, test = load_pair(tiny_ls_path, None, LabelPolicy.regression())
        assert test is None
        assert train.rows == 12

    def test_missing_file_raises_os_error(self, tmp_path):
        with pytest.raises(OSError):
            load_libsvm(str(tmp_path / "absent.svm"), LabelPolicy.regression())


class TestDesignMatrixKernels:
    @pytest.fixture
    def matrix(self, rng):
        dense = rng.standard_normal((7, 6)) * (rng.random((7, 6)) < 0.5)
        return dense, DesignMatrix.from_dense(dense)

    def test_matvec_cols_matches_dense(self, matrix, rng):
        dense, X = matrix
        J = [0, 2, 5]
        v = rng.standard_normal(3)
        np.testing.assert_allclose(X.matvec_cols(J, v), dense[:, J] @ v, atol=1e-14)

    def test_transpose_matvec_cols_matches_dense(self, matrix, rng):
        dense, X = matrix
        J = [1, 3]
        u = rng.standard_normal(7)
        np.testing.assert_allclose(X.transpose_matvec_cols(J, u), dense[:, J].T @ u, atol=1e-14)

    def test_col_weighted_sqnorms_matches_dense(self, matrix, rng):
        dense, X = matrix
        J = [0, 4, 5]
        wts = rng.random(7)
        expected = (dense[:, J] ** 2).T @ wts
        np.testing.assert_allclose(X.col_weighted_sqnorms(J, wts), expected, atol=1e-14)

    def test_empty_support(self, matrix):
        _, X = matrix
        np.testing.assert_array_equal(X.matvec_cols([], []), np.zeros(7))
        assert X.transpose_matvec_cols([], np.ones(7)).size == 0

    @pytest.mark.parametrize("J", [[6], [-1], [2, 1], [3, 3]])
    def test_bad_indices_rejected(self, matrix, J):
        _, X = matrix
        with pytest.raises(ContractViolation):
            X.matvec_cols(J, np.ones(len(J)))

    def test_negative_weights_rejected(self, matrix):
        _, X = matrix
        with pytest.raises(ContractViolation):
            X.col_weighted_sqnorms([0], -np.ones(7))

    def test_storage_is_read_only(self, matrix):
        _, X = matrix
        with pytest.raises(ValueError):
            X.values[0] = 1.0


class TestDataUtilities:
    def test_dataset_rejects_bad_classification_labels(self):
        with pytest.raises(ContractViolation):
            Dataset(DesignMatrix.from_dense(np.eye(2)), np.array([1.0, 0.0]), Task.CLASSIFICATION)

    def test_split_is_deterministic_and_complete(self, tiny_ls_path):
        dataset = load_libsvm(tiny_ls_path, LabelPolicy.regression())
        first, second = split_train_test(dataset, 0.8, seed=3)
        again, _ = split_train_test(dataset, 0.8, seed=3)
        assert first.rows == 10 and second.rows == 2
        np.testing.assert_array_equal(first.y, again.y)
        assert sorted(np.concatenate([first.y, second.y])) == sorted(dataset.y)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, 1.5])
    def test_split_fraction_must_be_inside_unit_interval(self, tiny_ls_path, fraction):
        dataset = load_libsvm(tiny_ls_path, LabelPolicy.regression())
        with pytest.raises(ConfigError):
            split_train_test(dataset, fraction)

    def test_split_leaving_no_held_out_rows_is_rejected(self, tiny_ls_path):
        dataset = load_libsvm(tiny_ls_path, LabelPolicy.regression())
        # ceil(0.95 * 12) = 12
        with pytest.raises(ConfigError, match="held out"):
            split_train_test(dataset, 0.95)
        first, second = split_train_test(dataset, 0.9)
        assert (first.rows, second.rows) == (11, 1)

    def test_make_synthetic_shapes_and_labels(self):
        regression = make_synthetic(30, 40, 3, Task.REGRESSION, seed=1)
        classification = make_synthetic(30, 40, 3, Task.CLASSIFICATION, seed=1)
        assert (regression.rows, regression.cols) == (30, 40)
        np.testing.assert_allclose(np.linalg.norm(regression.X.to_dense(), axis=0), 1.0)
        assert set(np.unique(classification.y)) <= {-1.0, 1.0}

    def test_make_synthetic_is_seeded(self):
        a = make_synthetic(10, 12, 2, seed=5)
        b = make_synthetic(10, 12, 2, seed=5)
        np.testing.assert_array_equal(a.y, b.y)
