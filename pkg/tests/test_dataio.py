import numpy as np
import pytest
import scipy.sparse as sp

from dsgda.dataio import (
    Dataset,
    count_samples,
    max_abs_scale,
    parse_libsvm,
    partition,
    split,
    synthetic_imbalanced,
    write_libsvm,
)
from dsgda.errors import EmptyWorker, LabelError, ParseError


def write(tmp_path, text, name="data.svm"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParse:
    def test_basic(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, "+1 1:0.5 3:2\n-1 2:1\n"))
        assert ds.labels.tolist() == [1, -1]
        np.testing.assert_array_equal(ds.dense(), [[0.5, 0, 2], [0, 1, 0]])

    def test_zero_label_is_negative(self, tmp_path):
        assert parse_libsvm(write(tmp_path, "0 1:1\n1 1:2\n")).labels.tolist() == [-1, 1]

    def test_comments_and_blank_lines(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, "# header\n\n+1 1:1 # trailing\n\n-1 2:3\n"))
        assert len(ds) == 2 and ds.d == 2

    def test_empty_feature_line(self, tmp_path):
        ds = parse_libsvm(write(tmp_path, "-1\n+1 2:1\n"))
        assert ds.dense()[0].tolist() == [0.0, 0.0]

    def test_pinned_dimension(self, tmp_path):
        assert parse_libsvm(write(tmp_path, "+1 1:1\n"), n_features=5).d == 5
        with pytest.raises(ParseError):
            parse_libsvm(write(tmp_path, "+1 6:1\n"), n_features=5)

    def test_non_binary_label(self, tmp_path):
        with pytest.raises(LabelError) as info:
            parse_libsvm(write(tmp_path, "+1 1:1\n2 1:1\n"))
        assert info.value.line_number == 2

    @pytest.mark.parametrize("line", ["+1 1-2", "+1 a:2", "+1 0:1", "x 1:1"])
    def test_malformed(self, tmp_path, line):
        with pytest.raises(ParseError) as info:
            parse_libsvm(write(tmp_path, "+1 1:1\n" + line + "\n"))
        assert info.value.line_number == 2

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 4))
        X[rng.random((6, 4)) < 0.4] = 0
        ds = Dataset(sp.csr_matrix(X), np.array([1, -1, -1, 1, -1, -1]))
        path = tmp_path / "out.svm"
        write_libsvm(ds, path)
        back = parse_libsvm(path, n_features=4)
        np.testing.assert_array_equal(back.dense(), X)
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert count_samples(path) == 6


class TestSplitPartition:
    def test_split_sizes_and_disjointness(self):
        ds = Dataset(np.arange(20.0)[:, None], np.where(np.arange(20) % 4 == 0, 1, -1))
        train, test = split(ds, 0.25, seed=0)
        assert (len(train), len(test)) == (15, 5)
        values = np.concatenate([train.dense().ravel(), test.dense().ravel()])
        assert sorted(values) == list(range(20))

    def test_partition_equal_disjoint(self):
        part = partition(103, 10, seed=1)
        assert part.n == 10 and part.dropped == 3
        allidx = np.concatenate(part.indices)
        assert len(set(allidx.tolist())) == 100 and allidx.max() < 103

    def test_partition_deterministic(self):
        a, b = partition(50, 4, seed=3), partition(50, 4, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip(a.indices, b.indices))

    def test_empty_worker(self):
        with pytest.raises(EmptyWorker):
            partition(3, 4, seed=0)


class TestSynthetic:
    def test_class_balance(self):
        ds = synthetic_imbalanced(1000, 8, pos_frac=0.1, seed=0)
        assert ds.positive_fraction == pytest.approx(0.1)
        assert ds.d == 8

    def test_split_of_synthetic_keeps_both_classes(self):
        ds = synthetic_imbalanced(500, 5, seed=0)
        train, test = split(ds, 0.2, seed=0)
        assert 0 < train.positive_fraction < 1 and 0 < test.positive_fraction < 1


class TestScaling:
    def test_max_abs(self):
        train = Dataset(sp.csr_matrix([[2.0, 0.0], [-4.0, 1.0]]), np.array([1, -1]))
        test = Dataset(sp.csr_matrix([[8.0, 3.0]]), np.array([1]))
        tr, te = max_abs_scale(train, test)
        np.testing.assert_allclose(tr.dense(), [[0.5, 0.0], [-1.0, 1.0]])
        np.testing.assert_allclose(te.dense(), [[2.0, 3.0]])

    def test_zero_column_untouched(self):
        (tr,) = max_abs_scale(Dataset(np.zeros((2, 2)), np.array([1, -1])))
        assert np.all(tr.dense() == 0)
