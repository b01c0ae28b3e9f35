"""Feature-matrix format, provenance, standardization, labels, folds."""

import struct

import numpy as np
import pytest

from blightpipe import featstore as fs
from blightpipe.errors import AlignmentError, FormatError, StratificationError


def matrix(rows, cols, tag="", seed=0):
    rng = np.random.default_rng(seed)
    return fs.FeatureMatrix(
        rng.normal(size=(rows, cols)).astype(np.float32), source_tag=tag
    )


class TestFormat:
    def test_round_trip_values_and_tag(self, tmp_path):
        m = matrix(7, 5, tag="backbone-x")
        path = tmp_path / "m.featmat"
        fs.write_featmat(m, path)
        back = fs.load_featmat(path)
        assert np.array_equal(back.values, m.values)
        assert back.source_tag == "backbone-x"

    def test_round_trip_byte_identical(self, tmp_path):
        m = matrix(4, 9, tag="a:4+b:5")
        p1, p2 = tmp_path / "a.featmat", tmp_path / "b.featmat"
        fs.write_featmat(m, p1)
        fs.write_featmat(fs.load_featmat(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path):
        m = matrix(2, 3, tag="xy")
        path = tmp_path / "m.featmat"
        fs.write_featmat(m, path)
        raw = path.read_bytes()
        assert raw[:8] == b"FEATMAT1"
        rows, cols, tag_len = struct.unpack_from("<III", raw, 8)
        assert (rows, cols, tag_len) == (2, 3, 2)
        assert raw[20:22] == b"xy"
        assert len(raw) == 22 + 2 * 3 * 4

    def test_bad_magic_offset_zero(self, tmp_path):
        path = tmp_path / "bad.featmat"
        path.write_bytes(b"NOTRIGHT" + b"\0" * 40)
        with pytest.raises(FormatError) as err:
            fs.load_featmat(path)
        assert err.value.offset == 0

    def test_truncation_offset_points_at_first_missing_value(self, tmp_path):
        m = matrix(3, 4, tag="demo")
        path = tmp_path / "m.featmat"
        fs.write_featmat(m, path)
        header = 20 + 4
        cut = header + 5 * 4 + 2  # five whole values plus a fragment
        (tmp_path / "cut.featmat").write_bytes(path.read_bytes()[:cut])
        with pytest.raises(FormatError) as err:
            fs.load_featmat(tmp_path / "cut.featmat")
        assert err.value.offset == header + 5 * 4
        assert "truncated" in str(err.value)

    def test_oversized_payload_rejected(self, tmp_path):
        m = matrix(2, 2)
        path = tmp_path / "m.featmat"
        fs.write_featmat(m, path)
        path.write_bytes(path.read_bytes() + b"\0\0\0\0")
        with pytest.raises(FormatError):
            fs.load_featmat(path)

    def test_non_finite_offset_points_at_value(self, tmp_path):
        values = np.zeros((3, 4), dtype=np.float32)
        values[1, 2] = np.inf
        path = tmp_path / "m.featmat"
        fs.write_featmat(fs.FeatureMatrix(values, source_tag="demo"), path)
        with pytest.raises(FormatError) as err:
            fs.load_featmat(path)
        assert err.value.offset == 24 + 4 * (1 * 4 + 2)
        assert "row 1, column 2" in str(err.value)


class TestProvenance:
    def test_bare_tag_covers_all_columns(self):
        m = matrix(2, 6, tag="solo")
        assert m.provenance == (("solo", (0, 6)),)

    def test_composite_tag_parses_spans(self):
        m = matrix(2, 9, tag="a:4+b:5")
        assert m.provenance == (("a", (0, 4)), ("b", (4, 9)))

    def test_span_width_mismatch_rejected(self):
        with pytest.raises(FormatError):
            matrix(2, 8, tag="a:4+b:5")

    def test_bad_width_rejected(self):
        with pytest.raises(FormatError):
            matrix(2, 4, tag="a:x+b:2")


class TestConcat:
    def test_widths_add_up(self):
        parts = [matrix(5, 1024, "one"), matrix(5, 4096, "two"), matrix(5, 4096, "three")]
        merged = fs.concat(parts)
        assert merged.cols == 9216
        assert merged.source_tag == "one:1024+two:4096+three:4096"

    def test_provenance_offsets(self):
        merged = fs.concat([matrix(3, 2, "a"), matrix(3, 3, "b")])
        assert merged.provenance == (("a", (0, 2)), ("b", (2, 5)))

    def test_values_are_column_stacked(self):
        a, b = matrix(3, 2, "a", seed=1), matrix(3, 3, "b", seed=2)
        merged = fs.concat([a, b])
        assert np.array_equal(merged.values[:, :2], a.values)
        assert np.array_equal(merged.values[:, 2:], b.values)

    def test_single_part_passthrough(self):
        a = matrix(3, 2, "a")
        assert fs.concat([a]) is a

    def test_row_mismatch_named_error(self):
        with pytest.raises(AlignmentError):
            fs.concat([matrix(3, 2, "a"), matrix(4, 2, "b")])

    def test_empty_rejected(self):
        with pytest.raises(AlignmentError):
            fs.concat([])


class TestStandardize:
    def test_population_std(self):
        m = fs.FeatureMatrix(np.array([[1.0, 5.0], [3.0, 5.0]], dtype=np.float32))
        stats = fs.standardize_fit(m)
        assert stats.mean[0] == 2.0
        assert stats.std[0] == 1.0  # population: divide by n, not n-1
        assert stats.constant[1]

    def test_apply_centers_and_scales(self):
        m = fs.FeatureMatrix(np.array([[1.0, 5.0], [3.0, 5.0]], dtype=np.float32))
        out = fs.standardize_apply(m, fs.standardize_fit(m))
        assert np.allclose(out.values, [[-1.0, 0.0], [1.0, 0.0]])

    def test_constant_columns_map_to_zero(self):
        m = fs.FeatureMatrix(np.full((5, 3), 7.0, dtype=np.float32))
        out = fs.standardize_apply(m, fs.standardize_fit(m))
        assert (out.values == 0).all()

    def test_train_stats_apply_to_other_rows(self):
        train = fs.FeatureMatrix(np.array([[0.0], [2.0]], dtype=np.float32))
        stats = fs.standardize_fit(train)
        test = fs.FeatureMatrix(np.array([[4.0]], dtype=np.float32))
        out = fs.standardize_apply(test, stats)
        assert np.allclose(out.values, [[3.0]])

    def test_column_count_mismatch(self):
        stats = fs.standardize_fit(matrix(4, 3))
        with pytest.raises(AlignmentError):
            fs.standardize_apply(matrix(4, 2), stats)


class TestLabels:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "labels.csv"
        fs.write_labels(path, ["a", "b", "c"], [1, -1, 1])
        ids, labels = fs.load_labels(path)
        assert ids == ("a", "b", "c")
        assert labels.tolist() == [1, -1, 1]

    def test_header_checked(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("id,cls\na,late_blight\n")
        with pytest.raises(FormatError):
            fs.load_labels(path)

    def test_unknown_label_rejected_with_line(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("sample_id,label\na,late_blight\nb,mildew\n")
        with pytest.raises(FormatError) as err:
            fs.load_labels(path)
        assert ":3:" in str(err.value)

    def test_dataset_alignment_enforced(self, tmp_path):
        path = tmp_path / "labels.csv"
        fs.write_labels(path, ["a", "b"], [1, -1])
        feat = tmp_path / "m.featmat"
        fs.write_featmat(matrix(3, 2), feat)
        with pytest.raises(AlignmentError):
            fs.load_dataset(feat, path)


class TestFolds:
    def test_balance_within_one(self):
        labels = np.array([1] * 11 + [-1] * 7, dtype=np.int8)
        folds = fs.make_folds(labels, 5, seed=3)
        for fold in range(5):
            held = folds.test_indices(fold)
            pos = int((labels[held] == 1).sum())
            neg = int((labels[held] == -1).sum())
            assert pos in (2, 3) and neg in (1, 2)

    def test_partition_exact(self):
        labels = np.array([1] * 30 + [-1] * 20, dtype=np.int8)
        folds = fs.make_folds(labels, 4, seed=1)
        seen = np.concatenate([folds.test_indices(f) for f in range(4)])
        assert sorted(seen.tolist()) == list(range(50))

    def test_train_test_disjoint(self):
        labels = np.array([1] * 10 + [-1] * 10, dtype=np.int8)
        folds = fs.make_folds(labels, 5, seed=2)
        for fold in range(5):
            overlap = set(folds.train_indices(fold)) & set(folds.test_indices(fold))
            assert not overlap

    def test_deterministic_and_seed_sensitive(self):
        labels = np.array([1] * 40 + [-1] * 30, dtype=np.int8)
        a = fs.make_folds(labels, 5, seed=9)
        b = fs.make_folds(labels, 5, seed=9)
        c = fs.make_folds(labels, 5, seed=10)
        assert np.array_equal(a.fold_of, b.fold_of)
        assert not np.array_equal(a.fold_of, c.fold_of)

    def test_small_class_rejected(self):
        labels = np.array([1] * 10 + [-1] * 3, dtype=np.int8)
        with pytest.raises(StratificationError):
            fs.make_folds(labels, 5, seed=0)


class TestSubset:
    def test_rows_and_cols(self):
        values = np.arange(12, dtype=np.float32).reshape(3, 4)
        ds = fs.LabeledDataset(
            fs.FeatureMatrix(values), np.array([1, -1, 1], dtype=np.int8), ("a", "b", "c")
        )
        out = fs.subset(ds, rows=[2, 0], cols=[1, 3])
        assert out.features.values.tolist() == [[9.0, 11.0], [1.0, 3.0]]
        assert out.labels.tolist() == [1, 1]
        assert out.sample_ids == ("c", "a")
