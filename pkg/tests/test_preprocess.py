import numpy as np
import pytest

from bikevolume.preprocess import (
    PreprocessError,
    RawSegmentRecord,
    TransformParams,
    build_feature_table,
    build_target_vector,
    compute_aadb,
    impute_categorical,
    impute_continuous,
    load_counts_csv,
    load_node_csv,
    minmax_scale,
    one_hot,
)


class TestComputeAadb:
    def test_ceiling_of_mean(self):
        assert compute_aadb([3, 4]) == 4

    def test_all_zero(self):
        assert compute_aadb([0, 0, 0]) == 0

    def test_uneven_mean(self):
        # ceil(61/3) = ceil(20.33) = 21
        assert compute_aadb([10, 20, 31]) == 21

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_aadb([])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            compute_aadb([1, -2])

    def test_bounds_property(self):
        rng = np.random.Generator(np.random.PCG64(1))
        for _ in range(50):
            counts = rng.integers(0, 500, size=int(rng.integers(1, 40))).tolist()
            aadb = compute_aadb(counts)
            mean = sum(counts) / len(counts)
            assert mean <= aadb < mean + 1


class TestImpute:
    def test_continuous_mean_fill(self):
        filled, mean = impute_continuous([1.0, None, 3.0], fit_rows=[0, 1, 2])
        assert mean == 2.0
        assert filled.tolist() == [1.0, 2.0, 3.0]

    def test_categorical_mode_fill(self):
        filled, mode = impute_categorical(["a", "a", "b", None], fit_rows=[0, 1, 2, 3])
        assert mode == "a"
        assert filled == ["a", "a", "b", "a"]

    def test_mode_tie_breaks_lexicographically(self):
        filled, mode = impute_categorical(["b", "a", None], fit_rows=[0, 1, 2])
        assert mode == "a"
        assert filled == ["b", "a", "a"]

    def test_all_missing_column_named_in_error(self):
        with pytest.raises(PreprocessError, match="'slope'"):
            impute_continuous([None, None], fit_rows=[0, 1], name="slope")

    def test_fit_rows_scope(self):
        # the mean comes from fit rows only, not the full column
        filled, mean = impute_continuous([1.0, 100.0, None], fit_rows=[0])
        assert mean == 1.0
        assert filled[2] == 1.0

    def test_idempotent(self):
        filled, _ = impute_continuous([1.0, None, 3.0], fit_rows=[0, 1, 2])
        again, _ = impute_continuous(filled.tolist(), fit_rows=[0, 1, 2])
        assert np.array_equal(filled, again)


class TestMinMaxScale:
    def test_basic_scaling(self):
        assert minmax_scale([2.0, 4.0, 6.0], 2.0, 6.0).tolist() == [0.0, 0.5, 1.0]

    def test_constant_column_maps_to_zero(self):
        assert minmax_scale([5.0, 5.0, 5.0], 5.0, 5.0).tolist() == [0.0, 0.0, 0.0]

    def test_out_of_range_clamps(self):
        out = minmax_scale([8.0, 0.0], 2.0, 6.0)
        assert out.tolist() == [1.0, 0.0]

    def test_order_preserving_affine(self):
        rng = np.random.Generator(np.random.PCG64(2))
        x = rng.normal(size=30)
        out = minmax_scale(x, x.min(), x.max())
        assert np.array_equal(np.argsort(out), np.argsort(x))
        assert out.min() == 0.0 and out.max() == 1.0


class TestOneHot:
    def test_basic_encoding(self):
        block = one_hot(["a", "b", "a"], vocab=("a", "b"))
        assert block.tolist() == [[1, 0], [0, 1], [1, 0]]

    def test_unseen_category_all_zero(self):
        block = one_hot(["c"], vocab=("a", "b"))
        assert block.tolist() == [[0, 0]]

    def test_single_category_column(self):
        block = one_hot(["x", "x"], vocab=("x",))
        assert block.tolist() == [[1], [1]]

    def test_rows_sum_to_at_most_one(self):
        block = one_hot(["a", "z", "b", "a"], vocab=("a", "b"))
        assert (block.sum(axis=1) <= 1).all()


def make_records():
    rows = [
        ("s1", [3, 4], 10.0, "res"),
        ("s2", [], None, "path"),
        ("s3", [7], 30.0, None),
        ("s4", [1, 1, 1], 20.0, "res"),
    ]
    records = []
    for sid, counts, length, kind in rows:
        records.append(
            RawSegmentRecord(
                segment_id=sid,
                daily_counts=list(counts),
                continuous={"length": length},
                categorical={"kind": kind},
            )
        )
    return records


class TestFeatureTable:
    def test_shapes_and_ranges(self):
        # vocab is fitted on rows {0,2,3} whose only observed kind is "res",
        # so the unseen "path" row encodes as all zeros
        table = build_feature_table(make_records(), fit_rows=[0, 2, 3])
        assert table.matrix.shape == (4, 2)
        assert table.feature_names == ("length", "kind=res")
        assert not np.isnan(table.matrix).any()
        assert table.matrix[1, 1] == 0.0
        assert table.matrix[:, 0].min() >= 0.0 and table.matrix[:, 0].max() <= 1.0

    def test_one_hot_block_binary(self):
        table = build_feature_table(make_records(), fit_rows=[0, 1, 2, 3])
        block = table.matrix[:, 1:]
        assert set(np.unique(block)) <= {0.0, 1.0}
        assert (block.sum(axis=1) <= 1).all()

    def test_vocab_order_is_first_appearance(self):
        table = build_feature_table(make_records(), fit_rows=[0, 1, 2, 3])
        assert table.feature_names == ("length", "kind=res", "kind=path")

    def test_params_json_round_trip(self):
        table = build_feature_table(make_records(), fit_rows=[0, 2, 3])
        revived = TransformParams.from_json(table.fitted.to_json())
        assert revived.col_min == table.fitted.col_min
        assert revived.vocabularies == table.fitted.vocabularies


class TestTargetVector:
    def test_unlabelled_nodes_have_no_transform(self):
        targets = build_target_vector(make_records(), "log")
        assert targets.labelled_mask.tolist() == [True, False, True, True]
        assert np.isnan(targets.transformed[1])

    def test_aadb_values(self):
        targets = build_target_vector(make_records(), "log")
        assert targets.aadb[targets.labelled_mask].tolist() == [4, 7, 1]

    def test_inverse_recovers_aadb_within_half(self):
        targets = build_target_vector(make_records(), "box_cox")
        labelled = targets.labelled_mask
        back = targets.transform.inverse(targets.transformed[labelled])
        assert np.max(np.abs(back - targets.aadb[labelled])) < 0.5


class TestCsvLoading:
    def test_node_and_counts_round_trip(self, tmp_path):
        node_csv = tmp_path / "nodes.csv"
        node_csv.write_text(
            "segment_id,length,kind\ns1,10.5,res\ns2,,path\ns3,30,\n",
            encoding="utf-8",
        )
        counts_csv = tmp_path / "counts.csv"
        counts_csv.write_text(
            "segment_id,date,count\ns1,d1,3\ns1,d2,4\ns3,d1,7\n",
            encoding="utf-8",
        )
        records = load_node_csv(node_csv)
        load_counts_csv(counts_csv, records)
        assert [r.segment_id for r in records] == ["s1", "s2", "s3"]
        assert records[0].continuous["length"] == 10.5
        assert records[1].continuous["length"] is None
        assert records[2].categorical["kind"] is None
        assert records[0].daily_counts == [3, 4]
        assert records[1].daily_counts == []

    def test_column_roles_inferred(self, tmp_path):
        node_csv = tmp_path / "nodes.csv"
        node_csv.write_text("segment_id,a,b\ns1,1.5,x\ns2,2,y\n", encoding="utf-8")
        records = load_node_csv(node_csv)
        assert "a" in records[0].continuous
        assert "b" in records[0].categorical

    def test_missing_header_rejected(self, tmp_path):
        bad = tmp_path / "nodes.csv"
        bad.write_text("id,a\ns1,1\n", encoding="utf-8")
        with pytest.raises(PreprocessError, match="segment_id"):
            load_node_csv(bad)

    def test_missing_declared_column_rejected(self, tmp_path):
        node_csv = tmp_path / "nodes.csv"
        node_csv.write_text("segment_id,a\ns1,1\n", encoding="utf-8")
        with pytest.raises(PreprocessError, match="slope"):
            load_node_csv(node_csv, continuous=["slope"])

    def test_unknown_count_segment_rejected(self, tmp_path):
        node_csv = tmp_path / "nodes.csv"
        node_csv.write_text("segment_id,a\ns1,1\n", encoding="utf-8")
        counts_csv = tmp_path / "counts.csv"
        counts_csv.write_text("segment_id,date,count\nghost,d1,3\n", encoding="utf-8")
        records = load_node_csv(node_csv)
        with pytest.raises(PreprocessError, match="ghost"):
            load_counts_csv(counts_csv, records)
