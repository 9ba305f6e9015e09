"""Data model and file format tests."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings as hsettings
from hypothesis import strategies as st

from slicekit import (
    EmbeddingMatrix,
    LabeledSplit,
    SliceScores,
    load_embeddings,
    load_scores,
    load_split,
    save_embeddings,
    save_scores,
)
from slicekit.errors import (
    ArgmaxInconsistent,
    LabelOutOfRange,
    MagicMismatch,
    NonFiniteValue,
    RowCountMismatch,
    SchemaError,
    TruncatedFile,
)
from slicekit.fileio import load_setting, save_setting
from slicekit.settings import SyntheticModelSpec, make_synthetic_setting


def _header(n, d, magic=b"EMB1", version=1):
    return struct.pack("<4sIQI", magic, version, n, d)


class TestEmbeddingFormat:
    def test_binary_header_row_major(self, tmp_path):
        path = tmp_path / "e.emb"
        payload = np.arange(6, dtype="<f4").tobytes()
        path.write_bytes(_header(2, 3) + payload)
        emb = load_embeddings(path)
        assert emb.n == 2 and emb.d == 3
        assert np.array_equal(emb.values, [[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.emb"
        path.write_bytes(_header(1, 1, magic=b"XXXX") + b"\x00" * 4)
        with pytest.raises(MagicMismatch):
            load_embeddings(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "e.emb"
        path.write_bytes(_header(1, 1, version=2) + b"\x00" * 4)
        with pytest.raises(MagicMismatch):
            load_embeddings(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "e.emb"
        path.write_bytes(_header(2, 3) + np.arange(5, dtype="<f4").tobytes())
        with pytest.raises(TruncatedFile):
            load_embeddings(path)

    def test_non_finite_payload(self, tmp_path):
        path = tmp_path / "e.emb"
        payload = np.array([1.0, np.nan], dtype="<f4").tobytes()
        path.write_bytes(_header(1, 2) + payload)
        with pytest.raises(NonFiniteValue):
            load_embeddings(path)

    def test_round_trip_byte_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        emb = EmbeddingMatrix(rng.standard_normal((100, 16)))
        first = tmp_path / "a.emb"
        second = tmp_path / "b.emb"
        save_embeddings(emb, first)
        save_embeddings(load_embeddings(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_csv_fallback(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("1.5,2.0\n-3.25,4.0\n")
        emb = load_embeddings(path)
        assert np.array_equal(emb.values, [[1.5, 2.0], [-3.25, 4.0]])

    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        emb = EmbeddingMatrix(rng.standard_normal((5, 4)))
        path = tmp_path / "e.csv"
        save_embeddings(emb, path)
        assert np.array_equal(load_embeddings(path).values, emb.values)

    @hsettings(max_examples=25, deadline=None)
    @given(
        n=st.integers(1, 8),
        d=st.integers(1, 6),
        seed=st.integers(0, 2**31),
    )
    def test_binary_round_trip_property(self, tmp_path_factory, n, d, seed):
        rng = np.random.default_rng(seed)
        emb = EmbeddingMatrix(rng.standard_normal((n, d)).astype(np.float32))
        direct = tmp_path_factory.mktemp("rt")
        first = direct / "a.emb"
        second = direct / "b.emb"
        save_embeddings(emb, first)
        save_embeddings(load_embeddings(first), second)
        assert first.read_bytes() == second.read_bytes()


class TestLabelsCsv:
    def test_basic_schema(self, tmp_path):
        labels = tmp_path / "s.csv"
        labels.write_text(
            "id,y,y_hat,s_chaindrain\n0,0,0,0\n1,1,1,1\n2,0,1,0\n3,1,0,1\n"
        )
        emb_path = tmp_path / "s.emb"
        save_embeddings(EmbeddingMatrix(np.zeros((4, 8)) + 0.5), emb_path)
        emb, split = load_split(labels, emb_path)
        assert emb.d == 8
        assert split.num_slices == 1
        assert split.slice_names == ("chaindrain",)
        assert split.num_classes == 2
        assert np.array_equal(split.slices[:, 0], [0, 1, 0, 1])

    def test_row_count_mismatch(self, tmp_path):
        labels = tmp_path / "s.csv"
        labels.write_text(
            "id,y,y_hat,s_a\n" + "".join(f"{i},0,0,0\n" for i in range(5))
        )
        emb_path = tmp_path / "s.emb"
        save_embeddings(EmbeddingMatrix(np.ones((4, 2))), emb_path)
        with pytest.raises(RowCountMismatch):
            load_split(labels, emb_path)

    def test_argmax_inconsistent(self, tmp_path):
        labels = tmp_path / "s.csv"
        labels.write_text("id,y,y_hat,p_0,p_1,s_a\n0,0,0,0.3,0.7,0\n")
        emb_path = tmp_path / "s.emb"
        save_embeddings(EmbeddingMatrix(np.ones((1, 2))), emb_path)
        with pytest.raises(ArgmaxInconsistent):
            load_split(labels, emb_path)

    def test_missing_required_column(self, tmp_path):
        labels = tmp_path / "s.csv"
        labels.write_text("id,y,s_a\n0,0,0\n")
        emb_path = tmp_path / "s.emb"
        save_embeddings(EmbeddingMatrix(np.ones((1, 2))), emb_path)
        with pytest.raises(SchemaError):
            load_split(labels, emb_path)

    def test_id_must_increase_from_zero(self, tmp_path):
        labels = tmp_path / "s.csv"
        labels.write_text("id,y,y_hat,s_a\n1,0,0,0\n")
        emb_path = tmp_path / "s.emb"
        save_embeddings(EmbeddingMatrix(np.ones((1, 2))), emb_path)
        with pytest.raises(SchemaError):
            load_split(labels, emb_path)

    def test_label_out_of_range(self, tmp_path):
        labels = tmp_path / "s.csv"
        labels.write_text("id,y,y_hat,p_0,p_1,s_a\n0,2,1,0.3,0.7,0\n")
        emb_path = tmp_path / "s.emb"
        save_embeddings(EmbeddingMatrix(np.ones((1, 2))), emb_path)
        with pytest.raises(LabelOutOfRange):
            load_split(labels, emb_path)


class TestScoresDocument:
    def test_document_shape(self, tmp_path):
        scores = SliceScores(scores=np.full((3, 2), 0.25), method="confusion")
        path = tmp_path / "scores.json"
        save_scores(scores, path)
        loaded = load_scores(path)
        assert loaded.n == 3 and loaded.k_hat == 2
        assert loaded.method == "confusion"

    def test_empty_scores_rejected(self):
        with pytest.raises(ValueError):
            SliceScores(scores=np.zeros((3, 0)), method="x")

    def test_round_trip_tolerance(self, tmp_path):
        rng = np.random.default_rng(11)
        scores = SliceScores(scores=rng.random((50, 5)), method="domino")
        path = tmp_path / "scores.json"
        save_scores(scores, path)
        loaded = load_scores(path)
        assert np.abs(loaded.scores - scores.scores).max() <= 1e-9

    def test_descriptions_round_trip(self, tmp_path):
        scores = SliceScores(
            scores=np.full((2, 1), 0.5),
            method="domino",
            slice_descriptions=(("a photo of sky", "clouds"),),
        )
        path = tmp_path / "scores.json"
        save_scores(scores, path)
        assert load_scores(path).slice_descriptions == (("a photo of sky", "clouds"),)


class TestInvariantEnforcement:
    def test_scores_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            SliceScores(scores=np.array([[1.5]]), method="x")

    def test_split_bad_slice_values(self):
        with pytest.raises(ValueError):
            LabeledSplit(
                labels=[0, 1],
                predictions=[0, 1],
                slices=[[2], [0]],
                slice_names=("a",),
                num_classes=2,
            )

    def test_split_prob_rows_must_sum_to_one(self):
        with pytest.raises(ValueError):
            LabeledSplit(
                labels=[0],
                predictions=[0],
                slices=[[0]],
                slice_names=("a",),
                num_classes=2,
                prediction_probs=[[0.6, 0.6]],
            )

    def test_split_prediction_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            LabeledSplit(
                labels=[0],
                predictions=[3],
                slices=[[0]],
                slice_names=("a",),
                num_classes=2,
            )

    def test_embedding_non_finite_rejected(self):
        with pytest.raises(NonFiniteValue):
            EmbeddingMatrix(np.array([[np.inf, 0.0]]))

    def test_types_are_immutable(self):
        emb = EmbeddingMatrix(np.ones((2, 2)))
        with pytest.raises(ValueError):
            emb.values[0, 0] = 3.0


class TestSettingDirectory:
    def test_save_load_round_trip(self, tmp_path):
        setting = make_synthetic_setting(
            "rare", 0.1, n=80, d=4, seed=5,
            model=SyntheticModelSpec.natural_defaults(seed=1),
        )
        save_setting(setting, tmp_path / "s0")
        loaded = load_setting(tmp_path / "s0")
        assert loaded.slice_type == "rare"
        assert loaded.alpha == pytest.approx(0.1)
        assert loaded.model_kind == "synthetic"
        assert np.array_equal(loaded.valid_split.labels, setting.valid_split.labels)
        assert np.array_equal(loaded.test_split.slices, setting.test_split.slices)
        # embeddings round through float32 files
        assert np.allclose(
            loaded.valid_emb.values, setting.valid_emb.values, atol=1e-6
        )

    def test_planted_setting_round_trip(self, tmp_path):
        from slicekit.settings import make_planted_setting

        setting = make_planted_setting(
            200, 4, seed=3, slice_frac=0.2,
            model=SyntheticModelSpec.natural_defaults(seed=3),
        )
        save_setting(setting, tmp_path / "p")
        loaded = load_setting(tmp_path / "p")
        assert loaded.alpha == pytest.approx(0.2)
        assert np.array_equal(loaded.test_split.slices, setting.test_split.slices)

    def test_rerun_is_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            setting = make_synthetic_setting(
                "correlation", 0.4, n=80, d=4, seed=9,
                model=SyntheticModelSpec.natural_defaults(seed=2),
            )
            save_setting(setting, tmp_path / name)
        for fname in ("valid.emb", "valid.csv", "test.emb", "test.csv", "setting.json"):
            assert (tmp_path / "a" / fname).read_bytes() == (
                tmp_path / "b" / fname
            ).read_bytes()
