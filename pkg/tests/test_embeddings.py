"""Embedding I/O, normalization, and synthetic pair construction."""

import numpy as np
import pytest

from lexalign import embeddings
from lexalign.errors import ConfigError, ContractViolation, ParseError


def write(tmp_path, text, name="emb.vec"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadVec:
    def test_basic_format(self, tmp_path):
        path = write(tmp_path, "2 3\na 1 0 0\nb 0 1 0\n")
        space = embeddings.load_vec(path, max_vocab=2)
        assert space.vocab == ("a", "b")
        np.testing.assert_array_equal(space.matrix, [[1, 0, 0], [0, 1, 0]])

    def test_truncation(self, tmp_path):
        path = write(tmp_path, "2 3\na 1 0 0\nb 0 1 0\n")
        space = embeddings.load_vec(path, max_vocab=1)
        assert space.vocab == ("a",)

    def test_dimension_mismatch_reports_line(self, tmp_path):
        path = write(tmp_path, "2 3\na 1 0 0\nb 1 0\n")
        with pytest.raises(ParseError) as exc:
            embeddings.load_vec(path)
        assert exc.value.line == 3

    def test_malformed_float(self, tmp_path):
        path = write(tmp_path, "1 2\na 1.0 zap\n")
        with pytest.raises(ParseError) as exc:
            embeddings.load_vec(path)
        assert exc.value.line == 2

    def test_duplicate_token_keeps_first(self, tmp_path):
        path = write(tmp_path, "3 2\na 1 0\na 9 9\nb 0 1\n")
        space = embeddings.load_vec(path)
        assert space.vocab == ("a", "b")
        np.testing.assert_array_equal(space.matrix[0], [1, 0])
        assert space.duplicates_dropped == 1

    def test_whitespace_token_rejected(self, tmp_path):
        path = write(tmp_path, "1 2\na\tb 1 0\n")
        with pytest.raises(ParseError):
            embeddings.load_vec(path)

    def test_truncated_file(self, tmp_path):
        path = write(tmp_path, "3 2\na 1 0\n")
        with pytest.raises(ParseError):
            embeddings.load_vec(path)

    def test_bad_header(self, tmp_path):
        with pytest.raises(ParseError):
            embeddings.load_vec(write(tmp_path, "3\na 1 0\n"))


class TestSaveVec:
    def test_round_trip_precision(self, tmp_path):
        rng = np.random.default_rng(0)
        space = embeddings.EmbeddingSpace(("w0", "w1", "w2"), rng.normal(size=(3, 4)))
        path = tmp_path / "out.vec"
        embeddings.save_vec(space, path, precision=6)
        back = embeddings.load_vec(path)
        assert back.vocab == space.vocab
        assert np.abs(back.matrix - space.matrix).max() <= 1e-6

    def test_round_trip_bit_exact_at_high_precision(self, tmp_path):
        rng = np.random.default_rng(1)
        space = embeddings.EmbeddingSpace(("a", "b"), rng.normal(size=(2, 5)))
        path = tmp_path / "out.vec"
        embeddings.save_vec(space, path, precision=17)
        back = embeddings.load_vec(path)
        assert back.matrix.tobytes() == space.matrix.tobytes()

    def test_empty_space_rejected(self):
        with pytest.raises(ContractViolation):
            embeddings.EmbeddingSpace((), np.zeros((0, 3)))


class TestNormalize:
    def test_two_step_hand_case(self):
        space = embeddings.EmbeddingSpace(("a", "b"), np.array([[2.0, 0.0], [0.0, 2.0]]))
        out = embeddings.normalize(space)
        np.testing.assert_allclose(out.matrix, [[0.5, -0.5], [-0.5, 0.5]])

    def test_fixed_point(self):
        m = np.array([[1.0, 0.0], [-1.0, 0.0]])  # unit rows, zero column means
        space = embeddings.EmbeddingSpace(("a", "b"), m)
        np.testing.assert_allclose(embeddings.normalize(space).matrix, m)

    def test_single_row_centers_to_zero(self):
        space = embeddings.EmbeddingSpace(("a",), np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(embeddings.normalize(space).matrix, [[0.0, 0.0]])

    def test_zero_row_names_token(self):
        space = embeddings.EmbeddingSpace(("a", "zed"), np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ContractViolation, match="zed"):
            embeddings.normalize(space)

    def test_row_norms_and_column_means(self):
        rng = np.random.default_rng(2)
        m = rng.normal(size=(50, 7))
        unit = embeddings.length_normalize_rows(m)
        np.testing.assert_allclose(np.linalg.norm(unit, axis=1), 1.0, atol=1e-12)
        centered = embeddings.center_columns(unit)
        np.testing.assert_allclose(centered.mean(axis=0), 0.0, atol=1e-12)

    def test_renormalize_option(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(20, 5))
        out = embeddings.normalize_matrix(m, renormalize=True)
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)


class TestSynthPair:
    def test_noiseless_orthogonal_exact(self):
        pair = embeddings.synth_pair(100, 6, 0.0, seed=0, kind="orthogonal", clusters=4)
        m = pair.planted_linear()
        np.testing.assert_allclose(
            pair.target.matrix[pair.gold], pair.source.matrix @ m, atol=1e-12
        )

    def test_deterministic_per_seed(self):
        a = embeddings.synth_pair(50, 4, 0.1, seed=9, kind="similarity", clusters=2)
        b = embeddings.synth_pair(50, 4, 0.1, seed=9, kind="similarity", clusters=2)
        assert a.source.matrix.tobytes() == b.source.matrix.tobytes()
        assert a.target.matrix.tobytes() == b.target.matrix.tobytes()
        np.testing.assert_array_equal(a.gold, b.gold)

    def test_gold_is_permutation(self):
        pair = embeddings.synth_pair(64, 5, 0.05, seed=3, kind="affine", clusters=3)
        assert sorted(pair.gold) == list(range(64))

    def test_nearest_neighbor_recovery_under_noise(self):
        # brute-force scan: mapped source must hit its gold row >= 99%
        pair = embeddings.synth_pair(1000, 20, 0.01, seed=5, kind="orthogonal")
        mapped = pair.source.matrix @ pair.planted_linear()
        t = pair.target.matrix
        hits = 0
        for i in range(1000):
            d = ((t - mapped[i]) ** 2).sum(axis=1)
            hits += int(np.argmin(d) == pair.gold[i])
        assert hits >= 990

    def test_invalid_kind(self):
        with pytest.raises(ConfigError):
            embeddings.synth_pair(10, 3, 0.0, seed=0, kind="spiral")

    def test_similarity_kind_has_scale_and_translation(self):
        pair = embeddings.synth_pair(40, 4, 0.0, seed=1, kind="similarity")
        assert pair.planted.scale != 1.0
        assert np.any(pair.planted.translation != 0)
        np.testing.assert_allclose(
            pair.target.matrix[pair.gold], pair.planted.apply(pair.source.matrix), atol=1e-12
        )


class TestMatrixIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        m = rng.normal(size=(3, 5))
        path = tmp_path / "map.txt"
        embeddings.save_matrix(m, path)
        np.testing.assert_array_equal(embeddings.load_matrix(path), m)

    def test_gold_tsv_round_trip(self, tmp_path):
        pair = embeddings.synth_pair(20, 3, 0.0, seed=2, clusters=2)
        path = tmp_path / "gold.tsv"
        embeddings.write_gold_tsv(pair, path)
        gold = embeddings.read_gold(path)
        assert gold == pair.gold_token_map()
