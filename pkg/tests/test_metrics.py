"""Similarity scoring against brute-force oracles."""

import math

import numpy as np
import pytest

from lexalign import embeddings, metrics
from lexalign.errors import ConfigError, ContractViolation
from lexalign.metrics import CslsParams, SeedDictionary


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    return v / n if n else v


def cosine_oracle(q, t):
    return float(np.dot(unit(q), unit(t)))


def csls_oracle(x, y, k):
    """Direct evaluation of 2 cos - r_T - r_S with python loops."""
    n, m = len(x), len(y)
    cos = [[cosine_oracle(x[i], y[j]) for j in range(m)] for i in range(n)]
    r_q = [sum(sorted(cos[i], reverse=True)[:k]) / k for i in range(n)]
    cols = [[cos[i][j] for i in range(n)] for j in range(m)]
    r_t = [sum(sorted(col, reverse=True)[:k]) / k for col in cols]
    return np.array(
        [[2 * cos[i][j] - r_q[i] - r_t[j] for j in range(m)] for i in range(n)]
    )


def mutual_nn_oracle(sigma):
    """Mutual argmax pairs with lowest-index tie breaking."""
    n, m = sigma.shape
    fwd = [max(range(m), key=lambda j: (sigma[i][j], -j)) for i in range(n)]
    bwd = [max(range(n), key=lambda i: (sigma[i][j], -i)) for j in range(m)]
    return {(i, fwd[i]) for i in range(n) if bwd[fwd[i]] == i}


class TestCosineTopk:
    def test_axis_aligned(self):
        idx, val = metrics.cosine_topk(np.array([[1.0, 0.0]]), np.array([[1.0, 0.0], [0.0, 1.0]]), 1)
        assert idx[0, 0] == 0
        assert val[0, 0] == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        _, val = metrics.cosine_topk(np.array([[1.0, 0.0]]), np.array([[0.0, 2.0]]), 1)
        assert val[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(0)
        q = rng.normal(size=(50, 8))
        t = rng.normal(size=(200, 8))
        idx, val = metrics.cosine_topk(q, t, 5, block=16)
        for i in range(50):
            cos = [cosine_oracle(q[i], t[j]) for j in range(200)]
            order = sorted(range(200), key=lambda j: (-cos[j], j))[:5]
            assert list(idx[i]) == order

    def test_k_bounds(self):
        with pytest.raises(ConfigError):
            metrics.cosine_topk(np.ones((2, 2)), np.ones((3, 2)), 4)


class TestCsls:
    def test_singleton_identical_vectors(self):
        v = np.array([[0.6, 0.8]])
        scores = metrics.csls_matrix(v, v, CslsParams(k=1, candidate_limit=1))
        assert scores[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 3))
        y = rng.normal(size=(4, 3))
        got = metrics.csls_matrix(x, y, CslsParams(k=2, candidate_limit=10))
        np.testing.assert_allclose(got, csls_oracle(x, y, 2), atol=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 4))
        y = rng.normal(size=(9, 4))
        params = CslsParams(k=3, candidate_limit=10)
        a = metrics.csls_matrix(x, y, params)
        b = metrics.csls_matrix(7.5 * x, 0.2 * y, params)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_k_equals_target_count_reduces_to_shifted_cosine(self):
        # with k = |targets|, r terms are per-row/per-column constants
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=(5, 3))
        scores = metrics.csls_matrix(x, y, CslsParams(k=5, candidate_limit=5))
        cos = np.array([[cosine_oracle(a, b) for b in y] for a in x])
        shifted = 2 * cos - cos.mean(axis=1)[:, None] - cos.mean(axis=0)[None, :]
        np.testing.assert_allclose(scores, shifted, atol=1e-12)
        # argmax per row therefore matches cosine argmax shifted by column terms
        np.testing.assert_allclose(scores - 2 * cos, shifted - 2 * cos, atol=1e-12)

    def test_k_exceeding_targets_rejected(self):
        with pytest.raises(ConfigError):
            metrics.csls_matrix(np.ones((3, 2)), np.ones((2, 2)), CslsParams(k=3))

    def test_retrieve_matches_matrix_argmax(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 5))
        y = rng.normal(size=(40, 5))
        params = CslsParams(k=4, candidate_limit=100)
        idx, val = metrics.csls_retrieve(x, y, params)
        full = metrics.csls_matrix(x, y, params)
        np.testing.assert_array_equal(idx, np.argmax(full, axis=1))


def build_hub_instance(n_queries=20, k=3, seed=0):
    """One target near every query (the hub) plus one weak match per query."""
    rng = np.random.default_rng(seed)
    d = 10
    u = np.zeros(d)
    u[0] = 1.0
    queries = []
    specifics = []
    for _ in range(n_queries):
        v = rng.normal(size=d)
        v -= v @ u * u
        v /= np.linalg.norm(v)
        queries.append(0.8 * u + 0.6 * v)
        w = rng.normal(size=d)
        w -= w @ u * u
        w /= np.linalg.norm(w)
        specifics.append(0.7 * queries[-1] + math.sqrt(1 - 0.49) * w)
    targets = np.vstack([u] + specifics)  # hub is target 0
    return np.vstack(queries), targets


class TestHubDemotion:
    def test_csls_demotes_hub(self):
        x, y = build_hub_instance()
        params = CslsParams(k=3, candidate_limit=100)
        cos = np.array([[cosine_oracle(a, b) for b in y] for a in x])
        cos_hits = int(np.sum(np.argmax(cos, axis=1) == 0))
        csls_idx, _ = metrics.csls_retrieve(x, y, params)
        csls_hits = int(np.sum(csls_idx == 0))
        assert cos_hits >= 0.8 * len(x)
        assert csls_hits < cos_hits


class TestBidirectional:
    def test_identity_maps_identical_spaces_peak_on_diagonal(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(8, 4))
        scorer = metrics.BidirectionalScorer(x, x, None, None, CslsParams(k=2, candidate_limit=8))
        sigma = scorer.matrix()
        assert np.all(np.argmax(sigma, axis=1) == np.arange(8))

    def test_equals_sum_of_directional_csls(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=(5, 3))
        f = rng.normal(size=(3, 3))
        g = rng.normal(size=(3, 3))
        params = CslsParams(k=2, candidate_limit=5)
        sigma = metrics.BidirectionalScorer(x, y, f, g, params).matrix()
        expected = metrics.csls_matrix(x @ f, y, params) + metrics.csls_matrix(x, y @ g, params)
        np.testing.assert_allclose(sigma, expected, atol=1e-12)

    def test_zero_backward_map_degenerates_to_forward_plus_row_term(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=(7, 3))
        params = CslsParams(k=2, candidate_limit=10)
        sigma = metrics.BidirectionalScorer(x, y, None, np.zeros((3, 3)), params).matrix()
        fwd = metrics.csls_matrix(x, y, params)
        residual = sigma - fwd
        # residual must be constant within each row
        assert np.abs(residual - residual[:, :1]).max() < 1e-12


class TestInduceDictionary:
    def test_identity_pairs_on_identical_spaces(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(10, 4))
        d = metrics.induce_dictionary(x, x, None, None, CslsParams(k=2, candidate_limit=10))
        np.testing.assert_array_equal(d.src, d.tgt)
        assert len(d) == 10

    def test_planted_pair_recovers_gold(self):
        pair = embeddings.synth_pair(120, 6, 0.0, seed=4, clusters=4)
        m = pair.planted_linear()
        params = CslsParams(k=5, candidate_limit=60)
        d = metrics.induce_dictionary(
            pair.source.matrix, pair.target.matrix, m, np.linalg.inv(m), params
        )
        assert len(d) > 0
        for s, t, _ in d.pairs():
            assert pair.gold[s] == t

    def test_matches_bruteforce_mutual_nn(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(7, 3))
        y = rng.normal(size=(6, 3))
        f = rng.normal(size=(3, 3))
        g = rng.normal(size=(3, 3))
        params = CslsParams(k=2, candidate_limit=10)
        d = metrics.induce_dictionary(x, y, f, g, params)
        sigma = metrics.BidirectionalScorer(x, y, f, g, params).matrix()
        assert {(int(s), int(t)) for s, t, _ in d.pairs()} == mutual_nn_oracle(sigma)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(9, 4))
        y = rng.normal(size=(8, 4))
        f = rng.normal(size=(4, 4))
        g = rng.normal(size=(4, 4))
        params = CslsParams(k=3, candidate_limit=20)
        fwd = metrics.induce_dictionary(x, y, f, g, params)
        rev = metrics.induce_dictionary(y, x, g, f, params)
        assert {(int(s), int(t)) for s, t, _ in fwd.pairs()} == {
            (int(t), int(s)) for s, t, _ in rev.pairs()
        }

    def test_bidirectional_excludes_forward_only_error(self):
        # instance where forward-only mutual NN pairs query 0 with a wrong
        # target, while the backward direction vetoes it (verified below
        # by brute force on both score matrices)
        x = np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]])
        y = np.array([[0.95, 0.31], [0.31, 0.95], [-0.7, 0.7]])
        f = np.eye(2)
        g = np.array([[0.0, -1.0], [1.0, 0.0]])  # backward map rotates 90 degrees
        params = CslsParams(k=1, candidate_limit=3)
        fwd_sigma = metrics.csls_matrix(x @ f, y, params)
        fwd_pairs = mutual_nn_oracle(fwd_sigma)
        full_sigma = metrics.BidirectionalScorer(x, y, f, g, params).matrix()
        bid_pairs = mutual_nn_oracle(full_sigma)
        assert (0, 0) in fwd_pairs
        assert (0, 0) not in bid_pairs
        got = metrics.induce_dictionary(x, y, f, g, params)
        assert {(int(s), int(t)) for s, t, _ in got.pairs()} == bid_pairs


class TestSelectionCriterion:
    def test_perfect_self_alignment(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(12, 5))
        c = metrics.selection_criterion(x, x, None, None, CslsParams(k=3, candidate_limit=12))
        assert c == pytest.approx(1.0, abs=1e-12)

    def test_planted_beats_unmatched(self):
        pair = embeddings.synth_pair(100, 20, 0.0, seed=12, clusters=5)
        m = pair.planted_linear()
        params = CslsParams(k=5, candidate_limit=100)
        planted = metrics.selection_criterion(
            pair.source.matrix, pair.target.matrix, m, np.linalg.inv(m), params
        )
        assert planted >= 0.99
        rng = np.random.default_rng(13)
        a = rng.normal(size=(100, 20))
        b = rng.normal(size=(100, 20))
        unmatched = metrics.selection_criterion(a, b, None, None, params)
        assert unmatched < planted


class TestPrecision:
    def test_exact_predictions(self):
        gold = {"a": {"x"}, "b": {"y"}}
        preds = {"a": ["x"], "b": ["y"]}
        assert metrics.evaluate_p_at_k(preds, gold, 1).precision == 1.0

    def test_half_correct(self):
        gold = {f"w{i}": {f"t{i}"} for i in range(10)}
        preds = {f"w{i}": [f"t{i}" if i < 5 else "wrong"] for i in range(10)}
        assert metrics.evaluate_p_at_k(preds, gold, 1).precision == 0.5

    def test_oov_counts_as_miss(self):
        gold = {"a": {"x"}, "b": {"y"}}
        res = metrics.evaluate_p_at_k({"a": ["x"]}, gold, 1)
        assert res.precision == 0.5
        assert res.oov == 1

    def test_monotone_in_k(self):
        rng = np.random.default_rng(14)
        gold = {f"w{i}": {f"t{i}"} for i in range(30)}
        preds = {
            f"w{i}": [f"t{(i + off) % 30}" for off in rng.permutation(5)] for i in range(30)
        }
        values = [metrics.evaluate_p_at_k(preds, gold, k).precision for k in range(1, 6)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_empty_gold_rejected(self):
        with pytest.raises(ContractViolation):
            metrics.evaluate_p_at_k({}, {}, 1)


class TestSeedDictionary:
    def test_sorted_and_deduplicated_contract(self):
        d = SeedDictionary.from_scored_pairs([0, 1, 2], [5, 4, 3], [0.1, 0.9, 0.5])
        assert list(d.scores) == [0.9, 0.5, 0.1]
        with pytest.raises(ContractViolation):
            SeedDictionary(np.array([0, 0]), np.array([1, 1]), np.array([0.5, 0.4]))

    def test_tsv_output_sorted_descending(self, tmp_path):
        d = SeedDictionary.from_scored_pairs([0, 1], [1, 0], [0.2, 0.8])
        path = tmp_path / "dict.tsv"
        d.to_tsv(["a", "b"], ["x", "y"], path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("b\tx\t")
        assert lines[1].startswith("a\ty\t")
