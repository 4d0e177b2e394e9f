"""Similarity scoring and dictionary machinery.

CSLS (cross-domain similarity local scaling, Conneau et al. 2018)
penalizes cosine similarity by each point's mean cosine to its k nearest
cross-domain neighbors, which demotes hub vectors:

    CSLS(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)

Dictionary induction keeps mutual nearest neighbors under the
bidirectional score sigma[n, m] = CSLS(f(x_n), y_m) + CSLS(x_n, g(y_m)),
where f and g are the current forward/backward maps.

Everything here is computed in row blocks: neighborhood statistics are
accumulated with a running top-k buffer, so no full N x M score matrix is
materialized unless explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from lexalign import kernels
from lexalign.errors import ConfigError, ContractViolation

_BLOCK = 1024


@dataclass
class CslsParams:
    k: int = 10
    candidate_limit: int = 25000

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError("CSLS k must be >= 1")
        if self.candidate_limit < 1:
            raise ConfigError("candidate_limit must be >= 1")


@dataclass
class SeedDictionary:
    """Induced translation pairs, sorted by descending score."""

    src: np.ndarray
    tgt: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.tgt = np.asarray(self.tgt, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not (self.src.shape == self.tgt.shape == self.scores.shape):
            raise ContractViolation("dictionary columns must have equal length")
        if len(self.src) != len({(int(s), int(t)) for s, t in zip(self.src, self.tgt)}):
            raise ContractViolation("dictionary contains duplicate pairs")
        if np.any(np.diff(self.scores) > 0):
            raise ContractViolation("dictionary must be sorted by descending score")

    @classmethod
    def from_scored_pairs(cls, src, tgt, scores) -> "SeedDictionary":
        src = np.asarray(src, dtype=np.int64)
        tgt = np.asarray(tgt, dtype=np.int64)
        scores = np.asarray(scores, dtype=np.float64)
        order = np.lexsort((tgt, src, -scores))
        return cls(src[order], tgt[order], scores[order])

    def __len__(self) -> int:
        return len(self.src)

    def pairs(self) -> Iterable[tuple[int, int, float]]:
        for s, t, v in zip(self.src, self.tgt, self.scores):
            yield int(s), int(t), float(v)

    def unique_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Pair indices with duplicates removed, in score order."""
        return self.src, self.tgt

    def to_tsv(self, src_vocab: Sequence[str], tgt_vocab: Sequence[str], path) -> None:
        with open(str(path), "w", encoding="utf-8") as fh:
            for s, t, v in self.pairs():
                fh.write(f"{src_vocab[s]}\t{tgt_vocab[t]}\t{v!r}\n")


def apply_map(mapper, points: np.ndarray) -> np.ndarray:
    """Apply a forward/backward map: None (identity), a row-acting matrix,
    an object with ``.apply``, or a sequence composed left to right."""
    if mapper is None:
        return points
    if isinstance(mapper, np.ndarray):
        return points @ mapper
    if isinstance(mapper, (list, tuple)):
        out = points
        for m in mapper:
            out = apply_map(m, out)
        return out
    return mapper.apply(points)


def _unit_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    norms[norms == 0.0] = 1.0
    return m / norms[:, None]


def cosine_topk(
    queries: np.ndarray, targets: np.ndarray, k: int, block: int = _BLOCK
) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-k targets per query by cosine; ties favor the lower index."""
    q = _unit_rows(queries)
    t = _unit_rows(targets)
    if q.shape[1] != t.shape[1]:
        raise ContractViolation("queries and targets must share a dimension")
    if not 1 <= k <= t.shape[0]:
        raise ConfigError(f"k={k} out of range for {t.shape[0]} targets")
    idx = np.empty((q.shape[0], k), dtype=np.int64)
    val = np.empty((q.shape[0], k), dtype=np.float64)
    for lo in range(0, q.shape[0], block):
        hi = min(lo + block, q.shape[0])
        bi, bv = kernels.topk_rows(q[lo:hi] @ t.T, k)
        idx[lo:hi] = bi
        val[lo:hi] = bv
    return idx, val


class _CslsHalf:
    """One direction of CSLS scoring with cached neighborhood statistics.

    Queries and targets are unit-normalized once; ``r_q`` and ``r_t`` hold
    each side's mean cosine to its k nearest cross-domain neighbors.
    """

    def __init__(self, queries: np.ndarray, targets: np.ndarray, k: int, block: int = _BLOCK):
        self.qu = _unit_rows(queries)
        self.tu = _unit_rows(targets)
        n, m = self.qu.shape[0], self.tu.shape[0]
        if self.qu.shape[1] != self.tu.shape[1]:
            raise ContractViolation("queries and targets must share a dimension")
        if k > m:
            raise ConfigError(f"CSLS k={k} exceeds target count {m}")
        if k > n:
            raise ConfigError(f"CSLS k={k} exceeds query count {n}")
        self.k = k
        self.block = block
        self.r_q = np.empty(n)
        col_buf = np.full((k, m), -np.inf)
        for lo in range(0, n, block):
            hi = min(lo + block, n)
            sims = self.qu[lo:hi] @ self.tu.T
            self.r_q[lo:hi] = kernels.topk_mean_rows(sims, k)
            cand = np.vstack([col_buf, sims])
            col_buf = np.partition(cand, cand.shape[0] - k, axis=0)[-k:]
        self.r_t = col_buf.mean(axis=0)

    def scores(self, lo: int, hi: int) -> np.ndarray:
        sims = self.qu[lo:hi] @ self.tu.T
        return 2.0 * sims - self.r_q[lo:hi, None] - self.r_t[None, :]

    def scores_for(self, rows: np.ndarray) -> np.ndarray:
        sims = self.qu[rows] @ self.tu.T
        return 2.0 * sims - self.r_q[rows, None] - self.r_t[None, :]


def csls_matrix(x_mapped: np.ndarray, y: np.ndarray, params: CslsParams) -> np.ndarray:
    """Full CSLS score matrix; memory scales with N*M, use on small sets."""
    params.validate()
    half = _CslsHalf(x_mapped, y, params.k)
    return half.scores(0, half.qu.shape[0])


def csls_retrieve(
    x_mapped: np.ndarray, y: np.ndarray, params: CslsParams
) -> tuple[np.ndarray, np.ndarray]:
    """Best target per query under CSLS. Returns (indices, scores)."""
    params.validate()
    half = _CslsHalf(x_mapped, y, params.k)
    n = half.qu.shape[0]
    idx = np.empty(n, dtype=np.int64)
    val = np.empty(n)
    for lo in range(0, n, half.block):
        hi = min(lo + half.block, n)
        s = half.scores(lo, hi)
        idx[lo:hi] = np.argmax(s, axis=1)
        val[lo:hi] = s[np.arange(hi - lo), idx[lo:hi]]
    return idx, val


class BidirectionalScorer:
    """sigma[n, m] = CSLS(f(x_n), y_m) + CSLS(x_n, g(y_m)), cached stats."""

    def __init__(self, x, y, fwd, bwd, params: CslsParams, block: int = _BLOCK):
        params.validate()
        self.block = block
        self.fwd_half = _CslsHalf(apply_map(fwd, x), y, params.k, block)
        self.bwd_half = _CslsHalf(x, apply_map(bwd, y), params.k, block)
        self.n = self.fwd_half.qu.shape[0]
        self.m = self.fwd_half.tu.shape[0]

    def block_scores(self, lo: int, hi: int) -> np.ndarray:
        return self.fwd_half.scores(lo, hi) + self.bwd_half.scores(lo, hi)

    def matrix(self) -> np.ndarray:
        return self.block_scores(0, self.n)

    def rows(self, rows: np.ndarray) -> np.ndarray:
        return self.fwd_half.scores_for(rows) + self.bwd_half.scores_for(rows)

    def forward_argmax(self) -> tuple[np.ndarray, np.ndarray]:
        idx = np.empty(self.n, dtype=np.int64)
        val = np.empty(self.n)
        for lo in range(0, self.n, self.block):
            hi = min(lo + self.block, self.n)
            s = self.block_scores(lo, hi)
            idx[lo:hi] = np.argmax(s, axis=1)
            val[lo:hi] = s[np.arange(hi - lo), idx[lo:hi]]
        return idx, val

    def mutual_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pairs that are each other's argmax under sigma."""
        fwd_idx = np.empty(self.n, dtype=np.int64)
        fwd_val = np.empty(self.n)
        best_col = np.full(self.m, -np.inf)
        best_row = np.zeros(self.m, dtype=np.int64)
        for lo in range(0, self.n, self.block):
            hi = min(lo + self.block, self.n)
            s = self.block_scores(lo, hi)
            idx = np.argmax(s, axis=1)
            fwd_idx[lo:hi] = idx
            fwd_val[lo:hi] = s[np.arange(hi - lo), idx]
            cmax = s.max(axis=0)
            carg = np.argmax(s, axis=0) + lo
            better = cmax > best_col  # strict: earlier rows win ties
            best_col[better] = cmax[better]
            best_row[better] = carg[better]
        src = np.flatnonzero(best_row[fwd_idx] == np.arange(self.n))
        return src.astype(np.int64), fwd_idx[src], fwd_val[src]

    def pair_cosine_mean(self, src: np.ndarray, tgt: np.ndarray) -> np.ndarray:
        """Per-pair mean of the two directional cosines."""
        c1 = np.einsum("ij,ij->i", self.fwd_half.qu[src], self.fwd_half.tu[tgt])
        c2 = np.einsum("ij,ij->i", self.bwd_half.qu[src], self.bwd_half.tu[tgt])
        return 0.5 * (c1 + c2)


def _clamp_candidates(x, y, params: CslsParams) -> tuple[np.ndarray, np.ndarray]:
    limit = params.candidate_limit
    return x[: min(limit, x.shape[0])], y[: min(limit, y.shape[0])]


def induce_dictionary(x, y, fwd, bwd, params: CslsParams) -> SeedDictionary:
    """Mutual nearest neighbors under sigma within the candidate sets.

    An empty result is returned as an empty dictionary; the caller
    decides how to react.
    """
    xc, yc = _clamp_candidates(np.asarray(x), np.asarray(y), params)
    scorer = BidirectionalScorer(xc, yc, fwd, bwd, params)
    src, tgt, val = scorer.mutual_pairs()
    return SeedDictionary.from_scored_pairs(src, tgt, val)


def selection_criterion(x, y, fwd, bwd, params: CslsParams) -> float:
    """Mean bidirectional cosine of each candidate word's CSLS translation.

    Unsupervised proxy for mapping quality: retrieve a translation for
    every candidate source word by the bidirectional score, then average
    0.5 * (cos in target space + cos in source space) over the pairs.
    """
    xc, yc = _clamp_candidates(np.asarray(x), np.asarray(y), params)
    scorer = BidirectionalScorer(xc, yc, fwd, bwd, params)
    idx, _ = scorer.forward_argmax()
    pair_cos = scorer.pair_cosine_mean(np.arange(scorer.n), idx)
    return float(pair_cos.mean())


def retrieve_topk(
    x, y, fwd, bwd, params: CslsParams, query_rows: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Top-k translations for selected source rows over the full target set.

    Neighborhood statistics are computed over the complete sets, so the
    scores match full-retrieval semantics regardless of the query subset.
    """
    scorer = BidirectionalScorer(np.asarray(x), np.asarray(y), fwd, bwd, params)
    query_rows = np.asarray(query_rows, dtype=np.int64)
    if k > scorer.m:
        raise ConfigError(f"k={k} exceeds target count {scorer.m}")
    idx = np.empty((len(query_rows), k), dtype=np.int64)
    val = np.empty((len(query_rows), k))
    for lo in range(0, len(query_rows), scorer.block):
        hi = min(lo + scorer.block, len(query_rows))
        s = scorer.rows(query_rows[lo:hi])
        bi, bv = kernels.topk_rows(s, k)
        idx[lo:hi] = bi
        val[lo:hi] = bv
    return idx, val


@dataclass
class PrecisionResult:
    precision: float
    hits: int
    evaluated: int
    oov: int


def evaluate_p_at_k(
    predictions: Mapping[str, Sequence[str]],
    gold: Mapping[str, set[str]],
    k: int,
) -> PrecisionResult:
    """Fraction of gold source tokens with a correct top-k prediction.

    Sources without any prediction (out of vocabulary) count as misses
    and are tallied separately.
    """
    if not gold:
        raise ContractViolation("gold dictionary must be non-empty")
    if k < 1:
        raise ConfigError("k must be >= 1")
    hits = 0
    oov = 0
    for token, answers in gold.items():
        predicted = predictions.get(token)
        if predicted is None:
            oov += 1
            continue
        if any(p in answers for p in list(predicted)[:k]):
            hits += 1
    total = len(gold)
    return PrecisionResult(precision=hits / total, hits=hits, evaluated=total, oov=oov)
