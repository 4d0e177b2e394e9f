"""Embedding spaces: .vec text I/O, normalization, synthetic benchmark pairs.

The .vec format is the FastText text layout: a "N D" header line, then one
token plus D decimal floats per line, single-space separated, UTF-8. File
order is taken as frequency order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lexalign.errors import ConfigError, ContractViolation, ParseError
from lexalign.registration import SimilarityTransform

SYNTH_KINDS = ("orthogonal", "similarity", "affine")


@dataclass
class EmbeddingSpace:
    """A frequency-ordered vocabulary paired with its vector matrix.

    Immutable after construction: the matrix is marked read-only, and all
    operations return new spaces.
    """

    vocab: tuple[str, ...]
    matrix: np.ndarray
    duplicates_dropped: int = 0

    def __post_init__(self):
        self.vocab = tuple(self.vocab)
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ContractViolation("embedding matrix must be 2-d")
        if len(self.vocab) != m.shape[0]:
            raise ContractViolation(
                f"vocab size {len(self.vocab)} != matrix rows {m.shape[0]}"
            )
        if m.shape[0] < 1 or m.shape[1] < 1:
            raise ContractViolation("embedding matrix must be non-empty")
        if not np.all(np.isfinite(m)):
            raise ContractViolation("embedding matrix contains non-finite values")
        if len(set(self.vocab)) != len(self.vocab):
            raise ContractViolation("vocabulary contains duplicate tokens")
        m.setflags(write=False)
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.vocab)}

    def truncated(self, max_vocab: int) -> "EmbeddingSpace":
        if max_vocab >= len(self):
            return self
        return EmbeddingSpace(self.vocab[:max_vocab], self.matrix[:max_vocab].copy())

    def with_matrix(self, matrix: np.ndarray) -> "EmbeddingSpace":
        return EmbeddingSpace(self.vocab, matrix)


def load_vec(path, max_vocab: int | None = None) -> EmbeddingSpace:
    """Parse a .vec file, keeping at most ``max_vocab`` rows in file order.

    Duplicate tokens keep their first occurrence (the drop count is
    recorded on the returned space). Any row whose value count disagrees
    with the declared dimension, or with an unparseable float, raises a
    ParseError carrying the line number.
    """
    path = str(path)
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise ParseError("empty file", path, 1)
        parts = header.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'N D' header, got {header.strip()!r}", path, 1)
        try:
            declared_n, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer header {header.strip()!r}", path, 1) from None
        if declared_n < 1 or dim < 1:
            raise ParseError("header counts must be positive", path, 1)
        limit = declared_n if max_vocab is None else min(declared_n, max_vocab)
        lineno = 1
        for line in fh:
            lineno += 1
            if lineno - 1 > declared_n:
                break  # trailing lines beyond the declared count are ignored
            fields = line.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise ParseError(
                    f"expected 1 token + {dim} values, got {len(fields)} fields",
                    path,
                    lineno,
                )
            token = fields[0]
            if not token:
                raise ParseError("empty token", path, lineno)
            if len(token.split()) != 1:
                raise ParseError(f"token contains whitespace: {token!r}", path, lineno)
            try:
                vec = np.array([float(v) for v in fields[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError("malformed float value", path, lineno) from None
            if token in seen:
                dropped += 1
                continue
            seen.add(token)
            tokens.append(token)
            rows.append(vec)
            if len(tokens) >= limit:
                break
        if len(tokens) + dropped < limit:
            raise ParseError(
                f"file ended after {len(tokens) + dropped} rows, expected {limit}",
                path,
                lineno,
            )
    return EmbeddingSpace(tuple(tokens), np.vstack(rows), duplicates_dropped=dropped)


def _format_value(v: float, precision: int) -> str:
    # fixed-point keeps the absolute round-trip error below 10^-precision;
    # 17 significant digits round-trip float64 exactly
    if precision >= 17:
        return np.format_float_scientific(v, unique=True, trim="0")
    return f"{v:.{precision}f}"


def save_vec(space: EmbeddingSpace, path, precision: int = 6) -> None:
    """Write the space in .vec format; round-trips through load_vec."""
    if len(space) == 0:
        raise ContractViolation("cannot save an empty embedding space")
    if precision < 1:
        raise ConfigError("precision must be >= 1")
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write(f"{len(space)} {space.dim}\n")
        for token, row in zip(space.vocab, space.matrix):
            values = " ".join(_format_value(float(v), precision) for v in row)
            fh.write(f"{token} {values}\n")


def length_normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Scale every row to unit L2 norm; zero rows are a contract violation."""
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        raise ContractViolation(f"zero-norm row at index {int(np.argmin(norms))}")
    return matrix / norms[:, None]


def center_columns(matrix: np.ndarray) -> np.ndarray:
    return matrix - matrix.mean(axis=0)


def normalize_matrix(matrix: np.ndarray, renormalize: bool = False) -> np.ndarray:
    """Unit-normalize rows, then mean-center columns, in that order.

    ``renormalize`` adds a second unit-norm pass after centering (some
    prior alignment systems do this; off by default).
    """
    out = center_columns(length_normalize_rows(np.asarray(matrix, dtype=np.float64)))
    if renormalize:
        out = length_normalize_rows(out)
    return out


def normalize(space: EmbeddingSpace, renormalize: bool = False) -> EmbeddingSpace:
    """Row length-normalization followed by column mean-centering."""
    norms = np.linalg.norm(space.matrix, axis=1)
    if np.any(norms == 0.0):
        token = space.vocab[int(np.argmin(norms))]
        raise ContractViolation(f"zero-norm embedding for token {token!r}")
    return space.with_matrix(normalize_matrix(space.matrix, renormalize=renormalize))


# ---------------------------------------------------------------------------
# synthetic benchmark pairs


@dataclass
class SynthPair:
    """Two synthetic spaces related by a known planted transform.

    ``gold[i]`` is the target row holding the (noisy) image of source row
    i. ``planted`` is the row-acting transform used to build the target.
    """

    source: EmbeddingSpace
    target: EmbeddingSpace
    gold: np.ndarray
    planted: SimilarityTransform
    noise_sigma: float
    kind: str = "orthogonal"

    def gold_token_map(self) -> dict[str, set[str]]:
        return {
            self.source.vocab[i]: {self.target.vocab[int(self.gold[i])]}
            for i in range(len(self.source))
        }

    def planted_linear(self) -> np.ndarray:
        """Row-acting linear part (source @ M lands near matched targets)."""
        return self.planted.scale * self.planted.rotation.T


def _haar_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def synth_pair(
    n: int,
    d: int,
    noise_sigma: float,
    seed: int,
    kind: str = "orthogonal",
    clusters: int = 10,
) -> SynthPair:
    """Build a clustered source cloud and a transformed, shuffled target.

    The source is a Gaussian mixture (embedding spaces are clustered, so
    registration sees realistic geometry); the target applies the planted
    transform, adds isotropic noise of scale ``noise_sigma``, and shuffles
    rows by a seeded permutation recorded in ``gold``.
    """
    if kind not in SYNTH_KINDS:
        raise ConfigError(f"kind must be one of {SYNTH_KINDS}, got {kind!r}")
    if d < 2 or n < d:
        raise ConfigError("need n >= d >= 2")
    if clusters < 1:
        raise ConfigError("clusters must be >= 1")
    if noise_sigma < 0:
        raise ConfigError("noise_sigma must be non-negative")
    rng = np.random.default_rng(seed)
    # Zipf-like cluster weights and per-cluster geometry: the asymmetry
    # mirrors real frequency-skewed vocabularies and makes the planted
    # assignment the only distribution-preserving one
    weights = 1.0 / np.arange(1, clusters + 1)
    weights /= weights.sum()
    means = rng.normal(size=(clusters, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    means *= rng.uniform(0.8, 1.3, size=(clusters, 1))
    spreads = rng.uniform(0.12, 0.35, size=clusters)
    assign = rng.choice(clusters, size=n, p=weights)
    source = means[assign] + spreads[assign, None] * rng.normal(size=(n, d))

    rot = _haar_orthogonal(rng, d)
    if kind == "orthogonal":
        planted = SimilarityTransform(rotation=rot.T, scale=1.0, translation=np.zeros(d))
    elif kind == "similarity":
        if np.linalg.det(rot) < 0:
            rot[:, 0] = -rot[:, 0]
        planted = SimilarityTransform(
            rotation=rot.T,
            scale=float(rng.uniform(0.5, 2.0)),
            translation=0.5 * rng.normal(size=d),
        )
    else:
        q2 = _haar_orthogonal(rng, d)
        general = rot @ np.diag(rng.uniform(0.7, 1.4, size=d)) @ q2
        planted = SimilarityTransform(
            rotation=general.T,
            scale=1.0,
            translation=0.5 * rng.normal(size=d),
            mode="affine",
        )

    mapped = planted.apply(source)
    if noise_sigma > 0:
        mapped = mapped + noise_sigma * rng.normal(size=mapped.shape)
    gold = rng.permutation(n)
    target = np.empty_like(mapped)
    target[gold] = mapped

    width = max(5, len(str(n - 1)))
    src_vocab = tuple(f"s{i:0{width}d}" for i in range(n))
    tgt_vocab = tuple(f"t{i:0{width}d}" for i in range(n))
    return SynthPair(
        source=EmbeddingSpace(src_vocab, source),
        target=EmbeddingSpace(tgt_vocab, target),
        gold=gold,
        planted=planted,
        noise_sigma=noise_sigma,
        kind=kind,
    )


# ---------------------------------------------------------------------------
# small text formats shared with the CLI


def save_matrix(matrix: np.ndarray, path) -> None:
    """Plain-text matrix: 'rows cols' header then full-precision rows."""
    m = np.asarray(matrix, dtype=np.float64)
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write(f"{m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(" ".join(np.format_float_scientific(v, unique=True, trim="0") for v in row))
            fh.write("\n")


def load_matrix(path) -> np.ndarray:
    path = str(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("expected 'rows cols' header", path, 1)
        rows, cols = int(header[0]), int(header[1])
        out = np.empty((rows, cols), dtype=np.float64)
        for i in range(rows):
            fields = fh.readline().split()
            if len(fields) != cols:
                raise ParseError(f"expected {cols} values", path, i + 2)
            out[i] = [float(v) for v in fields]
    return out


def write_gold_tsv(pair: SynthPair, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        for i in range(len(pair.source)):
            fh.write(f"{pair.source.vocab[i]}\t{pair.target.vocab[int(pair.gold[i])]}\n")


def read_gold(path) -> dict[str, set[str]]:
    """Gold dictionary file: one 'source<ws>target' pair per line."""
    path = str(path)
    gold: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError("expected 'source target'", path, lineno)
            gold.setdefault(parts[0], set()).add(parts[1])
    if not gold:
        raise ParseError("gold dictionary is empty", path)
    return gold
