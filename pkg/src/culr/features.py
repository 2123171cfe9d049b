"""Hashed sparse sentence features with window context.

Each sentence becomes a sparse block: hashed unigram/bigram counts weighted
by inverse sentence frequency and L2-normalized, followed by two dense extras
(relative position, log token count) and, optionally, an externally computed
sentence embedding.  The vector for position i concatenates the blocks of
sentences i-w .. i+w, zero-padded at the document boundaries.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Document, tokenize
from .errors import DataError

N_DENSE_EXTRAS = 2


def _hash_feature(text: str, dim: int) -> int:
    return zlib.crc32(text.encode("utf-8")) % dim


def hash_sentence(sentence: str, dim: int, use_bigrams: bool = True) -> dict[int, int]:
    """Hashed unigram (and bigram) counts for one sentence."""
    tokens = tokenize(sentence)
    counts: dict[int, int] = {}
    for tok in tokens:
        h = _hash_feature("u\x00" + tok, dim)
        counts[h] = counts.get(h, 0) + 1
    if use_bigrams:
        for a, b in zip(tokens, tokens[1:]):
            h = _hash_feature("b\x00" + a + "\x00" + b, dim)
            counts[h] = counts.get(h, 0) + 1
    return counts


@dataclass
class EncodedDocument:
    """Per-sentence sparse vectors in the concatenated window space."""

    doc_id: str
    indices: list[np.ndarray]
    values: list[np.ndarray]
    n_features: int

    def __len__(self) -> int:
        return len(self.indices)


class SentenceFeaturizer:
    """Fit on training documents (learns inverse-frequency weights), then encode.

    Attributes ending in an underscore exist only after fit.
    """

    def __init__(
        self,
        hash_dim: int = 2**18,
        window: int = 1,
        use_bigrams: bool = True,
        embedding_dim: int = 0,
    ):
        if hash_dim < 1:
            raise DataError(f"hash_dim must be >= 1, got {hash_dim}")
        if window < 0:
            raise DataError(f"window must be >= 0, got {window}")
        if embedding_dim < 0:
            raise DataError(f"embedding_dim must be >= 0, got {embedding_dim}")
        self.hash_dim = hash_dim
        self.window = window
        self.use_bigrams = use_bigrams
        self.embedding_dim = embedding_dim

    @property
    def block_dim(self) -> int:
        return self.hash_dim + N_DENSE_EXTRAS + self.embedding_dim

    @property
    def n_features(self) -> int:
        return (2 * self.window + 1) * self.block_dim

    def fit(self, docs: Sequence[Document]) -> "SentenceFeaturizer":
        df = np.zeros(self.hash_dim, dtype=np.float64)
        n_sentences = 0
        for doc in docs:
            for sentence in doc.sentences:
                n_sentences += 1
                for h in hash_sentence(sentence, self.hash_dim, self.use_bigrams):
                    df[h] += 1
        if n_sentences == 0:
            raise DataError("cannot fit featurizer on zero sentences")
        self.n_fit_sentences_ = n_sentences
        self.idf_ = np.log((1.0 + n_sentences) / (1.0 + df)) + 1.0
        return self

    def _check_fitted(self):
        if not hasattr(self, "idf_"):
            raise DataError("featurizer is not fitted; call fit first")

    def _base_block(
        self, sentence: str, position: int, m: int, embedding: np.ndarray | None
    ) -> tuple[np.ndarray, np.ndarray]:
        counts = hash_sentence(sentence, self.hash_dim, self.use_bigrams)
        if counts:
            idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
            val = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
            val *= self.idf_[idx]
            norm = np.linalg.norm(val)
            if norm > 0:
                val /= norm
        else:
            idx = np.empty(0, dtype=np.int64)
            val = np.empty(0, dtype=np.float64)
        n_tokens = len(tokenize(sentence))
        dense_idx = np.array([self.hash_dim, self.hash_dim + 1], dtype=np.int64)
        dense_val = np.array([(position + 1) / m, np.log1p(n_tokens)], dtype=np.float64)
        parts_idx = [idx, dense_idx]
        parts_val = [val, dense_val]
        if self.embedding_dim:
            if embedding is None:
                raise DataError("featurizer expects a sentence embedding but none was given")
            emb = np.asarray(embedding, dtype=np.float64)
            if emb.shape != (self.embedding_dim,):
                raise DataError(
                    f"sentence embedding must have dimension {self.embedding_dim}, "
                    f"got {emb.shape}"
                )
            parts_idx.append(
                np.arange(self.hash_dim + N_DENSE_EXTRAS, self.block_dim, dtype=np.int64)
            )
            parts_val.append(emb)
        return np.concatenate(parts_idx), np.concatenate(parts_val)

    def encode_document(
        self,
        doc: Document,
        sentence_embeddings: Mapping[tuple[str, int], np.ndarray] | None = None,
    ) -> EncodedDocument:
        self._check_fitted()
        m = len(doc)
        base = []
        for i, sentence in enumerate(doc.sentences):
            emb = None
            if self.embedding_dim:
                if sentence_embeddings is None:
                    raise DataError(
                        f"document {doc.id!r}: sentence embeddings required but not supplied"
                    )
                key = (doc.id, i)
                if key not in sentence_embeddings:
                    raise DataError(f"missing sentence embedding for {key!r}")
                emb = sentence_embeddings[key]
            base.append(self._base_block(sentence, i, m, emb))

        w = self.window
        indices = []
        values = []
        for i in range(m):
            parts_idx = []
            parts_val = []
            for offset in range(-w, w + 1):
                j = i + offset
                if 0 <= j < m:
                    shift = (offset + w) * self.block_dim
                    parts_idx.append(base[j][0] + shift)
                    parts_val.append(base[j][1])
            indices.append(np.concatenate(parts_idx))
            values.append(np.concatenate(parts_val))
        return EncodedDocument(doc.id, indices, values, self.n_features)

    def encode_corpus(
        self,
        docs: Sequence[Document],
        sentence_embeddings: Mapping[tuple[str, int], np.ndarray] | None = None,
    ) -> dict[str, EncodedDocument]:
        return {d.id: self.encode_document(d, sentence_embeddings) for d in docs}

    def hashed_entry_mask(self, indices: np.ndarray) -> np.ndarray:
        """True for entries in the hashed block (the part feature dropout touches)."""
        return (indices % self.block_dim) < self.hash_dim

    def state_dict(self) -> dict:
        self._check_fitted()
        return {
            "hash_dim": self.hash_dim,
            "window": self.window,
            "use_bigrams": self.use_bigrams,
            "embedding_dim": self.embedding_dim,
            "n_fit_sentences": self.n_fit_sentences_,
        }

    @classmethod
    def from_state(cls, state: dict, idf: np.ndarray) -> "SentenceFeaturizer":
        featurizer = cls(
            hash_dim=int(state["hash_dim"]),
            window=int(state["window"]),
            use_bigrams=bool(state["use_bigrams"]),
            embedding_dim=int(state["embedding_dim"]),
        )
        featurizer.idf_ = np.asarray(idf, dtype=np.float64)
        featurizer.n_fit_sentences_ = int(state["n_fit_sentences"])
        return featurizer


def load_sentence_embeddings(
    source: str | Path,
) -> tuple[dict[tuple[str, int], np.ndarray], int]:
    """Read a ``doc_id<TAB>sentence_index<TAB>f_1 ... f_d`` sidecar file."""
    text = Path(source).read_text(encoding="utf-8")
    table: dict[tuple[str, int], np.ndarray] = {}
    dim = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise DataError(
                f"embedding sidecar line {lineno}: expected doc_id<TAB>index<TAB>values"
            )
        doc_id, idx_str, values = parts
        try:
            sent_idx = int(idx_str)
            vec = np.array([float(x) for x in values.split()], dtype=np.float64)
        except ValueError:
            raise DataError(f"embedding sidecar line {lineno}: bad number") from None
        if vec.size == 0:
            raise DataError(f"embedding sidecar line {lineno}: empty vector")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise DataError(
                f"embedding sidecar line {lineno}: dimension {vec.size} != expected {dim}"
            )
        key = (doc_id, sent_idx)
        if key in table:
            raise DataError(f"embedding sidecar line {lineno}: duplicate entry {key!r}")
        table[key] = vec
    if dim is None:
        raise DataError("embedding sidecar is empty")
    return table, int(dim)
