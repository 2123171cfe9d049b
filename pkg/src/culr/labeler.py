"""Trainable sequence labeler: linear emissions over hashed features with a
linear-chain CRF (or independent softmax) head, trained with Adam.

Per-document losses accept arbitrary per-sentence target distributions.  When
every target row is exactly one-hot the CRF head uses the exact gold-path
negative log-likelihood, so a fully annealed label curriculum reproduces
plain training bit for bit; otherwise it minimizes the cross-entropy between
the targets and the per-position marginals.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .corpus import Corpus, Document, RoleInventory
from .crf import (
    crf_marginal_ce_and_grad,
    crf_nll_and_grad,
    crf_viterbi,
    softmax_ce_and_grad,
)
from .errors import DataError, NumericsError
from .features import EncodedDocument, SentenceFeaturizer
from .validation import check_distribution

CHECKPOINT_VERSION = 1
HEADS = ("crf", "softmax")


@dataclass
class LabelerParams:
    """Emission weights (K x F) and packed transition scores ((K+1) x (K+1))."""

    head: str
    emission: np.ndarray
    transitions: np.ndarray

    def __post_init__(self):
        if self.head not in HEADS:
            raise DataError(f"head must be one of {HEADS}, got {self.head!r}")
        k = self.emission.shape[0]
        if self.transitions.shape != (k + 1, k + 1):
            raise DataError(
                f"transitions must be {(k + 1, k + 1)}, got {self.transitions.shape}"
            )

    @property
    def n_labels(self) -> int:
        return self.emission.shape[0]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"emission": self.emission, "transitions": self.transitions}

    def copy(self) -> "LabelerParams":
        return LabelerParams(self.head, self.emission.copy(), self.transitions.copy())


def init_params(n_labels: int, n_features: int, head: str = "crf") -> LabelerParams:
    return LabelerParams(
        head, np.zeros((n_labels, n_features)), np.zeros((n_labels + 1, n_labels + 1))
    )


def emission_scores(encoded: EncodedDocument, params: LabelerParams) -> np.ndarray:
    """score[i, y] = emission_weights[y] . features_i, via the sparse encoding."""
    if encoded.n_features != params.emission.shape[1]:
        raise DataError(
            f"encoded document has {encoded.n_features} features, "
            f"params expect {params.emission.shape[1]}"
        )
    m = len(encoded)
    scores = np.empty((m, params.n_labels))
    for t in range(m):
        scores[t] = params.emission[:, encoded.indices[t]] @ encoded.values[t]
    return scores


def one_hot_targets(labels: Sequence[int], n_labels: int) -> np.ndarray:
    targets = np.zeros((len(labels), n_labels))
    targets[np.arange(len(labels)), np.asarray(labels, dtype=np.intp)] = 1.0
    return targets


def _exact_one_hot_rows(targets: np.ndarray) -> np.ndarray | None:
    """Gold ids when every row is exactly one-hot, else None."""
    is_binary = np.all((targets == 0.0) | (targets == 1.0))
    if is_binary and np.all(targets.sum(axis=1) == 1.0):
        return np.argmax(targets, axis=1).astype(np.intp)
    return None


def document_loss_and_gradient(
    encoded: EncodedDocument, targets: np.ndarray, params: LabelerParams
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic gradient for one document under the configured head."""
    targets = np.asarray(targets, dtype=np.float64)
    m = len(encoded)
    if targets.shape != (m, params.n_labels):
        raise DataError(
            f"targets must have shape {(m, params.n_labels)}, got {targets.shape}"
        )
    for t in range(m):
        check_distribution(targets[t], f"target row {t}")

    em = emission_scores(encoded, params)
    if params.head == "softmax":
        loss, grad_em = softmax_ce_and_grad(em, targets)
        grad_trans = np.zeros_like(params.transitions)
    else:
        gold = _exact_one_hot_rows(targets)
        if gold is not None:
            loss, grad_em, grad_trans = crf_nll_and_grad(em, params.transitions, gold)
        else:
            loss, grad_em, grad_trans = crf_marginal_ce_and_grad(
                em, params.transitions, targets
            )

    grad_emission = np.zeros_like(params.emission)
    for t in range(m):
        grad_emission[:, encoded.indices[t]] += np.outer(grad_em[t], encoded.values[t])
    return loss, {"emission": grad_emission, "transitions": grad_trans}


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    *,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One in-place Adam update with bias correction."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.sum(~np.isfinite(g)))
            raise NumericsError(
                f"non-finite gradient for {name!r} ({bad} entries) at step {state.t + 1}"
            )
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        state.m[name] *= beta1
        state.m[name] += (1.0 - beta1) * g
        state.v[name] *= beta2
        state.v[name] += (1.0 - beta2) * (g * g)
        denom = np.sqrt(state.v[name] / bc2) + eps
        params[name] -= lr * (state.m[name] / bc1) / denom
    return state


def apply_feature_dropout(
    encoded: EncodedDocument,
    featurizer: SentenceFeaturizer,
    rate: float,
    rng: np.random.Generator,
) -> EncodedDocument:
    """Inverted dropout over hashed-block entries; dense extras are kept."""
    if rate <= 0:
        return encoded
    if not 0 < rate < 1:
        raise DataError(f"dropout rate must lie in [0, 1), got {rate}")
    scale = 1.0 / (1.0 - rate)
    values = []
    for idx, val in zip(encoded.indices, encoded.values):
        keep = rng.random(len(idx)) >= rate
        keep |= ~featurizer.hashed_entry_mask(idx)
        new_val = val * keep
        hashed = featurizer.hashed_entry_mask(idx)
        new_val[hashed & keep] *= scale
        values.append(new_val)
    return EncodedDocument(encoded.doc_id, encoded.indices, values, encoded.n_features)


def run_training_epoch(
    doc_order: Sequence[str],
    encoded: Mapping[str, EncodedDocument],
    targets: Mapping[str, np.ndarray],
    params: LabelerParams,
    state: AdamState,
    *,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    dropout: float = 0.0,
    featurizer: SentenceFeaturizer | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """One pass over ``doc_order`` with a parameter update per document."""
    if dropout > 0 and (featurizer is None or rng is None):
        raise DataError("feature dropout needs the featurizer and an RNG")
    total = 0.0
    param_dict = params.as_dict()
    for doc_id in doc_order:
        enc = encoded[doc_id]
        if dropout > 0:
            enc = apply_feature_dropout(enc, featurizer, dropout, rng)
        loss, grads = document_loss_and_gradient(enc, targets[doc_id], params)
        adam_step(param_dict, grads, state, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        total += loss
    return total / len(doc_order) if doc_order else 0.0


def inventory_hash(inventory: RoleInventory) -> str:
    return hashlib.sha256(json.dumps(list(inventory.roles)).encode()).hexdigest()


@dataclass
class LabelerModel:
    """A trained labeler: inventory + fitted featurizer + parameters."""

    inventory: RoleInventory
    featurizer: SentenceFeaturizer
    params: LabelerParams

    def decode(self, encoded: EncodedDocument) -> np.ndarray:
        em = emission_scores(encoded, self.params)
        if self.params.head == "crf":
            return crf_viterbi(em, self.params.transitions)
        return np.argmax(em, axis=1)

    def predict_document(
        self,
        doc: Document,
        sentence_embeddings: Mapping[tuple[str, int], np.ndarray] | None = None,
    ) -> np.ndarray:
        return self.decode(self.featurizer.encode_document(doc, sentence_embeddings))

    def predict_docs(
        self,
        docs: Sequence[Document],
        sentence_embeddings: Mapping[tuple[str, int], np.ndarray] | None = None,
    ) -> dict[str, np.ndarray]:
        return {d.id: self.predict_document(d, sentence_embeddings) for d in docs}

    def save(self, path: str | Path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "head": self.params.head,
            "roles": list(self.inventory.roles),
            "inventory_hash": inventory_hash(self.inventory),
            "featurizer": self.featurizer.state_dict(),
        }
        np.savez(
            Path(path),
            meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
            emission=self.params.emission,
            transitions=self.params.transitions,
            idf=self.featurizer.idf_,
        )

    @classmethod
    def load(cls, path: str | Path) -> "LabelerModel":
        try:
            blob = np.load(Path(path))
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
        try:
            meta = json.loads(bytes(blob["meta"]).decode())
        except (KeyError, ValueError) as exc:
            raise DataError(f"checkpoint {path} has no readable metadata") from exc
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(
                f"checkpoint version {meta.get('version')} unsupported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        inventory = RoleInventory(meta["roles"])
        featurizer = SentenceFeaturizer.from_state(meta["featurizer"], blob["idf"])
        params = LabelerParams(meta["head"], blob["emission"], blob["transitions"])
        return cls(inventory, featurizer, params)


def _docs_from_xy(X, y) -> tuple[RoleInventory, list[Document]]:
    if len(X) != len(y):
        raise DataError(f"X and y disagree on length: {len(X)} vs {len(y)}")
    if len(X) == 0:
        raise DataError("need at least one document")
    inventory = RoleInventory.from_labels(l for labels in y for l in labels)
    docs = []
    for i, (sentences, labels) in enumerate(zip(X, y)):
        ids = tuple(inventory.id_of(l) for l in labels)
        docs.append(Document(f"doc{i:06d}", tuple(str(s) for s in sentences), ids))
    return inventory, docs


class SequenceLabeler(BaseEstimator):
    """Sequence labeler with an sklearn-style fit/predict surface.

    X is a list of documents, each a list of sentence strings; y is a list of
    equally long label-name sequences.  Training presents documents in a
    seeded random order each epoch (no curriculum); use the curriculum
    trainer for staged training.
    """

    def __init__(
        self,
        head: str = "crf",
        hash_dim: int = 2**18,
        window: int = 1,
        use_bigrams: bool = True,
        learning_rate: float = 0.05,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_epsilon: float = 1e-8,
        epochs: int = 10,
        dropout: float = 0.0,
        seed: int = 0,
    ):
        self.head = head
        self.hash_dim = hash_dim
        self.window = window
        self.use_bigrams = use_bigrams
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_epsilon = adam_epsilon
        self.epochs = epochs
        self.dropout = dropout
        self.seed = seed

    def fit(self, X, y) -> "SequenceLabeler":
        inventory, docs = _docs_from_xy(X, y)
        featurizer = SentenceFeaturizer(
            hash_dim=self.hash_dim, window=self.window, use_bigrams=self.use_bigrams
        ).fit(docs)
        encoded = featurizer.encode_corpus(docs)
        targets = {
            d.id: one_hot_targets(d.labels, len(inventory)) for d in docs
        }
        params = init_params(len(inventory), featurizer.n_features, self.head)
        state = AdamState()
        rng = np.random.default_rng(self.seed)
        ids = sorted(encoded)
        losses = []
        for _ in range(self.epochs):
            order = [ids[i] for i in rng.permutation(len(ids))]
            losses.append(
                run_training_epoch(
                    order,
                    encoded,
                    targets,
                    params,
                    state,
                    lr=self.learning_rate,
                    beta1=self.beta1,
                    beta2=self.beta2,
                    eps=self.adam_epsilon,
                    dropout=self.dropout,
                    featurizer=featurizer,
                    rng=rng,
                )
            )
        self.model_ = LabelerModel(inventory, featurizer, params)
        self.loss_curve_ = losses
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise DataError("labeler is not fitted; call fit first")

    def predict(self, X) -> list[list[str]]:
        self._check_fitted()
        out = []
        for i, sentences in enumerate(X):
            doc = Document(
                f"q{i:06d}", tuple(str(s) for s in sentences), (0,) * len(sentences)
            )
            ids = self.model_.predict_document(doc)
            out.append([self.model_.inventory.name_of(int(l)) for l in ids])
        return out

    def score(self, X, y) -> float:
        """Sentence-level accuracy (equals micro-F1 for single-label tasks)."""
        self._check_fitted()
        pred = self.predict(X)
        correct = sum(
            1 for ps, gs in zip(pred, y) for p, g in zip(ps, gs) if p == g
        )
        total = sum(len(gs) for gs in y)
        if total == 0:
            raise DataError("cannot score an empty document set")
        return correct / total


def corpus_xy(corpus: Corpus, split: str | None = None):
    """Convenience: (X, y) lists for the estimator API from a corpus."""
    docs = corpus.documents if split is None else corpus.docs_in(split)
    X = [list(d.sentences) for d in docs]
    y = [[corpus.inventory.name_of(l) for l in d.labels] for d in docs]
    return X, y
