"""Synthetic corpora with a planted discourse order and role-specific vocab.

Useful for demos and for exercising the full pipeline at desk scale: each
role owns a private vocabulary, documents walk through the roles in a fixed
canonical order, and difficulty can be injected either as local order noise
or by fully shuffling a fraction of the documents (a bimodal easy/hard mix).
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, Document, RoleInventory
from .errors import DataError

SHARED_WORDS = ("the", "of", "and", "to", "in", "a", "is", "was")


def generate_corpus(
    n_docs: int = 200,
    n_roles: int = 7,
    seed: int = 0,
    order_noise: float = 0.2,
    shuffled_fraction: float = 0.0,
    min_sentences: int = 6,
    max_sentences: int = 14,
    words_per_role: int = 40,
    tokens_per_sentence: tuple[int, int] = (4, 9),
    vocab_overlap: float = 0.0,
) -> Corpus:
    """Generate a labeled corpus whose roles follow a planted canonical order.

    ``order_noise`` is the probability that an adjacent label pair is swapped;
    ``shuffled_fraction`` of the documents instead get a fully shuffled label
    sequence (the hard half of a bimodal difficulty mixture).  ``vocab_overlap``
    is the fraction of each role's vocabulary borrowed from the next role, so
    adjacent roles become confusable.  Role names sort lexicographically in
    canonical order, so role id == canonical rank.
    """
    if n_docs < 1 or n_roles < 2:
        raise DataError("need at least one document and two roles")
    if not 0 <= order_noise <= 1 or not 0 <= shuffled_fraction <= 1:
        raise DataError("order_noise and shuffled_fraction must lie in [0, 1]")
    if not 0 <= vocab_overlap < 1:
        raise DataError("vocab_overlap must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    roles = [f"role_{i:02d}" for i in range(n_roles)]
    inventory = RoleInventory(roles)
    vocab = {
        r: [f"w{r:02d}_{k:03d}" for k in range(words_per_role)] for r in range(n_roles)
    }
    if vocab_overlap > 0:
        n_borrowed = int(round(vocab_overlap * words_per_role))
        private = {r: vocab[r][: words_per_role - n_borrowed] for r in range(n_roles)}
        vocab = {
            r: private[r] + vocab[(r + 1) % n_roles][:n_borrowed]
            for r in range(n_roles)
        }

    n_shuffled = int(round(shuffled_fraction * n_docs))
    documents = []
    for d in range(n_docs):
        m = int(rng.integers(min_sentences, max_sentences + 1))
        # labels walk the canonical order with roughly even segment lengths
        cuts = np.sort(rng.choice(np.arange(1, m), size=min(n_roles - 1, m - 1), replace=False))
        segments = np.split(np.arange(m), cuts)
        labels = np.concatenate(
            [np.full(len(seg), i % n_roles) for i, seg in enumerate(segments)]
        )
        if d < n_shuffled:
            labels = rng.permutation(labels)
        else:
            for i in range(m - 1):
                if rng.random() < order_noise:
                    labels[i], labels[i + 1] = labels[i + 1], labels[i]
        sentences = []
        for label in labels:
            n_tok = int(rng.integers(tokens_per_sentence[0], tokens_per_sentence[1] + 1))
            own = rng.choice(vocab[int(label)], size=n_tok)
            filler = rng.choice(SHARED_WORDS, size=max(1, n_tok // 4))
            sentences.append(" ".join([*own, *filler]))
        documents.append(
            Document(f"doc{d:04d}", tuple(sentences), tuple(int(l) for l in labels))
        )
    return Corpus(inventory, documents)
