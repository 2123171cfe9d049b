import numpy as np
import pytest

from culr.corpus import Corpus, Document, RoleInventory


def make_doc(doc_id: str, labels, n_roles: int | None = None) -> Document:
    """Document with placeholder sentences; labels given as ids."""
    sentences = tuple(f"sentence {i} text" for i in range(len(labels)))
    return Document(doc_id, sentences, tuple(labels))


@pytest.fixture
def ab_inventory() -> RoleInventory:
    return RoleInventory(["A", "B"])


@pytest.fixture
def ab_docs(ab_inventory):
    # label sequences [A, A, B] and [A, B, B]
    return [make_doc("d1", (0, 0, 1)), make_doc("d2", (0, 1, 1))]


@pytest.fixture
def ab_corpus(ab_inventory, ab_docs) -> Corpus:
    return Corpus(ab_inventory, ab_docs)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
