"""Data model and ingestion for role-annotated documents.

A corpus is a set of documents, each an ordered list of sentences with one
rhetorical role label per sentence.  The on-disk format is UTF-8 JSON lines,
one document per line::

    {"id": "<string>", "sentences": ["..."], "labels": ["..."]}

Split tags live in a sidecar file with one ``{"id": ..., "split": ...}``
record per line.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError
from .validation import check_ratios, check_seed

SPLITS = ("train", "val", "test")

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace/punctuation tokenization for the feature encoder."""
    return _TOKEN_RE.findall(text.lower())


class RoleInventory:
    """Ordered set of role names with contiguous integer ids."""

    def __init__(self, roles: Iterable[str]):
        roles = list(roles)
        if not roles:
            raise DataError("role inventory is empty")
        seen = set()
        for name in roles:
            if not isinstance(name, str) or not name:
                raise DataError(f"role names must be non-empty strings, got {name!r}")
            if name in seen:
                raise DataError(f"duplicate role name {name!r}")
            seen.add(name)
        self.roles: tuple[str, ...] = tuple(roles)
        self.index: dict[str, int] = {name: i for i, name in enumerate(self.roles)}

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "RoleInventory":
        # lexicographic order keeps ids stable across runs and machines
        return cls(sorted(set(labels)))

    def id_of(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise DataError(f"unknown role {name!r}; inventory has {list(self.roles)}") from None

    def name_of(self, role_id: int) -> str:
        return self.roles[role_id]

    def __len__(self) -> int:
        return len(self.roles)

    def __eq__(self, other) -> bool:
        return isinstance(other, RoleInventory) and self.roles == other.roles

    def __repr__(self) -> str:
        return f"RoleInventory({list(self.roles)!r})"


@dataclass(frozen=True)
class Document:
    """One document: parallel sentence and label-id sequences, length >= 1."""

    id: str
    sentences: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if not self.id:
            raise DataError("document id must be non-empty")
        if len(self.sentences) == 0:
            raise DataError(f"document {self.id!r} is empty")
        if len(self.sentences) != len(self.labels):
            raise DataError(
                f"document {self.id!r}: {len(self.sentences)} sentences vs "
                f"{len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class Corpus:
    """Immutable-by-convention collection of documents sharing one inventory."""

    inventory: RoleInventory
    documents: list[Document]
    splits: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        n_roles = len(self.inventory)
        for doc in self.documents:
            if doc.id in seen:
                raise DataError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
            bad = [l for l in doc.labels if not 0 <= l < n_roles]
            if bad:
                raise DataError(f"document {doc.id!r} has label ids {bad} outside inventory")
        for doc_id, split in self.splits.items():
            if doc_id not in seen:
                raise DataError(f"split tag for unknown document {doc_id!r}")
            if split not in SPLITS:
                raise DataError(f"invalid split {split!r} for document {doc_id!r}")

    def split_of(self, doc_id: str) -> str:
        return self.splits.get(doc_id, "train")

    def docs_in(self, split: str) -> list[Document]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        return [d for d in self.documents if self.split_of(d.id) == split]

    @property
    def train_docs(self) -> list[Document]:
        return self.docs_in("train")

    @property
    def val_docs(self) -> list[Document]:
        return self.docs_in("val")

    @property
    def test_docs(self) -> list[Document]:
        return self.docs_in("test")

    def document(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.id == doc_id:
                return d
        raise DataError(f"no document with id {doc_id!r}")

    def n_sentences(self) -> int:
        return sum(len(d) for d in self.documents)

    def with_splits(self, splits: dict[str, str]) -> "Corpus":
        return Corpus(self.inventory, list(self.documents), dict(splits))


def _iter_lines(text: str | Iterable[str]) -> Iterator[tuple[int, str]]:
    lines = text.splitlines() if isinstance(text, str) else text
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line:
            yield lineno, line


def parse_corpus(text: str | Iterable[str], inventory: RoleInventory | None = None) -> Corpus:
    """Parse line-delimited document records into a Corpus.

    When ``inventory`` is omitted it is built from the union of observed
    labels, sorted lexicographically.  When supplied, unknown labels are an
    error rather than being auto-added.
    """
    records: list[tuple[int, dict]] = []
    for lineno, line in _iter_lines(text):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise DataError(f"line {lineno}: record must be a JSON object")
        for key in ("id", "sentences", "labels"):
            if key not in obj:
                raise DataError(f"line {lineno}: missing field {key!r}")
        if len(obj["sentences"]) != len(obj["labels"]):
            raise DataError(
                f"line {lineno}: {len(obj['sentences'])} sentences vs "
                f"{len(obj['labels'])} labels"
            )
        if len(obj["sentences"]) == 0:
            raise DataError(f"line {lineno}: empty document {obj['id']!r}")
        records.append((lineno, obj))

    if inventory is None:
        observed = {label for _, obj in records for label in obj["labels"]}
        if not observed:
            raise DataError("corpus has no documents")
        inventory = RoleInventory.from_labels(observed)

    documents = []
    for lineno, obj in records:
        try:
            labels = tuple(inventory.id_of(l) for l in obj["labels"])
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        documents.append(
            Document(str(obj["id"]), tuple(str(s) for s in obj["sentences"]), labels)
        )
    return Corpus(inventory, documents)


def serialize_corpus(corpus: Corpus) -> str:
    """Inverse of parse_corpus; one JSON record per line."""
    lines = []
    for doc in corpus.documents:
        lines.append(
            json.dumps(
                {
                    "id": doc.id,
                    "sentences": list(doc.sentences),
                    "labels": [corpus.inventory.name_of(l) for l in doc.labels],
                },
                ensure_ascii=False,
            )
        )
    return "\n".join(lines) + "\n"


def load_corpus(path: str | Path, inventory: RoleInventory | None = None) -> Corpus:
    return parse_corpus(Path(path).read_text(encoding="utf-8"), inventory)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(serialize_corpus(corpus), encoding="utf-8")


def serialize_split_tags(corpus: Corpus) -> str:
    lines = [
        json.dumps({"id": doc.id, "split": corpus.split_of(doc.id)})
        for doc in corpus.documents
    ]
    return "\n".join(lines) + "\n"


def parse_split_tags(text: str | Iterable[str]) -> dict[str, str]:
    tags: dict[str, str] = {}
    for lineno, line in _iter_lines(text):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"split sidecar line {lineno}: malformed JSON ({exc.msg})") from exc
        if "id" not in obj or "split" not in obj:
            raise DataError(f"split sidecar line {lineno}: need 'id' and 'split'")
        if obj["split"] not in SPLITS:
            raise DataError(f"split sidecar line {lineno}: invalid split {obj['split']!r}")
        if obj["id"] in tags:
            raise DataError(f"split sidecar line {lineno}: duplicate id {obj['id']!r}")
        tags[str(obj["id"])] = obj["split"]
    return tags


def load_split_tags(path: str | Path) -> dict[str, str]:
    return parse_split_tags(Path(path).read_text(encoding="utf-8"))


def save_split_tags(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(serialize_split_tags(corpus), encoding="utf-8")


def split_corpus(corpus: Corpus, ratios, seed: int) -> Corpus:
    """Assign document-level train/val/test tags.

    Sizes are floor-rounded from the val/test ratios with the remainder going
    to train.  The assignment is a deterministic function of the seed.
    """
    train_r, val_r, test_r = check_ratios(ratios)
    seed = check_seed(seed)
    n = len(corpus.documents)
    n_parts = sum(1 for r in (train_r, val_r, test_r) if r > 0)
    if n < n_parts:
        raise DataError(f"cannot split {n} documents into {n_parts} non-empty parts")

    n_val = int(np.floor(val_r * n))
    n_test = int(np.floor(test_r * n))
    n_train = n - n_val - n_test

    ids = sorted(doc.id for doc in corpus.documents)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]

    splits = {}
    for doc_id in shuffled[:n_train]:
        splits[doc_id] = "train"
    for doc_id in shuffled[n_train : n_train + n_val]:
        splits[doc_id] = "val"
    for doc_id in shuffled[n_train + n_val :]:
        splits[doc_id] = "test"
    return corpus.with_splits(splits)


def convert_build(records: list[dict]) -> str:
    """Convert annotated-span export records to the line-delimited format.

    Each source record carries the full document text plus labeled character
    spans; spans are emitted in document order as sentences with their role
    labels.  Overlapping spans and spans outside the document bounds are
    errors.
    """
    if not isinstance(records, list):
        raise DataError("span export must be a JSON array of document records")
    lines = []
    for pos, rec in enumerate(records):
        doc_id = str(rec.get("id", f"doc{pos:05d}"))
        data = rec.get("data", {})
        text = data.get("text") if isinstance(data, dict) else None
        if text is None:
            text = rec.get("text")
        annotations = rec.get("annotations") or []
        results = []
        for ann in annotations:
            results.extend(ann.get("result") or [])
        spans = []
        for res in results:
            value = res.get("value", res)
            if not {"start", "end"} <= value.keys():
                raise DataError(f"document {doc_id!r}: span without start/end offsets")
            labels = value.get("labels") or []
            if len(labels) != 1:
                raise DataError(
                    f"document {doc_id!r}: span at {value['start']} must carry exactly "
                    f"one label, got {labels!r}"
                )
            start, end = int(value["start"]), int(value["end"])
            if start < 0 or (text is not None and end > len(text)) or end < start:
                raise DataError(
                    f"document {doc_id!r}: span [{start}, {end}) outside document bounds"
                )
            sentence = value.get("text")
            if sentence is None:
                if text is None:
                    raise DataError(f"document {doc_id!r}: span without text and no document text")
                sentence = text[start:end]
            spans.append((start, end, sentence, labels[0]))

        if not spans:
            warnings.warn(f"document {doc_id!r} has no labeled spans; skipped")
            continue
        spans.sort(key=lambda s: (s[0], s[1]))
        for (s0, e0, _, _), (s1, _, _, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise DataError(
                    f"document {doc_id!r}: span at {s1} overlaps previous span ending at {e0}"
                )
        lines.append(
            json.dumps(
                {
                    "id": doc_id,
                    "sentences": [s[2] for s in spans],
                    "labels": [s[3] for s in spans],
                },
                ensure_ascii=False,
            )
        )
    if not lines:
        raise DataError("span export produced no documents")
    return "\n".join(lines) + "\n"
