"""Evaluation: per-class precision/recall/F1, macro/micro F1, confusion counts.

Macro-F1 averages over the classes that occur in the gold labels or the
predictions; inventory classes absent from both are excluded from the mean
(their rows still appear in the per-class report with zeros).  Micro-F1 over
single-label sentences is identical to accuracy, which is asserted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Document, RoleInventory
from .errors import DataError
from .labeler import LabelerModel


@dataclass
class Metrics:
    macro_f1: float
    micro_f1: float
    per_class: list[dict]
    confusion: np.ndarray
    n_sentences: int

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "per_class": self.per_class,
            "confusion": self.confusion.tolist(),
            "n_sentences": self.n_sentences,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def confusion_counts(
    gold: Sequence[np.ndarray], predicted: Sequence[np.ndarray], n_labels: int
) -> np.ndarray:
    """Counts[g, p] = sentences with gold label g predicted as p."""
    counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    for g_seq, p_seq in zip(gold, predicted):
        if len(g_seq) != len(p_seq):
            raise DataError("gold and predicted sequences differ in length")
        np.add.at(counts, (np.asarray(g_seq), np.asarray(p_seq)), 1)
    return counts


def metrics_from_confusion(confusion: np.ndarray, inventory: RoleInventory) -> Metrics:
    confusion = np.asarray(confusion)
    k = len(inventory)
    if confusion.shape != (k, k):
        raise DataError(f"confusion must be {(k, k)}, got {confusion.shape}")
    total = int(confusion.sum())
    if total == 0:
        raise DataError("cannot compute metrics over zero sentences")

    gold_counts = confusion.sum(axis=1)
    pred_counts = confusion.sum(axis=0)
    correct = int(np.trace(confusion))

    per_class = []
    macro_terms = []
    for c in range(k):
        tp = int(confusion[c, c])
        fp = int(pred_counts[c]) - tp
        fn = int(gold_counts[c]) - tp
        precision, recall, f1 = _f1(tp, fp, fn)
        per_class.append(
            {
                "role": inventory.name_of(c),
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "support": int(gold_counts[c]),
            }
        )
        if gold_counts[c] > 0 or pred_counts[c] > 0:
            macro_terms.append(f1)

    micro = correct / total
    # micro-F1 == accuracy for single-label multiclass; keep the identity honest
    tp_all = correct
    fp_all = total - correct
    fn_all = total - correct
    _, _, micro_check = _f1(tp_all, fp_all, fn_all)
    assert abs(micro - micro_check) < 1e-12

    macro = float(np.mean(macro_terms)) if macro_terms else 0.0
    return Metrics(macro, micro, per_class, confusion, total)


def evaluate_predictions(
    gold: Sequence[np.ndarray], predicted: Sequence[np.ndarray], inventory: RoleInventory
) -> Metrics:
    if len(gold) == 0:
        raise DataError("cannot evaluate an empty document set")
    return metrics_from_confusion(
        confusion_counts(gold, predicted, len(inventory)), inventory
    )


def evaluate_model(
    model: LabelerModel,
    docs: Sequence[Document],
    sentence_embeddings: Mapping | None = None,
) -> Metrics:
    if not docs:
        raise DataError("cannot evaluate an empty document set")
    gold = [np.asarray(d.labels) for d in docs]
    pred = [model.predict_document(d, sentence_embeddings) for d in docs]
    return evaluate_predictions(gold, pred, model.inventory)


def model_confusion(
    model: LabelerModel,
    docs: Sequence[Document],
    sentence_embeddings: Mapping | None = None,
) -> np.ndarray:
    if not docs:
        raise DataError("cannot compute a confusion matrix over zero documents")
    gold = [np.asarray(d.labels) for d in docs]
    pred = [model.predict_document(d, sentence_embeddings) for d in docs]
    return confusion_counts(gold, pred, len(model.inventory))


def confusion_to_json(confusion: np.ndarray, inventory: RoleInventory) -> str:
    return json.dumps(
        {"roles": list(inventory.roles), "counts": np.asarray(confusion).tolist()},
        sort_keys=True,
    )


def confusion_from_json(text: str, inventory: RoleInventory | None = None) -> np.ndarray:
    obj = json.loads(text)
    if "roles" not in obj or "counts" not in obj:
        raise DataError("confusion artifact needs 'roles' and 'counts'")
    counts = np.asarray(obj["counts"], dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] != len(obj["roles"]):
        raise DataError("confusion artifact counts must be square over its roles")
    if inventory is not None and tuple(obj["roles"]) != inventory.roles:
        raise DataError(
            f"confusion artifact roles {obj['roles']} do not match the corpus inventory "
            f"{list(inventory.roles)}"
        )
    return counts
