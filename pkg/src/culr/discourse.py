"""Role-transition statistics and canonical discourse orders.

The transition matrix is row-stochastic over next roles, with a synthetic
START state in row 0 estimated from document-initial labels.  A canonical
order assigns every role a rank (0 = earliest); it is either supplied by an
expert file or derived from the transition matrix.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Document, RoleInventory
from .errors import DataError
from .validation import check_row_stochastic

START_ROW = 0  # row index of the synthetic START state


@dataclass
class TransitionMatrix:
    """(|L|+1) x |L| transition probabilities; row 0 is the START state.

    ``probs[1 + a, b]`` is P(next role = b | current role = a); ``probs[0, b]``
    is P(first role = b).  ``role_counts`` holds per-role occurrence counts in
    the estimation data (used for tie-breaking when deriving orders).
    """

    roles: tuple[str, ...]
    probs: np.ndarray
    counts: np.ndarray
    alpha: float
    role_counts: np.ndarray

    def __post_init__(self):
        k = len(self.roles)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        self.role_counts = np.asarray(self.role_counts, dtype=np.float64)
        if self.probs.shape != (k + 1, k) or self.counts.shape != (k + 1, k):
            raise DataError(
                f"transition matrix must be {(k + 1, k)}, got {self.probs.shape}"
            )
        if self.alpha < 0:
            raise DataError(f"smoothing constant must be >= 0, got {self.alpha}")
        check_row_stochastic(self.probs, "transition matrix")

    @property
    def n_roles(self) -> int:
        return len(self.roles)

    def start_prob(self, role_id: int) -> float:
        return float(self.probs[START_ROW, role_id])

    def transition_prob(self, from_role: int, to_role: int) -> float:
        return float(self.probs[1 + from_role, to_role])

    def renormalized(self) -> "TransitionMatrix":
        probs = self.probs / self.probs.sum(axis=1, keepdims=True)
        return TransitionMatrix(self.roles, probs, self.counts.copy(), self.alpha,
                                self.role_counts.copy())

    def to_json(self) -> str:
        return json.dumps(
            {
                "roles": list(self.roles),
                "alpha": self.alpha,
                "counts": self.counts.tolist(),
                "probs": self.probs.tolist(),
                "role_counts": self.role_counts.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "TransitionMatrix":
        obj = json.loads(text)
        return cls(
            tuple(obj["roles"]),
            np.array(obj["probs"], dtype=np.float64),
            np.array(obj["counts"], dtype=np.float64),
            float(obj["alpha"]),
            np.array(obj["role_counts"], dtype=np.float64),
        )


@dataclass(frozen=True)
class CanonicalOrder:
    """Bijective role-id -> rank assignment (rank 0 comes earliest)."""

    ranks: tuple[int, ...]
    source: str  # "expert" | "data"

    def __post_init__(self):
        if sorted(self.ranks) != list(range(len(self.ranks))):
            raise DataError(f"ranks must be a bijection onto 0..{len(self.ranks) - 1}")
        if self.source not in ("expert", "data"):
            raise DataError(f"order source must be 'expert' or 'data', got {self.source!r}")

    def rank_of(self, role_id: int) -> int:
        return self.ranks[role_id]

    def role_ids_in_order(self) -> list[int]:
        return sorted(range(len(self.ranks)), key=lambda r: self.ranks[r])


def role_frequencies(docs: Sequence[Document], inventory: RoleInventory) -> np.ndarray:
    """Per-role occurrence counts over all sentences of ``docs``."""
    counts = np.zeros(len(inventory), dtype=np.float64)
    for doc in docs:
        for label in doc.labels:
            counts[label] += 1
    return counts


def estimate_transition_matrix(
    train_docs: Sequence[Document], inventory: RoleInventory, alpha: float = 1.0
) -> TransitionMatrix:
    """Additive-smoothed bigram estimate of P(next role | current role).

    With ``alpha == 0`` a role never observed as a transition source leaves its
    row undefined; such rows are set to uniform and a warning is emitted.
    """
    if not train_docs:
        raise DataError("cannot estimate transitions from an empty document set")
    if alpha < 0:
        raise DataError(f"smoothing constant must be >= 0, got {alpha}")
    k = len(inventory)
    counts = np.zeros((k + 1, k), dtype=np.float64)
    role_counts = np.zeros(k, dtype=np.float64)
    for doc in train_docs:
        counts[START_ROW, doc.labels[0]] += 1
        for cur, nxt in zip(doc.labels, doc.labels[1:]):
            counts[1 + cur, nxt] += 1
        for label in doc.labels:
            role_counts[label] += 1

    smoothed = counts + alpha
    totals = smoothed.sum(axis=1, keepdims=True)
    probs = np.empty_like(smoothed)
    undefined = []
    for row in range(k + 1):
        if totals[row, 0] == 0:
            probs[row] = 1.0 / k
            undefined.append(row)
        else:
            probs[row] = smoothed[row] / totals[row, 0]
    if undefined:
        names = [
            "START" if r == START_ROW else inventory.name_of(r - 1) for r in undefined
        ]
        warnings.warn(
            f"no outgoing transitions observed for {names} with alpha=0; "
            "rows set to uniform"
        )
    return TransitionMatrix(inventory.roles, probs, counts, float(alpha), role_counts)


def derive_canonical_order(tm: TransitionMatrix) -> CanonicalOrder:
    """Greedy most-probable non-revisiting walk from START.

    Start at the argmax of the START row, then repeatedly move to the
    highest-probability unvisited successor of the current role.  Ties break
    by higher corpus frequency, then lower role id.
    """
    k = tm.n_roles
    ranks = [0] * k
    visited: set[int] = set()
    current_row = tm.probs[START_ROW]
    for rank in range(k):
        candidates = [r for r in range(k) if r not in visited]
        best = min(
            candidates,
            key=lambda r: (-current_row[r], -tm.role_counts[r], r),
        )
        ranks[best] = rank
        visited.add(best)
        current_row = tm.probs[1 + best]
    return CanonicalOrder(tuple(ranks), "data")


def load_expert_order(
    source: str | Path | Iterable[str],
    inventory: RoleInventory,
    role_counts: np.ndarray | None = None,
) -> CanonicalOrder:
    """Read a canonical order from a file with one role name per line.

    Roles present in the inventory but absent from the file are appended in
    descending training-set frequency (requires ``role_counts``), ties broken
    by role id.
    """
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    listed: list[int] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        name = raw.strip()
        if not name:
            continue
        if name in seen:
            raise DataError(f"expert order line {lineno}: duplicate role {name!r}")
        seen.add(name)
        listed.append(inventory.id_of(name))

    missing = [r for r in range(len(inventory)) if r not in set(listed)]
    if missing:
        if role_counts is None:
            raise DataError(
                f"expert order omits roles {[inventory.name_of(r) for r in missing]} "
                "and no training frequencies were given to place them"
            )
        counts = np.asarray(role_counts, dtype=np.float64)
        missing.sort(key=lambda r: (-counts[r], r))
    ordered = listed + missing

    ranks = [0] * len(inventory)
    for rank, role_id in enumerate(ordered):
        ranks[role_id] = rank
    return CanonicalOrder(tuple(ranks), "expert")
