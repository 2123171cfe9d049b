"""Label-similarity curricula: similarity matrices and annealed soft targets.

Training targets are rows of a row-stochastic matrix V that starts as a blend
of the identity with a normalized label-similarity matrix and decays toward
one-hot rows.  One decay step maps row i with off-diagonal mass
S = sum_{k != i} v_ik to::

    v_ii <- 1 / (1 + e * S)         v_ij <- e * v_ij / (1 + e * S)   (j != i)

with decay factor e in (0, 1).  This preserves row sums exactly and drives the
off-diagonal mass along S <- e*S / (1 + e*S), so S shrinks at least
geometrically and V converges to the identity.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import RoleInventory
from .errors import DataError
from .validation import as_float_matrix, check_row_stochastic, check_square

IDENTITY_TOLERANCE = 1e-4  # max off-diagonal entry at which V counts as one-hot


@dataclass
class SimilarityMatrix:
    """Symmetric non-negative label similarity with a zero diagonal."""

    sim: np.ndarray
    source: str  # "confusion" | "embedding"

    def __post_init__(self):
        self.sim = check_square(as_float_matrix(self.sim, "similarity"), "similarity")
        if self.source not in ("confusion", "embedding"):
            raise DataError(f"similarity source must be confusion|embedding, got {self.source!r}")
        if np.any(self.sim < 0):
            raise DataError("similarity entries must be non-negative")
        if np.max(np.abs(self.sim - self.sim.T)) > 1e-9:
            raise DataError("similarity matrix must be symmetric")
        if np.any(np.diag(self.sim) != 0):
            raise DataError("similarity diagonal must be zero")

    @property
    def n_roles(self) -> int:
        return self.sim.shape[0]


@dataclass
class TargetMatrix:
    """Row-stochastic label-to-target-distribution matrix with a step counter."""

    matrix: np.ndarray
    step: int
    epsilon: float

    def __post_init__(self):
        self.matrix = check_square(as_float_matrix(self.matrix, "target matrix"), "target matrix")
        check_row_stochastic(self.matrix, "target matrix")
        diag = np.diag(self.matrix)
        if np.any(diag <= 0) or np.any(diag > 1):
            raise DataError("target diagonal entries must lie in (0, 1]")
        if not 0 < self.epsilon < 1:
            raise DataError(f"decay factor must lie in (0, 1), got {self.epsilon}")
        if self.step < 0:
            raise DataError("step counter must be >= 0")

    @property
    def n_roles(self) -> int:
        return self.matrix.shape[0]

    def off_diagonal_mass(self) -> np.ndarray:
        """Per-row sum of off-diagonal entries."""
        return self.matrix.sum(axis=1) - np.diag(self.matrix)

    def max_off_diagonal(self) -> float:
        if self.n_roles == 1:
            return 0.0
        off = self.matrix - np.diag(np.diag(self.matrix))
        return float(np.max(off))

    def is_identity(self, tol: float = IDENTITY_TOLERANCE) -> bool:
        return self.max_off_diagonal() < tol


def similarity_from_confusion(confusion) -> SimilarityMatrix:
    """Symmetrized off-diagonal confusion counts.

    ``sim[i, j] = (C[i, j] + C[j, i]) / 2`` for i != j; the diagonal is
    dropped.  A confusion matrix with no off-diagonal mass (a perfect model)
    falls back to uniform off-diagonal similarity with a warning.
    """
    c = check_square(as_float_matrix(confusion, "confusion matrix"), "confusion matrix")
    if np.any(c < 0):
        raise DataError("confusion counts must be non-negative")
    sim = (c + c.T) / 2.0
    np.fill_diagonal(sim, 0.0)
    k = sim.shape[0]
    if k > 1 and not np.any(sim > 0):
        warnings.warn(
            "confusion matrix has no off-diagonal mass; "
            "falling back to uniform label similarity"
        )
        sim = np.ones((k, k)) - np.eye(k)
    return SimilarityMatrix(sim, "confusion")


def similarity_from_embeddings(label_vectors) -> SimilarityMatrix:
    """Pairwise cosine similarity of label vectors, clipped at zero.

    Negative cosines are clipped to 0 so similarity mass stays non-negative;
    the diagonal is dropped.
    """
    vectors = as_float_matrix(label_vectors, "label vectors")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0):
        bad = int(np.argmin(norms))
        raise DataError(f"label vector {bad} has zero norm")
    unit = vectors / norms[:, None]
    sim = np.clip(unit @ unit.T, 0.0, None)
    sim = (sim + sim.T) / 2.0  # shave float asymmetry from the matmul
    np.fill_diagonal(sim, 0.0)
    return SimilarityMatrix(sim, "embedding")


def parse_label_embeddings(
    source: str | Path | Iterable[str], inventory: RoleInventory
) -> np.ndarray:
    """Read per-role vectors from ``role_name<TAB>f_1 f_2 ... f_d`` lines."""
    if isinstance(source, (str, Path)) and "\n" not in str(source):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = list(source)
    rows: dict[int, np.ndarray] = {}
    dim = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if "\t" not in line:
            raise DataError(f"embedding line {lineno}: expected 'role<TAB>values'")
        name, values = line.split("\t", 1)
        role_id = inventory.id_of(name.strip())
        if role_id in rows:
            raise DataError(f"embedding line {lineno}: duplicate role {name.strip()!r}")
        try:
            vec = np.array([float(x) for x in values.split()], dtype=np.float64)
        except ValueError:
            raise DataError(f"embedding line {lineno}: non-numeric value") from None
        if vec.size == 0:
            raise DataError(f"embedding line {lineno}: empty vector")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise DataError(
                f"embedding line {lineno}: dimension {vec.size} != expected {dim}"
            )
        rows[role_id] = vec
    missing = [inventory.name_of(r) for r in range(len(inventory)) if r not in rows]
    if missing:
        raise DataError(f"embedding file missing roles {missing}")
    return np.stack([rows[r] for r in range(len(inventory))])


def init_target_matrix(sim: SimilarityMatrix, eta: float, epsilon: float) -> TargetMatrix:
    """Blend the identity with the row-normalized similarity matrix.

    Row i of the initial target is ``(1 - eta) * e_i + eta * normalize(sim[i])``
    where eta in [0, 1) is the initial off-diagonal mass.  Rows whose
    similarity sums to zero spread eta uniformly over the other labels.
    """
    if not 0 <= eta < 1:
        raise DataError(f"initial off-diagonal mass must lie in [0, 1), got {eta}")
    k = sim.n_roles
    matrix = np.eye(k)
    if eta > 0 and k > 1:
        degenerate = []
        for i in range(k):
            row = sim.sim[i]
            total = row.sum()
            if total > 0:
                spread = row / total
            else:
                degenerate.append(i)
                spread = np.full(k, 1.0 / (k - 1))
                spread[i] = 0.0
            matrix[i] = eta * spread
            matrix[i, i] = 1.0 - eta
        if degenerate:
            warnings.warn(
                f"similarity rows {degenerate} have no mass; "
                "spread initial off-diagonal probability uniformly"
            )
    return TargetMatrix(matrix, 0, epsilon)


def update_target_matrix(target: TargetMatrix) -> TargetMatrix:
    """One decay step toward one-hot rows; row sums are preserved."""
    v = target.matrix
    eps = target.epsilon
    off_mass = v.sum(axis=1) - np.diag(v)
    denom = 1.0 + eps * off_mass
    updated = (eps * v) / denom[:, None]
    np.fill_diagonal(updated, 1.0 / denom)
    return TargetMatrix(updated, target.step + 1, eps)


def soft_targets_for(label_id: int, target: TargetMatrix) -> np.ndarray:
    """Target distribution for one gold label: row ``label_id`` of V."""
    if not 0 <= label_id < target.n_roles:
        raise DataError(f"label id {label_id} out of range [0, {target.n_roles})")
    return target.matrix[label_id].copy()


def similarity_to_json(
    sim: SimilarityMatrix,
    roles: Iterable[str],
    target: TargetMatrix | None = None,
    eta: float | None = None,
) -> str:
    payload: dict = {
        "roles": list(roles),
        "source": sim.source,
        "similarity": sim.sim.tolist(),
    }
    if eta is not None:
        payload["eta"] = eta
    if target is not None:
        payload["initial_target"] = target.matrix.tolist()
        payload["epsilon"] = target.epsilon
    return json.dumps(payload, sort_keys=True)
