"""Curriculum-learning toolkit for rhetorical role labeling.

Core pieces: a jsonl corpus model, role-transition statistics, four
per-document difficulty scores with baby-step scheduling, annealed
label-similarity soft targets, a linear-chain CRF sequence labeler trained
with Adam, and an orchestrator that runs every curriculum combination.
"""

__version__ = "0.1.0"

from .corpus import Corpus, Document, RoleInventory, parse_corpus, split_corpus
from .difficulty import rank_and_bucket, score_documents
from .discourse import derive_canonical_order, estimate_transition_matrix
from .errors import CulrError, DataError, NumericsError, UsageError
from .label_curriculum import (
    init_target_matrix,
    similarity_from_confusion,
    similarity_from_embeddings,
    update_target_matrix,
)
from .labeler import SequenceLabeler
from .metrics import evaluate_model
from .orchestrator import CurriculumTrainer, StrategyConfig, ablation_grid, train
from .pacing import build_schedule

__all__ = [
    "Corpus",
    "CulrError",
    "CurriculumTrainer",
    "DataError",
    "Document",
    "NumericsError",
    "RoleInventory",
    "SequenceLabeler",
    "StrategyConfig",
    "UsageError",
    "ablation_grid",
    "build_schedule",
    "derive_canonical_order",
    "estimate_transition_matrix",
    "evaluate_model",
    "init_target_matrix",
    "parse_corpus",
    "rank_and_bucket",
    "score_documents",
    "similarity_from_confusion",
    "similarity_from_embeddings",
    "split_corpus",
    "train",
    "update_target_matrix",
]
