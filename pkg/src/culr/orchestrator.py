"""Training strategies: plain training, document- and label-level curricula,
their nested combination, and the pipeline/reversed variants.

Every strategy compiles to an explicit per-epoch plan (which documents, which
targets, when the label-target matrix decays) before any training happens, so
runs are reproducible and the schedule can be audited from the epoch log.
All strategies are budgeted to ``total_epochs``: epochs not claimed by a
curriculum phase are plain full-data epochs, and a curriculum phase that would
overrun the budget is truncated with a warning.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import __version__
from .corpus import Corpus, Document, RoleInventory, serialize_corpus, split_corpus
from .difficulty import (
    METRIC_DATA_INVERSIONS,
    METRIC_EXPERT_INVERSIONS,
    METRIC_NEG_LOGLIK,
    METRICS,
    rank_and_bucket,
    score_documents,
)
from .discourse import CanonicalOrder, derive_canonical_order, estimate_transition_matrix
from .errors import DataError
from .features import SentenceFeaturizer
from .label_curriculum import (
    SimilarityMatrix,
    TargetMatrix,
    init_target_matrix,
    similarity_from_confusion,
    similarity_from_embeddings,
    update_target_matrix,
)
from .labeler import (
    AdamState,
    LabelerModel,
    LabelerParams,
    init_params,
    one_hot_targets,
    run_training_epoch,
)
from .metrics import Metrics, confusion_counts, evaluate_predictions
from .pacing import BabyStepSchedule, build_schedule

MODE_BASELINE = "baseline"
MODE_DC_ONLY = "dc_only"
MODE_RC_ONLY = "rc_only"
MODE_HIERARCHICAL = "hierarchical"
MODE_REVERSE_HIERARCHICAL = "reverse_hierarchical"
MODE_SEQUENTIAL_DC_RC = "sequential_dc_rc"
MODE_SEQUENTIAL_RC_DC = "sequential_rc_dc"
MODES = (
    MODE_BASELINE,
    MODE_DC_ONLY,
    MODE_RC_ONLY,
    MODE_HIERARCHICAL,
    MODE_REVERSE_HIERARCHICAL,
    MODE_SEQUENTIAL_DC_RC,
    MODE_SEQUENTIAL_RC_DC,
)
_DC_MODES = frozenset(MODES) - {MODE_BASELINE, MODE_RC_ONLY}
_RC_MODES = frozenset(MODES) - {MODE_BASELINE, MODE_DC_ONLY}

RC_SOURCES = ("confusion", "embedding")

# hyperparameter sweep ranges used by the grid runner
SWEEP_GRIDS: dict[str, tuple] = {
    "learning_rate": (1e-5, 3e-5, 5e-5, 1e-4, 3e-4),
    "rc_interval": (5, 10, 15, 20, 25),
    "epsilon": (0.8, 0.9, 0.95, 0.99, 0.999),
    "num_buckets": (3, 5, 7, 10, 12, 15),
    "epochs_per_stage": (2, 4, 6, 8, 10),
}

_MAX_ANNEAL_UPDATES = 200_000


@dataclass
class StrategyConfig:
    """Resolved knobs for one training run."""

    mode: str = MODE_BASELINE
    dc_metric: str | None = None
    rc_source: str | None = None
    num_buckets: int = 3
    epochs_per_stage: int = 2
    epsilon: float = 0.9
    eta: float = 0.5
    rc_interval: int = 1
    total_epochs: int = 40
    learning_rate: float = 0.05
    seed: int = 0
    head: str = "crf"
    hash_dim: int = 2**18
    window: int = 1
    use_bigrams: bool = True
    dropout: float = 0.0
    alpha: float = 1.0
    reset_optimizer_per_stage: bool = False

    def uses_dc(self) -> bool:
        return self.mode in _DC_MODES

    def uses_rc(self) -> bool:
        return self.mode in _RC_MODES

    def validate(self) -> "StrategyConfig":
        if self.mode not in MODES:
            raise DataError(f"unknown strategy mode {self.mode!r}; choose from {MODES}")
        if self.uses_dc():
            if self.dc_metric is None:
                raise DataError(f"mode {self.mode!r} requires dc_metric (one of {METRICS})")
            if self.dc_metric not in METRICS:
                raise DataError(f"unknown dc_metric {self.dc_metric!r}")
            if self.dc_metric == METRIC_NEG_LOGLIK and self.alpha <= 0:
                raise DataError("dc_metric 'neg_loglik' needs smoothing alpha > 0")
        elif self.dc_metric is not None:
            warnings.warn(f"dc_metric is ignored in mode {self.mode!r}")
        if self.uses_rc():
            if self.rc_source is None:
                raise DataError(f"mode {self.mode!r} requires rc_source ({RC_SOURCES})")
            if self.rc_source not in RC_SOURCES:
                raise DataError(f"unknown rc_source {self.rc_source!r}")
        elif self.rc_source is not None:
            warnings.warn(f"rc_source is ignored in mode {self.mode!r}")
        if self.total_epochs < 1:
            raise DataError("total_epochs must be >= 1")
        if self.rc_interval < 1:
            raise DataError("rc_interval must be >= 1")
        if self.num_buckets < 1:
            raise DataError("num_buckets must be >= 1")
        if self.epochs_per_stage < 1:
            raise DataError("epochs_per_stage must be >= 1")
        if not 0 <= self.eta < 1:
            raise DataError("eta must lie in [0, 1)")
        if not 0 < self.epsilon < 1:
            raise DataError("epsilon must lie in (0, 1)")
        return self


@dataclass(frozen=True)
class EpochSpec:
    """One planned epoch: which documents, and how targets behave."""

    phase: str  # "full" | "dc_stage" | "rc" | "hier_stage" | "rev_stage"
    doc_ids: tuple[str, ...]
    stage: int | None = None
    soft: bool = False
    v_update_after: bool = False
    v_reinit_before: bool = False
    optimizer_reset_before: bool = False


def anneal_updates_needed(v0: TargetMatrix) -> int:
    """Decay steps until the target matrix counts as one-hot."""
    v = v0
    for n in range(_MAX_ANNEAL_UPDATES):
        if v.is_identity():
            return n
        v = update_target_matrix(v)
    raise DataError("target matrix did not anneal to the identity; check epsilon")


def _full_epoch(train_ids: tuple[str, ...]) -> EpochSpec:
    return EpochSpec("full", train_ids)


def _dc_stage_epochs(
    schedule: BabyStepSchedule,
    phase: str,
    soft: bool,
    reset_optimizer: bool,
) -> list[EpochSpec]:
    plan = []
    for stage_idx, stage_ids in enumerate(schedule.stages):
        for e in range(schedule.epochs_per_stage):
            plan.append(
                EpochSpec(
                    phase,
                    tuple(stage_ids),
                    stage=stage_idx,
                    soft=soft,
                    optimizer_reset_before=(reset_optimizer and stage_idx > 0 and e == 0),
                )
            )
    return plan


def build_epoch_plan(
    strategy: StrategyConfig,
    train_ids: tuple[str, ...],
    schedule: BabyStepSchedule | None,
    v0: TargetMatrix | None,
) -> list[EpochSpec]:
    """Compile the strategy into an explicit epoch list of length total_epochs."""
    mode = strategy.mode
    e_total = strategy.total_epochs
    reset = strategy.reset_optimizer_per_stage
    plan: list[EpochSpec] = []

    def rc_epochs(doc_ids: tuple[str, ...], phase: str, n_updates: int) -> list[EpochSpec]:
        out = []
        for _ in range(n_updates):
            for i in range(strategy.rc_interval):
                out.append(
                    EpochSpec(
                        phase,
                        doc_ids,
                        soft=True,
                        v_update_after=(i == strategy.rc_interval - 1),
                    )
                )
        return out

    if mode == MODE_BASELINE:
        pass
    elif mode == MODE_DC_ONLY:
        plan += _dc_stage_epochs(schedule, "dc_stage", soft=False, reset_optimizer=reset)
    elif mode == MODE_RC_ONLY:
        plan += rc_epochs(train_ids, "rc", anneal_updates_needed(v0))
    elif mode == MODE_HIERARCHICAL:
        # each label-curriculum step wraps one complete easy-to-hard sweep
        sweep = _dc_stage_epochs(schedule, "hier_stage", soft=True, reset_optimizer=reset)
        n_updates = anneal_updates_needed(v0)
        for u in range(n_updates):
            for s in range(strategy.rc_interval):
                chunk = [replace(spec, v_update_after=False) for spec in sweep]
                if s == strategy.rc_interval - 1:
                    chunk[-1] = replace(chunk[-1], v_update_after=True)
                plan += chunk
    elif mode == MODE_REVERSE_HIERARCHICAL:
        # outer document stages; a fresh annealing cycle runs inside each
        n_updates = anneal_updates_needed(v0)
        for stage_idx, stage_ids in enumerate(schedule.stages):
            stage_plan = rc_epochs(tuple(stage_ids), "rev_stage", n_updates)
            stage_plan = [
                replace(spec, stage=stage_idx, v_reinit_before=(i == 0))
                for i, spec in enumerate(stage_plan)
            ]
            if stage_plan and reset and stage_idx > 0:
                stage_plan[0] = replace(stage_plan[0], optimizer_reset_before=True)
            plan += stage_plan
    elif mode == MODE_SEQUENTIAL_DC_RC:
        plan += _dc_stage_epochs(schedule, "dc_stage", soft=False, reset_optimizer=reset)
        plan += rc_epochs(train_ids, "rc", anneal_updates_needed(v0))
    elif mode == MODE_SEQUENTIAL_RC_DC:
        plan += rc_epochs(train_ids, "rc", anneal_updates_needed(v0))
        plan += _dc_stage_epochs(schedule, "dc_stage", soft=False, reset_optimizer=reset)
    else:  # pragma: no cover - validate() rejects unknown modes
        raise DataError(f"unknown mode {mode!r}")

    if len(plan) > e_total:
        warnings.warn(
            f"curriculum phases need {len(plan)} epochs but total_epochs={e_total}; "
            "truncating the plan to the budget"
        )
        plan = plan[:e_total]
    while len(plan) < e_total:
        plan.append(_full_epoch(train_ids))
    return plan


@dataclass
class TrainResult:
    model: LabelerModel
    best_epoch: int
    epoch_log: list[dict]
    val_metrics: Metrics
    val_confusion: np.ndarray
    manifest: dict

    def metrics_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "epochs_run": len(self.epoch_log),
            "val": self.val_metrics.to_dict(),
        }

    def metrics_json(self) -> str:
        return json.dumps(self.metrics_dict(), sort_keys=True)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _resource_hash(arr: np.ndarray | None) -> str | None:
    if arr is None:
        return None
    return _sha256(np.ascontiguousarray(np.asarray(arr, dtype=np.float64)).tobytes())


def _build_similarity(
    strategy: StrategyConfig,
    confusion: np.ndarray | None,
    label_embeddings: np.ndarray | None,
    n_roles: int,
) -> SimilarityMatrix:
    if strategy.rc_source == "confusion":
        if confusion is None:
            raise DataError(
                "rc_source='confusion' needs a confusion artifact from a prior "
                "baseline run; train with --strategy baseline first and pass its "
                "validation confusion"
            )
        c = np.asarray(confusion, dtype=np.float64)
        if c.shape != (n_roles, n_roles):
            raise DataError(
                f"confusion artifact must be {(n_roles, n_roles)}, got {c.shape}"
            )
        return similarity_from_confusion(c)
    if label_embeddings is None:
        raise DataError(
            "rc_source='embedding' needs per-role vectors (role<TAB>floats file)"
        )
    vectors = np.asarray(label_embeddings, dtype=np.float64)
    if vectors.shape[0] != n_roles:
        raise DataError(
            f"label embeddings cover {vectors.shape[0]} roles, corpus has {n_roles}"
        )
    return similarity_from_embeddings(vectors)


def _difficulty_schedule(
    strategy: StrategyConfig,
    train_docs: Sequence[Document],
    inventory: RoleInventory,
    expert_order: CanonicalOrder | None,
) -> BabyStepSchedule:
    order = None
    tm = None
    if strategy.dc_metric == METRIC_EXPERT_INVERSIONS:
        if expert_order is None:
            raise DataError(
                "dc_metric 'expert_inversions' needs an expert order file "
                "(one role name per line)"
            )
        order = expert_order
    elif strategy.dc_metric == METRIC_DATA_INVERSIONS:
        tm = estimate_transition_matrix(train_docs, inventory, strategy.alpha)
        order = derive_canonical_order(tm)
    elif strategy.dc_metric == METRIC_NEG_LOGLIK:
        tm = estimate_transition_matrix(train_docs, inventory, strategy.alpha)
    scores = score_documents(train_docs, strategy.dc_metric, order=order, tm=tm)
    assignment = rank_and_bucket(scores, strategy.num_buckets)
    return build_schedule(assignment, strategy.epochs_per_stage)


def train(
    corpus: Corpus,
    strategy: StrategyConfig,
    *,
    expert_order: CanonicalOrder | None = None,
    label_embeddings: np.ndarray | None = None,
    confusion: np.ndarray | None = None,
    sentence_embeddings: Mapping[tuple[str, int], np.ndarray] | None = None,
    embedding_dim: int = 0,
) -> TrainResult:
    """Run one training strategy end to end and return the best checkpoint.

    The best epoch is the one with the highest validation micro-F1 (earliest
    on ties).  Curricula only ever filter training documents; validation data
    is untouched.
    """
    strategy.validate()
    train_docs = sorted(corpus.train_docs, key=lambda d: d.id)
    val_docs = sorted(corpus.val_docs, key=lambda d: d.id)
    if not train_docs:
        raise DataError("corpus has no training documents")
    if not val_docs:
        raise DataError(
            "corpus has no validation documents; split it first (split_corpus or "
            "--split-ratios)"
        )
    inventory = corpus.inventory
    train_ids = tuple(d.id for d in train_docs)

    schedule = (
        _difficulty_schedule(strategy, train_docs, inventory, expert_order)
        if strategy.uses_dc()
        else None
    )
    v0 = None
    if strategy.uses_rc():
        sim = _build_similarity(strategy, confusion, label_embeddings, len(inventory))
        v0 = init_target_matrix(sim, strategy.eta, strategy.epsilon)

    featurizer = SentenceFeaturizer(
        hash_dim=strategy.hash_dim,
        window=strategy.window,
        use_bigrams=strategy.use_bigrams,
        embedding_dim=embedding_dim,
    ).fit(train_docs)
    encoded = featurizer.encode_corpus(list(train_docs) + list(val_docs), sentence_embeddings)

    plan = build_epoch_plan(strategy, train_ids, schedule, v0)

    params = init_params(len(inventory), featurizer.n_features, strategy.head)
    state = AdamState()
    rng = np.random.default_rng(strategy.seed)
    one_hot = {d.id: one_hot_targets(d.labels, len(inventory)) for d in train_docs}
    labels_by_id = {d.id: np.asarray(d.labels, dtype=np.intp) for d in train_docs}

    val_gold = [np.asarray(d.labels) for d in val_docs]

    def evaluate_now(current: LabelerParams) -> tuple[Metrics, np.ndarray]:
        model = LabelerModel(inventory, featurizer, current)
        preds = [model.decode(encoded[d.id]) for d in val_docs]
        return (
            evaluate_predictions(val_gold, preds, inventory),
            confusion_counts(val_gold, preds, len(inventory)),
        )

    v = v0
    epoch_log: list[dict] = []
    best_epoch = -1
    best_micro = -1.0
    best_params: LabelerParams | None = None

    for epoch, spec in enumerate(plan):
        if spec.v_reinit_before:
            v = v0
        if spec.optimizer_reset_before:
            state = AdamState()

        if spec.soft:
            targets = {doc_id: v.matrix[labels_by_id[doc_id]] for doc_id in spec.doc_ids}
        else:
            targets = one_hot

        ids = sorted(spec.doc_ids)
        order = [ids[i] for i in rng.permutation(len(ids))]
        mean_loss = run_training_epoch(
            order,
            encoded,
            targets,
            params,
            state,
            lr=strategy.learning_rate,
            dropout=strategy.dropout,
            featurizer=featurizer,
            rng=rng,
        )

        val_metrics, _ = evaluate_now(params)
        epoch_log.append(
            {
                "epoch": epoch,
                "phase": spec.phase,
                "stage": spec.stage,
                "n_docs": len(spec.doc_ids),
                "doc_ids": ids,
                "soft_targets": spec.soft,
                "v_step": v.step if (spec.soft and v is not None) else None,
                "v_off_diagonal_mass": (
                    float(v.off_diagonal_mass().max()) if (spec.soft and v is not None) else 0.0
                ),
                "train_loss": mean_loss,
                "val_macro_f1": val_metrics.macro_f1,
                "val_micro_f1": val_metrics.micro_f1,
            }
        )
        if val_metrics.micro_f1 > best_micro:
            best_micro = val_metrics.micro_f1
            best_epoch = epoch
            best_params = params.copy()

        if spec.v_update_after and v is not None:
            v = update_target_matrix(v)

    model = LabelerModel(inventory, featurizer, best_params)
    val_metrics, val_confusion = evaluate_now(best_params)

    manifest = {
        "tool_version": __version__,
        "strategy": asdict(strategy),
        "corpus_sha256": _sha256(serialize_corpus(corpus).encode()),
        "n_train_docs": len(train_docs),
        "n_val_docs": len(val_docs),
        "n_roles": len(inventory),
        "roles": list(inventory.roles),
        "resources": {
            "confusion_sha256": _resource_hash(confusion),
            "label_embeddings_sha256": _resource_hash(label_embeddings),
            "expert_order_ranks": list(expert_order.ranks) if expert_order else None,
            "sentence_embedding_dim": embedding_dim,
        },
        "planned_epochs": len(plan),
    }
    return TrainResult(model, best_epoch, epoch_log, val_metrics, val_confusion, manifest)


def ablation_grid(base: StrategyConfig | None = None) -> list[StrategyConfig]:
    """The twelve canonical strategy rows used for the full comparison.

    Row order: plain training; the four document-difficulty metrics; the two
    label-similarity sources; nested (both sources); the two pipeline orders;
    and the reversed nesting.  Probabilistic difficulty + confusion similarity
    are used wherever one of each is needed.
    """
    base = base or StrategyConfig()
    rows = [
        {"mode": MODE_BASELINE},
        {"mode": MODE_DC_ONLY, "dc_metric": "shifts"},
        {"mode": MODE_DC_ONLY, "dc_metric": METRIC_EXPERT_INVERSIONS},
        {"mode": MODE_DC_ONLY, "dc_metric": METRIC_DATA_INVERSIONS},
        {"mode": MODE_DC_ONLY, "dc_metric": METRIC_NEG_LOGLIK},
        {"mode": MODE_RC_ONLY, "rc_source": "confusion"},
        {"mode": MODE_RC_ONLY, "rc_source": "embedding"},
        {"mode": MODE_HIERARCHICAL, "rc_source": "confusion", "dc_metric": METRIC_NEG_LOGLIK},
        {"mode": MODE_HIERARCHICAL, "rc_source": "embedding", "dc_metric": METRIC_NEG_LOGLIK},
        {"mode": MODE_SEQUENTIAL_DC_RC, "dc_metric": METRIC_NEG_LOGLIK, "rc_source": "confusion"},
        {"mode": MODE_SEQUENTIAL_RC_DC, "rc_source": "confusion", "dc_metric": METRIC_NEG_LOGLIK},
        {"mode": MODE_REVERSE_HIERARCHICAL, "dc_metric": METRIC_NEG_LOGLIK, "rc_source": "confusion"},
    ]
    return [
        replace(base, mode=row["mode"],
                dc_metric=row.get("dc_metric"), rc_source=row.get("rc_source"))
        for row in rows
    ]


def run_grid(
    corpus: Corpus,
    base: StrategyConfig,
    grid: Mapping[str, Sequence],
    **resources,
) -> list[dict]:
    """Train every combination in the cartesian product of ``grid`` values.

    Returns one summary dict per combination, in deterministic order.
    """
    for key in grid:
        if key not in StrategyConfig.__dataclass_fields__:
            raise DataError(f"unknown strategy field {key!r} in grid")
    keys = sorted(grid)
    results = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        result = train(corpus, replace(base, **overrides), **resources)
        results.append(
            {
                "overrides": overrides,
                "best_epoch": result.best_epoch,
                "val_macro_f1": result.val_metrics.macro_f1,
                "val_micro_f1": result.val_metrics.micro_f1,
            }
        )
    return results


class CurriculumTrainer(BaseEstimator):
    """Curriculum training behind an sklearn-style estimator facade.

    ``fit(X, y)`` builds a corpus from sentence/label-name sequences, carves
    out a validation split, and runs the configured strategy.  When
    ``rc_source='confusion'`` and no confusion matrix is supplied, a plain
    baseline run on the same data produces one first (that is also how the
    artifact is meant to be obtained).
    """

    def __init__(
        self,
        mode: str = MODE_BASELINE,
        dc_metric: str | None = None,
        rc_source: str | None = None,
        num_buckets: int = 3,
        epochs_per_stage: int = 2,
        epsilon: float = 0.9,
        eta: float = 0.5,
        rc_interval: int = 1,
        total_epochs: int = 40,
        learning_rate: float = 0.05,
        seed: int = 0,
        head: str = "crf",
        hash_dim: int = 2**18,
        window: int = 1,
        dropout: float = 0.0,
        alpha: float = 1.0,
        val_fraction: float = 0.1,
        confusion=None,
        label_embeddings=None,
    ):
        self.mode = mode
        self.dc_metric = dc_metric
        self.rc_source = rc_source
        self.num_buckets = num_buckets
        self.epochs_per_stage = epochs_per_stage
        self.epsilon = epsilon
        self.eta = eta
        self.rc_interval = rc_interval
        self.total_epochs = total_epochs
        self.learning_rate = learning_rate
        self.seed = seed
        self.head = head
        self.hash_dim = hash_dim
        self.window = window
        self.dropout = dropout
        self.alpha = alpha
        self.val_fraction = val_fraction
        self.confusion = confusion
        self.label_embeddings = label_embeddings

    def _strategy(self) -> StrategyConfig:
        return StrategyConfig(
            mode=self.mode,
            dc_metric=self.dc_metric,
            rc_source=self.rc_source,
            num_buckets=self.num_buckets,
            epochs_per_stage=self.epochs_per_stage,
            epsilon=self.epsilon,
            eta=self.eta,
            rc_interval=self.rc_interval,
            total_epochs=self.total_epochs,
            learning_rate=self.learning_rate,
            seed=self.seed,
            head=self.head,
            hash_dim=self.hash_dim,
            window=self.window,
            dropout=self.dropout,
            alpha=self.alpha,
        )

    def fit(self, X, y) -> "CurriculumTrainer":
        from .labeler import _docs_from_xy

        if not 0 < self.val_fraction < 1:
            raise DataError("val_fraction must lie in (0, 1)")
        inventory, docs = _docs_from_xy(X, y)
        corpus = Corpus(inventory, docs)
        corpus = split_corpus(
            corpus, (1.0 - self.val_fraction, self.val_fraction, 0.0), self.seed
        )
        strategy = self._strategy()
        confusion = self.confusion
        if strategy.uses_rc() and strategy.rc_source == "confusion" and confusion is None:
            baseline = train(corpus, replace(strategy, mode=MODE_BASELINE,
                                             dc_metric=None, rc_source=None))
            confusion = baseline.val_confusion
        self.result_ = train(
            corpus,
            strategy,
            confusion=confusion,
            label_embeddings=self.label_embeddings,
        )
        self.model_ = self.result_.model
        return self

    def predict(self, X) -> list[list[str]]:
        if not hasattr(self, "model_"):
            raise DataError("trainer is not fitted; call fit first")
        out = []
        for i, sentences in enumerate(X):
            doc = Document(
                f"q{i:06d}", tuple(str(s) for s in sentences), (0,) * len(sentences)
            )
            ids = self.model_.predict_document(doc)
            out.append([self.model_.inventory.name_of(int(l)) for l in ids])
        return out
