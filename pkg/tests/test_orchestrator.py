import numpy as np
import pytest
from sklearn.base import clone

from culr.corpus import split_corpus
from culr.errors import DataError
from culr.label_curriculum import TargetMatrix, init_target_matrix, similarity_from_confusion
from culr.orchestrator import (
    MODES,
    CurriculumTrainer,
    StrategyConfig,
    ablation_grid,
    anneal_updates_needed,
    build_epoch_plan,
    run_grid,
    train,
)
from culr.pacing import build_schedule
from culr.difficulty import DifficultyScore, rank_and_bucket
from culr.synth import generate_corpus


@pytest.fixture(scope="module")
def small_corpus():
    corpus = generate_corpus(n_docs=24, n_roles=3, seed=11)
    return split_corpus(corpus, (0.75, 0.25, 0.0), seed=0)


def fast(**overrides) -> StrategyConfig:
    base = dict(
        total_epochs=4,
        hash_dim=512,
        learning_rate=0.15,
        num_buckets=2,
        epochs_per_stage=1,
        eta=0.4,
        epsilon=0.5,
        rc_interval=1,
        seed=3,
    )
    base.update(overrides)
    return StrategyConfig(**base)


def toy_confusion(k=3):
    counts = np.full((k, k), 1.0)
    np.fill_diagonal(counts, 5.0)
    return counts


class TestStrategyValidation:
    def test_unknown_mode(self):
        with pytest.raises(DataError, match="unknown strategy mode"):
            StrategyConfig(mode="annealed").validate()

    def test_dc_mode_requires_metric(self):
        with pytest.raises(DataError, match="requires dc_metric"):
            StrategyConfig(mode="dc_only").validate()

    def test_rc_mode_requires_source(self):
        with pytest.raises(DataError, match="requires rc_source"):
            StrategyConfig(mode="rc_only").validate()

    def test_irrelevant_fields_warn(self):
        with pytest.warns(UserWarning, match="dc_metric is ignored"):
            StrategyConfig(mode="baseline", dc_metric="shifts").validate()
        with pytest.warns(UserWarning, match="rc_source is ignored"):
            StrategyConfig(mode="dc_only", dc_metric="shifts", rc_source="confusion").validate()

    def test_neg_loglik_needs_smoothing(self):
        with pytest.raises(DataError, match="alpha > 0"):
            StrategyConfig(mode="dc_only", dc_metric="neg_loglik", alpha=0.0).validate()

    def test_numeric_ranges(self):
        with pytest.raises(DataError):
            StrategyConfig(total_epochs=0).validate()
        with pytest.raises(DataError):
            StrategyConfig(eta=1.0).validate()
        with pytest.raises(DataError):
            StrategyConfig(epsilon=1.0).validate()


def make_schedule(bucket_sizes, epochs_per_stage):
    scores = []
    i = 0
    for b, size in enumerate(bucket_sizes):
        for _ in range(size):
            scores.append(DifficultyScore(f"d{i:02d}", "shifts", float(b)))
            i += 1
    assignment = rank_and_bucket(scores, len(bucket_sizes))
    return build_schedule(assignment, epochs_per_stage)


def make_target(eta=0.4, epsilon=0.5, k=3):
    return init_target_matrix(similarity_from_confusion(toy_confusion(k)), eta, epsilon)


class TestEpochPlans:
    train_ids = tuple(f"d{i:02d}" for i in range(6))

    def test_baseline_is_all_full_epochs(self):
        plan = build_epoch_plan(fast(total_epochs=3), self.train_ids, None, None)
        assert len(plan) == 3
        assert all(spec.phase == "full" and not spec.soft for spec in plan)
        assert all(spec.doc_ids == self.train_ids for spec in plan)

    def test_dc_only_stages_then_full(self):
        schedule = make_schedule([3, 3], epochs_per_stage=2)
        strategy = fast(mode="dc_only", dc_metric="shifts", total_epochs=6,
                        num_buckets=2, epochs_per_stage=2)
        plan = build_epoch_plan(strategy, self.train_ids, schedule, None)
        assert [spec.stage for spec in plan] == [0, 0, 1, 1, None, None]
        assert len(plan[0].doc_ids) == 3
        assert len(plan[2].doc_ids) == 6

    def test_hierarchical_plan_hand_checked(self):
        # one sweep = stage0, stage1; target matrix decays after each sweep
        schedule = make_schedule([3, 3], epochs_per_stage=1)
        v0 = make_target(eta=0.4, epsilon=0.5)
        n_up = anneal_updates_needed(v0)
        strategy = fast(mode="hierarchical", dc_metric="shifts", rc_source="confusion",
                        total_epochs=2 * n_up + 3)
        plan = build_epoch_plan(strategy, self.train_ids, schedule, v0)
        for sweep in range(n_up):
            first, second = plan[2 * sweep], plan[2 * sweep + 1]
            assert (first.stage, first.soft, first.v_update_after) == (0, True, False)
            assert (second.stage, second.soft, second.v_update_after) == (1, True, True)
        assert all(spec.phase == "full" and not spec.soft for spec in plan[2 * n_up :])

    def test_rc_only_interval_layout(self):
        v0 = make_target()
        n_up = anneal_updates_needed(v0)
        strategy = fast(mode="rc_only", rc_source="confusion", rc_interval=2,
                        total_epochs=2 * n_up + 2)
        plan = build_epoch_plan(strategy, self.train_ids, None, v0)
        soft_part = plan[: 2 * n_up]
        assert all(spec.soft for spec in soft_part)
        updates = [spec.v_update_after for spec in soft_part]
        assert updates == [False, True] * n_up
        assert not any(spec.soft for spec in plan[2 * n_up :])

    def test_reverse_hierarchical_reinitializes_per_stage(self):
        schedule = make_schedule([3, 3], epochs_per_stage=1)
        v0 = make_target()
        n_up = anneal_updates_needed(v0)
        strategy = fast(mode="reverse_hierarchical", dc_metric="shifts",
                        rc_source="confusion", total_epochs=2 * n_up + 1)
        plan = build_epoch_plan(strategy, self.train_ids, schedule, v0)
        reinits = [i for i, spec in enumerate(plan) if spec.v_reinit_before]
        assert reinits == [0, n_up]
        assert all(spec.stage == 0 for spec in plan[:n_up])
        assert all(spec.stage == 1 for spec in plan[n_up : 2 * n_up])

    def test_sequential_orders(self):
        schedule = make_schedule([3, 3], epochs_per_stage=1)
        v0 = make_target()
        n_up = anneal_updates_needed(v0)
        dc_rc = build_epoch_plan(
            fast(mode="sequential_dc_rc", dc_metric="shifts", rc_source="confusion",
                 total_epochs=n_up + 4),
            self.train_ids, schedule, v0,
        )
        assert [spec.soft for spec in dc_rc[:2]] == [False, False]
        assert all(spec.soft for spec in dc_rc[2 : 2 + n_up])
        rc_dc = build_epoch_plan(
            fast(mode="sequential_rc_dc", dc_metric="shifts", rc_source="confusion",
                 total_epochs=n_up + 4),
            self.train_ids, schedule, v0,
        )
        assert all(spec.soft for spec in rc_dc[:n_up])
        assert [spec.stage for spec in rc_dc[n_up : n_up + 2]] == [0, 1]

    def test_overlong_curriculum_truncated_with_warning(self):
        schedule = make_schedule([3, 3], epochs_per_stage=5)
        strategy = fast(mode="dc_only", dc_metric="shifts", total_epochs=4,
                        epochs_per_stage=5)
        with pytest.warns(UserWarning, match="truncating"):
            plan = build_epoch_plan(strategy, self.train_ids, schedule, None)
        assert len(plan) == 4

    def test_optimizer_reset_flags(self):
        schedule = make_schedule([3, 3], epochs_per_stage=1)
        strategy = fast(mode="dc_only", dc_metric="shifts", total_epochs=3,
                        epochs_per_stage=1, reset_optimizer_per_stage=True)
        plan = build_epoch_plan(strategy, self.train_ids, schedule, None)
        assert [spec.optimizer_reset_before for spec in plan] == [False, True, False]


def anneal_updates(eta, epsilon, k=3):
    return anneal_updates_needed(make_target(eta, epsilon, k))


def test_anneal_updates_zero_for_identity():
    v0 = init_target_matrix(similarity_from_confusion(toy_confusion()), 0.0, 0.9)
    assert anneal_updates_needed(v0) == 0
    assert anneal_updates(0.4, 0.5) > 0


class TestTraining:
    def test_baseline_runs_and_logs(self, small_corpus):
        result = train(small_corpus, fast())
        assert len(result.epoch_log) == 4
        entry = result.epoch_log[0]
        assert {"epoch", "phase", "stage", "n_docs", "doc_ids", "soft_targets",
                "v_step", "v_off_diagonal_mass", "train_loss", "val_macro_f1",
                "val_micro_f1"} <= set(entry)
        assert 0 <= result.best_epoch < 4
        assert result.manifest["n_train_docs"] == 18

    def test_degenerate_curriculum_is_bit_identical_to_baseline(self, small_corpus):
        baseline = train(small_corpus, fast(mode="baseline"))
        degenerate = train(
            small_corpus,
            fast(mode="hierarchical", dc_metric="neg_loglik", rc_source="confusion",
                 num_buckets=1, eta=0.0),
            confusion=toy_confusion(),
        )
        assert baseline.metrics_json() == degenerate.metrics_json()
        np.testing.assert_array_equal(
            baseline.model.params.emission, degenerate.model.params.emission
        )
        np.testing.assert_array_equal(
            baseline.model.params.transitions, degenerate.model.params.transitions
        )
        for a, b in zip(baseline.epoch_log, degenerate.epoch_log):
            assert a["doc_ids"] == b["doc_ids"]
            assert a["train_loss"] == b["train_loss"]

    def test_single_bucket_dc_matches_baseline(self, small_corpus):
        baseline = train(small_corpus, fast(mode="baseline"))
        dc = train(small_corpus, fast(mode="dc_only", dc_metric="shifts", num_buckets=1))
        assert baseline.metrics_json() == dc.metrics_json()

    def test_determinism_across_runs(self, small_corpus):
        a = train(small_corpus, fast(mode="rc_only", rc_source="confusion"),
                  confusion=toy_confusion())
        b = train(small_corpus, fast(mode="rc_only", rc_source="confusion"),
                  confusion=toy_confusion())
        assert a.metrics_json() == b.metrics_json()
        assert a.epoch_log == b.epoch_log

    def test_no_document_outside_its_stage(self, small_corpus):
        result = train(
            small_corpus,
            fast(mode="dc_only", dc_metric="shifts", num_buckets=3,
                 epochs_per_stage=1, total_epochs=5),
        )
        stages = {}
        for entry in result.epoch_log:
            if entry["stage"] is not None:
                stages.setdefault(entry["stage"], set()).update(entry["doc_ids"])
        # cumulative inclusion: stage k docs are a subset of stage k+1 docs
        assert stages[0] <= stages[1] <= stages[2]
        all_train = {d.id for d in small_corpus.train_docs}
        assert stages[2] == all_train

    def test_rc_only_logs_target_decay(self, small_corpus):
        result = train(
            small_corpus,
            fast(mode="rc_only", rc_source="confusion", total_epochs=6),
            confusion=toy_confusion(),
        )
        soft_epochs = [e for e in result.epoch_log if e["soft_targets"]]
        assert soft_epochs, "annealing phase missing"
        masses = [e["v_off_diagonal_mass"] for e in soft_epochs]
        assert all(m > 0 for m in masses)
        assert masses == sorted(masses, reverse=True)
        steps = [e["v_step"] for e in soft_epochs]
        assert steps == sorted(steps)

    def test_confusion_required_with_instructive_error(self, small_corpus):
        with pytest.raises(DataError, match="baseline"):
            train(small_corpus, fast(mode="rc_only", rc_source="confusion"))

    def test_embedding_source(self, small_corpus):
        vectors = np.array([[1.0, 0.2, 0.0], [0.2, 1.0, 0.3], [0.0, 0.3, 1.0]])
        result = train(
            small_corpus,
            fast(mode="rc_only", rc_source="embedding", total_epochs=5),
            label_embeddings=vectors,
        )
        assert any(e["soft_targets"] for e in result.epoch_log)

    def test_expert_order_required(self, small_corpus):
        with pytest.raises(DataError, match="expert order"):
            train(small_corpus, fast(mode="dc_only", dc_metric="expert_inversions"))

    def test_unsplit_corpus_rejected(self):
        corpus = generate_corpus(n_docs=6, n_roles=2, seed=0)
        with pytest.raises(DataError, match="validation"):
            train(corpus, fast())

    def test_best_epoch_is_argmax_of_logged_micro(self, small_corpus):
        result = train(small_corpus, fast(total_epochs=5))
        micros = [e["val_micro_f1"] for e in result.epoch_log]
        assert micros[result.best_epoch] == max(micros)
        assert result.best_epoch == int(np.argmax(micros))


class TestAblationGrid:
    def test_twelve_rows(self):
        rows = ablation_grid()
        assert len(rows) == 12
        assert rows[0].mode == "baseline"
        assert [r.mode for r in rows[1:5]] == ["dc_only"] * 4
        assert [r.dc_metric for r in rows[1:5]] == [
            "shifts", "expert_inversions", "data_inversions", "neg_loglik",
        ]
        assert [r.rc_source for r in rows[5:7]] == ["confusion", "embedding"]
        assert [r.mode for r in rows[7:9]] == ["hierarchical"] * 2
        assert rows[9].mode == "sequential_dc_rc"
        assert rows[10].mode == "sequential_rc_dc"
        assert rows[11].mode == "reverse_hierarchical"

    def test_every_mode_covered(self):
        assert {r.mode for r in ablation_grid()} == set(MODES)

    def test_base_overrides_carry_through(self):
        rows = ablation_grid(StrategyConfig(total_epochs=7, seed=99))
        assert all(r.total_epochs == 7 and r.seed == 99 for r in rows)


class TestGridRunner:
    def test_cartesian_product(self, small_corpus):
        results = run_grid(
            small_corpus,
            fast(total_epochs=2),
            {"learning_rate": [0.05, 0.1], "seed": [0]},
        )
        assert len(results) == 2
        assert [r["overrides"]["learning_rate"] for r in results] == [0.05, 0.1]
        assert all("val_micro_f1" in r for r in results)

    def test_unknown_field_rejected(self, small_corpus):
        with pytest.raises(DataError, match="unknown strategy field"):
            run_grid(small_corpus, fast(), {"momentum": [0.9]})


class TestCurriculumTrainer:
    def _xy(self, corpus):
        X = [list(d.sentences) for d in corpus.documents]
        y = [[corpus.inventory.name_of(l) for l in d.labels] for d in corpus.documents]
        return X, y

    def test_fit_predict_baseline(self):
        corpus = generate_corpus(n_docs=20, n_roles=3, seed=5)
        X, y = self._xy(corpus)
        trainer = CurriculumTrainer(
            total_epochs=4, hash_dim=512, learning_rate=0.15, val_fraction=0.2
        )
        trainer.fit(X, y)
        preds = trainer.predict(X[:2])
        assert [len(p) for p in preds] == [len(x) for x in X[:2]]
        assert set(p for seq in preds for p in seq) <= set(corpus.inventory.roles)

    def test_auto_confusion_runs_baseline_first(self):
        corpus = generate_corpus(n_docs=16, n_roles=3, seed=6)
        X, y = self._xy(corpus)
        trainer = CurriculumTrainer(
            mode="hierarchical", dc_metric="shifts", rc_source="confusion",
            total_epochs=3, hash_dim=256, learning_rate=0.15,
            num_buckets=2, epochs_per_stage=1, epsilon=0.5, eta=0.3,
            val_fraction=0.25,
        )
        trainer.fit(X, y)
        assert hasattr(trainer, "model_")

    def test_sklearn_clone_compatible(self):
        trainer = CurriculumTrainer(mode="rc_only", rc_source="embedding", eta=0.3)
        assert clone(trainer).get_params() == trainer.get_params()
