"""Command-line surface: ingestion, difficulty analysis, training, evaluation.

Every subcommand accepts ``--config file.json`` whose keys mirror the flag
names (underscored); explicit flags win over the config file.  The default
seed comes from the ``CULR_SEED`` environment variable when set.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from types import SimpleNamespace

from .corpus import (
    RoleInventory,
    convert_build,
    load_corpus,
    load_split_tags,
    parse_corpus,
    serialize_corpus,
    serialize_split_tags,
    split_corpus,
)
from .difficulty import (
    rank_and_bucket,
    score_documents,
    scores_from_csv,
    scores_to_csv,
)
from .discourse import (
    derive_canonical_order,
    estimate_transition_matrix,
    load_expert_order,
    role_frequencies,
)
from .errors import DataError, NumericsError, UsageError
from .features import load_sentence_embeddings
from .label_curriculum import (
    init_target_matrix,
    parse_label_embeddings,
    similarity_from_confusion,
    similarity_from_embeddings,
    similarity_to_json,
)
from .labeler import LabelerModel
from .metrics import confusion_from_json, confusion_to_json, evaluate_model, model_confusion
from .orchestrator import MODES, StrategyConfig, run_grid, train
from .pacing import build_schedule

_METRIC_NAMES = {
    "shifts": "shifts",
    "expert-inv": "expert_inversions",
    "data-inv": "data_inversions",
    "neg-loglik": "neg_loglik",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="culr", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON file of option values; flags win")
        return p

    p = add("ingest", "Validate/convert a corpus into the jsonl format")
    p.add_argument("--in", dest="in_path")
    p.add_argument("--format", dest="fmt", choices=["jsonl", "build"])
    p.add_argument("--out")

    p = add("score", "Compute per-document difficulty scores")
    p.add_argument("--corpus")
    p.add_argument("--splits")
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--metric", choices=sorted(_METRIC_NAMES))
    p.add_argument("--expert-order", dest="expert_order")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out")

    p = add("buckets", "Partition scored documents into difficulty buckets")
    p.add_argument("--scores")
    p.add_argument("--num-buckets", dest="num_buckets", type=int)
    p.add_argument("--epochs-per-stage", dest="epochs_per_stage", type=int)
    p.add_argument("--out")

    p = add("simmatrix", "Build a label-similarity matrix and initial targets")
    p.add_argument("--source", choices=["confusion", "embedding"])
    p.add_argument("--in", dest="in_path")
    p.add_argument("--eta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out")

    def add_train_flags(p: argparse.ArgumentParser):
        p.add_argument("--corpus")
        p.add_argument("--splits")
        p.add_argument("--split-ratios", dest="split_ratios")
        p.add_argument("--strategy", choices=sorted(MODES))
        p.add_argument("--dc-metric", dest="dc_metric", choices=sorted(_METRIC_NAMES))
        p.add_argument("--rc-source", dest="rc_source", choices=["confusion", "embedding"])
        p.add_argument("--epsilon", type=float)
        p.add_argument("--eta", type=float)
        p.add_argument("--rc-interval", dest="rc_interval", type=int)
        p.add_argument("--num-buckets", dest="num_buckets", type=int)
        p.add_argument("--epochs-per-stage", dest="epochs_per_stage", type=int)
        p.add_argument("--total-epochs", dest="total_epochs", type=int)
        p.add_argument("--lr", dest="learning_rate", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--head", choices=["crf", "softmax"])
        p.add_argument("--hash-dim", dest="hash_dim", type=int)
        p.add_argument("--window", type=int)
        p.add_argument("--bigrams", dest="use_bigrams", action=argparse.BooleanOptionalAction)
        p.add_argument("--dropout", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument(
            "--reset-optimizer-per-stage",
            dest="reset_optimizer_per_stage",
            action=argparse.BooleanOptionalAction,
        )
        p.add_argument("--expert-order", dest="expert_order")
        p.add_argument("--embeddings", dest="embeddings")
        p.add_argument("--confusion", dest="confusion")
        p.add_argument("--sentence-embeddings", dest="sentence_embeddings")
        p.add_argument("--out")

    p = add("train", "Train a labeler under a curriculum strategy")
    add_train_flags(p)

    p = add("grid", "Train every combination of a hyperparameter grid")
    add_train_flags(p)
    p.add_argument("--grid", dest="grid")

    p = add("eval", "Evaluate a checkpoint on a corpus split")
    p.add_argument("--model")
    p.add_argument("--corpus")
    p.add_argument("--splits")
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--sentence-embeddings", dest="sentence_embeddings")
    p.add_argument("--out")

    p = add("confusion", "Export a checkpoint's confusion matrix on a split")
    p.add_argument("--model")
    p.add_argument("--corpus")
    p.add_argument("--splits")
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--sentence-embeddings", dest="sentence_embeddings")
    p.add_argument("--out")

    return parser


def _default_seed() -> int:
    raw = os.environ.get("CULR_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"CULR_SEED must be an integer, got {raw!r}") from None


_DEFAULTS = {
    "ingest": {"in_path": None, "fmt": "jsonl", "out": None},
    "score": {
        "corpus": None,
        "splits": None,
        "split": "train",
        "metric": None,
        "expert_order": None,
        "alpha": 1.0,
        "out": None,
    },
    "buckets": {"scores": None, "num_buckets": None, "epochs_per_stage": 2, "out": None},
    "simmatrix": {"source": None, "in_path": None, "eta": 0.5, "epsilon": 0.9, "out": None},
    "eval": {
        "model": None,
        "corpus": None,
        "splits": None,
        "split": "test",
        "sentence_embeddings": None,
        "out": None,
    },
    "confusion": {
        "model": None,
        "corpus": None,
        "splits": None,
        "split": "val",
        "sentence_embeddings": None,
        "out": None,
    },
}

_TRAIN_DEFAULTS = {
    "corpus": None,
    "splits": None,
    "split_ratios": None,
    "strategy": "baseline",
    "dc_metric": None,
    "rc_source": None,
    "epsilon": 0.9,
    "eta": 0.5,
    "rc_interval": 1,
    "num_buckets": 3,
    "epochs_per_stage": 2,
    "total_epochs": 40,
    "learning_rate": 0.05,
    "seed": None,
    "head": "crf",
    "hash_dim": 2**18,
    "window": 1,
    "use_bigrams": True,
    "dropout": 0.0,
    "alpha": 1.0,
    "reset_optimizer_per_stage": False,
    "expert_order": None,
    "embeddings": None,
    "confusion": None,
    "sentence_embeddings": None,
    "out": None,
}


def _resolve(args: argparse.Namespace, defaults: dict) -> SimpleNamespace:
    merged = dict(defaults)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise DataError("config file must contain a JSON object")
        unknown = sorted(set(cfg) - set(defaults))
        if unknown:
            raise UsageError(f"unknown config keys {unknown} for this command")
        merged.update(cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if "seed" in merged and merged["seed"] is None:
        merged["seed"] = _default_seed()
    return SimpleNamespace(**merged)


def _require(opts: SimpleNamespace, *names: str):
    for name in names:
        if getattr(opts, name) in (None, ""):
            flag = "--" + name.replace("_", "-").replace("in-path", "in")
            raise UsageError(f"missing required option {flag}")


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_corpus_with_splits(opts: SimpleNamespace, inventory=None):
    corpus = load_corpus(opts.corpus, inventory)
    if getattr(opts, "splits", None):
        corpus = corpus.with_splits(load_split_tags(opts.splits))
    return corpus


def _cmd_ingest(opts) -> int:
    _require(opts, "in_path", "out")
    raw = _read_text(opts.in_path)
    if opts.fmt == "build":
        try:
            records = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataError(f"span export is not valid JSON: {exc}") from exc
        text = convert_build(records)
    else:
        text = raw
    corpus = parse_corpus(text)
    Path(opts.out).write_text(serialize_corpus(corpus), encoding="utf-8")
    print(
        json.dumps(
            {
                "documents": len(corpus.documents),
                "roles": len(corpus.inventory),
                "sentences": corpus.n_sentences(),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_score(opts) -> int:
    _require(opts, "corpus", "metric", "out")
    corpus = _load_corpus_with_splits(opts)
    metric = _METRIC_NAMES[opts.metric]
    train_docs = corpus.train_docs
    if not train_docs:
        raise DataError("corpus has no training documents to estimate statistics from")
    order = None
    tm = None
    if metric == "expert_inversions":
        if not opts.expert_order:
            raise UsageError("--expert-order is required for --metric expert-inv")
        order = load_expert_order(
            opts.expert_order,
            corpus.inventory,
            role_frequencies(train_docs, corpus.inventory),
        )
    elif metric == "data_inversions":
        tm = estimate_transition_matrix(train_docs, corpus.inventory, opts.alpha)
        order = derive_canonical_order(tm)
    elif metric == "neg_loglik":
        tm = estimate_transition_matrix(train_docs, corpus.inventory, opts.alpha)
    docs = corpus.docs_in(opts.split)
    if not docs:
        raise DataError(f"split {opts.split!r} has no documents")
    scores = score_documents(docs, metric, order=order, tm=tm)
    Path(opts.out).write_text(scores_to_csv(scores), encoding="utf-8")
    print(json.dumps({"documents": len(scores), "metric": metric}, sort_keys=True))
    return 0


def _cmd_buckets(opts) -> int:
    _require(opts, "scores", "num_buckets", "out")
    scores = scores_from_csv(_read_text(opts.scores))
    assignment = rank_and_bucket(scores, opts.num_buckets)
    schedule = build_schedule(assignment, opts.epochs_per_stage)
    Path(opts.out).write_text(schedule.to_json(), encoding="utf-8")
    print(json.dumps({"bucket_sizes": list(assignment.sizes())}, sort_keys=True))
    return 0


def _cmd_simmatrix(opts) -> int:
    _require(opts, "source", "in_path", "out")
    if opts.source == "confusion":
        counts = confusion_from_json(_read_text(opts.in_path))
        roles = json.loads(_read_text(opts.in_path))["roles"]
        sim = similarity_from_confusion(counts)
    else:
        lines = _read_text(opts.in_path).splitlines()
        names = sorted(
            {line.split("\t", 1)[0].strip() for line in lines if line.strip()}
        )
        inventory = RoleInventory(names)
        vectors = parse_label_embeddings(lines, inventory)
        roles = list(inventory.roles)
        sim = similarity_from_embeddings(vectors)
    target = init_target_matrix(sim, opts.eta, opts.epsilon)
    Path(opts.out).write_text(
        similarity_to_json(sim, roles, target=target, eta=opts.eta), encoding="utf-8"
    )
    print(json.dumps({"roles": len(roles), "source": opts.source}, sort_keys=True))
    return 0


def _strategy_from_opts(opts) -> StrategyConfig:
    return StrategyConfig(
        mode=opts.strategy,
        dc_metric=_METRIC_NAMES[opts.dc_metric] if opts.dc_metric else None,
        rc_source=opts.rc_source,
        num_buckets=opts.num_buckets,
        epochs_per_stage=opts.epochs_per_stage,
        epsilon=opts.epsilon,
        eta=opts.eta,
        rc_interval=opts.rc_interval,
        total_epochs=opts.total_epochs,
        learning_rate=opts.learning_rate,
        seed=opts.seed,
        head=opts.head,
        hash_dim=opts.hash_dim,
        window=opts.window,
        use_bigrams=opts.use_bigrams,
        dropout=opts.dropout,
        alpha=opts.alpha,
        reset_optimizer_per_stage=opts.reset_optimizer_per_stage,
    )


def _train_inputs(opts):
    corpus = _load_corpus_with_splits(opts)
    if opts.split_ratios:
        if opts.splits:
            raise UsageError("--splits and --split-ratios are mutually exclusive")
        parts = [p for p in opts.split_ratios.split(",") if p != ""]
        try:
            ratios = tuple(float(p) for p in parts)
        except ValueError:
            raise UsageError(f"bad --split-ratios {opts.split_ratios!r}") from None
        corpus = split_corpus(corpus, ratios, opts.seed)

    resources: dict = {}
    if opts.expert_order:
        resources["expert_order"] = load_expert_order(
            opts.expert_order,
            corpus.inventory,
            role_frequencies(corpus.train_docs, corpus.inventory),
        )
    if opts.embeddings:
        resources["label_embeddings"] = parse_label_embeddings(
            opts.embeddings, corpus.inventory
        )
    if opts.confusion:
        resources["confusion"] = confusion_from_json(
            _read_text(opts.confusion), corpus.inventory
        )
    if opts.sentence_embeddings:
        table, dim = load_sentence_embeddings(opts.sentence_embeddings)
        resources["sentence_embeddings"] = table
        resources["embedding_dim"] = dim
    return corpus, resources


def _cmd_train(opts) -> int:
    _require(opts, "corpus", "out")
    corpus, resources = _train_inputs(opts)
    strategy = _strategy_from_opts(opts)
    result = train(corpus, strategy, **resources)

    out = Path(opts.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(
        json.dumps(result.manifest, sort_keys=True, indent=2), encoding="utf-8"
    )
    (out / "metrics.json").write_text(result.metrics_json(), encoding="utf-8")
    with (out / "epochs.jsonl").open("w", encoding="utf-8") as fh:
        for entry in result.epoch_log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    result.model.save(out / "model.npz")
    (out / "confusion_val.json").write_text(
        confusion_to_json(result.val_confusion, corpus.inventory), encoding="utf-8"
    )
    (out / "splits.jsonl").write_text(serialize_split_tags(corpus), encoding="utf-8")
    print(
        json.dumps(
            {
                "best_epoch": result.best_epoch,
                "val_macro_f1": result.val_metrics.macro_f1,
                "val_micro_f1": result.val_metrics.micro_f1,
                "out": str(out),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_grid(opts) -> int:
    _require(opts, "corpus", "out", "grid")
    corpus, resources = _train_inputs(opts)
    base = _strategy_from_opts(opts)
    grid = json.loads(_read_text(opts.grid))
    if not isinstance(grid, dict) or not grid:
        raise DataError("grid file must be a non-empty JSON object of field -> values")
    results = run_grid(corpus, base, grid, **resources)
    out = Path(opts.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "grid_results.json").write_text(
        json.dumps(results, sort_keys=True, indent=2), encoding="utf-8"
    )
    best = max(results, key=lambda r: r["val_micro_f1"])
    print(json.dumps({"runs": len(results), "best": best}, sort_keys=True))
    return 0


def _cmd_eval(opts) -> int:
    _require(opts, "model", "corpus", "out")
    model = LabelerModel.load(opts.model)
    corpus = _load_corpus_with_splits(opts, model.inventory)
    docs = corpus.docs_in(opts.split)
    if not docs:
        raise DataError(f"split {opts.split!r} has no documents")
    embeddings = None
    if opts.sentence_embeddings:
        embeddings, _ = load_sentence_embeddings(opts.sentence_embeddings)
    metrics = evaluate_model(model, docs, embeddings)
    Path(opts.out).write_text(metrics.to_json(), encoding="utf-8")
    print(
        json.dumps(
            {"macro_f1": metrics.macro_f1, "micro_f1": metrics.micro_f1},
            sort_keys=True,
        )
    )
    return 0


def _cmd_confusion(opts) -> int:
    _require(opts, "model", "corpus", "out")
    model = LabelerModel.load(opts.model)
    corpus = _load_corpus_with_splits(opts, model.inventory)
    docs = corpus.docs_in(opts.split)
    if not docs:
        raise DataError(f"split {opts.split!r} has no documents")
    embeddings = None
    if opts.sentence_embeddings:
        embeddings, _ = load_sentence_embeddings(opts.sentence_embeddings)
    counts = model_confusion(model, docs, embeddings)
    Path(opts.out).write_text(confusion_to_json(counts, model.inventory), encoding="utf-8")
    print(json.dumps({"sentences": int(counts.sum())}, sort_keys=True))
    return 0


_HANDLERS = {
    "ingest": (_cmd_ingest, lambda: _DEFAULTS["ingest"]),
    "score": (_cmd_score, lambda: _DEFAULTS["score"]),
    "buckets": (_cmd_buckets, lambda: _DEFAULTS["buckets"]),
    "simmatrix": (_cmd_simmatrix, lambda: _DEFAULTS["simmatrix"]),
    "train": (_cmd_train, lambda: _TRAIN_DEFAULTS),
    "grid": (_cmd_grid, lambda: {**_TRAIN_DEFAULTS, "grid": None}),
    "eval": (_cmd_eval, lambda: _DEFAULTS["eval"]),
    "confusion": (_cmd_confusion, lambda: _DEFAULTS["confusion"]),
}


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required; see --help")
    handler, defaults = _HANDLERS[args.command]
    opts = _resolve(args, defaults())
    return handler(opts)


def main(argv=None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
