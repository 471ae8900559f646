"""Command-line pipeline: each subcommand fronts one stage and exchanges
files with the next.

Every output starts with (or embeds) a provenance header carrying the tool
version, the seed, the resolved configuration, and its hash; reruns with
identical inputs and seed produce byte-identical files. A ``--config`` JSON
file supplies defaults for any long option (dashes as underscores); explicit
flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, aggregate, datasets, eeg, evaluation, gaze, ingest, models, mtl, synth
from .errors import CognlpError, ConfigError

_SEP = (",", ":")


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=_SEP, sort_keys=True)


def _resolved_config(args: argparse.Namespace) -> dict:
    skip = {"func", "config"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or callable(value):
            continue
        out[key] = value
    return out


def _provenance(args: argparse.Namespace) -> dict:
    config = _resolved_config(args)
    digest = hashlib.sha256(_dump(config).encode("utf-8")).hexdigest()[:12]
    return {
        "tool": "cognlp",
        "version": __version__,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "config_hash": digest,
        "config": config,
    }


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _header_line(kind: str, provenance: dict, extra: dict | None = None) -> str:
    header = {"_header": {"kind": kind, "provenance": provenance}}
    if extra:
        header["_header"].update(extra)
    return _dump(header)


def _read_lines(path: str) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def _load_corpus(args, path: str | None = None) -> ingest.Corpus:
    return ingest.parse_corpus(
        _read_lines(path or args.corpus), args.task, strict=args.strict
    )


def _load_fixations(args, corpus: ingest.Corpus) -> ingest.FixationLog:
    return ingest.parse_fixations(
        _read_lines(args.fixations), corpus=corpus, strict=args.strict
    )


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    planted = synth.PlantedEffect(
        delta_trt_ms=args.delta_trt,
        eeg_band=args.eeg_band,
        delta_eeg_uv=args.delta_eeg,
    )
    spec = synth.SynthSpec(
        task=args.task,
        n_sentences=args.sentences,
        n_subjects=args.subjects,
        vocab_size=args.vocab,
        entity_vocab_size=args.entity_vocab,
        sentence_length=(args.len_min, args.len_max),
        entity_mode=args.entity_mode,
        entity_rate=args.entity_rate,
        planted=planted,
    )
    result = synth.generate_synthetic(spec, args.seed)
    out = Path(args.out)
    provenance = _provenance(args)
    _write(
        out / "corpus.jsonl",
        _header_line("corpus", provenance, {"task": args.task})
        + "\n"
        + ingest.serialize_corpus(result.corpus),
    )
    _write(
        out / "fixations.jsonl",
        _header_line("fixations", provenance)
        + "\n"
        + ingest.serialize_fixations(result.fixations),
    )
    _write(
        out / "eeg.jsonl",
        _header_line("eeg", provenance) + "\n" + ingest.serialize_eeg(result.eeg),
    )
    _write(out / "meta.json", _dump({"provenance": provenance, **result.meta}) + "\n")
    print(f"wrote corpus/fixations/eeg for {args.sentences} sentences to {out}")
    return 0


def cmd_ingest_validate(args) -> int:
    corpus = _load_corpus(args)
    log = None
    records = None
    if args.fixations:
        log = _load_fixations(args, corpus)
    if args.eeg:
        records = ingest.parse_eeg(_read_lines(args.eeg), fixations=log, strict=args.strict)
    report = ingest.validation_report(corpus, log, records)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_extract_gaze(args) -> int:
    corpus = _load_corpus(args)
    log = _load_fixations(args, corpus)
    table = gaze.gaze_table(
        corpus, log, min_duration_ms=args.min_duration, strict=args.strict
    )
    provenance = _provenance(args)
    _write(Path(args.out), gaze.write_gaze_features(table, {"provenance": provenance}))
    if args.fixp_out:
        fixp = gaze.fixation_probability(table)
        from .tables import write_token_table

        _write(Path(args.fixp_out), write_token_table(fixp, {"provenance": provenance}))
    print(f"gaze features for {len(table)} (subject, word) rows -> {args.out}")
    return 0


def cmd_extract_eeg(args) -> int:
    corpus = _load_corpus(args)
    log = _load_fixations(args, corpus)
    records = ingest.parse_eeg(_read_lines(args.eeg), fixations=log, strict=args.strict)
    table = eeg.eeg_table(
        corpus,
        log,
        records,
        mode=args.eeg_window,
        reduction=args.eeg_reduce,
        weighted=not args.unweighted,
        min_duration_ms=args.min_duration,
        strict=args.strict,
    )
    provenance = _provenance(args)
    _write(
        Path(args.out),
        eeg.write_eeg_features(
            table, args.eeg_window, args.eeg_reduce, {"provenance": provenance}
        ),
    )
    print(f"EEG features for {len(table)} (subject, word) rows -> {args.out}")
    return 0


def _aggregated_tables(args, corpus) -> dict[str, "object"]:
    """Load subject-level feature files and reduce them to token level."""
    agg = aggregate.SubjectAggregation.parse(args.agg)
    tables = {}
    if getattr(args, "gaze", None):
        gtable = gaze.read_gaze_features(_read_lines(args.gaze))
        tables["gaze"] = aggregate.average_subjects(gtable, agg)
        if getattr(args, "fixp", False):
            tables["fixp"] = gaze.fixation_probability(
                gtable, agg.subjects if agg.mode != "mean_all" else None
            )
    if getattr(args, "eeg", None):
        etable, _, _ = eeg.read_eeg_features(_read_lines(args.eeg))
        tables["eeg"] = aggregate.average_subjects(etable, agg)
    return tables


def cmd_build_lexicon(args) -> int:
    corpus = _load_corpus(args)
    tables = _aggregated_tables(args, corpus)
    if not tables:
        raise ConfigError("build-lexicon needs --gaze and/or --eeg features")
    from .tables import concat_tables

    merged = concat_tables(tables)
    lexicon = aggregate.build_type_lexicon(corpus, merged)
    provenance = _provenance(args)
    payload = lexicon.to_json()
    payload["provenance"] = provenance
    _write(Path(args.out), _dump(payload) + "\n")
    print(f"lexicon with {len(lexicon)} types over dims {list(merged.dims)} -> {args.out}")
    return 0


def cmd_apply_lexicon(args) -> int:
    corpus = _load_corpus(args)
    lexicon = aggregate.TypeLexicon.from_json(
        json.loads(Path(args.lexicon).read_text(encoding="utf-8"))
    )
    table, coverage = aggregate.apply_type_lexicon(lexicon, corpus)
    provenance = _provenance(args)
    from .tables import write_token_table

    _write(Path(args.out), write_token_table(table, {"provenance": provenance}))
    print(
        json.dumps(
            {
                "tokens": coverage.n_tokens,
                "unknown": coverage.n_unknown,
                "unknown_pct": coverage.unknown_pct,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_assemble(args) -> int:
    corpus = _load_corpus(args)
    tables = _aggregated_tables(args, corpus)
    if args.lex:
        from .tables import read_token_table

        tables["lex"] = read_token_table(_read_lines(args.lex))
    dataset = datasets.assemble(
        corpus,
        tables,
        strict=args.strict,
        add_gaze_neighbors=args.neighbors,
        as_binary_sentiment=args.binary,
        binary_policy=args.binary_policy,
    )
    provenance = _provenance(args)
    _write(Path(args.out), datasets.write_dataset(dataset, {"provenance": provenance}))
    print(
        f"dataset task={dataset.task} instances={len(dataset.instances)} "
        f"dims={len(dataset.manifest)} -> {args.out}"
    )
    return 0


def _load_dataset(path: str) -> datasets.Dataset:
    return datasets.read_dataset(_read_lines(path))


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"expected train,dev,test ratios, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def cmd_train(args) -> int:
    dataset = _load_dataset(args.dataset)
    plan = datasets.kfold_split(dataset, args.folds, _parse_ratios(args.ratios), args.seed)
    out = Path(args.out)
    provenance = _provenance(args)
    _write(out / "fold_plan.json", _dump({**plan.to_json(), "provenance": provenance}) + "\n")
    model_kind = args.model
    if model_kind == "auto":
        model_kind = "tagger" if dataset.task == "ner" else "logistic"
    for fold in range(plan.k):
        train_ids = plan.train_ids(fold)
        if model_kind == "tagger":
            config = models.TaggerConfig(epochs=args.epochs, seed=args.seed, n_bins=args.bins)
            model = models.train_tagger(dataset, train_ids, config)
        elif model_kind == "logistic":
            config = models.LogisticConfig(
                lr=args.lr,
                epochs=args.epochs,
                l2=args.l2,
                seed=args.seed,
                lr_halve_every=args.lr_halve_every,
            )
            model = models.train_logistic(dataset, train_ids, config)
        else:
            raise ConfigError(f"unknown model {model_kind!r}")
        _write(out / f"model_fold{fold}.json", _dump(model.to_json()) + "\n")
    _write(out / "config.json", _dump({"provenance": provenance}) + "\n")
    print(f"trained {plan.k} {model_kind} folds -> {out}")
    return 0


def _load_model(path: Path):
    obj = json.loads(path.read_text(encoding="utf-8"))
    if obj["kind"] == "tagger":
        return models.PerceptronTagger.from_json(obj)
    if obj["kind"] == "logistic":
        return models.LogisticModel.from_json(obj)
    raise ConfigError(f"unknown model kind {obj['kind']!r} in {path}")


def _predict_run(run_dir: Path, dataset: datasets.Dataset):
    """Per-sentence test predictions pooled across folds, plus fold metrics."""
    plan = datasets.FoldPlan.from_json(
        json.loads((run_dir / "fold_plan.json").read_text(encoding="utf-8"))
    )
    fold_metrics = []
    predictions: dict[str, object] = {}
    for fold in range(plan.k):
        model = _load_model(run_dir / f"model_fold{fold}.json")
        test_ids = plan.test_ids(fold)
        instances = dataset.select(test_ids)
        preds = models.predict(model, dataset, test_ids)
        if dataset.task == "ner":
            gold = [inst.label for inst in instances]
            fold_metrics.append(evaluation.entity_prf1(gold, preds))
            by_sid: dict[str, object] = {
                inst.sentence_id: list(p) for inst, p in zip(instances, preds)
            }
        else:
            gold = [inst.label for inst in instances]
            fold_metrics.append(evaluation.class_prf1(gold, preds))
            by_sid = {}
            for inst, p in zip(instances, preds):
                by_sid.setdefault(inst.sentence_id, []).append(p)
        predictions.update(by_sid)
    return plan, fold_metrics, predictions


def _prediction_units(dataset: datasets.Dataset, predictions: dict):
    """Aligned (gold, pred) sentence units for permutation testing."""
    gold_units = []
    pred_units = []
    for sid in dataset.sentence_ids():
        if sid not in predictions:
            continue
        instances = [i for i in dataset.instances if i.sentence_id == sid]
        if dataset.task == "ner":
            gold_units.append(instances[0].label)
            pred_units.append(tuple(predictions[sid]))
        else:
            gold_units.append(tuple(i.label for i in instances))
            pred_units.append(tuple(predictions[sid]))
    return gold_units, pred_units


def _default_scorer(task: str) -> str:
    return "entity_f1" if task == "ner" else "macro_f1"


def _evaluate_one_run(args, dataset, run_dir: Path, label: str, provenance: dict):
    """Score one run dir, writing its report and pooled test predictions."""
    _plan, fold_metrics, predictions = _predict_run(run_dir, dataset)
    runs = [
        evaluation.RunMetrics(task=dataset.task, config=label, fold=i, metrics=m)
        for i, m in enumerate(fold_metrics)
    ]
    rep = evaluation.report(runs)
    payload = rep.to_json()
    payload["provenance"] = provenance
    _write(run_dir / "report.json", _dump(payload) + "\n")
    lines = [_header_line("predictions", provenance, {"task": dataset.task})]
    for sid in dataset.sentence_ids():
        if sid in predictions:
            lines.append(_dump({"id": sid, "prediction": predictions[sid]}))
    _write(run_dir / "predictions.jsonl", "\n".join(lines) + "\n")
    return runs, predictions


def cmd_evaluate(args) -> int:
    dataset = _load_dataset(args.dataset)
    provenance = _provenance(args)
    if args.compare:
        run_a, run_b = [Path(p) for p in args.compare.split(",")]
        preds_a = _read_predictions(run_a / "predictions.jsonl")
        preds_b = _read_predictions(run_b / "predictions.jsonl")
        scorer = args.scorer or _default_scorer(dataset.task)
        gold_units, units_a = _prediction_units(dataset, preds_a)
        _, units_b = _prediction_units(dataset, preds_b)
        p_value = evaluation.permutation_test(
            units_a, units_b, gold_units, scorer, n_rounds=args.rounds, seed=args.seed
        )
        sig = evaluation.bonferroni(p_value, alpha=args.alpha, n_hypotheses=args.n_hyp)
        print(json.dumps({"comparison": args.compare, **sig.to_json()}, sort_keys=True))
        return 0
    if args.runs:
        # combined table over several feature configurations; each run is
        # scored against the dataset it was trained on (recorded in its
        # config.json), and non-baseline rows are tested against baseline
        labeled: dict[str, Path] = {}
        for item in args.runs.split(","):
            label, _, path = item.partition("=")
            if not path:
                raise ConfigError(f"--runs items must be label=dir, got {item!r}")
            labeled[label] = Path(path)
        all_runs = []
        pooled: dict[str, dict] = {}
        for label, run_dir in labeled.items():
            run_dataset = _training_dataset(run_dir) or dataset
            if run_dataset.sentence_ids() != dataset.sentence_ids():
                raise ConfigError(
                    f"run {label!r} was trained on a different sentence set"
                )
            runs, predictions = _evaluate_one_run(
                args, run_dataset, run_dir, label, provenance
            )
            all_runs.extend(runs)
            pooled[label] = predictions
        significance = {}
        if "baseline" in labeled:
            scorer = args.scorer or _default_scorer(dataset.task)
            gold_units, base_units = _prediction_units(dataset, pooled["baseline"])
            for label in labeled:
                if label == "baseline":
                    continue
                _, units = _prediction_units(dataset, pooled[label])
                p_value = evaluation.permutation_test(
                    base_units, units, gold_units, scorer,
                    n_rounds=args.rounds, seed=args.seed,
                )
                significance[(dataset.task, label)] = evaluation.bonferroni(
                    p_value, alpha=args.alpha, n_hypotheses=args.n_hyp
                )
        rep = evaluation.report(all_runs, significance)
        payload = rep.to_json()
        payload["provenance"] = provenance
        if args.out:
            _write(Path(args.out), _dump(payload) + "\n")
        print(rep.render_text())
        return 0
    if not args.run:
        raise ConfigError("evaluate needs --run, --runs, or --compare")
    runs, _ = _evaluate_one_run(args, dataset, Path(args.run), args.label, provenance)
    print(evaluation.report(runs).render_text())
    return 0


def _training_dataset(run_dir: Path) -> datasets.Dataset | None:
    """The dataset a run was trained on, recovered from its config record."""
    config_path = run_dir / "config.json"
    if not config_path.exists():
        return None
    obj = json.loads(config_path.read_text(encoding="utf-8"))
    dataset_path = obj.get("provenance", {}).get("config", {}).get("dataset")
    if dataset_path and Path(dataset_path).exists():
        return _load_dataset(dataset_path)
    return None


def _read_predictions(path: Path) -> dict:
    out = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        obj = json.loads(line)
        if "_header" in obj:
            continue
        out[obj["id"]] = obj["prediction"]
    return out


def cmd_significance(args) -> int:
    dataset = _load_dataset(args.dataset)
    preds_a = _read_predictions(Path(args.pred_a))
    preds_b = _read_predictions(Path(args.pred_b))
    scorer = args.scorer or _default_scorer(dataset.task)
    gold_units, units_a = _prediction_units(dataset, preds_a)
    gold_check, units_b = _prediction_units(dataset, preds_b)
    if len(gold_units) != len(gold_check):
        raise ConfigError("prediction files cover different sentences")
    p_value = evaluation.permutation_test(
        units_a, units_b, gold_units, scorer, n_rounds=args.rounds, seed=args.seed
    )
    sig = evaluation.bonferroni(p_value, alpha=args.alpha, n_hypotheses=args.n_hyp)
    print(json.dumps(sig.to_json(), sort_keys=True))
    return 0


def cmd_mtl(args) -> int:
    dataset = _load_dataset(args.dataset)
    aux_specs = []
    for source in [s for s in (args.aux or "").split(",") if s]:
        aux_specs.append(mtl.AuxTaskSpec(source=source, n_bins=args.bins, weight=args.aux_weight))
    freq = None
    if args.freq_lexicon:
        freq = mtl.FrequencyLexicon.from_lines(_read_lines(args.freq_lexicon))
    elif any(s.source == mtl.FREQUENCY_SOURCE for s in aux_specs) or args.main_source == mtl.FREQUENCY_SOURCE:
        freq = mtl.FrequencyLexicon.from_corpus_tokens(
            t for inst in dataset.instances for t in inst.tokens
        )
    plan = datasets.kfold_split(dataset, args.folds, _parse_ratios(args.ratios), args.seed)
    net_config = models.TrunkConfig(
        embed_dim=args.embed, hidden_dim=args.hidden, seed=args.seed
    )
    per_fold = []
    out = Path(args.out)
    provenance = _provenance(args)
    for fold in range(plan.k):
        model = mtl.train_multitask(
            dataset,
            plan.train_ids(fold),
            aux_specs,
            net_config=net_config,
            epochs=args.epochs,
            lr=args.lr,
            seed=args.seed,
            freq=freq,
            label_mode=args.label_mode,
            main_source=args.main_source,
            use_features_as_input=args.features_as_input,
        )
        _write(out / f"model_fold{fold}.json", _dump(model.to_json()) + "\n")
        scores = mtl.evaluate_multitask(
            model,
            dataset,
            plan.test_ids(fold),
            aux_specs,
            freq=freq,
            label_mode=args.label_mode,
            main_source=args.main_source,
        )
        per_fold.append(scores)
    heads = sorted(per_fold[0])
    summary = {
        head: {
            "accuracy": float(np.mean([f[head]["accuracy"] for f in per_fold])),
            "majority_baseline": float(
                np.mean([f[head]["majority_baseline"] for f in per_fold])
            ),
        }
        for head in heads
    }
    for head in heads:
        if all("accuracy_excluding_o" in f[head] for f in per_fold):
            summary[head]["accuracy_excluding_o"] = float(
                np.mean([f[head]["accuracy_excluding_o"] for f in per_fold])
            )
    _write(
        out / "fold_plan.json", _dump({**plan.to_json(), "provenance": provenance}) + "\n"
    )
    _write(
        out / "mtl_report.json",
        _dump({"provenance": provenance, "folds": per_fold, "mean": summary}) + "\n",
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser(defaults: dict | None = None) -> argparse.ArgumentParser:
    """Build the CLI parser; ``defaults`` (from --config) override per-command
    option defaults wherever the option exists."""
    parser = argparse.ArgumentParser(
        prog="cognlp",
        description="Cognitive-signal feature extraction and evaluation pipeline",
    )
    parser.add_argument("--config", help="JSON file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers: list[argparse.ArgumentParser] = []

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func, command=name)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--strict", action="store_true")
        subparsers.append(p)
        return p

    p = add("synth", cmd_synth, help="generate a synthetic corpus with recordings")
    p.add_argument("--out", required=True)
    p.add_argument("--task", default="ner", choices=ingest.TASKS)
    p.add_argument("--sentences", type=int, default=100)
    p.add_argument("--subjects", type=int, default=3)
    p.add_argument("--vocab", type=int, default=400)
    p.add_argument("--entity-vocab", type=int, default=120)
    p.add_argument("--entity-mode", default="positional", choices=("positional", "lexical"))
    p.add_argument("--entity-rate", type=float, default=0.18)
    p.add_argument("--len-min", type=int, default=5)
    p.add_argument("--len-max", type=int, default=12)
    p.add_argument("--delta-trt", type=float, default=0.0)
    p.add_argument("--eeg-band", default=None)
    p.add_argument("--delta-eeg", type=float, default=0.0)

    p = add("ingest-validate", cmd_ingest_validate, help="validate interchange files")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True, choices=ingest.TASKS)
    p.add_argument("--fixations")
    p.add_argument("--eeg")

    p = add("extract-gaze", cmd_extract_gaze, help="compute word-level reading measures")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True, choices=ingest.TASKS)
    p.add_argument("--fixations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-duration", type=float, default=gaze.MIN_FIXATION_MS)
    p.add_argument("--fixp-out", help="also write fixation probabilities (token level)")

    p = add("extract-eeg", cmd_extract_eeg, help="compute word-level EEG band features")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True, choices=ingest.TASKS)
    p.add_argument("--fixations", required=True)
    p.add_argument("--eeg", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--eeg-window", default="ffd", choices=eeg.WINDOW_MODES)
    p.add_argument("--eeg-reduce", default="electrode_mean", choices=eeg.REDUCTIONS)
    p.add_argument("--unweighted", action="store_true")
    p.add_argument("--min-duration", type=float, default=gaze.MIN_FIXATION_MS)

    p = add("build-lexicon", cmd_build_lexicon, help="build a type-aggregated lexicon")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True, choices=ingest.TASKS)
    p.add_argument("--gaze", help="gaze features file (subject level)")
    p.add_argument("--eeg", help="EEG features file (subject level)")
    p.add_argument("--agg", default="mean")
    p.add_argument("--fixp", action="store_true")
    p.add_argument("--out", required=True)

    p = add("apply-lexicon", cmd_apply_lexicon, help="look up type features for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True, choices=ingest.TASKS)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--out", required=True)

    p = add("assemble", cmd_assemble, help="build a task dataset with features")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True, choices=ingest.TASKS)
    p.add_argument("--gaze")
    p.add_argument("--eeg")
    p.add_argument("--lex", help="token-level features from apply-lexicon")
    p.add_argument("--agg", default="mean")
    p.add_argument("--fixp", action="store_true")
    p.add_argument("--neighbors", action="store_true")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--binary-policy", default="drop-all", choices=("drop-all", "drop-train-only"))
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, help="train per-fold models")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="auto", choices=("auto", "tagger", "logistic"))
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--lr-halve-every", type=int, default=None)
    p.add_argument("--bins", type=int, default=10)

    p = add("evaluate", cmd_evaluate, help="score runs, build tables, compare systems")
    p.add_argument("--dataset", required=True)
    p.add_argument("--run")
    p.add_argument("--label", default="baseline", help="config row name in the report")
    p.add_argument(
        "--runs",
        help="label=dir,...: combined table; non-baseline rows tested against baseline",
    )
    p.add_argument("--out", help="write the combined report JSON here")
    p.add_argument("--compare", help="RUN_A,RUN_B: permutation-test two runs")
    p.add_argument("--scorer", choices=sorted(evaluation.SCORERS))
    p.add_argument("--rounds", type=int, default=10000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--n-hyp", type=int, default=12)

    p = add("significance", cmd_significance, help="permutation-test two prediction files")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--scorer", choices=sorted(evaluation.SCORERS))
    p.add_argument("--rounds", type=int, default=10000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--n-hyp", type=int, default=12)

    p = add("mtl", cmd_mtl, help="multi-task training with auxiliary features")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--aux", default="", help="comma list: TRT,EEG_a,word_frequency,...")
    p.add_argument("--aux-weight", type=float, default=1.0)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--freq-lexicon", help="word<TAB>count file")
    p.add_argument("--label-mode", default="task", choices=("task", "neutral-vs-rest"))
    p.add_argument("--main-source", default=None, help="swap roles: feature as main task")
    p.add_argument("--features-as-input", action="store_true")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--ratios", default="0.8,0.0,0.2")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--embed", type=int, default=32)
    p.add_argument("--hidden", type=int, default=64)

    if defaults:
        # subcommands parse into a fresh namespace, so defaults must be set
        # on each subparser that actually defines the option
        renamed = {k.replace("-", "_"): v for k, v in defaults.items()}
        for p in subparsers:
            dests = {a.dest for a in p._actions}
            overrides = {k: v for k, v in renamed.items() if k in dests}
            if overrides:
                p.set_defaults(**overrides)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    defaults = None
    if "--config" in argv:
        at = argv.index("--config")
        config_path = argv[at + 1]
        defaults = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if not isinstance(defaults, dict):
            print(
                json.dumps({"error": "ConfigError", "message": "--config must contain a JSON object"}),
                file=sys.stderr,
            )
            return 1
    parser = build_parser(defaults)
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CognlpError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        line = getattr(exc, "line", None)
        if line is not None:
            record["line"] = line
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
