"""Multi-task training: a main token-level task plus auxiliary prediction of
discretized cognitive features and word frequency.

All tasks share the TrunkNet trunk and differ only in their softmax heads
(hard parameter sharing). Each training step samples one task proportional
to its instance count among tasks with positive loss weight, then updates
the trunk and that task's head with the gradient scaled by the weight.
Zero-weight tasks are excluded from sampling entirely, which makes them
exact no-ops on the parameter trajectory. Tasks sharing a name share a head,
so duplicating the main task as an auxiliary doubles its sampling mass
without introducing new parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import seeding
from .aggregate import NormalizationStats, apply_normalization, discretize, fit_normalization
from .datasets import Dataset, Instance
from .errors import ConfigError, ValidationError
from .models import TrunkConfig, TrunkNet, repair_bio

GAZE_SOURCES = ("NFIX", "FFD", "GD", "TRT", "GPT", "MFD", "FIXP")
COMBINED_BANDS = {
    "EEG_t": ("theta1", "theta2"),
    "EEG_a": ("alpha1", "alpha2"),
    "EEG_b": ("beta1", "beta2"),
    "EEG_g": ("gamma1", "gamma2"),
}
FREQUENCY_SOURCE = "word_frequency"


@dataclass(frozen=True)
class AuxTaskSpec:
    """One auxiliary prediction target: a feature name, a combined EEG band
    (EEG_t/a/b/g), or word frequency; binned into ``n_bins`` classes."""

    source: str
    n_bins: int = 10
    weight: float = 1.0

    def __post_init__(self):
        if self.n_bins < 2:
            raise ConfigError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.weight < 0:
            raise ConfigError(f"loss weight must be >= 0, got {self.weight}")


@dataclass
class FrequencyLexicon:
    """Lower-cased word -> corpus frequency count; OOV words count as 1."""

    counts: dict[str, int] = field(default_factory=dict)

    def count(self, word: str) -> int:
        return self.counts.get(word.lower(), 1)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "FrequencyLexicon":
        counts: dict[str, int] = {}
        for lineno, raw in enumerate(lines, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValidationError(
                    f"expected 'word<TAB>count', got {line!r}", line=lineno
                )
            word, count = parts[0].lower(), int(parts[1])
            if count < 1:
                raise ValidationError(f"count must be >= 1, got {count}", line=lineno)
            counts[word] = count
        return cls(counts=counts)

    @classmethod
    def from_corpus_tokens(cls, tokens: Iterable[str]) -> "FrequencyLexicon":
        counts: dict[str, int] = {}
        for token in tokens:
            key = token.lower()
            counts[key] = counts.get(key, 0) + 1
        return cls(counts=counts)


def _manifest_column(dataset: Dataset, basename: str) -> int:
    matches = [
        i for i, dim in enumerate(dataset.manifest) if dim.split("/")[-1] == basename
    ]
    if not matches:
        raise ConfigError(f"no manifest dimension named {basename!r}")
    if len(matches) > 1:
        raise ConfigError(f"ambiguous manifest dimension {basename!r}")
    return matches[0]


def _minmax_bins(values: np.ndarray, n_bins: int) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi > lo:
        normalized = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    else:
        normalized = np.zeros_like(values)
    return discretize(normalized, n_bins)


def make_aux_targets(
    dataset: Dataset,
    spec: AuxTaskSpec,
    freq: FrequencyLexicon | None = None,
) -> dict[str, np.ndarray]:
    """Per-token bin classes for one auxiliary source, keyed by sentence id.

    Cognitive sources min-max normalize their feature column over the whole
    dataset (a degenerate, constant column maps every token to class 0);
    frequency uses log10 counts, likewise min-max normalized, with OOV words
    counted as 1 and therefore falling in the lowest bin.
    """
    instances = dataset.instances
    if not instances:
        raise ConfigError("empty dataset")
    lengths = [len(inst.tokens) for inst in instances]
    if spec.source == FREQUENCY_SOURCE:
        if freq is None:
            raise ConfigError("word_frequency auxiliary requires a frequency lexicon")
        flat = np.array(
            [
                math.log10(freq.count(token))
                for inst in instances
                for token in inst.tokens
            ]
        )
    else:
        if spec.source in COMBINED_BANDS:
            cols = [_manifest_column(dataset, b) for b in COMBINED_BANDS[spec.source]]
        else:
            cols = [_manifest_column(dataset, spec.source)]
        pieces = []
        for inst in instances:
            feats = inst.features
            if feats is None:
                raise ConfigError(
                    f"instance {inst.sentence_id!r} has no features for {spec.source!r}"
                )
            pieces.append(feats[:, cols].mean(axis=1))
        flat = np.concatenate(pieces)
    bins = _minmax_bins(flat, spec.n_bins)
    out: dict[str, np.ndarray] = {}
    pos = 0
    for inst, length in zip(instances, lengths):
        out[inst.sentence_id] = bins[pos : pos + length]
        pos += length
    return out


@dataclass(frozen=True)
class TaskData:
    """Targets for one head: name, class labels, per-sentence class arrays."""

    name: str
    classes: tuple[str, ...]
    targets: dict[str, np.ndarray]
    weight: float = 1.0


def main_task_data(dataset: Dataset, label_mode: str = "task") -> TaskData:
    """Token-level targets for the main NLP task.

    NER uses its tag set; sentiment broadcasts the sentence label to every
    token. ``label_mode="neutral-vs-rest"`` recodes ternary sentiment into
    NEUTRAL / NOT-NEUTRAL. Relation classification has no token-level labels
    and is rejected.
    """
    if dataset.task == "relclass":
        raise ConfigError("relation classification has no token-level labels")
    targets: dict[str, np.ndarray] = {}
    if dataset.task == "ner":
        if label_mode != "task":
            raise ConfigError(f"label_mode {label_mode!r} only applies to sentiment")
        classes = tuple(sorted({t for inst in dataset.instances for t in inst.label}))
        index = {c: i for i, c in enumerate(classes)}
        for inst in dataset.instances:
            targets[inst.sentence_id] = np.array(
                [index[t] for t in inst.label], dtype=int
            )
        return TaskData(name="main", classes=classes, targets=targets)
    if label_mode == "neutral-vs-rest":
        if dataset.task != "sentiment3":
            raise ConfigError("neutral-vs-rest requires the ternary sentiment task")
        classes = ("NEUTRAL", "NOT-NEUTRAL")
        for inst in dataset.instances:
            cls = 0 if inst.label == "neu" else 1
            targets[inst.sentence_id] = np.full(len(inst.tokens), cls, dtype=int)
        return TaskData(name="main", classes=classes, targets=targets)
    if label_mode != "task":
        raise ConfigError(f"unknown label_mode {label_mode!r}")
    classes = tuple(sorted({inst.label for inst in dataset.instances}))
    index = {c: i for i, c in enumerate(classes)}
    for inst in dataset.instances:
        targets[inst.sentence_id] = np.full(
            len(inst.tokens), index[inst.label], dtype=int
        )
    return TaskData(name="main", classes=classes, targets=targets)


def aux_task_data(
    dataset: Dataset, spec: AuxTaskSpec, freq: FrequencyLexicon | None = None
) -> TaskData:
    targets = make_aux_targets(dataset, spec, freq=freq)
    classes = tuple(f"bin{i}" for i in range(spec.n_bins))
    return TaskData(name=spec.source, classes=classes, targets=targets, weight=spec.weight)


@dataclass(eq=False)
class MultitaskModel:
    net: TrunkNet
    tasks: dict[str, tuple[str, ...]]  # head name -> class labels
    manifest: tuple[str, ...]
    stats: NormalizationStats | None
    meta: dict

    def _cog(self, inst: Instance) -> np.ndarray | None:
        if not self.net.cog_dim:
            return None
        feats = (
            inst.features
            if inst.features is not None
            else np.zeros((len(inst.tokens), len(self.manifest)))
        )
        return apply_normalization(self.stats, feats)

    def predict_tokens(
        self, dataset: Dataset, ids: Iterable[str], head: str = "main"
    ) -> dict[str, tuple[str, ...]]:
        if head not in self.tasks:
            raise ConfigError(f"model has no head named {head!r}")
        classes = self.tasks[head]
        out: dict[str, tuple[str, ...]] = {}
        for inst in dataset.select(ids):
            token_ids = self.net.token_ids(inst.tokens)
            pred = self.net.predict_classes(token_ids, self._cog(inst), head)
            labels = tuple(classes[c] for c in pred)
            if head == "main" and dataset.task == "ner":
                labels = repair_bio(labels)
            out[inst.sentence_id] = labels
        return out

    def to_json(self) -> dict:
        return {
            "kind": "multitask",
            "net": self.net.to_json(),
            "tasks": {name: list(classes) for name, classes in sorted(self.tasks.items())},
            "manifest": list(self.manifest),
            "stats": self.stats.to_json() if self.stats else None,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MultitaskModel":
        return cls(
            net=TrunkNet.from_json(obj["net"]),
            tasks={name: tuple(c) for name, c in obj["tasks"].items()},
            manifest=tuple(obj["manifest"]),
            stats=NormalizationStats.from_json(obj["stats"]) if obj["stats"] else None,
            meta=obj["meta"],
        )


def train_multitask(
    dataset: Dataset,
    ids: Sequence[str],
    aux_specs: Sequence[AuxTaskSpec] = (),
    *,
    net_config: TrunkConfig = TrunkConfig(),
    epochs: int = 5,
    lr: float = 0.1,
    seed: int = 0,
    freq: FrequencyLexicon | None = None,
    label_mode: str = "task",
    main_source: str | None = None,
    extra_tasks: Sequence[TaskData] = (),
    use_features_as_input: bool = False,
) -> MultitaskModel:
    """Jointly train the main task and auxiliaries on one dataset section.

    Cognitive features serve as auxiliary *targets*; the network input is
    the token embedding alone unless ``use_features_as_input`` is set (in
    which case predicting a feature that is also an input is trivial).
    ``main_source`` swaps roles: a cognitive feature or ``word_frequency``
    becomes the main task (its targets built exactly as for auxiliaries) and
    the listed auxiliaries keep their roles. Every step consumes exactly two
    uniform draws (task choice, instance choice), so runs with the same seed
    and the same active task list follow identical trajectories.
    """
    ids = tuple(ids)
    if not ids:
        raise ValidationError("empty training section")
    if main_source is None:
        main = main_task_data(dataset, label_mode=label_mode)
    else:
        main_spec = AuxTaskSpec(source=main_source)
        main = TaskData(
            name="main",
            classes=tuple(f"bin{i}" for i in range(main_spec.n_bins)),
            targets=make_aux_targets(dataset, main_spec, freq=freq),
            weight=1.0,
        )
    tasks: list[TaskData] = [main]
    for spec in aux_specs:
        tasks.append(aux_task_data(dataset, spec, freq=freq))
    tasks.extend(extra_tasks)

    head_sizes: dict[str, int] = {}
    head_classes: dict[str, tuple[str, ...]] = {}
    for task in tasks:
        if task.name in head_sizes and head_sizes[task.name] != len(task.classes):
            raise ConfigError(
                f"tasks named {task.name!r} disagree on class count"
            )
        head_sizes[task.name] = len(task.classes)
        head_classes[task.name] = task.classes

    train_instances = {
        inst.sentence_id: inst
        for inst in dataset.select(ids)
        if not (isinstance(inst.label, str) and inst.label in dataset.train_exclude)
    }
    if not train_instances:
        raise ValidationError("empty training set")
    vocab = tuple(sorted({t for inst in train_instances.values() for t in inst.tokens}))
    cog_dim = len(dataset.manifest) if use_features_as_input else 0
    stats = None
    if cog_dim:
        stats = fit_normalization(
            [
                row
                for inst in train_instances.values()
                for row in (
                    inst.features
                    if inst.features is not None
                    else np.zeros((len(inst.tokens), cog_dim))
                )
            ]
        )
    net = TrunkNet(vocab, cog_dim, head_sizes, net_config)

    prepared: list[tuple[str, float, list[tuple[np.ndarray, np.ndarray | None, np.ndarray]]]] = []
    for task in tasks:
        if task.weight == 0.0:
            continue
        rows = []
        for sid in ids:
            inst = train_instances.get(sid)
            if inst is None or sid not in task.targets:
                continue
            token_ids = net.token_ids(inst.tokens)
            cog = None
            if cog_dim:
                feats = (
                    inst.features
                    if inst.features is not None
                    else np.zeros((len(inst.tokens), cog_dim))
                )
                cog = apply_normalization(stats, feats)
            rows.append((token_ids, cog, task.targets[sid]))
        if rows:
            prepared.append((task.name, task.weight, rows))
    if not prepared:
        raise ValidationError("no task has any training instances")

    counts = np.array([len(rows) for _, _, rows in prepared], dtype=float)
    cumulative = np.cumsum(counts / counts.sum())
    steps_per_epoch = int(counts.sum())
    rng = seeding.stream(seed, "mtl")
    for _ in range(epochs):
        for _ in range(steps_per_epoch):
            u_task = rng.random()
            t = int(np.searchsorted(cumulative, u_task, side="right"))
            t = min(t, len(prepared) - 1)
            name, weight, rows = prepared[t]
            u_inst = rng.random()
            token_ids, cog, targets = rows[min(int(u_inst * len(rows)), len(rows) - 1)]
            _, grads = net.forward_backward(token_ids, cog, targets, head=name)
            net.apply_gradients(grads, lr, scale=weight)

    meta = {
        "epochs": epochs,
        "lr": lr,
        "seed": seed,
        "label_mode": label_mode,
        "main_source": main_source,
        "use_features_as_input": use_features_as_input,
        "aux": [
            {"source": s.source, "n_bins": s.n_bins, "weight": s.weight}
            for s in aux_specs
        ],
    }
    return MultitaskModel(
        net=net, tasks=head_classes, manifest=dataset.manifest, stats=stats, meta=meta
    )


def evaluate_multitask(
    model: MultitaskModel,
    dataset: Dataset,
    ids: Sequence[str],
    aux_specs: Sequence[AuxTaskSpec] = (),
    freq: FrequencyLexicon | None = None,
    label_mode: str = "task",
    main_source: str | None = None,
) -> dict[str, dict]:
    """Token accuracy per head over a section, next to a majority baseline.

    For a BIO-tagged main task the accuracy over non-O gold tokens is also
    reported, since the O class dominates plain token accuracy.
    """
    if main_source is None:
        main = main_task_data(dataset, label_mode=label_mode)
    else:
        spec = AuxTaskSpec(source=main_source)
        main = TaskData(
            name="main",
            classes=tuple(f"bin{i}" for i in range(spec.n_bins)),
            targets=make_aux_targets(dataset, spec, freq=freq),
        )
    tasks = [main] + [aux_task_data(dataset, s, freq=freq) for s in aux_specs]
    results: dict[str, dict] = {}
    for task in tasks:
        if task.name not in model.tasks:
            raise ConfigError(f"model has no head named {task.name!r}")
        index = {c: i for i, c in enumerate(model.tasks[task.name])}
        correct = total = 0
        gold_all: list[int] = []
        correct_non_o = total_non_o = 0
        is_bio = task.name == "main" and dataset.task == "ner"
        predictions = model.predict_tokens(dataset, ids, head=task.name)
        for inst in dataset.select(ids):
            gold = task.targets.get(inst.sentence_id)
            pred_labels = predictions.get(inst.sentence_id)
            if gold is None or pred_labels is None:
                continue
            pred = np.array([index[p] for p in pred_labels], dtype=int)
            match = pred == gold
            correct += int(match.sum())
            total += len(gold)
            gold_all.extend(int(g) for g in gold)
            if is_bio:
                o_class = index.get("O")
                non_o = gold != o_class
                correct_non_o += int((match & non_o).sum())
                total_non_o += int(non_o.sum())
        if total == 0:
            raise ValidationError(f"no evaluable tokens for head {task.name!r}")
        majority = max(np.bincount(np.array(gold_all)).max() / total * 100.0, 0.0)
        entry = {
            "accuracy": 100.0 * correct / total,
            "majority_baseline": float(majority),
            "n_tokens": total,
        }
        if is_bio and total_non_o:
            entry["accuracy_excluding_o"] = 100.0 * correct_non_o / total_non_o
        results[task.name] = entry
    return results
