"""Task dataset assembly and cross-validation splitting.

An assembled dataset pairs tokenized sentences with task labels and,
optionally, per-token cognitive feature vectors concatenated from one or
more token-level feature tables. Relation-classification sentences with
several labels are expanded to one instance per label but always stay in
one fold together.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import seeding
from .aggregate import NormalizationStats, apply_normalization, discretize, fit_normalization
from .errors import ConfigError, ParseError, ValidationError
from .ingest import Corpus, RELATION_TYPES, SENTIMENT2_LABELS, SENTIMENT3_LABELS
from .tables import FeatureTable

TOKEN_LEVEL_TASKS = ("ner",)
SENTENCE_LEVEL_TASKS = ("relclass", "sentiment2", "sentiment3")

_JSON_SEPARATORS = (",", ":")


@dataclass(frozen=True, eq=False)
class Instance:
    sentence_id: str
    tokens: tuple[str, ...]
    # per-token tag tuple for token-level tasks, a single label otherwise
    label: str | tuple[str, ...]
    features: np.ndarray | None = None  # (n_tokens, n_dims)
    sentence_vector: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    task: str
    manifest: tuple[str, ...]
    instances: tuple[Instance, ...]
    # labels kept in the data but excluded from training (e.g. neutral
    # sentences when binary sentiment drops them from training only)
    train_exclude: frozenset[str] = frozenset()

    def sentence_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for inst in self.instances:
            seen.setdefault(inst.sentence_id, None)
        return tuple(seen)

    def select(self, ids: Iterable[str]) -> tuple[Instance, ...]:
        wanted = set(ids)
        return tuple(i for i in self.instances if i.sentence_id in wanted)


def task_classes(task: str) -> tuple[str, ...]:
    """Fixed, serialization-stable class order for sentence-level tasks."""
    if task == "relclass":
        return tuple(sorted(RELATION_TYPES))
    if task == "sentiment2":
        return SENTIMENT2_LABELS
    if task == "sentiment3":
        return SENTIMENT3_LABELS
    raise ConfigError(f"task {task!r} has no fixed sentence-level class set")


_NEIGHBOR_BASE = ("FFD", "TRT", "NFIX")


def assemble(
    corpus: Corpus,
    tables: Mapping[str, FeatureTable] | None = None,
    *,
    strict: bool = False,
    add_gaze_neighbors: bool = False,
    as_binary_sentiment: bool = False,
    binary_policy: str = "drop-all",
) -> Dataset:
    """Build a task dataset, concatenating feature tables in declared order.

    Omitting ``tables`` yields the baseline dataset (empty manifest).
    Sentence-level tasks additionally get a sentence vector, the mean over
    token vectors. ``as_binary_sentiment`` converts a ternary corpus to the
    binary task; ``binary_policy`` is ``drop-all`` (neutral sentences removed
    everywhere, the default) or ``drop-train-only`` (kept, but excluded from
    training).
    """
    tables = dict(tables or {})
    task = corpus.task
    if as_binary_sentiment:
        if corpus.task != "sentiment3":
            raise ConfigError("as_binary_sentiment requires a ternary sentiment corpus")
        if binary_policy not in ("drop-all", "drop-train-only"):
            raise ConfigError(f"unknown binary_policy {binary_policy!r}")
        task = "sentiment2"

    manifest: list[str] = []
    for source, table in tables.items():
        if table.subject_keyed:
            raise ValidationError(f"table {source!r} must be token-level (aggregated)")
        manifest.extend(f"{source}/{d}" for d in table.dims)
    neighbor_dims: list[tuple[str, int, int]] = []  # (dim name, gaze col, offset)
    if add_gaze_neighbors:
        gaze = tables.get("gaze")
        if gaze is None:
            raise ConfigError("add_gaze_neighbors requires a 'gaze' table")
        for offset, tag in ((-1, "prev"), (1, "next")):
            for name in _NEIGHBOR_BASE:
                neighbor_dims.append((f"gaze/{tag}_{name}", gaze.dim_index(name), offset))
        manifest.extend(d for d, _, _ in neighbor_dims)

    width = len(manifest)
    instances: list[Instance] = []
    train_exclude: frozenset[str] = frozenset()

    for sentence in corpus.sentences:
        label_for_sentence = sentence.labels[0] if task.startswith("sentiment") else None
        if as_binary_sentiment and label_for_sentence == "neu":
            if binary_policy == "drop-all":
                continue
            train_exclude = frozenset({"neu"})

        features = None
        sentence_vector = None
        if width:
            rows = []
            for w in range(len(sentence)):
                parts = []
                for source, table in tables.items():
                    vec = table.rows.get((sentence.id, w))
                    if vec is None:
                        if strict:
                            raise ValidationError(
                                f"no {source!r} features for ({sentence.id!r}, {w})"
                            )
                        vec = np.zeros(len(table.dims))
                    parts.append(vec)
                rows.append(np.concatenate(parts) if parts else np.zeros(0))
            base = np.stack(rows)
            if neighbor_dims:
                gaze = tables["gaze"]
                extra = np.zeros((len(sentence), len(neighbor_dims)))
                for col, (_, gcol, offset) in enumerate(neighbor_dims):
                    for w in range(len(sentence)):
                        u = w + offset
                        if 0 <= u < len(sentence):
                            vec = gaze.rows.get((sentence.id, u))
                            if vec is not None:
                                extra[w, col] = vec[gcol]
                base = np.concatenate([base, extra], axis=1)
            features = base
            if task in SENTENCE_LEVEL_TASKS:
                sentence_vector = features.mean(axis=0)

        if task == "ner":
            instances.append(
                Instance(sentence.id, sentence.tokens, sentence.labels, features, None)
            )
        elif task == "relclass":
            for label in sentence.labels:
                instances.append(
                    Instance(sentence.id, sentence.tokens, label, features, sentence_vector)
                )
        else:
            instances.append(
                Instance(
                    sentence.id,
                    sentence.tokens,
                    label_for_sentence,
                    features,
                    sentence_vector,
                )
            )

    dataset = Dataset(
        task=task,
        manifest=tuple(manifest),
        instances=tuple(instances),
        train_exclude=train_exclude,
    )
    if task == "sentiment2" and binary_policy == "drop-all":
        assert all(i.label != "neu" for i in dataset.instances)
    return dataset


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic k-fold assignment of sentence ids.

    Fold i's test section is fold i itself; the development section is the
    next ``round(k * dev_ratio)`` folds cyclically; training is the rest.
    Test sections are therefore disjoint and exhaustive across folds.
    """

    k: int
    ratios: tuple[float, float, float]
    seed: int
    assignment: Mapping[str, int]

    @property
    def n_dev_folds(self) -> int:
        return round(self.k * self.ratios[1])

    def _fold_ids(self, folds: set[int]) -> tuple[str, ...]:
        return tuple(sid for sid, f in self.assignment.items() if f in folds)

    def test_ids(self, fold: int) -> tuple[str, ...]:
        return self._fold_ids({fold % self.k})

    def dev_ids(self, fold: int) -> tuple[str, ...]:
        dev = {(fold + 1 + j) % self.k for j in range(self.n_dev_folds)}
        return self._fold_ids(dev)

    def train_ids(self, fold: int) -> tuple[str, ...]:
        used = {fold % self.k} | {
            (fold + 1 + j) % self.k for j in range(self.n_dev_folds)
        }
        return self._fold_ids(set(range(self.k)) - used)

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "ratios": list(self.ratios),
            "seed": self.seed,
            "assignment": dict(self.assignment),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FoldPlan":
        return cls(
            k=int(obj["k"]),
            ratios=tuple(obj["ratios"]),
            seed=int(obj["seed"]),
            assignment=dict(obj["assignment"]),
        )


def kfold_split(
    dataset: Dataset | Sequence[str],
    k: int,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> FoldPlan:
    """Shuffle sentence ids by seed and partition into k near-equal folds.

    All instances of a sentence share its fold, so expanded relation
    instances never leak across sections. The test share is one fold, so
    ``ratios[2]`` must equal 1/k.
    """
    ids = dataset.sentence_ids() if isinstance(dataset, Dataset) else tuple(dataset)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if len(ids) < k:
        raise ConfigError(f"{len(ids)} sentences cannot fill {k} folds")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios {ratios} do not sum to 1")
    if abs(ratios[2] - 1.0 / k) > 1e-9:
        raise ConfigError(f"test ratio {ratios[2]} must equal 1/k = {1.0 / k}")
    n_dev = round(k * ratios[1])
    if k - 1 - n_dev < 1:
        raise ConfigError("ratios leave no training fold")
    order = list(ids)
    rng = seeding.stream(seed, "kfold")
    perm = rng.permutation(len(order))
    shuffled = [order[i] for i in perm]
    base, extra = divmod(len(shuffled), k)
    assignment: dict[str, int] = {}
    pos = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        for sid in shuffled[pos : pos + size]:
            assignment[sid] = fold
        pos += size
    return FoldPlan(k=k, ratios=tuple(ratios), seed=seed, assignment=assignment)


def emit_conll(
    dataset: Dataset,
    ids: Iterable[str] | None = None,
    n_bins: int = 10,
    stats: NormalizationStats | None = None,
) -> str:
    """Render a token-level dataset as CoNLL-style columns.

    One token per line: token, one discretized column per feature dimension,
    then the gold tag; sentences are separated by blank lines. Binned values
    use min-max stats fit on the emitted section unless ``stats`` is given.
    """
    if dataset.task not in TOKEN_LEVEL_TASKS:
        raise ConfigError(f"task {dataset.task!r} is not token-level")
    instances = dataset.select(ids) if ids is not None else dataset.instances
    has_features = bool(dataset.manifest)
    if has_features and stats is None:
        stats = fit_normalization(
            [row for inst in instances for row in inst.features]
        )
    blocks = []
    for inst in instances:
        lines = []
        for w, token in enumerate(inst.tokens):
            columns = [token]
            if has_features:
                bins = discretize(apply_normalization(stats, inst.features[w]), n_bins)
                columns.extend(str(int(b)) for b in np.atleast_1d(bins))
            columns.append(inst.label[w])
            lines.append("\t".join(columns))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def parse_conll(text: str) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Recover (tokens, tags) per sentence from CoNLL-style text."""
    sentences = []
    for block in text.strip("\n").split("\n\n"):
        if not block.strip():
            continue
        tokens, tags = [], []
        for line in block.splitlines():
            columns = line.split("\t")
            tokens.append(columns[0])
            tags.append(columns[-1])
        sentences.append((tuple(tokens), tuple(tags)))
    return sentences


def write_dataset(dataset: Dataset, header_extra: dict | None = None) -> str:
    header = {
        "_header": {
            "kind": "dataset",
            "task": dataset.task,
            "manifest": list(dataset.manifest),
            "train_exclude": sorted(dataset.train_exclude),
        }
    }
    if header_extra:
        header["_header"].update(header_extra)
    lines = [json.dumps(header, ensure_ascii=False, separators=_JSON_SEPARATORS)]
    for inst in dataset.instances:
        rec: dict = {"id": inst.sentence_id, "tokens": list(inst.tokens)}
        if isinstance(inst.label, tuple):
            rec["labels"] = list(inst.label)
        else:
            rec["label"] = inst.label
        if inst.features is not None:
            rec["features"] = [[float(v) for v in row] for row in inst.features]
        if inst.sentence_vector is not None:
            rec["sentence_vector"] = [float(v) for v in inst.sentence_vector]
        lines.append(json.dumps(rec, ensure_ascii=False, separators=_JSON_SEPARATORS))
    return "\n".join(lines) + "\n"


def read_dataset(lines: Iterable[str]) -> Dataset:
    header = None
    instances: list[Instance] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if "_header" in obj:
            if obj["_header"].get("kind") == "dataset":
                header = obj["_header"]
            continue
        if header is None:
            raise ParseError("missing dataset header line", line=lineno)
        label = tuple(obj["labels"]) if "labels" in obj else obj["label"]
        features = (
            np.asarray(obj["features"], dtype=float) if "features" in obj else None
        )
        sent_vec = (
            np.asarray(obj["sentence_vector"], dtype=float)
            if "sentence_vector" in obj
            else None
        )
        instances.append(
            Instance(obj["id"], tuple(obj["tokens"]), label, features, sent_vec)
        )
    if header is None:
        raise ParseError("missing dataset header line")
    return Dataset(
        task=header["task"],
        manifest=tuple(header["manifest"]),
        instances=tuple(instances),
        train_exclude=frozenset(header.get("train_exclude", [])),
    )
