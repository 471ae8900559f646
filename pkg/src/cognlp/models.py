"""Desk-scale trainable models that consume cognitive feature vectors.

Three models cover the experiment grid:

* ``LogisticModel`` -- multinomial logistic regression over a bag of token
  indicators plus the sentence-level cognitive vector (sentence tasks).
* ``PerceptronTagger`` -- averaged perceptron with greedy left-to-right
  decoding over lexical templates plus binned cognitive features of the
  token and its neighbors (token tasks).
* ``TrunkNet`` -- token embeddings into one shared tanh layer with a softmax
  head per task and exact, finite-difference-checkable gradients (multi-task
  training lives in :mod:`cognlp.mtl`).

Training is deterministic given the seed: shuffles and initializations draw
from named streams, and appending all-zero cognitive dimensions leaves every
model's predictions bitwise unchanged relative to the baseline manifest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import seeding
from .aggregate import NormalizationStats, apply_normalization, discretize, fit_normalization
from .datasets import Dataset, Instance, task_classes
from .errors import ConfigError, ValidationError


def repair_bio(tags: Sequence[str]) -> tuple[str, ...]:
    """Make a tag sequence BIO-well-formed: illegal I-X becomes B-X."""
    repaired = []
    prev = "O"
    for tag in tags:
        if tag.startswith("I-") and prev not in (f"B-{tag[2:]}", f"I-{tag[2:]}"):
            tag = "B-" + tag[2:]
        repaired.append(tag)
        prev = tag
    return tuple(repaired)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# multinomial logistic regression


@dataclass(frozen=True)
class LogisticConfig:
    lr: float = 0.5
    epochs: int = 100
    l2: float = 0.0
    seed: int = 0
    lr_halve_every: int | None = None  # halve the rate every N passes

    def to_json(self) -> dict:
        return {
            "lr": self.lr,
            "epochs": self.epochs,
            "l2": self.l2,
            "seed": self.seed,
            "lr_halve_every": self.lr_halve_every,
        }


@dataclass(eq=False)
class LogisticModel:
    classes: tuple[str, ...]
    vocab: tuple[str, ...]  # token order defines indicator indices
    weights: np.ndarray  # (n_classes, n_vocab + n_cog)
    bias: np.ndarray
    manifest: tuple[str, ...]
    stats: NormalizationStats | None
    config: LogisticConfig
    history: tuple[float, ...] = ()

    def _vocab_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.vocab)}

    def _cog(self, inst: Instance) -> np.ndarray:
        if not self.manifest:
            return np.zeros(0)
        vec = inst.sentence_vector
        if vec is None:
            vec = np.zeros(len(self.manifest))
        return apply_normalization(self.stats, vec)

    def scores(self, inst: Instance, index: dict[str, int] | None = None) -> np.ndarray:
        index = index if index is not None else self._vocab_index()
        n_vocab = len(self.vocab)
        idxs = sorted({index[t] for t in inst.tokens if t in index})
        s = self.bias.copy()
        if idxs:
            s = s + self.weights[:, idxs].sum(axis=1)
        cog = self._cog(inst)
        if cog.size:
            s = s + self.weights[:, n_vocab:] @ cog
        return s

    def predict_proba(self, inst: Instance) -> np.ndarray:
        return _softmax(self.scores(inst))

    def predict(self, instances: Sequence[Instance]) -> list[str]:
        index = self._vocab_index()
        return [
            self.classes[int(np.argmax(self.scores(inst, index)))] for inst in instances
        ]

    def to_json(self) -> dict:
        return {
            "kind": "logistic",
            "classes": list(self.classes),
            "vocab": list(self.vocab),
            "weights": [[float(v) for v in row] for row in self.weights],
            "bias": [float(v) for v in self.bias],
            "manifest": list(self.manifest),
            "stats": self.stats.to_json() if self.stats else None,
            "config": self.config.to_json(),
            "history": [float(v) for v in self.history],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LogisticModel":
        return cls(
            classes=tuple(obj["classes"]),
            vocab=tuple(obj["vocab"]),
            weights=np.asarray(obj["weights"], float),
            bias=np.asarray(obj["bias"], float),
            manifest=tuple(obj["manifest"]),
            stats=NormalizationStats.from_json(obj["stats"]) if obj["stats"] else None,
            config=LogisticConfig(**obj["config"]),
            history=tuple(obj["history"]),
        )


def train_logistic(
    dataset: Dataset, ids: Iterable[str], config: LogisticConfig = LogisticConfig()
) -> LogisticModel:
    """Seeded SGD on the softmax objective; weights start at zero.

    Zero initialization keeps the objective's convexity useful: dimensions
    whose inputs are always zero never move, so padding a baseline dataset
    with all-zero cognitive dims cannot change predictions.
    """
    classes = task_classes(dataset.task)
    train = [
        inst
        for inst in dataset.select(ids)
        if inst.label not in dataset.train_exclude
    ]
    if not train:
        raise ValidationError("empty training set")
    class_index = {c: i for i, c in enumerate(classes)}
    vocab = tuple(sorted({t for inst in train for t in inst.tokens}))
    index = {t: i for i, t in enumerate(vocab)}
    n_vocab, n_cog = len(vocab), len(dataset.manifest)

    stats = None
    if n_cog:
        stats = fit_normalization(
            [
                inst.sentence_vector
                if inst.sentence_vector is not None
                else np.zeros(n_cog)
                for inst in train
            ]
        )

    weights = np.zeros((len(classes), n_vocab + n_cog))
    bias = np.zeros(len(classes))
    token_idxs = [
        np.array(sorted({index[t] for t in inst.tokens if t in index}), dtype=int)
        for inst in train
    ]
    cogs = [
        apply_normalization(stats, inst.sentence_vector)
        if n_cog and inst.sentence_vector is not None
        else np.zeros(n_cog)
        for inst in train
    ]
    targets = [class_index[inst.label] for inst in train]

    rng = seeding.stream(config.seed, "logistic-shuffle")
    lr = config.lr
    history = []
    for epoch in range(config.epochs):
        if config.lr_halve_every and epoch and epoch % config.lr_halve_every == 0:
            lr *= 0.5
        order = rng.permutation(len(train))
        total_ce = 0.0
        for i in order:
            # ridge step against the mean loss, so equally duplicated
            # training sets share the same minimizer
            if config.l2 > 0.0:
                weights *= 1.0 - lr * config.l2
            idxs, cog, y = token_idxs[i], cogs[i], targets[i]
            s = bias.copy()
            if idxs.size:
                s += weights[:, idxs].sum(axis=1)
            if n_cog:
                s += weights[:, n_vocab:] @ cog
            p = _softmax(s)
            total_ce -= float(np.log(max(p[y], 1e-300)))
            grad = p.copy()
            grad[y] -= 1.0
            if idxs.size:
                weights[:, idxs] -= lr * grad[:, None]
            if n_cog:
                weights[:, n_vocab:] -= lr * np.outer(grad, cog)
            bias -= lr * grad
        history.append(total_ce / len(train))
    return LogisticModel(
        classes=classes,
        vocab=vocab,
        weights=weights,
        bias=bias,
        manifest=dataset.manifest,
        stats=stats,
        config=config,
        history=tuple(history),
    )


# ---------------------------------------------------------------------------
# averaged perceptron sequence tagger


@dataclass(frozen=True)
class TaggerConfig:
    epochs: int = 5
    seed: int = 0
    n_bins: int = 10

    def to_json(self) -> dict:
        return {"epochs": self.epochs, "seed": self.seed, "n_bins": self.n_bins}


START = "<s>"
END = "</s>"


def _tagger_features(
    tokens: Sequence[str],
    i: int,
    prev_tag: str,
    manifest: Sequence[str],
    bins: np.ndarray | None,
    nonzero: np.ndarray | None,
) -> list[str]:
    token = tokens[i]
    lower = token.lower()
    feats = [
        "bias",
        f"w={token}",
        f"lc={lower}",
        f"pre3={lower[:3]}",
        f"suf3={lower[-3:]}",
        f"prev_tag={prev_tag}",
        f"w-1={tokens[i - 1].lower() if i > 0 else START}",
        f"w+1={tokens[i + 1].lower() if i + 1 < len(tokens) else END}",
    ]
    if bins is not None:
        # exact-zero feature values fire no indicator, so all-zero cognitive
        # vectors reduce to the baseline feature set
        for rel, pos in (("", i), ("-1", i - 1), ("+1", i + 1)):
            if 0 <= pos < len(tokens):
                for d, name in enumerate(manifest):
                    if nonzero[pos, d]:
                        feats.append(f"cog{rel}:{name}={bins[pos, d]}")
    return feats


@dataclass(eq=False)
class PerceptronTagger:
    tags: tuple[str, ...]
    weights: dict[str, np.ndarray]  # feature -> per-tag averaged weights
    manifest: tuple[str, ...]
    stats: NormalizationStats | None
    config: TaggerConfig

    def _instance_bins(self, inst: Instance) -> tuple[np.ndarray | None, np.ndarray | None]:
        if not self.manifest:
            return None, None
        feats = (
            inst.features
            if inst.features is not None
            else np.zeros((len(inst.tokens), len(self.manifest)))
        )
        normalized = apply_normalization(self.stats, feats)
        return discretize(normalized, self.config.n_bins), feats != 0.0

    def tag(self, inst: Instance) -> tuple[str, ...]:
        bins, nonzero = self._instance_bins(inst)
        prev = START
        out = []
        for i in range(len(inst.tokens)):
            feats = _tagger_features(inst.tokens, i, prev, self.manifest, bins, nonzero)
            scores = np.zeros(len(self.tags))
            for f in feats:
                w = self.weights.get(f)
                if w is not None:
                    scores += w
            prev = self.tags[int(np.argmax(scores))]
            out.append(prev)
        return tuple(out)

    def predict(self, instances: Sequence[Instance]) -> list[tuple[str, ...]]:
        return [repair_bio(self.tag(inst)) for inst in instances]

    def to_json(self) -> dict:
        return {
            "kind": "tagger",
            "tags": list(self.tags),
            "weights": {
                f: [float(v) for v in w] for f, w in sorted(self.weights.items())
            },
            "manifest": list(self.manifest),
            "stats": self.stats.to_json() if self.stats else None,
            "config": self.config.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PerceptronTagger":
        return cls(
            tags=tuple(obj["tags"]),
            weights={f: np.asarray(w, float) for f, w in obj["weights"].items()},
            manifest=tuple(obj["manifest"]),
            stats=NormalizationStats.from_json(obj["stats"]) if obj["stats"] else None,
            config=TaggerConfig(**obj["config"]),
        )


def train_tagger(
    dataset: Dataset, ids: Iterable[str], config: TaggerConfig = TaggerConfig()
) -> PerceptronTagger:
    """Averaged perceptron with greedy decoding and seeded epoch shuffles."""
    train = list(dataset.select(ids))
    if not train:
        raise ValidationError("empty training set")
    if not all(isinstance(inst.label, tuple) for inst in train):
        raise ConfigError("train_tagger requires a token-level dataset")
    tags = tuple(sorted({t for inst in train for t in inst.label}))
    tag_index = {t: i for i, t in enumerate(tags)}
    n_tags = len(tags)

    stats = None
    if dataset.manifest:
        stats = fit_normalization(
            [
                row
                for inst in train
                for row in (
                    inst.features
                    if inst.features is not None
                    else np.zeros((len(inst.tokens), len(dataset.manifest)))
                )
            ]
        )
    prepared = []
    for inst in train:
        if stats is not None:
            feats = (
                inst.features
                if inst.features is not None
                else np.zeros((len(inst.tokens), len(dataset.manifest)))
            )
            normalized = apply_normalization(stats, feats)
            bins = discretize(normalized, config.n_bins)
            nonzero = feats != 0.0
        else:
            bins = nonzero = None
        prepared.append((inst, bins, nonzero))

    weights: dict[str, np.ndarray] = {}
    totals: dict[str, np.ndarray] = {}
    stamps: dict[str, int] = {}
    step = 0

    def bump(feature: str, gold_i: int, pred_i: int) -> None:
        w = weights.get(feature)
        if w is None:
            w = weights[feature] = np.zeros(n_tags)
            totals[feature] = np.zeros(n_tags)
        else:
            totals[feature] += (step - stamps[feature]) * w
        stamps[feature] = step
        w[gold_i] += 1.0
        w[pred_i] -= 1.0

    rng = seeding.stream(config.seed, "tagger-shuffle")
    for _ in range(config.epochs):
        order = rng.permutation(len(prepared))
        for idx in order:
            inst, bins, nonzero = prepared[idx]
            prev = START
            for i, gold in enumerate(inst.label):
                feats = _tagger_features(
                    inst.tokens, i, prev, dataset.manifest, bins, nonzero
                )
                scores = np.zeros(n_tags)
                for f in feats:
                    w = weights.get(f)
                    if w is not None:
                        scores += w
                pred_i = int(np.argmax(scores))
                pred = tags[pred_i]
                step += 1
                if pred != gold:
                    gold_i = tag_index[gold]
                    for f in feats:
                        bump(f, gold_i, pred_i)
                prev = pred

    averaged: dict[str, np.ndarray] = {}
    denom = max(step, 1)
    for f, w in weights.items():
        total = totals[f] + (step - stamps[f]) * w
        avg = total / denom
        if np.any(avg != 0.0):
            averaged[f] = avg
    return PerceptronTagger(
        tags=tags,
        weights=averaged,
        manifest=dataset.manifest,
        stats=stats,
        config=config,
    )


# ---------------------------------------------------------------------------
# shared-trunk multi-head network


@dataclass(frozen=True)
class TrunkConfig:
    embed_dim: int = 32
    hidden_dim: int = 64
    init_scale: float = 0.1
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "init_scale": self.init_scale,
            "seed": self.seed,
        }


UNK = "<unk>"


class TrunkNet:
    """Token embeddings -> shared tanh layer -> one softmax head per task.

    Parameter groups draw from independent seed streams, so adding cognitive
    input dimensions or extra heads never perturbs the initialization of the
    groups shared with a smaller configuration.
    """

    def __init__(
        self,
        vocab: Sequence[str],
        cog_dim: int,
        heads: Mapping[str, int],
        config: TrunkConfig = TrunkConfig(),
    ):
        self.config = config
        self.vocab = (UNK,) + tuple(vocab)
        self.token_index = {t: i for i, t in enumerate(self.vocab)}
        self.cog_dim = cog_dim
        e, h, scale = config.embed_dim, config.hidden_dim, config.init_scale
        self.embed = seeding.stream(config.seed, "embed").normal(
            0.0, scale, size=(len(self.vocab), e)
        )
        w_tok = seeding.stream(config.seed, "trunk").normal(0.0, scale, size=(e, h))
        if cog_dim:
            w_cog = seeding.stream(config.seed, "trunk-cog").normal(
                0.0, scale, size=(cog_dim, h)
            )
            self.w1 = np.concatenate([w_tok, w_cog], axis=0)
        else:
            self.w1 = w_tok
        self.b1 = np.zeros(h)
        self.heads: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for name in heads:
            k = heads[name]
            w = seeding.stream(config.seed, "head", name).normal(0.0, scale, size=(h, k))
            self.heads[name] = (w, np.zeros(k))

    @property
    def n_vocab(self) -> int:
        return len(self.vocab)

    def parameter_count(self) -> int:
        e, h = self.config.embed_dim, self.config.hidden_dim
        total = self.n_vocab * e + (e + self.cog_dim) * h + h
        for w, b in self.heads.values():
            total += w.size + b.size
        return total

    def token_ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.token_index.get(t, 0) for t in tokens], dtype=int)

    def _input(self, ids: np.ndarray, cog: np.ndarray | None) -> np.ndarray:
        x = self.embed[ids]
        if self.cog_dim:
            if cog is None:
                cog = np.zeros((len(ids), self.cog_dim))
            x = np.concatenate([x, cog], axis=1)
        return x

    def logits(self, ids: np.ndarray, cog: np.ndarray | None, head: str) -> np.ndarray:
        if head not in self.heads:
            raise ConfigError(f"no head named {head!r}")
        hidden = np.tanh(self._input(ids, cog) @ self.w1 + self.b1)
        w, b = self.heads[head]
        return hidden @ w + b

    def loss(
        self, ids: np.ndarray, cog: np.ndarray | None, targets: np.ndarray, head: str
    ) -> float:
        logits = self.logits(ids, cog, head)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=1))
        return float(np.mean(logz - shifted[np.arange(len(targets)), targets]))

    def forward_backward(
        self, ids: np.ndarray, cog: np.ndarray | None, targets: np.ndarray, head: str
    ) -> tuple[float, dict]:
        """Mean cross-entropy of the active head plus exact gradients.

        Inactive heads appear in the gradient dict with zero arrays.
        """
        if head not in self.heads:
            raise ConfigError(f"no head named {head!r}")
        targets = np.asarray(targets, dtype=int)
        if cog is not None and self.cog_dim and cog.shape != (len(ids), self.cog_dim):
            raise ValidationError(
                f"cognitive input shape {cog.shape} != ({len(ids)}, {self.cog_dim})"
            )
        x = self._input(ids, cog)
        hidden = np.tanh(x @ self.w1 + self.b1)
        w, b = self.heads[head]
        logits = hidden @ w + b
        probs = _softmax(logits)
        n = len(targets)
        loss = float(
            -np.mean(np.log(np.maximum(probs[np.arange(n), targets], 1e-300)))
        )
        dlogits = probs.copy()
        dlogits[np.arange(n), targets] -= 1.0
        dlogits /= n
        d_head_w = hidden.T @ dlogits
        d_head_b = dlogits.sum(axis=0)
        d_hidden = dlogits @ w.T
        d_z = d_hidden * (1.0 - hidden * hidden)
        d_w1 = x.T @ d_z
        d_b1 = d_z.sum(axis=0)
        d_x = d_z @ self.w1.T
        d_embed = np.zeros_like(self.embed)
        np.add.at(d_embed, ids, d_x[:, : self.config.embed_dim])
        head_grads = {
            name: (
                (d_head_w, d_head_b)
                if name == head
                else (np.zeros_like(hw), np.zeros_like(hb))
            )
            for name, (hw, hb) in self.heads.items()
        }
        return loss, {
            "embed": d_embed,
            "w1": d_w1,
            "b1": d_b1,
            "heads": head_grads,
        }

    def apply_gradients(self, grads: dict, lr: float, scale: float = 1.0) -> None:
        step = lr * scale
        self.embed -= step * grads["embed"]
        self.w1 -= step * grads["w1"]
        self.b1 -= step * grads["b1"]
        for name, (dw, db) in grads["heads"].items():
            w, b = self.heads[name]
            w -= step * dw
            b -= step * db

    def predict_classes(
        self, ids: np.ndarray, cog: np.ndarray | None, head: str
    ) -> np.ndarray:
        return np.argmax(self.logits(ids, cog, head), axis=1)

    def to_json(self) -> dict:
        return {
            "kind": "trunknet",
            "vocab": list(self.vocab[1:]),
            "cog_dim": self.cog_dim,
            "config": self.config.to_json(),
            "embed": self.embed.tolist(),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "heads": {
                name: {"w": w.tolist(), "b": b.tolist()}
                for name, (w, b) in sorted(self.heads.items())
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrunkNet":
        config = TrunkConfig(**obj["config"])
        heads_sizes = {name: len(h["b"]) for name, h in obj["heads"].items()}
        net = cls(obj["vocab"], obj["cog_dim"], heads_sizes, config)
        net.embed = np.asarray(obj["embed"], float)
        net.w1 = np.asarray(obj["w1"], float)
        net.b1 = np.asarray(obj["b1"], float)
        net.heads = {
            name: (np.asarray(h["w"], float), np.asarray(h["b"], float))
            for name, h in obj["heads"].items()
        }
        return net


def predict(model, dataset: Dataset, ids: Iterable[str]):
    """Deterministic predictions for a dataset section; manifest must match."""
    if tuple(model.manifest) != tuple(dataset.manifest):
        raise ConfigError(
            f"model manifest {model.manifest} != dataset manifest {dataset.manifest}"
        )
    instances = dataset.select(ids)
    return model.predict(instances)
