"""Metrics, paired permutation significance testing, and report generation.

The permutation test is paired approximate randomization at the sentence
level: each replicate swaps both systems' outputs for a random subset of
sentences and recomputes the absolute score difference. Replicate r draws
its swap mask from a generator seeded by (seed, r), so p-values do not
depend on evaluation order and replicates can run in parallel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ValidationError

logger = logging.getLogger(__name__)

CONFIG_ORDER = ("baseline", "gaze", "EEG", "gaze+EEG")


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    accuracy: float | None = None
    support: Mapping[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": dict(self.support),
        }
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        return out


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def extract_entities(tags: Sequence[str]) -> set[tuple[int, int, str]]:
    """(start, end_exclusive, type) spans from a BIO sequence.

    A stray I-X (after O or a different type) is read as starting a new
    span, matching the repair convention applied to predictions.
    """
    spans = []
    start = None
    etype = None
    for i, tag in enumerate(tags):
        if tag == "O":
            if start is not None:
                spans.append((start, i, etype))
                start = None
            continue
        prefix, name = tag[0], tag[2:]
        if prefix == "B" or (start is not None and name != etype) or start is None:
            if start is not None:
                spans.append((start, i, etype))
            start, etype = i, name
    if start is not None:
        spans.append((start, len(tags), etype))
    return set(spans)


def entity_prf1(
    gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]
) -> Metrics:
    """Exact span+type match precision/recall/F1 in percent.

    Precision is 0 by convention when nothing is predicted; partially
    overlapping spans count as wrong.
    """
    if len(gold) != len(pred):
        raise ValidationError(f"{len(gold)} gold vs {len(pred)} predicted sentences")
    n_gold = n_pred = n_correct = 0
    n_tokens = n_token_match = 0
    for g_tags, p_tags in zip(gold, pred):
        if len(g_tags) != len(p_tags):
            raise ValidationError("tag sequence length mismatch")
        g_spans = extract_entities(g_tags)
        p_spans = extract_entities(p_tags)
        n_gold += len(g_spans)
        n_pred += len(p_spans)
        n_correct += len(g_spans & p_spans)
        n_tokens += len(g_tags)
        n_token_match += sum(1 for a, b in zip(g_tags, p_tags) if a == b)
    p = 100.0 * n_correct / n_pred if n_pred else 0.0
    r = 100.0 * n_correct / n_gold if n_gold else 0.0
    return Metrics(
        precision=p,
        recall=r,
        f1=_f1(p, r),
        accuracy=100.0 * n_token_match / n_tokens if n_tokens else None,
        support={"gold": n_gold, "predicted": n_pred, "correct": n_correct},
    )


def accuracy(gold: Sequence, pred: Sequence) -> float:
    """Percent of matching positions."""
    if len(gold) != len(pred):
        raise ValidationError(f"{len(gold)} gold vs {len(pred)} predictions")
    if not gold:
        raise ValidationError("cannot score an empty collection")
    return 100.0 * sum(1 for g, p in zip(gold, pred) if g == p) / len(gold)


def class_prf1(gold: Sequence[str], pred: Sequence[str]) -> Metrics:
    """Macro-averaged P/R/F1 over the classes present in the gold labels."""
    if len(gold) != len(pred):
        raise ValidationError(f"{len(gold)} gold vs {len(pred)} predictions")
    if not gold:
        raise ValidationError("cannot score an empty collection")
    classes = sorted(set(gold))
    ps, rs, fs = [], [], []
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        n_pred = sum(1 for p in pred if p == c)
        n_gold = sum(1 for g in gold if g == c)
        p = 100.0 * tp / n_pred if n_pred else 0.0
        r = 100.0 * tp / n_gold if n_gold else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(_f1(p, r))
    return Metrics(
        precision=float(np.mean(ps)),
        recall=float(np.mean(rs)),
        f1=float(np.mean(fs)),
        accuracy=accuracy(gold, pred),
        support={c: sum(1 for g in gold if g == c) for c in classes},
    )


def _flatten(units: Sequence) -> list:
    flat: list = []
    for unit in units:
        if isinstance(unit, (tuple, list)):
            flat.extend(unit)
        else:
            flat.append(unit)
    return flat


def entity_f1_scorer(gold: Sequence, pred: Sequence) -> float:
    return entity_prf1(gold, pred).f1


def accuracy_scorer(gold: Sequence, pred: Sequence) -> float:
    return accuracy(_flatten(gold), _flatten(pred))


def macro_f1_scorer(gold: Sequence, pred: Sequence) -> float:
    return class_prf1(_flatten(gold), _flatten(pred)).f1


SCORERS: dict[str, Callable] = {
    "entity_f1": entity_f1_scorer,
    "accuracy": accuracy_scorer,
    "macro_f1": macro_f1_scorer,
}


def _replicate_mask(seed: int, replicate: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, replicate]))
    return rng.random(n) < 0.5


def permutation_test(
    preds_a: Sequence,
    preds_b: Sequence,
    gold: Sequence,
    scorer: Callable | str,
    n_rounds: int = 10000,
    seed: int = 0,
) -> float:
    """Paired approximate randomization p-value with add-one smoothing.

    Elements of the prediction sequences are sentence units (a tag sequence,
    a label, or a tuple of labels); each replicate swaps whole units, so all
    tokens or sub-instances of a sentence move together.
    """
    if len(preds_a) != len(preds_b) or len(preds_a) != len(gold):
        raise ValidationError("misaligned prediction/gold collections")
    if not preds_a:
        raise ValidationError("nothing to compare")
    if isinstance(scorer, str):
        if scorer not in SCORERS:
            raise ConfigError(f"unknown scorer {scorer!r}; expected {sorted(SCORERS)}")
        scorer = SCORERS[scorer]
    n = len(gold)
    observed = abs(scorer(gold, preds_a) - scorer(gold, preds_b))
    exceed = 0
    for r in range(n_rounds):
        mask = _replicate_mask(seed, r, n)
        swapped_a = [preds_b[i] if mask[i] else preds_a[i] for i in range(n)]
        swapped_b = [preds_a[i] if mask[i] else preds_b[i] for i in range(n)]
        delta = abs(scorer(gold, swapped_a) - scorer(gold, swapped_b))
        if delta >= observed:
            exceed += 1
    return (1 + exceed) / (1 + n_rounds)


def permutation_test_scores(
    scores_a: np.ndarray, scores_b: np.ndarray, n_rounds: int = 10000, seed: int = 0
) -> float:
    """Same test for scorers that are means of per-sentence scores.

    Swapping a sentence's outputs swaps its per-sentence score, so the
    replicate statistic reduces to a mean over masked vectors; masks are
    drawn exactly as in :func:`permutation_test`.
    """
    scores_a = np.asarray(scores_a, dtype=float)
    scores_b = np.asarray(scores_b, dtype=float)
    if scores_a.shape != scores_b.shape or scores_a.ndim != 1:
        raise ValidationError("score vectors must be 1-D and aligned")
    if scores_a.size == 0:
        raise ValidationError("nothing to compare")
    n = scores_a.size
    observed = abs(scores_a.mean() - scores_b.mean())
    exceed = 0
    for r in range(n_rounds):
        mask = _replicate_mask(seed, r, n)
        mean_a = np.where(mask, scores_b, scores_a).mean()
        mean_b = np.where(mask, scores_a, scores_b).mean()
        if abs(mean_a - mean_b) >= observed:
            exceed += 1
    return (1 + exceed) / (1 + n_rounds)


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    alpha: float
    n_hypotheses: int

    @property
    def threshold(self) -> float:
        return self.alpha / self.n_hypotheses

    @property
    def stars(self) -> str:
        if self.p_value < self.threshold:
            return "**"
        if self.p_value < self.alpha:
            return "*"
        return ""

    def to_json(self) -> dict:
        return {
            "p_value": self.p_value,
            "alpha": self.alpha,
            "n_hypotheses": self.n_hypotheses,
            "threshold": self.threshold,
            "stars": self.stars,
        }


def bonferroni(p: float, alpha: float = 0.01, n_hypotheses: int = 1) -> SignificanceResult:
    """Two-level star scheme under the corrected threshold alpha / n."""
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if n_hypotheses < 1:
        raise ConfigError(f"n_hypotheses must be >= 1, got {n_hypotheses}")
    return SignificanceResult(p_value=p, alpha=alpha, n_hypotheses=n_hypotheses)


@dataclass(frozen=True)
class RunMetrics:
    task: str
    config: str  # baseline | gaze | EEG | gaze+EEG
    fold: int
    metrics: Metrics


@dataclass
class MetricsReport:
    cells: dict[tuple[str, str], dict]
    significance: dict[tuple[str, str], SignificanceResult] = field(default_factory=dict)

    def to_json(self) -> dict:
        tasks: dict[str, dict] = {}
        for (task, config), cell in sorted(self.cells.items()):
            entry = dict(cell)
            sig = self.significance.get((task, config))
            if sig is not None:
                entry["significance"] = sig.to_json()
            tasks.setdefault(task, {})[config] = entry
        return {"tasks": tasks}

    def render_text(self) -> str:
        tasks = sorted({task for task, _ in self.cells})
        header = f"{'':<10}" + "".join(f"{task:>26}" for task in tasks)
        columns = f"{'':<10}" + "".join(f"{'P':>10}{'R':>7}{'F1':>9}" for _ in tasks)
        lines = [header, columns]
        configs = [
            c for c in CONFIG_ORDER if any((t, c) in self.cells for t in tasks)
        ]
        configs += sorted(
            {c for _, c in self.cells} - set(CONFIG_ORDER)
        )  # non-standard row names follow the canonical four
        for config in configs:
            row = f"{config:<10}"
            for task in tasks:
                cell = self.cells.get((task, config))
                if cell is None:
                    row += f"{'-':>10}{'-':>7}{'-':>9}"
                    continue
                stars = ""
                sig = self.significance.get((task, config))
                if sig is not None:
                    stars = sig.stars
                f1_text = f"{cell['f1']:.1f}{stars}"
                row += f"{cell['precision']:>10.1f}{cell['recall']:>7.1f}{f1_text:>9}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def report(
    runs: Sequence[RunMetrics],
    significance: Mapping[tuple[str, str], SignificanceResult] | None = None,
) -> MetricsReport:
    """Mean metrics across folds per (task, config) cell with stars attached."""
    if not runs:
        raise ValidationError("report needs at least one run")
    grouped: dict[tuple[str, str], list[Metrics]] = {}
    for run in runs:
        grouped.setdefault((run.task, run.config), []).append(run.metrics)
    fold_counts = {len(v) for v in grouped.values()}
    if len(fold_counts) > 1:
        logger.warning("inconsistent fold counts across cells: %s", sorted(fold_counts))
    cells: dict[tuple[str, str], dict] = {}
    for key, metrics_list in grouped.items():
        accs = [m.accuracy for m in metrics_list if m.accuracy is not None]
        cells[key] = {
            "precision": float(np.mean([m.precision for m in metrics_list])),
            "recall": float(np.mean([m.recall for m in metrics_list])),
            "f1": float(np.mean([m.f1 for m in metrics_list])),
            "n_folds": len(metrics_list),
        }
        if accs:
            cells[key]["accuracy"] = float(np.mean(accs))
    return MetricsReport(cells=cells, significance=dict(significance or {}))
