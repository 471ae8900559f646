"""Line-delimited interchange formats: corpora, fixation logs, EEG band records.

Three record kinds, one JSON object per line:

* ``corpus.jsonl``    -- ``{"id", "tokens", "labels"}``
* ``fixations.jsonl`` -- ``{"subject", "sentence_id", "seq", "word_index", "duration_ms"}``
* ``eeg.jsonl``       -- ``{"subject", "sentence_id", "seq", "bands": {band: [105 values]}}``

Field order inside a record is irrelevant. Unknown fields are rejected under
strict mode and ignored otherwise. Lines whose object carries a ``"_header"``
key are provenance headers written by the CLI and are skipped by every parser.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

TASKS = ("ner", "relclass", "sentiment2", "sentiment3")

RELATION_TYPES = (
    "award",
    "employer",
    "education",
    "founder",
    "visited",
    "wife",
    "political-affiliation",
    "nationality",
    "job-title",
    "birth-place",
    "death-place",
)

SENTIMENT2_LABELS = ("neg", "pos")
SENTIMENT3_LABELS = ("neg", "neu", "pos")

#: Closed frequency intervals in Hz, ordered by lower bound. The published
#: band edges make 40.0 Hz fall in both gamma intervals; lookups resolve it
#: to the lower band.
BANDS = (
    ("theta1", 4.0, 6.0),
    ("theta2", 6.5, 8.0),
    ("alpha1", 8.5, 10.0),
    ("alpha2", 10.5, 13.0),
    ("beta1", 13.5, 18.0),
    ("beta2", 18.5, 30.0),
    ("gamma1", 30.5, 40.0),
    ("gamma2", 40.0, 49.5),
)
BAND_ORDER = tuple(name for name, _, _ in BANDS)
N_ELECTRODES = 105

_JSON_SEPARATORS = (",", ":")


@dataclass(frozen=True)
class Sentence:
    """One tokenized sentence with its task labels.

    ``labels`` holds per-token BIO tags for NER, one or more relation types
    for relation classification, and a single sentiment label (as a 1-tuple)
    for the sentiment tasks.
    """

    id: str
    tokens: tuple[str, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    task: str
    sentences: tuple[Sentence, ...]

    @cached_property
    def by_id(self) -> dict[str, Sentence]:
        return {s.id: s for s in self.sentences}

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)


@dataclass(frozen=True)
class FixationEvent:
    subject: str
    sentence_id: str
    seq: int
    word_index: int
    duration_ms: float
    onset_ms: float | None = None


@dataclass(frozen=True)
class EegFixationRecord:
    """Band amplitudes (microvolts) recorded during one fixation."""

    subject: str
    sentence_id: str
    seq: int
    bands: Mapping[str, tuple[float, ...]]

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.subject, self.sentence_id, self.seq)


@dataclass(frozen=True)
class FixationLog:
    """Fixation events grouped by (subject, sentence_id), ordered by seq."""

    groups: Mapping[tuple[str, str], tuple[FixationEvent, ...]]

    @cached_property
    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({subject for subject, _ in self.groups}))

    def group(self, subject: str, sentence_id: str) -> tuple[FixationEvent, ...]:
        return self.groups.get((subject, sentence_id), ())

    def events(self) -> Iterator[FixationEvent]:
        for group in self.groups.values():
            yield from group

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups.values())


def check_bio(tags: Sequence[str]) -> None:
    """Raise ValidationError unless ``tags`` form a well-formed BIO sequence."""
    prev = "O"
    for tag in tags:
        if tag == "O":
            prev = tag
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise ValidationError(f"tag {tag!r} is not O, B-X, or I-X")
        if tag[0] == "I" and prev not in (f"B-{tag[2:]}", f"I-{tag[2:]}"):
            raise ValidationError(f"{tag} does not continue a {tag[2:]} span")
        prev = tag


def _iter_records(lines: Iterable[str]) -> Iterator[tuple[int, dict]]:
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("record is not a JSON object", line=lineno)
        if "_header" in obj:
            continue
        yield lineno, obj


def _check_fields(
    obj: dict, required: Sequence[str], optional: Sequence[str], lineno: int, strict: bool
) -> None:
    for name in required:
        if name not in obj:
            raise ParseError(f"missing field {name!r}", line=lineno)
    if strict:
        unknown = set(obj) - set(required) - set(optional)
        if unknown:
            raise ValidationError(
                f"unknown fields {sorted(unknown)} (strict mode)", line=lineno
            )


def _as_str(obj: dict, name: str, lineno: int) -> str:
    value = obj[name]
    if not isinstance(value, str) or not value:
        raise ParseError(f"field {name!r} must be a non-empty string", line=lineno)
    return value


def _as_int(obj: dict, name: str, lineno: int) -> int:
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"field {name!r} must be an integer", line=lineno)
    return value


def _as_number(value, name: str, lineno: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"field {name!r} must be a number", line=lineno)
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"field {name!r} must be finite", line=lineno)
    return value


def _validate_labels(task: str, tokens: Sequence[str], labels, lineno: int) -> tuple[str, ...]:
    if task == "ner":
        if not isinstance(labels, list) or not all(isinstance(t, str) for t in labels):
            raise ParseError("NER labels must be a list of tags", line=lineno)
        if len(labels) != len(tokens):
            raise ValidationError(
                f"{len(labels)} tags for {len(tokens)} tokens", line=lineno
            )
        try:
            check_bio(labels)
        except ValidationError as exc:
            raise ValidationError(str(exc), line=lineno) from None
        return tuple(labels)
    if task == "relclass":
        if not isinstance(labels, list) or not all(isinstance(t, str) for t in labels):
            raise ParseError("relation labels must be a list", line=lineno)
        if not labels:
            raise ValidationError("at least one relation label required", line=lineno)
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate relation labels", line=lineno)
        for label in labels:
            if label not in RELATION_TYPES:
                raise ValidationError(f"unknown relation type {label!r}", line=lineno)
        return tuple(labels)
    allowed = SENTIMENT2_LABELS if task == "sentiment2" else SENTIMENT3_LABELS
    if not isinstance(labels, str):
        raise ParseError("sentiment label must be a string", line=lineno)
    if labels not in allowed:
        raise ValidationError(
            f"label {labels!r} not in {allowed} for task {task}", line=lineno
        )
    return (labels,)


def parse_corpus(lines: Iterable[str], task: str, strict: bool = False) -> Corpus:
    """Parse ``corpus.jsonl`` content into a validated Corpus."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    sentences: list[Sentence] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_records(lines):
        _check_fields(obj, ("id", "tokens", "labels"), (), lineno, strict)
        sid = _as_str(obj, "id", lineno)
        tokens = obj["tokens"]
        if (
            not isinstance(tokens, list)
            or not tokens
            or not all(isinstance(t, str) and t for t in tokens)
        ):
            raise ParseError("field 'tokens' must be a non-empty list of strings", line=lineno)
        if sid in seen:
            raise ValidationError(
                f"duplicate sentence id {sid!r} (first seen on line {seen[sid]})",
                line=lineno,
            )
        seen[sid] = lineno
        labels = _validate_labels(task, tokens, obj["labels"], lineno)
        sentences.append(Sentence(id=sid, tokens=tuple(tokens), labels=labels))
    return Corpus(task=task, sentences=tuple(sentences))


def parse_fixations(
    lines: Iterable[str], corpus: Corpus | None = None, strict: bool = False
) -> FixationLog:
    """Parse ``fixations.jsonl`` into groups keyed by (subject, sentence_id).

    Within a group, ``seq`` must be strictly increasing in file order; when a
    corpus is supplied, sentence ids and word indices are cross-checked.
    """
    required = ("subject", "sentence_id", "seq", "word_index", "duration_ms")
    groups: dict[tuple[str, str], list[FixationEvent]] = {}
    last_seq: dict[tuple[str, str], int] = {}
    for lineno, obj in _iter_records(lines):
        _check_fields(obj, required, ("onset_ms",), lineno, strict)
        subject = _as_str(obj, "subject", lineno)
        sid = _as_str(obj, "sentence_id", lineno)
        seq = _as_int(obj, "seq", lineno)
        word_index = _as_int(obj, "word_index", lineno)
        duration = _as_number(obj["duration_ms"], "duration_ms", lineno)
        if duration <= 0:
            raise ValidationError("duration_ms must be positive", line=lineno)
        if seq < 0 or word_index < 0:
            raise ValidationError("seq and word_index must be non-negative", line=lineno)
        onset = None
        if obj.get("onset_ms") is not None:
            onset = _as_number(obj["onset_ms"], "onset_ms", lineno)
        if corpus is not None:
            sentence = corpus.by_id.get(sid)
            if sentence is None:
                raise ValidationError(f"unknown sentence id {sid!r}", line=lineno)
            if word_index >= len(sentence):
                raise ValidationError(
                    f"word_index {word_index} out of range for sentence {sid!r} "
                    f"({len(sentence)} tokens)",
                    line=lineno,
                )
        key = (subject, sid)
        if key in last_seq and seq <= last_seq[key]:
            raise ValidationError(
                f"seq {seq} not increasing within (subject={subject!r}, sentence={sid!r})",
                line=lineno,
            )
        last_seq[key] = seq
        groups.setdefault(key, []).append(
            FixationEvent(subject, sid, seq, word_index, duration, onset)
        )
    return FixationLog(groups={k: tuple(v) for k, v in groups.items()})


def parse_eeg(
    lines: Iterable[str], fixations: FixationLog | None = None, strict: bool = False
) -> tuple[EegFixationRecord, ...]:
    """Parse ``eeg.jsonl``; each record must carry all 8 bands x 105 values.

    When a fixation log is supplied, every record must join to exactly one
    fixation by (subject, sentence_id, seq).
    """
    known_keys: set[tuple[str, str, int]] | None = None
    if fixations is not None:
        known_keys = {(e.subject, e.sentence_id, e.seq) for e in fixations.events()}
    records: list[EegFixationRecord] = []
    seen: set[tuple[str, str, int]] = set()
    for lineno, obj in _iter_records(lines):
        _check_fields(obj, ("subject", "sentence_id", "seq", "bands"), (), lineno, strict)
        subject = _as_str(obj, "subject", lineno)
        sid = _as_str(obj, "sentence_id", lineno)
        seq = _as_int(obj, "seq", lineno)
        bands_raw = obj["bands"]
        if not isinstance(bands_raw, dict):
            raise ParseError("field 'bands' must be an object", line=lineno)
        missing = [b for b in BAND_ORDER if b not in bands_raw]
        if missing:
            raise ValidationError(f"missing bands {missing}", line=lineno)
        extra = set(bands_raw) - set(BAND_ORDER)
        if extra:
            raise ValidationError(f"unknown bands {sorted(extra)}", line=lineno)
        bands: dict[str, tuple[float, ...]] = {}
        for band in BAND_ORDER:
            values = bands_raw[band]
            if not isinstance(values, list) or len(values) != N_ELECTRODES:
                raise ValidationError(
                    f"band {band!r} must have exactly {N_ELECTRODES} values",
                    line=lineno,
                )
            try:
                arr = np.asarray(values, dtype=float)
            except (TypeError, ValueError):
                raise ParseError(
                    f"band {band!r} must contain only numbers", line=lineno
                ) from None
            if not np.isfinite(arr).all():
                raise ValidationError(f"band {band!r} has non-finite values", line=lineno)
            bands[band] = tuple(float(v) for v in arr)
        key = (subject, sid, seq)
        if key in seen:
            raise ValidationError(f"duplicate EEG record for {key}", line=lineno)
        seen.add(key)
        if known_keys is not None and key not in known_keys:
            raise ValidationError(
                f"dangling EEG record {key}: no matching fixation", line=lineno
            )
        records.append(EegFixationRecord(subject, sid, seq, bands))
    return tuple(records)


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=_JSON_SEPARATORS)


def serialize_corpus(corpus: Corpus) -> str:
    """Render a corpus in canonical jsonl form (one sentence per line)."""
    lines = []
    for sentence in corpus.sentences:
        labels: object = list(sentence.labels)
        if corpus.task in ("sentiment2", "sentiment3"):
            labels = sentence.labels[0]
        lines.append(
            _dump({"id": sentence.id, "tokens": list(sentence.tokens), "labels": labels})
        )
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_fixations(log: FixationLog) -> str:
    lines = []
    for group in log.groups.values():
        for e in group:
            rec = {
                "subject": e.subject,
                "sentence_id": e.sentence_id,
                "seq": e.seq,
                "word_index": e.word_index,
                "duration_ms": e.duration_ms,
            }
            if e.onset_ms is not None:
                rec["onset_ms"] = e.onset_ms
            lines.append(_dump(rec))
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_eeg(records: Sequence[EegFixationRecord]) -> str:
    lines = []
    for r in records:
        lines.append(
            _dump(
                {
                    "subject": r.subject,
                    "sentence_id": r.sentence_id,
                    "seq": r.seq,
                    "bands": {band: list(r.bands[band]) for band in BAND_ORDER},
                }
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def missing_trials(corpus: Corpus, log: FixationLog) -> dict[str, tuple[str, ...]]:
    """Sentences each subject never fixated (skipped trials), per subject."""
    out: dict[str, tuple[str, ...]] = {}
    for subject in log.subjects:
        absent = tuple(
            s.id for s in corpus.sentences if (subject, s.id) not in log.groups
        )
        if absent:
            out[subject] = absent
    return out


def validation_report(
    corpus: Corpus,
    log: FixationLog | None = None,
    records: Sequence[EegFixationRecord] | None = None,
) -> dict:
    """Summary counts plus flagged gaps; inputs are assumed already validated."""
    report: dict = {
        "task": corpus.task,
        "sentences": len(corpus),
        "tokens": sum(len(s) for s in corpus.sentences),
    }
    if log is not None:
        report["subjects"] = list(log.subjects)
        report["fixations"] = len(log)
        report["missing_trials"] = {
            subject: list(sids) for subject, sids in missing_trials(corpus, log).items()
        }
    if records is not None:
        report["eeg_records"] = len(records)
        if log is not None:
            with_eeg = {(r.subject, r.sentence_id, r.seq) for r in records}
            report["fixations_without_eeg"] = sum(
                1
                for e in log.events()
                if (e.subject, e.sentence_id, e.seq) not in with_eeg
            )
    return report
