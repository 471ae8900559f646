"""Word-level EEG band features locked to reading fixations.

Each fixation carries 8 frequency-band vectors of 105 electrode amplitudes.
Word features are taken either from the first fixation on the word (``ffd``
window) or as a duration-weighted mean over all of its fixations (``trt``
window), then optionally reduced across electrodes or bands.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .ingest import BAND_ORDER, BANDS, N_ELECTRODES, EegFixationRecord, FixationEvent
from .ingest import Corpus, FixationLog
from .gaze import MIN_FIXATION_MS, filter_fixations
from .tables import FeatureTable

logger = logging.getLogger(__name__)

WINDOW_MODES = ("ffd", "trt")
REDUCTIONS = ("electrode_mean", "band_mean", "none")

COMBINED_BAND_ORDER = ("EEG_t", "EEG_a", "EEG_b", "EEG_g")


def band_of_frequency(hz: float) -> str | None:
    """Name of the band whose closed interval contains ``hz``, if any.

    Frequencies in the gaps between bands (e.g. 6.25 Hz) and outside the
    covered range map to None. 40.0 Hz sits on the published gamma1/gamma2
    edge and resolves to gamma1.
    """
    if hz <= 0:
        raise ValueError(f"frequency must be positive, got {hz}")
    for name, lo, hi in BANDS:
        if lo <= hz <= hi:
            return name
    return None


def _band_matrix(record: EegFixationRecord) -> np.ndarray:
    return np.array([record.bands[band] for band in BAND_ORDER], dtype=float)


def word_eeg(
    events: Sequence[FixationEvent],
    records: Iterable[EegFixationRecord],
    mode: str = "ffd",
    weighted: bool = True,
    strict: bool = False,
) -> dict[int, np.ndarray]:
    """Per-word (8, 105) band matrices for one (subject, sentence) trial.

    ``events`` must already be duration-filtered and seq-ordered. ``ffd``
    selects the matrix of the word's first fixation; ``trt`` averages over
    all of the word's fixations weighted by duration (set ``weighted=False``
    for a plain mean). Words never fixated are absent from the result. A
    fixated word whose record is missing raises under strict mode and is
    skipped with a warning otherwise.
    """
    if mode not in WINDOW_MODES:
        raise ConfigError(f"unknown window mode {mode!r}; expected {WINDOW_MODES}")
    by_seq: dict[int, EegFixationRecord] = {}
    if events:
        subject, sid = events[0].subject, events[0].sentence_id
        for r in records:
            if r.subject == subject and r.sentence_id == sid:
                by_seq[r.seq] = r
    per_word: dict[int, list[FixationEvent]] = {}
    for e in events:
        per_word.setdefault(e.word_index, []).append(e)

    out: dict[int, np.ndarray] = {}
    for w in sorted(per_word):
        fixations = per_word[w]
        if mode == "ffd":
            first = fixations[0]
            record = by_seq.get(first.seq)
            if record is None:
                if strict:
                    raise ValidationError(
                        f"no EEG record for first fixation seq={first.seq} on word {w}"
                    )
                logger.warning("skipping word %d: no EEG record for seq %d", w, first.seq)
                continue
            out[w] = _band_matrix(record)
            continue
        total = np.zeros((len(BAND_ORDER), N_ELECTRODES))
        weight_sum = 0.0
        for e in fixations:
            record = by_seq.get(e.seq)
            if record is None:
                if strict:
                    raise ValidationError(
                        f"no EEG record for fixation seq={e.seq} on word {w}"
                    )
                logger.warning("skipping fixation seq %d on word %d: no EEG record", e.seq, w)
                continue
            weight = e.duration_ms if weighted else 1.0
            total += weight * _band_matrix(record)
            weight_sum += weight
        if weight_sum > 0:
            out[w] = total / weight_sum
    return out


def reduce_eeg(matrix: np.ndarray, reduction: str) -> np.ndarray:
    """Collapse a (8, 105) band matrix to the configured feature vector.

    ``electrode_mean`` averages electrodes per band (8 values, band order),
    ``band_mean`` averages bands per electrode (105 values), and ``none``
    concatenates band-major (840 values).
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (len(BAND_ORDER), N_ELECTRODES):
        raise ValidationError(
            f"expected ({len(BAND_ORDER)}, {N_ELECTRODES}) matrix, got {matrix.shape}"
        )
    if reduction == "electrode_mean":
        return matrix.mean(axis=1)
    if reduction == "band_mean":
        return matrix.mean(axis=0)
    if reduction == "none":
        return matrix.reshape(-1)
    raise ConfigError(f"unknown reduction {reduction!r}; expected {REDUCTIONS}")


def reduction_dims(reduction: str) -> tuple[str, ...]:
    if reduction == "electrode_mean":
        return BAND_ORDER
    if reduction == "band_mean":
        return tuple(f"e{i:03d}" for i in range(N_ELECTRODES))
    if reduction == "none":
        return tuple(
            f"{band}:e{i:03d}" for band in BAND_ORDER for i in range(N_ELECTRODES)
        )
    raise ConfigError(f"unknown reduction {reduction!r}; expected {REDUCTIONS}")


@dataclass(frozen=True)
class CombinedBands:
    """Per-band-pair means: theta, alpha, beta, gamma."""

    eeg_t: float
    eeg_a: float
    eeg_b: float
    eeg_g: float

    def as_array(self) -> np.ndarray:
        return np.array([self.eeg_t, self.eeg_a, self.eeg_b, self.eeg_g])


def combine_bands(eight: Sequence[float]) -> CombinedBands:
    """Average the two sub-bands of each of theta/alpha/beta/gamma."""
    values = np.asarray(eight, dtype=float)
    if values.shape != (8,):
        raise ValidationError(f"expected 8 band values, got shape {values.shape}")
    pairs = values.reshape(4, 2).mean(axis=1)
    return CombinedBands(*pairs)


def eeg_table(
    corpus: Corpus,
    log: FixationLog,
    records: Sequence[EegFixationRecord],
    mode: str = "ffd",
    reduction: str = "electrode_mean",
    weighted: bool = True,
    min_duration_ms: float = MIN_FIXATION_MS,
    strict: bool = False,
) -> FeatureTable:
    """Per-(subject, sentence, word) reduced EEG features over a corpus."""
    dims = reduction_dims(reduction)
    by_trial: dict[tuple[str, str], list[EegFixationRecord]] = {}
    for r in records:
        by_trial.setdefault((r.subject, r.sentence_id), []).append(r)
    rows: dict[tuple, np.ndarray] = {}
    for (subject, sid), group in log.groups.items():
        if sid not in corpus.by_id:
            raise ValidationError(f"fixations reference unknown sentence {sid!r}")
        kept = filter_fixations(group, min_duration_ms)
        matrices = word_eeg(
            kept, by_trial.get((subject, sid), ()), mode, weighted=weighted, strict=strict
        )
        for w, matrix in matrices.items():
            rows[(subject, sid, w)] = reduce_eeg(matrix, reduction)
    return FeatureTable(dims=dims, rows=rows, subject_keyed=True)


def write_eeg_features(
    table: FeatureTable, mode: str, reduction: str, header_extra: dict | None = None
) -> str:
    header = {
        "_header": {
            "kind": "eeg_features",
            "dims": list(table.dims),
            "mode": mode,
            "reduction": reduction,
        }
    }
    if header_extra:
        header["_header"].update(header_extra)
    lines = [json.dumps(header, ensure_ascii=False, separators=(",", ":"))]
    for (subject, sid, w), vec in table.rows.items():
        rec = {
            "subject": subject,
            "sentence_id": sid,
            "word_index": w,
            "mode": mode,
            "reduction": reduction,
            "values": [float(v) for v in vec],
        }
        lines.append(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def read_eeg_features(lines: Iterable[str]) -> tuple[FeatureTable, str, str]:
    dims: tuple[str, ...] | None = None
    mode = reduction = None
    rows: dict[tuple, np.ndarray] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
        if "_header" in obj:
            hdr = obj["_header"]
            if hdr.get("kind") == "eeg_features":
                dims = tuple(hdr["dims"])
                mode = hdr.get("mode")
                reduction = hdr.get("reduction")
            continue
        if dims is None:
            raise ParseError("missing header line with dims", line=lineno)
        key = (obj["subject"], obj["sentence_id"], int(obj["word_index"]))
        rows[key] = np.asarray(obj["values"], dtype=float)
    if dims is None:
        raise ParseError("missing header line with dims")
    return FeatureTable(dims=dims, rows=rows, subject_keyed=True), mode, reduction
