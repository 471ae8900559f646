"""Keyed feature tables passed between extraction, aggregation, and assembly.

A table maps ``(subject, sentence_id, word_index)`` keys (subject level) or
``(sentence_id, word_index)`` keys (token level, after subject aggregation)
to fixed-width float vectors whose dimensions are named in ``dims``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ParseError, ValidationError

_JSON_SEPARATORS = (",", ":")


@dataclass
class FeatureTable:
    dims: tuple[str, ...]
    rows: dict[tuple, np.ndarray] = field(default_factory=dict)
    subject_keyed: bool = True

    def __post_init__(self):
        width = len(self.dims)
        for key, vec in self.rows.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (width,):
                raise ValidationError(
                    f"row {key} has {vec.shape} values, expected ({width},)"
                )
            self.rows[key] = vec

    def vector(self, key: tuple) -> np.ndarray | None:
        return self.rows.get(key)

    def dim_index(self, name: str) -> int:
        try:
            return self.dims.index(name)
        except ValueError:
            raise ValidationError(f"no dimension named {name!r}") from None

    def subjects(self) -> tuple[str, ...]:
        if not self.subject_keyed:
            return ()
        return tuple(sorted({key[0] for key in self.rows}))

    def __len__(self) -> int:
        return len(self.rows)


def write_token_table(table: FeatureTable, header_extra: dict | None = None) -> str:
    """Serialize a token-level table: header line with dims, then one row per line."""
    if table.subject_keyed:
        raise ValidationError("expected a token-level table")
    header = {"_header": {"kind": "features", "dims": list(table.dims)}}
    if header_extra:
        header["_header"].update(header_extra)
    lines = [json.dumps(header, ensure_ascii=False, separators=_JSON_SEPARATORS)]
    for (sid, w), vec in table.rows.items():
        lines.append(
            json.dumps(
                {"sentence_id": sid, "word_index": w, "values": [float(v) for v in vec]},
                ensure_ascii=False,
                separators=_JSON_SEPARATORS,
            )
        )
    return "\n".join(lines) + "\n"


def read_token_table(lines: Iterable[str]) -> FeatureTable:
    dims: tuple[str, ...] | None = None
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
            if hdr.get("kind") == "features" and "dims" in hdr:
                dims = tuple(hdr["dims"])
            continue
        if dims is None:
            raise ParseError("missing header line with dims", line=lineno)
        key = (obj["sentence_id"], int(obj["word_index"]))
        rows[key] = np.asarray(obj["values"], dtype=float)
    if dims is None:
        raise ParseError("missing header line with dims")
    return FeatureTable(dims=dims, rows=rows, subject_keyed=False)


def concat_tables(tables: Mapping[str, FeatureTable]) -> FeatureTable:
    """Join token-level tables on their keys; dims are prefixed ``source/name``.

    Keys form the union; a table missing a key contributes zeros for its block.
    """
    dims: list[str] = []
    for source, table in tables.items():
        if table.subject_keyed:
            raise ValidationError(f"table {source!r} is not token-level")
        dims.extend(f"{source}/{d}" for d in table.dims)
    keys: list[tuple] = []
    seen = set()
    for table in tables.values():
        for key in table.rows:
            if key not in seen:
                seen.add(key)
                keys.append(key)
    rows: dict[tuple, np.ndarray] = {}
    for key in sorted(keys):
        parts = []
        for table in tables.values():
            vec = table.rows.get(key)
            parts.append(vec if vec is not None else np.zeros(len(table.dims)))
        rows[key] = np.concatenate(parts) if parts else np.zeros(0)
    return FeatureTable(dims=tuple(dims), rows=rows, subject_keyed=False)
