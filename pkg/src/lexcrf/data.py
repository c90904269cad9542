"""JSONL corpus format.

One record per line::

    {"tokens": ["the", "bank"], "entities": [{"start": 0, "end": 1, "labels": ["ORG"], "head": 1}]}

``end`` is inclusive; ``head`` is optional.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import AnnotationError, ParseError, ValidationError
from .types import Entity, EntitySet, Sentence


@dataclass
class CorpusRecord:
    tokens: list
    entities: list = field(default_factory=list)  # list[Entity] with string labels

    @property
    def n(self) -> int:
        return len(self.tokens)

    def sentence(self) -> Sentence:
        return Sentence(tuple(self.tokens))

    def entity_set(self) -> EntitySet:
        return EntitySet(tuple(self.entities))

    def to_json(self) -> dict:
        ents = []
        for e in sorted(self.entities, key=lambda e: (e.start, -e.end)):
            item = {"start": e.start, "end": e.end, "labels": sorted(e.labels)}
            if e.head is not None:
                item["head"] = e.head
            ents.append(item)
        return {"tokens": list(self.tokens), "entities": ents}

    @classmethod
    def from_json(cls, obj, line: Optional[int] = None, inventory=None) -> "CorpusRecord":
        if not isinstance(obj, dict) or "tokens" not in obj:
            raise ValidationError("record must be an object with 'tokens'", line)
        tokens = obj["tokens"]
        if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) and t for t in tokens):
            raise ValidationError("'tokens' must be a non-empty list of non-empty strings", line)
        ents = []
        for item in obj.get("entities", []):
            try:
                start, end = item["start"], item["end"]
                labels = item["labels"]
            except (KeyError, TypeError):
                raise ValidationError("entity needs 'start', 'end' and 'labels'", line) from None
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in (start, end)):
                raise ValidationError("entity 'start'/'end' must be integers", line)
            if isinstance(labels, str):
                labels = [labels]
            if not isinstance(labels, list) or not labels or not all(isinstance(l, str) for l in labels):
                raise ValidationError("entity 'labels' must be a non-empty list of strings", line)
            if inventory is not None:
                unknown = set(labels) - set(inventory)
                if unknown:
                    raise ValidationError(f"labels {sorted(unknown)} not in inventory", line)
            head = item.get("head")
            if head is not None and not isinstance(head, int):
                raise ValidationError("entity 'head' must be an integer", line)
            if end < start:
                raise ValidationError(f"entity end {end} < start {start}", line)
            ents.append(Entity(start, end, frozenset(labels), head))
        rec = cls(list(tokens), ents)
        try:
            rec.entity_set().validate(rec.n)
        except AnnotationError as exc:
            raise ValidationError(str(exc), line) from None
        return rec


def load_jsonl(path, inventory=None) -> list[CorpusRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON at column {exc.colno}: {exc.msg}", lineno) from None
            records.append(CorpusRecord.from_json(obj, lineno, inventory))
    return records


def dump_jsonl(records: Iterable[CorpusRecord], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


def label_inventory(records: Iterable[CorpusRecord]) -> list[str]:
    labels = set()
    for rec in records:
        for e in rec.entities:
            labels |= set(e.labels)
    return sorted(labels)
