"""Core value types: sentences, entity sets and score tensors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import torch

from .errors import AnnotationError, EmptyInputError, InvalidScoreError

DTYPE = torch.float64


@dataclass(frozen=True)
class Sentence:
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise EmptyInputError("sentence has no tokens")
        for t in self.tokens:
            if not isinstance(t, str) or not t:
                raise AnnotationError(f"invalid token {t!r}")

    @property
    def n(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Entity:
    start: int
    end: int  # inclusive
    labels: frozenset
    head: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(self.labels))

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


def crosses(a: tuple[int, int], b: tuple[int, int]) -> bool:
    """True when two inclusive spans overlap without one containing the other."""
    (i, j), (k, l) = a, b
    return (i < k <= j < l) or (k < i <= l < j)


@dataclass(frozen=True)
class EntitySet:
    entities: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "entities", tuple(sorted(self.entities, key=lambda e: (e.start, -e.end)))
        )

    def __iter__(self):
        return iter(self.entities)

    def __len__(self):
        return len(self.entities)

    def spans(self) -> list[tuple[int, int]]:
        return [e.span for e in self.entities]

    def validate(self, n: int) -> "EntitySet":
        seen = set()
        for e in self.entities:
            if not (0 <= e.start <= e.end < n):
                raise AnnotationError(f"span ({e.start}, {e.end}) out of range for n={n}")
            if not e.labels:
                raise AnnotationError(f"span ({e.start}, {e.end}) has no labels")
            if e.span in seen:
                raise AnnotationError(f"duplicate span ({e.start}, {e.end})")
            if e.head is not None and not (e.start <= e.head <= e.end):
                raise AnnotationError(f"head {e.head} outside span ({e.start}, {e.end})")
            seen.add(e.span)
        spans = sorted(seen)
        for a_idx, a in enumerate(spans):
            for b in spans[a_idx + 1:]:
                if crosses(a, b):
                    raise AnnotationError(f"crossing entities {a} and {b}")
        return self

    @classmethod
    def from_tuples(cls, items: Iterable, n: Optional[int] = None) -> "EntitySet":
        ents = []
        for item in items:
            if isinstance(item, Entity):
                ents.append(item)
                continue
            start, end, *rest = item
            labels = rest[0] if rest else {1}
            head = rest[1] if len(rest) > 1 else None
            if isinstance(labels, (str, int)):
                labels = {labels}
            ents.append(Entity(start, end, frozenset(labels), head))
        es = cls(tuple(ents))
        if n is not None:
            es.validate(n)
        return es


@dataclass
class ScoreSet:
    """Span scores ``span[i, j, k]`` (k=0 latent, k>=1 entity channels) and
    arc scores ``arc[p, h]`` with row ``n`` holding the root attachment."""

    span: torch.Tensor
    arc: torch.Tensor

    def __post_init__(self):
        self.span = torch.as_tensor(self.span, dtype=DTYPE)
        self.arc = torch.as_tensor(self.arc, dtype=DTYPE)
        n = self.span.shape[0]
        if n == 0:
            raise EmptyInputError("empty score set")
        if self.span.dim() != 3 or self.span.shape[1] != n:
            raise InvalidScoreError(f"span scores must be n x n x K, got {tuple(self.span.shape)}")
        if tuple(self.arc.shape) != (n + 1, n):
            raise InvalidScoreError(f"arc scores must be (n+1) x n, got {tuple(self.arc.shape)}")
        if torch.isnan(self.span).any() or torch.isnan(self.arc).any():
            raise InvalidScoreError("NaN in scores")

    @property
    def n(self) -> int:
        return self.span.shape[0]

    @classmethod
    def zeros(cls, n: int, channels: int = 2) -> "ScoreSet":
        return cls(torch.zeros(n, n, channels, dtype=DTYPE), torch.zeros(n + 1, n, dtype=DTYPE))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, low=-2.0, high=2.0, channels: int = 2):
        return cls(
            torch.from_numpy(rng.uniform(low, high, size=(n, n, channels))),
            torch.from_numpy(rng.uniform(low, high, size=(n + 1, n))),
        )

    def detach(self) -> "ScoreSet":
        return ScoreSet(self.span.detach().clone(), self.arc.detach().clone())


@dataclass
class MaskPlan:
    """``banned[i, j]``: span crosses a gold entity. ``forced[i, j]``: 1 for gold
    spans, 0 for other admissible spans. ``gold_labels`` keeps the label set of
    each gold span for schemes with more than two channels."""

    banned: np.ndarray
    forced: np.ndarray
    gold_labels: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.banned.shape[0]

    def gold_spans(self) -> list[tuple[int, int]]:
        return sorted(self.gold_labels)


def as_entity_set(entities, n: Optional[int] = None) -> EntitySet:
    if isinstance(entities, EntitySet):
        return entities.validate(n) if n is not None else entities
    return EntitySet.from_tuples(entities or (), n)


def upper_pairs(n: int) -> Sequence[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i, n)]
