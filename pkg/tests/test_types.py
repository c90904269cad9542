import numpy as np
import pytest
import torch

from lexcrf.errors import AnnotationError, EmptyInputError, InvalidScoreError
from lexcrf.types import Entity, EntitySet, ScoreSet, Sentence, crosses


def test_sentence_validation():
    assert Sentence(("a", "b")).n == 2
    with pytest.raises(EmptyInputError):
        Sentence(())
    with pytest.raises(Exception):
        Sentence(("a", ""))


def test_crosses():
    assert crosses((0, 2), (1, 3))
    assert not crosses((0, 3), (1, 2))
    assert not crosses((0, 1), (2, 3))


@pytest.mark.parametrize("items", [
    [(0, 2, {0}), (1, 3, {0})],          # crossing
    [(0, 1, {0}), (0, 1, {1})],          # duplicate span
    [(0, 5, {0})],                       # out of range
    [(1, 0, {0})],                       # end before start
    [(0, 1, set())],                     # empty labels
])
def test_entity_set_rejects(items):
    with pytest.raises((AnnotationError, ValueError)):
        EntitySet.from_tuples(items, 4)


def test_entity_head_must_lie_in_span():
    with pytest.raises((AnnotationError, ValueError)):
        EntitySet((Entity(0, 1, frozenset({0}), 3),)).validate(4)


def test_scoreset_shapes_and_nan():
    s = ScoreSet.random(3, np.random.default_rng(0))
    assert s.span.shape == (3, 3, 2) and s.arc.shape == (4, 3)
    with pytest.raises(InvalidScoreError):
        ScoreSet(torch.full((2, 2, 2), float("nan"), dtype=torch.float64), torch.zeros(3, 2, dtype=torch.float64))
