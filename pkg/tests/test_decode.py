import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from lexcrf.chart import inside_eisner_satta
from lexcrf.decode import (
    ATT, CONT, Constituent, LexTree, choose_labels, label_entities, viterbi_batch, viterbi_cyk,
    viterbi_lexicalized,
)
from lexcrf.errors import LexCRFError, ParameterError
from lexcrf.oracle import oracle_quantities
from lexcrf.types import ScoreSet, crosses


def test_single_token_leaf():
    scores = ScoreSet.zeros(1)
    scores.span[0, 0, 1] = 1.0
    tree = viterbi_lexicalized(scores)
    assert tree.constituents == [Constituent(0, 0, 1, 0, ATT)]
    assert tree.arcs == {(1, 0)}
    assert tree.score == pytest.approx(1.0)


def test_zero_scores_tie_break():
    tree = viterbi_lexicalized(ScoreSet.zeros(3))
    assert tree.score == 0.0
    # lowest split point first, then the lowest head
    assert tree.spans() == {(0, 0), (1, 1), (2, 2), (1, 2), (0, 2)}
    assert {(c.i, c.j): c.head for c in tree.constituents} == {(0, 0): 0, (1, 1): 1, (2, 2): 2, (1, 2): 1, (0, 2): 0}
    assert tree.arcs == {(3, 0), (0, 1), (1, 2)}
    assert viterbi_lexicalized(ScoreSet.zeros(3)).constituents == tree.constituents


def test_zero_scores_cyk():
    tree = viterbi_cyk(ScoreSet.zeros(3))
    assert tree.score == 0.0
    assert tree.spans() == {(0, 0), (1, 1), (2, 2), (1, 2), (0, 2)}
    tree.validate()


def test_label_is_span_argmax():
    scores = ScoreSet.zeros(2)
    scores.span[0, 1, 1] = 2.0
    scores.span[1, 1, 1] = 0.5
    tree = viterbi_lexicalized(scores)
    labels = {(c.i, c.j): c.label for c in tree.constituents}
    assert labels == {(0, 0): 0, (1, 1): 1, (0, 1): 1}
    assert tree.score == pytest.approx(2.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_viterbi_matches_oracle_and_recomputes(n, seed):
    scores = ScoreSet.random(n, np.random.default_rng(seed))
    tree = viterbi_lexicalized(scores).validate()
    best, _ = inside_eisner_satta(scores, semiring="max", track=False)
    assert float(best) == pytest.approx(oracle_quantities(scores, kl=False)["max"], abs=1e-9)
    assert tree.score == float(best)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_predicted_entities_never_cross(n, seed):
    scores = ScoreSet.random(n, np.random.default_rng(seed))
    for tree in (viterbi_lexicalized(scores), viterbi_cyk(scores)):
        tree.validate()
        ents = [(c.i, c.j) for c in tree.entity_constituents()]
        assert not any(crosses(a, b) for a in ents for b in ents)


def test_large_decode_penalty_removes_shared_heads():
    rng = np.random.default_rng(5)
    shared_before = 0
    for _ in range(20):
        scores = ScoreSet.random(5, rng)
        scores.span[..., 1] += 1.5   # make entities plentiful
        for c, check in ((0.0, False), (50.0, True)):
            tree = viterbi_lexicalized(scores, decode_penalty=c).validate()
            heads = [e.head for e in tree.entity_constituents()]
            if check:
                assert len(heads) == len(set(heads))
            else:
                shared_before += len(heads) != len(set(heads))
    assert shared_before > 0


def test_negative_decode_penalty_rejected():
    with pytest.raises(ParameterError):
        viterbi_batch(torch.zeros(1, 2, 2, 2, dtype=torch.float64),
                      torch.zeros(1, 3, 2, dtype=torch.float64), decode_penalty=-1.0)


@pytest.mark.parametrize("scores,expected", [
    ((1.0, -1.0, -1.0), [0]),
    ((-1.0, -1.0), [0]),
    ((2.0, 1.0, -3.0), [0, 1]),
    ((-3.0, -1.0, -2.0), [1]),
])
def test_choose_labels(scores, expected):
    assert choose_labels(scores) == expected


def test_choose_labels_null_label():
    assert choose_labels((2.0, 1.0, -1.0), null_label=True) == []
    assert choose_labels((0.5, 1.0, 0.7), null_label=True) == [0, 1]
    assert choose_labels((-1.0, -3.0, -2.0), null_label=True) == []
    assert choose_labels((-3.0, -2.0, -2.5), null_label=True) == [0]


def test_label_entities_uses_heads():
    tree = LexTree(2, [Constituent(0, 0, 0, 0, CONT), Constituent(1, 1, 1, 1, ATT), Constituent(0, 1, 1, 0, ATT)],
                   {(2, 0), (0, 1)})
    table = {(0, 1, 0): (1.0, 2.0), (1, 1, 1): (-1.0, -0.5)}
    pred = label_entities(tree, lambda i, j, h: torch.tensor(table[(i, j, h)]), labels=["A", "B"])
    got = {(e.start, e.end, e.head): e.labels for e in pred.entities}
    assert got == {(0, 1, 0): frozenset({"A", "B"}), (1, 1, 1): frozenset({"B"})}


def test_validate_rejects_broken_trees():
    with pytest.raises(LexCRFError):
        LexTree(2, [Constituent(0, 0, 0, 0), Constituent(1, 1, 0, 1)], {(2, 0), (0, 1)}).validate()
    bad_heads = LexTree(2, [Constituent(0, 0, 0, 0), Constituent(1, 1, 0, 1), Constituent(0, 1, 0, 1)],
                        {(2, 0), (0, 1)})
    with pytest.raises(LexCRFError):
        bad_heads.validate()


def test_batched_decode_matches_single():
    rng = np.random.default_rng(11)
    sets = [ScoreSet.random(4, rng) for _ in range(3)]
    span = torch.stack([s.span for s in sets])
    arc = torch.stack([s.arc for s in sets])
    for s, tree in zip(sets, viterbi_batch(span, arc)):
        single = viterbi_lexicalized(s)
        assert tree.constituents == single.constituents and tree.score == single.score


def test_decode_sentence_on_trained_model(small_checkpoint, small_corpus):
    from lexcrf.decode import decode_sentence, predict

    model = small_checkpoint.model()
    test = small_corpus[2]
    preds = predict(model, [r.tokens for r in test[:10]])
    for rec, pred in zip(test[:10], preds):
        assert pred == decode_sentence(rec.sentence(), model)
        spans = [e.span for e in pred.entities]
        assert not any(crosses(a, b) for a in spans for b in spans)
        assert all(e.labels and e.start <= e.head <= e.end for e in pred.entities)
    with pytest.raises(ParameterError):
        predict(model, [[]])
