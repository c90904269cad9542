import math

import numpy as np
import pytest

from lexcrf.chart import build_mask
from lexcrf.errors import ParameterError
from lexcrf.oracle import MAX_N, catalan, enumerate_lex_trees, oracle_quantities
from lexcrf.types import ScoreSet


@pytest.mark.parametrize("n,count", [(1, 1), (2, 2), (3, 8)])
def test_skeleton_count_examples(n, count):
    assert len(enumerate_lex_trees(n)) == count


@pytest.mark.parametrize("n", range(1, 7))
def test_skeleton_count_closed_form(n):
    assert len(enumerate_lex_trees(n)) == catalan(n - 1) * 2 ** (n - 1)


def test_enumeration_bound():
    with pytest.raises(ParameterError):
        enumerate_lex_trees(MAX_N + 1)
    with pytest.raises(ParameterError):
        enumerate_lex_trees(0)


def test_skeletons_are_distinct_lexicalized_trees():
    trees = enumerate_lex_trees(4)
    keys = {(frozenset(t.constituents), frozenset(t.arcs)) for t in trees}
    assert len(keys) == len(trees)
    for t in trees:
        assert len(t.constituents) == 2 * 4 - 1
        assert sorted(ch for _, ch in t.arcs) == list(range(4))


def test_zero_scores_free_label_factor():
    # 8 skeletons, each of the 5 constituents has 2 free labels
    q = oracle_quantities(ScoreSet.zeros(3), kl=False)
    assert q["logZ"] == pytest.approx(math.log(8 * 2 ** 5))


def test_kl_zero_at_c0_and_masked_below_free():
    rng = np.random.default_rng(4)
    for _ in range(10):
        scores = ScoreSet.random(4, rng)
        plan = build_mask([(0, 1, {0})], 4)
        q = oracle_quantities(scores, plan, (0.0, plan.gold_spans()), kl=True)
        assert q["kl"] == pytest.approx(0.0, abs=1e-12)
        assert q["logZ"] <= oracle_quantities(scores, kl=False)["logZ"]
