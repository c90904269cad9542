import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from lexcrf.chart import (
    allowed_channels, build_mask, inside_cyk, inside_eisner_satta, masked_log_numerator,
    penalty_pattern, span_weight,
)
from lexcrf.errors import AnnotationError, EmptyInputError, InvalidScoreError, ParameterError
from lexcrf.oracle import oracle_cyk_logz, oracle_quantities
from lexcrf.types import ScoreSet

# oracle values for ScoreSet.random(4, default_rng(1234)), gold {(1,2): {0}, (0,2): {1}}
FIXTURE_LOGZ_FREE = 13.765293863710868
FIXTURE_MAX = 11.223133328402142
FIXTURE_LOGZ_MASKED = 3.555345394619962
FIXTURE_LOGZ_MASKED_PENALIZED = 3.2119475320005333
FIXTURE_CYK_FREE = 9.439392994234098


def fixture():
    scores = ScoreSet.random(4, np.random.default_rng(1234))
    return scores, build_mask([(1, 2, {0}), (0, 2, {1})], 4)


def banned_set(plan):
    return {(int(i), int(j)) for i, j in zip(*np.nonzero(plan.banned))}


def test_build_mask_examples():
    assert banned_set(build_mask([(1, 3, {0})], 5)) == {(0, 1), (0, 2), (2, 4), (3, 4)}
    assert banned_set(build_mask([], 3)) == set()
    assert banned_set(build_mask([(0, 1, {0})], 2)) == set()


def test_build_mask_forces_gold():
    plan = build_mask([(1, 3, {0})], 5)
    assert plan.forced[1, 3] == 1 and plan.forced.sum() == 1
    assert plan.gold_spans() == [(1, 3)]


def test_build_mask_rejects_crossing():
    with pytest.raises(AnnotationError):
        build_mask([(0, 2, {0}), (1, 3, {0})], 4)


def test_span_weight_examples():
    scores = ScoreSet.zeros(3)
    scores.span[0, 1] = torch.tensor([0.3, -1.2], dtype=torch.float64)
    assert span_weight(scores, 2, 2) == pytest.approx(math.log(2))
    plan = build_mask([(0, 1, {0})], 3)
    assert span_weight(scores, 0, 1, plan) == pytest.approx(-1.2)
    plan = build_mask([(0, 1, {0})], 3)
    assert span_weight(scores, 1, 2, plan) == float("-inf")


def test_inside_small_examples():
    value, _ = inside_eisner_satta(ScoreSet.zeros(1))
    assert float(value) == pytest.approx(math.log(2))  # one tree, leaf label free
    value, _ = inside_eisner_satta(ScoreSet.zeros(1), build_mask([], 1))
    assert float(value) == 0.0
    # all labels fixed (no entities): 2 bracketings x 4 head assignments
    value, _ = inside_eisner_satta(ScoreSet.zeros(3), build_mask([], 3))
    assert float(value) == pytest.approx(math.log(8), abs=1e-12)
    # free labels multiply each of the 5 constituents by 2
    value, _ = inside_eisner_satta(ScoreSet.zeros(3))
    assert float(value) == pytest.approx(math.log(256), abs=1e-12)
    value, _ = inside_eisner_satta(ScoreSet.zeros(3), semiring="max", track=False)
    assert float(value) == 0.0


def test_masked_numerator_examples():
    assert float(masked_log_numerator(ScoreSet.zeros(2), build_mask([(0, 1, {0})], 2))) == pytest.approx(math.log(2))
    assert float(masked_log_numerator(ScoreSet.zeros(3), build_mask([(0, 2, {0})], 3))) == pytest.approx(math.log(8))


def test_cyk_examples():
    value, _ = inside_cyk(ScoreSet.zeros(3), build_mask([], 3))
    assert float(value) == pytest.approx(math.log(2))
    scores = ScoreSet.random(1, np.random.default_rng(0))
    value, _ = inside_cyk(scores)
    assert float(value) == pytest.approx(span_weight(scores, 0, 0))
    scores = ScoreSet.random(4, np.random.default_rng(5))
    unlabeled = scores.span.clone()
    free, _ = inside_cyk(scores)
    assert float(free) == pytest.approx(oracle_cyk_logz(scores), abs=1e-10)
    assert torch.equal(unlabeled, scores.span)


def test_frozen_fixture_values():
    scores, plan = fixture()
    free, _ = inside_eisner_satta(scores)
    masked, _ = inside_eisner_satta(scores, plan)
    pen, _ = inside_eisner_satta(scores, plan, penalty=(0.4, plan.gold_spans()))
    best, _ = inside_eisner_satta(scores, semiring="max", track=False)
    cyk, _ = inside_cyk(scores)
    assert float(free) == pytest.approx(FIXTURE_LOGZ_FREE, abs=1e-10)
    assert float(masked) == pytest.approx(FIXTURE_LOGZ_MASKED, abs=1e-10)
    assert float(pen) == pytest.approx(FIXTURE_LOGZ_MASKED_PENALIZED, abs=1e-10)
    assert float(best) == pytest.approx(FIXTURE_MAX, abs=1e-10)
    assert float(cyk) == pytest.approx(FIXTURE_CYK_FREE, abs=1e-10)


def test_errors():
    with pytest.raises(EmptyInputError):
        build_mask([], 0)
    bad = ScoreSet.zeros(2)
    with pytest.raises(InvalidScoreError):
        bad.span[0, 0, 0] = float("nan")
        ScoreSet(bad.span, bad.arc)
    with pytest.raises(ParameterError):
        inside_eisner_satta(ScoreSet.zeros(2), penalty=(-0.1, "all"))
    with pytest.raises(ParameterError):
        allowed_channels(2, 3, "01")


def test_unconditional_penalty_shift():
    # penalizing every cell costs every tree the same n - 1 inherited entity heads
    scores = ScoreSet.random(4, np.random.default_rng(3))
    scores.span[..., 0] = -1e6  # every span labeled 1
    plain, _ = inside_eisner_satta(scores)
    pen, _ = inside_eisner_satta(scores, penalty=(0.4, "all"))
    assert float(plain) - float(pen) == pytest.approx(3 * 0.4, abs=1e-9)


def test_penalty_pattern_targets():
    pat = penalty_pattern(3, 2, [(0, 1)])
    assert pat[0, 1].tolist() == [0.0, 1.0] and pat.sum() == 1
    full = penalty_pattern(3, 2, "all")
    assert full[1, 0].sum() == 0 and full[..., 1].sum() == 6


scores_strategy = st.integers(1, 5).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, 2**32 - 1))
)


@settings(max_examples=40, deadline=None)
@given(scores_strategy)
def test_matches_oracle_free_and_masked(case):
    n, seed = case
    rng = np.random.default_rng(seed)
    scores = ScoreSet.random(n, rng)
    i = int(rng.integers(0, n))
    j = int(rng.integers(i, n))
    plan = build_mask([(i, j, {0})], n)
    free, _ = inside_eisner_satta(scores)
    masked, _ = inside_eisner_satta(scores, plan)
    best, _ = inside_eisner_satta(scores, semiring="max", track=False)
    assert float(free) == pytest.approx(oracle_quantities(scores, kl=False)["logZ"], abs=1e-6)
    assert float(masked) == pytest.approx(oracle_quantities(scores, plan, kl=False)["logZ"], abs=1e-6)
    assert float(masked) <= float(free) + 1e-12
    assert float(best) <= float(free)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_monotone_in_unmasked_scores(n, seed, delta):
    rng = np.random.default_rng(seed)
    scores = ScoreSet.random(n, rng)
    base, _ = inside_eisner_satta(scores, track=False)
    i = int(rng.integers(0, n))
    j = int(rng.integers(i, n))
    bumped = ScoreSet(scores.span.clone(), scores.arc.clone())
    bumped.span[i, j, 1] += delta
    higher, _ = inside_eisner_satta(bumped, track=False)
    assert float(higher) > float(base)


def test_compatible_trees_are_crossing_free():
    # the masked chart sums exactly the trees containing every gold span
    scores = ScoreSet.random(5, np.random.default_rng(11))
    plan = build_mask([(1, 3, {0})], 5)
    q = oracle_quantities(scores, plan, kl=False)
    kept = [t for t in q["trees"] if (1, 3) in t.spans()]
    banned = banned_set(plan)
    assert all(not (t.spans() & banned) for t in kept)
    assert all((1, 3) in t.spans() for t in q["trees"] if not (t.spans() & banned))


def test_batched_chart_matches_single():
    from lexcrf.chart import eisner_satta_batch, span_weights
    from lexcrf.semiring import LogSemiring

    rng = np.random.default_rng(2)
    sets = [ScoreSet.random(4, rng) for _ in range(3)]
    span = torch.stack([s.span for s in sets])
    arc = torch.stack([s.arc for s in sets])
    allowed = allowed_channels(4, 2)[None].expand(3, 4, 4, 2)
    w, _ = span_weights(LogSemiring, span, allowed)
    root, *_ = eisner_satta_batch(w, w, arc, LogSemiring)
    for b, s in enumerate(sets):
        single, _ = inside_eisner_satta(s, track=False)
        assert float(root[0, b]) == pytest.approx(float(single), abs=1e-12)
