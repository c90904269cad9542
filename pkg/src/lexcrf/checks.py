"""Randomized chart-vs-oracle property suite (behind ``lexcrf oracle-check``)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .chart import build_mask, inside_eisner_satta
from .decode import viterbi_lexicalized
from .marginals import backward_marginals, kl_closed_form, kl_constrained
from .oracle import oracle_quantities
from .types import Entity, ScoreSet, crosses

PENALTY = 0.4

TOLERANCES = {
    "logZ_free": 1e-6,
    "logZ_masked": 1e-6,
    "viterbi_max": 1e-9,
    "viterbi_recompute": 0.0,
    "span_marginals": 1e-8,
    "arc_marginals": 1e-8,
    "alpha_sum": 1e-9,
    "alpha_oracle": 1e-8,
    "kl_closed_form": 1e-8,
    "kl_oracle": 1e-8,
    "kl_zero_at_c0": 0.0,
    "kl_nonnegative": 0.0,
    "tree_invariants": 0.0,
}


def random_entities(n: int, rng: np.random.Generator, n_labels: int = 2, max_tries: int = 8):
    """A random non-crossing entity list with integer label ids."""
    ents = []
    for _ in range(int(rng.integers(0, max_tries + 1))):
        i = int(rng.integers(0, n))
        j = int(rng.integers(i, n))
        if any((e.start, e.end) == (i, j) or crosses((i, j), e.span) for e in ents):
            continue
        k = int(rng.integers(1, n_labels + 1))
        labels = frozenset(int(x) for x in rng.choice(n_labels, size=k, replace=False))
        ents.append(Entity(i, j, labels, None))
    return ents


@dataclass
class CheckResult:
    name: str
    worst: float
    tolerance: float
    trials: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and self.worst <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:g} trials={self.trials}"


def _record(results, name, err, trial):
    res = results[name]
    res.trials += 1
    err = float(err)
    if not np.isfinite(err):
        res.failures.append(trial)
        err = float("inf")
    res.worst = max(res.worst, err)
    if err > res.tolerance:
        res.failures.append(trial)


def run_oracle_checks(trials: int = 200, n_min: int = 2, n_max: int = 5, seed: int = 0) -> list[CheckResult]:
    """Compare chart, marginals, Viterbi and KL against the brute-force oracle."""
    rng = np.random.default_rng(seed)
    results = {k: CheckResult(k, 0.0, tol) for k, tol in TOLERANCES.items()}
    for trial in range(trials):
        n = int(rng.integers(n_min, n_max + 1))
        scores = ScoreSet.random(n, rng)
        plan = build_mask(random_entities(n, rng), n)

        free = oracle_quantities(scores, None, kl=False)
        logz, chart = inside_eisner_satta(scores, "free")
        _record(results, "logZ_free", abs(float(logz.detach()) - free["logZ"]), trial)
        marg = backward_marginals(chart)
        _record(results, "span_marginals", np.abs(marg.span_mu.numpy() - free["span_mu"]).max(), trial)
        _record(results, "arc_marginals", np.abs(marg.arc_mu.numpy() - free["arc_mu"]).max(), trial)

        masked = oracle_quantities(scores, plan, (PENALTY, plan.gold_spans()), kl=True)
        logz_m, chart_m = inside_eisner_satta(scores, plan)
        _record(results, "logZ_masked", abs(float(logz_m.detach()) - masked["logZ_p"]), trial)

        plain = oracle_quantities(scores, plan, kl=False)
        mm = backward_marginals(chart_m)
        for (i, j) in plan.gold_spans():
            a = mm.alpha(i, j).numpy()
            _record(results, "alpha_sum", abs(a.sum() - 1.0), trial)
            _record(results, "alpha_oracle", np.abs(a - plain["alpha"][i, j, i:j + 1]).max(), trial)

        tree = viterbi_lexicalized(scores)
        vmax, _ = inside_eisner_satta(scores, "free", semiring="max", track=False)
        _record(results, "viterbi_max", abs(float(vmax) - free["max"]), trial)
        _record(results, "viterbi_recompute", abs(tree.score - float(vmax)), trial)
        try:
            tree.validate()
            ok = 0.0
        except Exception:
            ok = 1.0
        _record(results, "tree_invariants", ok, trial)

        kl, _ = kl_constrained(scores, plan, PENALTY)
        closed = kl_closed_form(scores, plan, PENALTY)
        _record(results, "kl_closed_form", abs(float(kl) - closed), trial)
        _record(results, "kl_oracle", abs(float(kl) - masked["kl"]), trial)
        _record(results, "kl_nonnegative", max(0.0, -float(kl)), trial)
        kl0, _ = kl_constrained(scores, plan, 0.0)
        _record(results, "kl_zero_at_c0", abs(float(kl0)), trial)
    return list(results.values())
