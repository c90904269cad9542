"""Brute-force ground truth by enumerating every lexicalized binary tree.

Test-only: cost grows as Catalan(n-1) * 2^(n-1) skeletons, so ``n`` is capped.
Label choices are folded per constituent (a logsumexp over its allowed
channels) except for the KL divergence, which enumerates labelings outright.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .chart import allowed_channels, build_mask, penalty_pattern
from .errors import ParameterError
from .types import MaskPlan, ScoreSet

MAX_N = 7
MAX_N_LABELED = 5

ATT, CONT = 0, 1  # constituent roles: attaches to a parent/root, or passes its head up


@dataclass(frozen=True)
class EnumeratedTree:
    """Skeleton of a lexicalized tree: constituents ``(i, j, h, role)`` and arcs
    ``(parent, child)``; the root arc has parent ``n``."""

    constituents: tuple
    arcs: tuple
    head: int

    def spans(self):
        return {(i, j) for i, j, _, _ in self.constituents}


def catalan(m: int) -> int:
    return comb(2 * m, m) // (m + 1)


@lru_cache(maxsize=None)
def _subtrees(i, j):
    # each entry: (inner constituents with roles, root head, arcs)
    if i == j:
        return [((), i, ())]
    out = []
    for r in range(i, j):
        for lc, lh, la in _subtrees(i, r):
            for rc, rh, ra in _subtrees(r + 1, j):
                # head from the left child
                out.append((lc + rc + ((i, r, lh, CONT), (r + 1, j, rh, ATT)), lh, la + ra + ((lh, rh),)))
                # head from the right child
                out.append((lc + rc + ((i, r, lh, ATT), (r + 1, j, rh, CONT)), rh, la + ra + ((rh, lh),)))
    return out


def enumerate_lex_trees(n: int) -> list[EnumeratedTree]:
    if not 1 <= n <= MAX_N:
        raise ParameterError(f"enumeration supports 1 <= n <= {MAX_N}, got {n}")
    trees = []
    for cons, head, arcs in _subtrees(0, n - 1):
        trees.append(EnumeratedTree(cons + ((0, n - 1, head, ATT),), arcs + ((n, head),), head))
    return trees


def _logsumexp(x):
    x = np.asarray(x, dtype=np.float64)
    m = x.max()
    if not np.isfinite(m):
        return m
    return m + np.log(np.exp(x - m).sum())


def oracle_quantities(scores: ScoreSet, mask=None, penalty=None, scheme="01", kl=None):
    """All chart quantities by explicit summation.

    ``mask`` is a :class:`MaskPlan`, an entity list, or ``None`` for free mode;
    ``penalty`` is ``(c, targets)``. Returned probabilities are under the
    penalized distribution ``q`` when a penalty is given (``logZ_p`` is the
    unpenalized partition function under the same mask).
    """
    n = scores.n
    span = scores.span.detach().numpy()
    arc = scores.arc.detach().numpy()
    K = span.shape[-1]
    if mask is not None and not isinstance(mask, MaskPlan):
        mask = build_mask(mask, n)
    allowed = allowed_channels(n, K, scheme, mask).numpy()
    c, targets = penalty if penalty is not None else (0.0, None)
    pat = penalty_pattern(n, K, targets).numpy() * allowed
    pen = c * pat
    trees = enumerate_lex_trees(n)

    with np.errstate(divide="ignore"):
        chan = {ATT: np.where(allowed, span, -np.inf), CONT: np.where(allowed, span - pen, -np.inf)}
    local = {}
    for role in (ATT, CONT):
        v = chan[role]
        m = v.max(-1, keepdims=True)
        safe_m = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            lse = safe_m[..., 0] + np.log(np.exp(v - safe_m).sum(-1))
        lse = np.where(np.isfinite(m[..., 0]), lse, -np.inf)
        post = np.where(np.isfinite(v), np.exp(v - np.where(np.isfinite(lse), lse, 0.0)[..., None]), 0.0)
        local[role] = (lse, post, m[..., 0])

    def tree_score(t, role_lookup, use_max=False):
        total = 0.0
        for (i, j, h, role) in t.constituents:
            table = local[role][2] if use_max else local[role][0]
            total += table[i, j]
        for (p, ch) in t.arcs:
            total += arc[p, ch]
        return total

    scores_q = np.array([tree_score(t, local) for t in trees])
    best = np.array([tree_score(t, local, use_max=True) for t in trees])
    log_z = _logsumexp(scores_q)

    # unpenalized partition under the same mask
    with np.errstate(divide="ignore"):
        p_lse = local[ATT][0]
    scores_p = np.array([
        sum(p_lse[i, j] for i, j, _, _ in t.constituents) + sum(arc[p, ch] for p, ch in t.arcs)
        for t in trees
    ])
    log_z_p = _logsumexp(scores_p)

    out = {"trees": trees, "logZ": log_z, "logZ_p": log_z_p, "max": best.max(),
           "argmax": trees[int(np.argmax(best))]}
    if not np.isfinite(log_z):
        return out
    prob = np.exp(scores_q - log_z)
    span_mu = np.zeros((n, n, K))
    arc_mu = np.zeros((n + 1, n))
    head_mu = np.zeros((n, n, n))
    count = 0.0
    for t, pt in zip(trees, prob):
        for (i, j, h, role) in t.constituents:
            post = local[role][1][i, j]
            span_mu[i, j] += pt * post
            head_mu[i, j, h] += pt
            if role == CONT:
                count += pt * float((post * pat[i, j]).sum())
        for (p, ch) in t.arcs:
            arc_mu[p, ch] += pt
    occ = head_mu.sum(-1)
    alpha = np.divide(head_mu, occ[..., None], out=np.zeros_like(head_mu), where=occ[..., None] > 0)
    out.update(span_mu=span_mu, arc_mu=arc_mu, head_mu=head_mu, alpha=alpha,
               span_occurrence=occ, expected_count=count)
    if kl is None:
        kl = penalty is not None and n <= MAX_N_LABELED
    if kl:
        out["kl"] = _explicit_kl(trees, span, arc, allowed, pen, n)
    return out


def _explicit_kl(trees, span, arc, allowed, pen, n):
    """KL(q || p) summing every (tree, labeling) configuration."""
    if n > MAX_N_LABELED:
        raise ParameterError(f"labeled enumeration supports n <= {MAX_N_LABELED}")
    sp_all, sq_all = [], []
    for t in trees:
        arc_total = sum(arc[p, ch] for p, ch in t.arcs)
        choices = []
        for (i, j, h, role) in t.constituents:
            ks = np.flatnonzero(allowed[i, j])
            if ks.size == 0:
                choices = None
                break
            choices.append([(span[i, j, k], pen[i, j, k] if role == CONT else 0.0) for k in ks])
        if choices is None:
            continue
        for combo in itertools.product(*choices):
            sp = arc_total + sum(v for v, _ in combo)
            sp_all.append(sp)
            sq_all.append(sp - sum(d for _, d in combo))
    sp_all = np.array(sp_all)
    sq_all = np.array(sq_all)
    log_p = sp_all - _logsumexp(sp_all)
    log_q = sq_all - _logsumexp(sq_all)
    return float(np.sum(np.exp(log_q) * (log_q - log_p)))


def oracle_viterbi_score(scores: ScoreSet, mask=None, scheme="01") -> float:
    return float(oracle_quantities(scores, mask, scheme=scheme, kl=False)["max"])


def oracle_cyk_logz(scores: ScoreSet, mask=None, scheme="01") -> float:
    """Sum over unlexicalized bracketings (each counted once)."""
    n = scores.n
    span = scores.span.detach().numpy()
    K = span.shape[-1]
    if mask is not None and not isinstance(mask, MaskPlan):
        mask = build_mask(mask, n)
    allowed = allowed_channels(n, K, scheme, mask).numpy()
    with np.errstate(divide="ignore"):
        lw = np.where(allowed, span, -np.inf)
    lse = np.array([[_logsumexp(lw[i, j]) for j in range(n)] for i in range(n)])
    seen = set()
    totals = []
    for t in enumerate_lex_trees(n):
        key = frozenset(t.spans())
        if key in seen:
            continue
        seen.add(key)
        totals.append(sum(lse[i, j] for i, j in key))
    return float(_logsumexp(totals))
