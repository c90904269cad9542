"""Training losses: structural tree loss, head-sharing KL term and the
head-aware multilabel labeling loss (``L = L_tree + L_label + L_reg``)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import torch

from .chart import (
    allowed_channels, build_mask, cyk_batch, eisner_satta_batch, inside_cyk,
    inside_eisner_satta, penalty_pattern, span_weights,
)
from .errors import AnnotationError, LexCRFError, ParameterError
from .marginals import Marginals, ScoreGradients, backward_marginals, kl_constrained
from .semiring import NEG, KLSemiring, LogSemiring
from .types import DTYPE, EntitySet, MaskPlan, ScoreSet, as_entity_set

ALPHA_TOL = 1e-6


@dataclass
class LossReport:
    l_tree: float
    l_label: float
    l_reg: float
    total: float
    grads: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# single-sentence forms
# ---------------------------------------------------------------------------

def loss_tree(scores: ScoreSet, mask: MaskPlan, scheme: str = "01", lexicalized: bool = True):
    """``log Z - s(y~)`` and its score gradient (free minus masked marginals)."""
    inside = inside_eisner_satta if lexicalized else inside_cyk
    log_z, free = inside(scores, "free", scheme=scheme)
    num, masked = inside(scores, mask, scheme=scheme)
    if torch.isinf(num):
        raise AnnotationError("no tree is compatible with the gold entities")
    mf, mm = backward_marginals(free), backward_marginals(masked)
    value = (log_z - num).detach()
    return value, ScoreGradients(mf.span_mu - mm.span_mu, mf.arc_mu - mm.arc_mu)


def loss_reg(scores: ScoreSet, mask: MaskPlan, c: float, scheme: str = "01"):
    """KL between penalized and plain masked charts, targets = gold spans."""
    return kl_constrained(scores, mask, c, targets=mask.gold_spans(), scheme=scheme)


def multilabel_term(label_scores: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    """``log(1 + sum_{l not in gold} e^{s_l}) + log(1 + sum_{l in gold} e^{-s_l})``.

    ``label_scores``: ``[..., L]``; ``gold``: boolean ``[..., L]`` (or a set of
    label indices for a single vector).
    """
    s = torch.as_tensor(label_scores, dtype=DTYPE)
    if not torch.is_tensor(gold):
        idx = list(gold)
        gold = torch.zeros(s.shape[-1], dtype=torch.bool)
        if idx:
            gold[idx] = True
    if (~gold.any(-1)).any():
        raise ParameterError("gold label set must be non-empty")
    zero = torch.zeros_like(s[..., :1])
    neg = s.masked_fill(gold, float("-inf"))
    pos = (-s).masked_fill(~gold, float("-inf"))
    return torch.logsumexp(torch.cat([zero, neg], -1), -1) + torch.logsumexp(torch.cat([zero, pos], -1), -1)


def loss_label(gold: EntitySet, marginals: Marginals, label_scorer: Callable, n_labels: int,
               head_aware: bool = True):
    """``sum_{(i,j,Omega)} sum_k alpha_ijk * l(i, j, k, Omega)``.

    ``label_scorer(i, j, k)`` returns the ``L`` label scores; ``alpha`` is
    read from ``marginals`` and treated as a constant. Returns the value
    (differentiable w.r.t. the scorer's parameters) and the gradient w.r.t.
    each queried score vector keyed by ``(i, j, k)``.
    """
    total = torch.zeros((), dtype=DTYPE)
    queried = {}
    for e in sorted(gold, key=lambda e: e.span):
        i, j = e.span
        if head_aware:
            alpha = marginals.alpha(i, j)
            if torch.isnan(alpha).any() or abs(float(alpha.sum()) - 1.0) > ALPHA_TOL:
                raise LexCRFError(f"head distribution for ({i}, {j}) is not normalized")
        else:
            alpha = torch.full((j - i + 1,), 1.0 / (j - i + 1), dtype=DTYPE)
        target = torch.zeros(n_labels, dtype=torch.bool)
        target[list(e.labels)] = True
        for off, k in enumerate(range(i, j + 1)):
            s = label_scorer(i, j, k)
            if not s.requires_grad:
                s = s.detach().clone().requires_grad_(True)
            queried[(i, j, k)] = s
            total = total + alpha[off].detach() * multilabel_term(s, target)
    grads = {}
    if queried:
        got = torch.autograd.grad(total, list(queried.values()), retain_graph=True, allow_unused=True)
        grads = {key: g for key, g in zip(queried, got)}
    return total, grads


# ---------------------------------------------------------------------------
# batched training objective
# ---------------------------------------------------------------------------

def _plans(model, records, n):
    plans = []
    for rec in records:
        ents = [(e.start, e.end, model.label_ids(e.labels)) for e in rec.entities]
        plans.append(build_mask(ents, n))
    return plans


def batch_loss(model, records, config=None):
    """Mean total loss over a batch of equal-length records.

    Returns the differentiable total and a :class:`LossReport` of batch means.
    """
    config = config or model.config
    n = records[0].n
    if any(r.n != n for r in records):
        raise ParameterError("batch_loss needs equal-length sentences")
    B = len(records)
    ids = model.encode([r.tokens for r in records])
    span, arc, rep = model.scores(ids)
    K = span.shape[-1]
    scheme = config.scheme
    plans = _plans(model, records, n)
    free = allowed_channels(n, K, scheme)[None].expand(B, n, n, K)
    gold = torch.stack([allowed_channels(n, K, scheme, p) for p in plans])
    c = config.reg_c if config.lex else 0.0
    need_alpha = config.lex and scheme != "labeled" and config.head_aware

    zeros_off = torch.zeros(B, n, n, n, dtype=DTYPE)
    offset = torch.zeros(B, n, n, n, dtype=DTYPE, requires_grad=need_alpha)
    l_reg = torch.zeros(B, dtype=DTYPE)
    if config.lex and c > 0:
        pen = c * torch.stack([penalty_pattern(n, K, p.gold_spans()) for p in plans])
        w_att, w_cont = span_weights(
            KLSemiring, torch.cat([span, span, span]), torch.cat([free, gold, gold]),
            torch.cat([torch.zeros_like(pen), torch.zeros_like(pen), pen]),
        )
        root, *_ = eisner_satta_batch(w_att, w_cont, torch.cat([arc, arc, arc]), KLSemiring,
                                      head_offset=torch.cat([zeros_off, offset, zeros_off]))
        log_z, num = root[0, :B], root[0, B:2 * B]
        l_reg = (root[1, 2 * B:] - root[0, 2 * B:] + num).clamp(min=0.0)
    elif config.lex:
        w_att, _ = span_weights(LogSemiring, torch.cat([span, span]), torch.cat([free, gold]))
        root, *_ = eisner_satta_batch(w_att, w_att, torch.cat([arc, arc]), LogSemiring,
                                      head_offset=torch.cat([zeros_off, offset]))
        log_z, num = root[0, :B], root[0, B:]
    else:
        w_att, _ = span_weights(LogSemiring, torch.cat([span, span]), torch.cat([free, gold]))
        root, _, _ = cyk_batch(w_att, LogSemiring)
        log_z, num = root[0, :B], root[0, B:]
    if (num <= NEG / 2).any():
        raise AnnotationError("a gold annotation admits no compatible tree")
    l_tree = log_z - num

    l_label = torch.zeros((), dtype=DTYPE)
    if scheme != "labeled" and config.w_label:
        head_mu = occ = None
        wanted = ([offset] if need_alpha else []) + ([span] if model.null_label else [])
        if wanted:
            got = list(torch.autograd.grad(num.sum(), wanted, retain_graph=True))
            if need_alpha:
                head_mu = got.pop(0).detach()
            if model.null_label:
                occ = got.pop(0).detach().sum(-1)
        l_label = _label_loss(model, rep, records, plans, head_mu, occ, n)

    l_tree_m, l_reg_m = l_tree.mean(), l_reg.mean()
    l_label_m = l_label / B
    total = config.w_tree * l_tree_m + config.w_label * l_label_m + config.w_reg * l_reg_m
    report = LossReport(*(float(x.detach()) for x in (l_tree_m, l_label_m, l_reg_m, total)))
    return total, report


def _label_loss(model, rep, records, plans, head_mu, occ, n):
    """Weighted multilabel loss over (span, head) triples.

    Gold spans carry their label sets with weight ``alpha``; with an explicit
    empty label, latent spans likely present in the masked chart (occurrence
    >= 0.05) are added as empty-label examples weighted by occurrence.
    """
    B = len(records)
    shift = 1 if model.null_label else 0
    L = model.n_label_outputs
    gold = torch.zeros(B, n, n, dtype=torch.bool)
    target = torch.zeros(B, n, n, L, dtype=torch.bool)
    for b, plan in enumerate(plans):
        for (i, j), labels in plan.gold_labels.items():
            gold[b, i, j] = True
            target[b, i, j, [l + shift for l in labels]] = True
    weight = gold.to(DTYPE)
    if occ is not None:
        extra = (occ >= 0.05) & ~gold & torch.ones(n, n, dtype=torch.bool).triu()
        target[..., 0] |= extra
        weight = weight + extra * occ
    alpha = _head_weights(head_mu, B, n)
    w = weight[..., None] * alpha                       # [B, n, n, n]
    b, i, j, h = (w > 0).nonzero(as_tuple=True)
    if b.numel() == 0:
        return torch.zeros((), dtype=DTYPE)
    scores = model.scorer.score_label_triples(rep, b, i, j, h)
    terms = multilabel_term(scores, target[b, i, j])
    return (w[b, i, j, h] * terms).sum()


def _head_weights(head_mu, B, n):
    """Normalized in-span head distribution ``[B, n, n, n]`` (uniform fallback)."""
    k = torch.arange(n)
    inside = (k[:, None, None] <= k[None, None, :]) & (k[None, None, :] <= k[None, :, None])  # i <= h <= j
    uniform = inside.to(DTYPE) / inside.sum(-1, keepdim=True).clamp(min=1)
    if head_mu is None:
        return uniform.expand(B, n, n, n)
    w = head_mu * inside
    total = w.sum(-1, keepdim=True)
    return torch.where(total > 0, w / total.clamp(min=1e-300), uniform)
