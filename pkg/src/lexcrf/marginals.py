"""Marginals, score gradients and the head-sharing KL term.

Marginals are gradients of ``log Z`` taken by reverse accumulation through
the inside pass. Head distributions come from a zero offset added to every
``H[i, j, h]`` cell: its gradient is the probability that span ``(i, j)``
occurs headed by ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .chart import (
    Chart, allowed_channels, build_mask, eisner_satta_batch, inside_cyk,
    inside_eisner_satta, penalty_pattern, span_weights, _mode_plan,
)
from .errors import ParameterError, WrongSemiringError
from .semiring import KLSemiring
from .types import DTYPE, MaskPlan, ScoreSet


@dataclass
class Marginals:
    span_mu: torch.Tensor       # [n, n, K]
    arc_mu: torch.Tensor        # [n+1, n]
    head_mu: torch.Tensor       # [n, n, n] joint P(span (i, j) occurs with head h)
    span_occurrence: torch.Tensor  # [n, n]

    @property
    def n(self) -> int:
        return self.span_mu.shape[0]

    @property
    def head_alpha(self) -> dict:
        """``(i, j) -> tensor over h in [i, j]``, conditioned on the span occurring."""
        out = {}
        for i in range(self.n):
            for j in range(i, self.n):
                occ = self.span_occurrence[i, j]
                if occ > 0:
                    out[(i, j)] = self.head_mu[i, j, i:j + 1] / occ
        return out

    def alpha(self, i: int, j: int) -> torch.Tensor:
        occ = self.span_occurrence[i, j]
        if occ <= 0:
            return torch.full((j - i + 1,), float("nan"), dtype=DTYPE)
        return self.head_mu[i, j, i:j + 1] / occ


@dataclass
class ScoreGradients:
    span: torch.Tensor
    arc: torch.Tensor


def _grads(output, inputs):
    present = [x for x in inputs if x is not None and x.requires_grad]
    got = torch.autograd.grad(output, present, retain_graph=True, allow_unused=True)
    table = {id(x): (g if g is not None else torch.zeros_like(x)) for x, g in zip(present, got)}
    return [None if x is None else table.get(id(x)) for x in inputs]


def backward_marginals(chart: Chart, scores: ScoreSet | None = None) -> Marginals:
    if chart.semiring == "max":
        raise WrongSemiringError("marginals need a log-sum (or expectation) chart, got max")
    leaves = chart.leaves
    n = chart.n
    if chart.lexicalized:
        span_g, arc_g, head_g = _grads(chart.root[0].sum(),
                                       [leaves["span"], leaves["arc"], leaves["head"]])
        head_mu = head_g[0]
        occ = head_mu.sum(-1)
    else:
        (span_g,) = _grads(chart.root[0].sum(), [leaves["span"]])
        arc_g = torch.zeros(n + 1, n, dtype=DTYPE)
        head_mu = torch.zeros(n, n, n, dtype=DTYPE)
        occ = span_g.sum(-1)
    return Marginals(span_mu=span_g.detach(), arc_mu=arc_g.detach(),
                     head_mu=head_mu.detach(), span_occurrence=occ.detach())


def grad_logZ(scores: ScoreSet, mode="free", scheme: str = "01", lexicalized: bool = True):
    """``(log Z, d log Z / d scores)``; masked scores get exactly zero gradient."""
    if lexicalized:
        value, chart = inside_eisner_satta(scores, mode, scheme=scheme)
        span_g, arc_g = _grads(chart.root[0].sum(), [chart.leaves["span"], chart.leaves["arc"]])
    else:
        value, chart = inside_cyk(scores, mode, scheme=scheme)
        (span_g,) = _grads(chart.root[0].sum(), [chart.leaves["span"]])
        arc_g = torch.zeros_like(scores.arc)
    return value.detach(), ScoreGradients(span_g.detach(), arc_g.detach())


def expected_penalty_count(chart_q: Chart) -> float:
    """Expected number of penalized cell uses under the penalized distribution."""
    c = chart_q.leaves.get("c")
    if c is None:
        return 0.0
    (g,) = torch.autograd.grad(chart_q.root[0].sum(), [c], retain_graph=True, allow_unused=True)
    if g is None:
        return 0.0
    return float(-g)


def kl_terms(span: torch.Tensor, arc: torch.Tensor, allowed: torch.Tensor,
             pen: torch.Tensor) -> torch.Tensor:
    """Batched ``KL(q || p)`` for ``[B, ...]`` inputs via one expectation-semiring
    pass over ``p`` (no penalty) and ``q`` (penalty ``pen``) stacked together."""
    B = span.shape[0]
    span2 = torch.cat([span, span], 0)
    allowed2 = torch.cat([allowed, allowed], 0)
    pen2 = torch.cat([torch.zeros_like(pen), pen], 0)
    w_att, w_cont = span_weights(KLSemiring, span2, allowed2, pen2)
    root, *_ = eisner_satta_batch(w_att, w_cont, torch.cat([arc, arc], 0), KLSemiring)
    log_p, log_q, e_q = root[0, :B], root[0, B:], root[1, B:]
    return e_q - log_q + log_p


def kl_constrained(scores: ScoreSet, mask: MaskPlan | None, c: float, targets=None,
                   scheme: str = "01"):
    """``(KL(q || p), d KL / d scores)`` with ``q`` the penalized chart.

    ``targets`` defaults to the gold spans of ``mask``.
    """
    if c < 0:
        raise ParameterError(f"penalty constant must be >= 0, got {c}")
    n, K = scores.n, scores.span.shape[-1]
    plan = _mode_plan(mask, n)
    if targets is None:
        targets = plan.gold_spans() if plan is not None else None
    allowed = allowed_channels(n, K, scheme, plan)
    pen = float(c) * penalty_pattern(n, K, targets)
    span = scores.span.detach().clone().requires_grad_(True)
    arc = scores.arc.detach().clone().requires_grad_(True)
    kl = kl_terms(span[None], arc[None], allowed[None], pen[None])[0]
    kl = kl.clamp(min=0.0)
    span_g, arc_g = torch.autograd.grad(kl, [span, arc])
    return kl.detach(), ScoreGradients(span_g, arc_g)


def kl_closed_form(scores: ScoreSet, mask: MaskPlan | None, c: float, targets=None,
                   scheme: str = "01") -> float:
    """``log Z_p - log Z_q - c * E_q[#penalized uses]`` from two log-sum charts."""
    n = scores.n
    plan = _mode_plan(mask, n)
    if targets is None:
        targets = plan.gold_spans() if plan is not None else None
    mode = plan if plan is not None else "free"
    log_p, _ = inside_eisner_satta(scores, mode, scheme=scheme, track=False)
    log_q, chart_q = inside_eisner_satta(scores, mode, penalty=(c, targets), scheme=scheme)
    count = expected_penalty_count(chart_q)
    return float(log_p) - float(log_q.detach()) - c * count
