"""Eisner-Satta inside computation over 0-1 labeled lexicalized trees.

Items follow the deduction system of lexicalized span parsing:

* ``H[i, j, h]`` -- span ``(i, j)`` headed by token ``h`` whose parent is not
  yet determined;
* ``P[i, j, p]`` -- span ``(i, j)`` already attached as a dependent of ``p``
  (``p`` outside the span; ``p == n`` is the virtual root).

Recurrences (``(+)`` is the semiring sum, ``(x)`` its product)::

    P[i, j, p] = (+)_h  H[i, j, h] (x) arc[p, h]
    H[i, k, h] = w(i, k) (x) (+)_r  P[i, r, h] (x) Hc[r+1, k, h]
                                 (+) Hc[i, r, h] (x) P[r+1, k, h]
    root       = (+)_h  H[0, n-1, h] (x) arc[n, h]

``Hc`` is ``H`` after the head-sharing penalty: a targeted entity cell whose
head is inherited by its parent (the head keeps governing) pays ``c``. The
attach rule and the root read the unpenalized ``H``. Without a penalty
``Hc is H``.

Spans use inclusive 0-based token indices. All cells of one width band are
computed together.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Union

import numpy as np
import torch

from .errors import AnnotationError, EmptyInputError, InvalidScoreError, ParameterError
from .semiring import NEG, KLSemiring, MaxSemiring, Semiring, get_semiring
from .types import DTYPE, EntitySet, MaskPlan, ScoreSet, as_entity_set, crosses

SCHEMES = ("01", "unlabeled", "labeled")
DEFAULT_PENALTY = 0.4


def is_neg_inf(value) -> bool:
    return float(value) <= NEG / 2


def _finite_or_ninf(value: torch.Tensor) -> torch.Tensor:
    return torch.where(value <= NEG / 2, torch.full_like(value, float("-inf")), value)


# ---------------------------------------------------------------------------
# masks and span weights
# ---------------------------------------------------------------------------

def build_mask(entities, n: int) -> MaskPlan:
    """Ban every span crossing a gold entity and force 0-1 labels."""
    if n < 1:
        raise EmptyInputError("n must be >= 1")
    ents = as_entity_set(entities, n)
    gold = {e.span: e.labels for e in ents}
    banned = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i, n):
            if (i, j) in gold:
                continue
            banned[i, j] = any(crosses((i, j), g) for g in gold)
    forced = np.zeros((n, n), dtype=np.int8)
    for (i, j) in gold:
        forced[i, j] = 1
    return MaskPlan(banned=banned, forced=forced, gold_labels=dict(gold))


def allowed_channels(n: int, channels: int, scheme: str = "01",
                     plan: Optional[MaskPlan] = None) -> torch.Tensor:
    """Boolean ``[n, n, K]`` of label channels a span may take.

    ``01``: channel 0 latent, channel 1 entity. ``unlabeled``: only channel 1
    carries the (single) span score. ``labeled``: channel 0 is the empty label
    and channel ``l + 1`` is entity label id ``l``.
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}")
    if scheme in ("01", "unlabeled") and channels != 2:
        raise ParameterError(f"scheme {scheme!r} needs 2 span channels, got {channels}")
    upper = torch.ones(n, n, dtype=torch.bool).triu()
    allowed = torch.zeros(n, n, channels, dtype=torch.bool)
    if plan is None:
        if scheme == "unlabeled":
            allowed[..., 1] = upper
        else:
            allowed[:] = upper[..., None]
        return allowed
    if plan.n != n:
        raise ParameterError(f"mask built for n={plan.n}, scores have n={n}")
    ok = upper & ~torch.from_numpy(plan.banned)
    gold = torch.from_numpy(plan.forced.astype(bool)) & ok
    if scheme == "unlabeled":
        allowed[..., 1] = ok
    elif scheme == "01":
        allowed[..., 0] = ok & ~gold
        allowed[..., 1] = gold
    else:
        allowed[..., 0] = ok & ~gold
        for (i, j), labels in plan.gold_labels.items():
            for lab in labels:
                if not isinstance(lab, (int, np.integer)) or not 0 <= lab < channels - 1:
                    raise ParameterError(f"labeled scheme needs integer label ids, got {lab!r}")
                allowed[i, j, int(lab) + 1] = True
    return allowed


def penalty_pattern(n: int, channels: int, targets) -> torch.Tensor:
    """0/1 ``[n, n, K]`` marking (targeted span, entity channel) pairs.

    ``targets`` is ``None`` (nothing), ``"all"`` (every span) or an iterable of
    ``(i, j)`` spans.
    """
    pat = torch.zeros(n, n, channels, dtype=DTYPE)
    if targets is None:
        return pat
    if isinstance(targets, str):
        if targets != "all":
            raise ParameterError(f"unknown target spec {targets!r}")
        pat[..., 1:] = 1.0
        return pat * torch.ones(n, n, dtype=DTYPE).triu()[..., None]
    for (i, j) in targets:
        pat[i, j, 1:] = 1.0
    return pat


def span_weights(semiring, span: torch.Tensor, allowed: torch.Tensor,
                 pen: Optional[torch.Tensor] = None):
    """Label-summed span weights ``(w_att, w_cont)`` of shape ``[S, B, n, n]``.

    ``w_att`` is used when the span attaches to a parent or the root,
    ``w_cont`` when its head is inherited (penalized entity channels).
    """
    sr = get_semiring(semiring)
    masked = span.masked_fill(~allowed, NEG)
    none_ok = ~allowed.any(-1)
    w_att = sr.sum(sr.convert(masked), dim=-1)
    w_att = sr.mask(w_att, none_ok)
    if pen is None:
        return w_att, w_att
    pen = pen * allowed
    w_cont = sr.sum(sr.convert(masked - pen, -pen), dim=-1)
    w_cont = sr.mask(w_cont, none_ok)
    return w_att, w_cont


def span_weight(scores: ScoreSet, i: int, j: int, mode="free", scheme: str = "01") -> float:
    """Log-potential of span ``(i, j)`` with its labels summed (free) or forced."""
    if not 0 <= i <= j < scores.n:
        raise ParameterError(f"invalid span ({i}, {j})")
    plan = None if mode == "free" else mode
    allowed = allowed_channels(scores.n, scores.span.shape[-1], scheme, plan)
    vals = scores.span[i, j][allowed[i, j]]
    if vals.numel() == 0:
        return float("-inf")
    return float(torch.logsumexp(vals, 0))


# ---------------------------------------------------------------------------
# chart
# ---------------------------------------------------------------------------

@dataclass
class Chart:
    semiring: str
    n: int
    root: torch.Tensor                 # [S, B]
    H: Optional[torch.Tensor] = None   # [S, B, n, n, n]
    Hc: Optional[torch.Tensor] = None
    P: Optional[torch.Tensor] = None   # [S, B, n, n, n+1]
    beta: Optional[torch.Tensor] = None  # CYK chart [S, B, n, n]
    leaves: dict = field(default_factory=dict)
    backptr: Optional[dict] = None
    scheme: str = "01"
    lexicalized: bool = True

    @property
    def log_z(self) -> torch.Tensor:
        return self.root[0]


@lru_cache(maxsize=None)
def _band_index(n: int, w: int):
    m = n - w
    i = torch.arange(m)[:, None]
    t = torch.arange(w)[None, :]
    li, lj = (i + t * 0), i + t
    ri, rj = i + t + 1, (i + w) + t * 0
    starts = torch.arange(m)
    ends = starts + w
    p = torch.arange(n + 1)
    inside = (p[None, :] >= starts[:, None]) & (p[None, :] <= ends[:, None])
    return li, lj, ri, rj, starts, ends, inside


def eisner_satta_batch(w_att: torch.Tensor, w_cont: torch.Tensor, arc: torch.Tensor,
                       semiring="log", head_offset: Optional[torch.Tensor] = None,
                       backptr: bool = False):
    """Run the inside pass on a batch of equal-length sentences.

    ``w_att``/``w_cont`` are semiring span weights ``[S, B, n, n]``; ``arc`` is
    ``[B, n+1, n]`` log-potentials; ``head_offset`` (``[B, n, n, n]``, zeros)
    is added to every ``H`` cell so its gradient yields headed-span marginals.
    """
    sr = get_semiring(semiring)
    S, B, n = w_att.shape[0], w_att.shape[1], w_att.shape[-1]
    if n == 0:
        raise EmptyInputError("empty sentence")
    shared = w_cont is w_att
    arc_sr = sr.convert(arc)[:, :, None]  # [S, B, 1, n+1, n]
    H = sr.zero((B, n, n, n))
    Hc = H if shared else sr.zero((B, n, n, n))
    P = sr.zero((B, n, n, n + 1))
    bp_split = bp_attach = None
    if backptr:
        if sr is not MaxSemiring:
            raise ParameterError("backpointers need the max semiring")
        bp_split = torch.zeros(B, n, n, n, dtype=torch.long)
        bp_attach = torch.zeros(B, n, n, n + 1, dtype=torch.long)

    def attach(i_idx, j_idx, Hw, inside):
        # Hw: [S, B, m, n] over heads -> P: [S, B, m, n+1] over parents
        cand = Hw[:, :, :, None, :] + arc_sr
        Pw = sr.saturate(sr.sum(cand, dim=-1))
        Pw = sr.mask(Pw, inside)
        P[:, :, i_idx, j_idx] = Pw
        if backptr:
            bp_attach[:, i_idx, j_idx] = cand[0].argmax(-1)

    # axioms
    idx = torch.arange(n)
    diag = sr.zero((B, n, n))
    leaf = w_att[:, :, idx, idx]  # [S, B, n]
    Hw = diag.clone()
    Hw[:, :, idx, idx] = leaf
    if head_offset is not None:
        Hw = _add_logw(Hw, head_offset[:, idx, idx, :])
    Hw = sr.saturate(Hw)
    H[:, :, idx, idx] = Hw
    if not shared:
        Hcw = diag.clone()
        Hcw[:, :, idx, idx] = w_cont[:, :, idx, idx]
        if head_offset is not None:
            Hcw = _add_logw(Hcw, head_offset[:, idx, idx, :])
        Hc[:, :, idx, idx] = sr.saturate(Hcw)
    p = torch.arange(n + 1)
    attach(idx, idx, Hw, (p[None, :] == idx[:, None]))

    for w in range(1, n):
        li, lj, ri, rj, starts, ends, inside = _band_index(n, w)
        t1 = P[:, :, li, lj, :n] + Hc[:, :, ri, rj, :]
        t2 = Hc[:, :, li, lj, :] + P[:, :, ri, rj, :n]
        # candidate 2 * (r - i) + kind: kind 0 = left attached, 1 = right attached,
        # so argmax ties resolve to the lower split point first
        cand = torch.stack([t1, t2], dim=-2).flatten(-3, -2)  # [S, B, m, 2w, n]
        inner = sr.sum(cand, dim=-2)        # [S, B, m, n]
        if backptr:
            bp_split[:, starts, ends] = cand[0].argmax(-2)
        Hw = inner + w_att[:, :, starts, ends][..., None]
        if head_offset is not None:
            Hw = _add_logw(Hw, head_offset[:, starts, ends, :])
        Hw = sr.saturate(Hw)
        H[:, :, starts, ends] = Hw
        if not shared:
            Hcw = inner + w_cont[:, :, starts, ends][..., None]
            if head_offset is not None:
                Hcw = _add_logw(Hcw, head_offset[:, starts, ends, :])
            Hc[:, :, starts, ends] = sr.saturate(Hcw)
        attach(starts, ends, Hw, inside)

    root = P[:, :, 0, n - 1, n]
    bp = None
    if backptr:
        bp = {"split": bp_split, "attach": bp_attach}
    return root, H, Hc, P, bp


def _add_logw(x: torch.Tensor, offset: torch.Tensor) -> torch.Tensor:
    """Add ``offset`` to the log-weight component only."""
    if x.shape[0] == 1:
        return x + offset[None]
    return torch.cat([x[:1] + offset[None], x[1:]], dim=0)


def cyk_batch(w_att: torch.Tensor, semiring="log", backptr: bool = False):
    """Unlexicalized inside pass over binary bracketings: ``beta[i, k] = w(i, k)
    (x) (+)_r beta[i, r] (x) beta[r+1, k]``."""
    sr = get_semiring(semiring)
    S, B, n = w_att.shape[0], w_att.shape[1], w_att.shape[-1]
    if n == 0:
        raise EmptyInputError("empty sentence")
    beta = sr.zero((B, n, n))
    idx = torch.arange(n)
    beta[:, :, idx, idx] = w_att[:, :, idx, idx]
    bp_split = torch.zeros(B, n, n, dtype=torch.long) if backptr else None
    for w in range(1, n):
        li, lj, ri, rj, starts, ends, _ = _band_index(n, w)
        cand = beta[:, :, li, lj] + beta[:, :, ri, rj]  # [S, B, m, w]
        if backptr:
            bp_split[:, starts, ends] = cand[0].argmax(-1)
        beta[:, :, starts, ends] = sr.saturate(sr.sum(cand, dim=-1) + w_att[:, :, starts, ends])
    root = beta[:, :, 0, n - 1]
    return root, beta, ({"split": bp_split} if backptr else None)


# ---------------------------------------------------------------------------
# single-sentence API
# ---------------------------------------------------------------------------

def _mode_plan(mode, n):
    if mode is None or (isinstance(mode, str) and mode == "free"):
        return None
    if isinstance(mode, MaskPlan):
        return mode
    if isinstance(mode, (EntitySet, list, tuple, set)):
        return build_mask(mode, n)
    raise ParameterError(f"unknown mode {mode!r}")


def _penalty_args(penalty, n, channels):
    if penalty is None:
        return None, None
    c, targets = penalty
    if c < 0:
        raise ParameterError(f"penalty constant must be >= 0, got {c}")
    c_t = torch.tensor(float(c), dtype=DTYPE, requires_grad=True)
    return c_t, penalty_pattern(n, channels, targets)


def inside_eisner_satta(scores: ScoreSet, mode="free", penalty=None, semiring="log",
                        scheme: str = "01", track: bool = True):
    """Root value and chart for one sentence.

    ``mode`` is ``"free"`` or a :class:`MaskPlan`; ``penalty`` is ``(c,
    targets)``. The root value is ``log Z`` (log), the best tree score (max) or
    a ``(log Z_q, E_q[log q - log p + log Z_q - log Z_p])`` pair (kl).
    """
    sr = get_semiring(semiring)
    if not isinstance(scores, ScoreSet):
        raise InvalidScoreError("expected a ScoreSet")
    n, K = scores.n, scores.span.shape[-1]
    plan = _mode_plan(mode, n)
    allowed = allowed_channels(n, K, scheme, plan)
    span = scores.span.detach().clone().requires_grad_(track)
    arc = scores.arc.detach().clone().requires_grad_(track)
    c_t, pat = _penalty_args(penalty, n, K)
    pen = None if c_t is None else (c_t * pat)[None]
    offset = torch.zeros(1, n, n, n, dtype=DTYPE, requires_grad=track) if sr is not MaxSemiring else None
    with torch.set_grad_enabled(track):
        w_att, w_cont = span_weights(sr, span[None], allowed[None], pen)
        root, H, Hc, P, bp = eisner_satta_batch(
            w_att, w_cont, arc[None], sr, head_offset=offset, backptr=(sr is MaxSemiring)
        )
    chart = Chart(
        semiring=sr.name, n=n, root=root, H=H, Hc=Hc, P=P, backptr=bp, scheme=scheme,
        leaves={"span": span, "arc": arc, "head": offset, "c": c_t, "allowed": allowed,
                "pen": pat, "scores": scores},
    )
    value = root[:, 0].detach()  # the chart keeps the graph for reverse passes
    if sr is KLSemiring:
        return (_finite_or_ninf(value[0]), value[1]), chart
    return _finite_or_ninf(value[0]), chart


def masked_log_numerator(scores: ScoreSet, mask: MaskPlan, scheme: str = "01") -> torch.Tensor:
    """``log`` of the summed weight of trees compatible with the gold entities."""
    value, _ = inside_eisner_satta(scores, mask, semiring="log", scheme=scheme, track=False)
    if torch.isinf(value):
        raise AnnotationError("no tree is compatible with the gold entities")
    return value


def inside_cyk(scores: ScoreSet, mode="free", semiring="log", scheme: str = "01",
               track: bool = True):
    """Unlexicalized counterpart: sums binary bracketings, arcs ignored."""
    sr = get_semiring(semiring)
    n, K = scores.n, scores.span.shape[-1]
    plan = _mode_plan(mode, n)
    allowed = allowed_channels(n, K, scheme, plan)
    span = scores.span.detach().clone().requires_grad_(track)
    with torch.set_grad_enabled(track):
        w_att, _ = span_weights(sr, span[None], allowed[None])
        root, beta, bp = cyk_batch(w_att, sr, backptr=(sr is MaxSemiring))
    chart = Chart(semiring=sr.name, n=n, root=root, beta=beta, backptr=bp, scheme=scheme,
                  lexicalized=False,
                  leaves={"span": span, "allowed": allowed, "scores": scores})
    return _finite_or_ninf(root[0, 0].detach()), chart
