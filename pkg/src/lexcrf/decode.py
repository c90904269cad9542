"""Two-stage prediction.

Stage I finds the best 0-1 labeled lexicalized tree with the max semiring and
reads entity spans (label 1) and their heads off it. Stage II types every
entity span with the head-aware label scorer.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import torch

from .chart import allowed_channels, cyk_batch, eisner_satta_batch, penalty_pattern, span_weights
from .errors import LexCRFError, ParameterError
from .semiring import NEG, LogSemiring, MaxSemiring
from .types import DTYPE, Entity, ScoreSet

ATT, CONT = "att", "cont"


class Constituent(NamedTuple):
    i: int
    j: int
    label: int
    head: Optional[int]
    role: str = ATT


@dataclass
class LexTree:
    n: int
    constituents: list
    arcs: set = field(default_factory=set)   # (parent, child); parent n is the root
    score: float = 0.0
    lexicalized: bool = True

    def spans(self) -> set:
        return {(c.i, c.j) for c in self.constituents}

    def entity_constituents(self) -> list:
        return [c for c in self.constituents if c.label != 0]

    def validate(self) -> "LexTree":
        n = self.n
        cons = {(c.i, c.j): c for c in self.constituents}
        if len(self.constituents) != 2 * n - 1 or len(cons) != len(self.constituents):
            raise LexCRFError(f"expected {2 * n - 1} distinct constituents")
        if (0, n - 1) not in cons or any((k, k) not in cons for k in range(n)):
            raise LexCRFError("missing root or leaf constituent")
        for (i, j), c in cons.items():
            if self.lexicalized and not i <= c.head <= j:
                raise LexCRFError(f"head {c.head} outside ({i}, {j})")
            if i == j:
                if self.lexicalized and c.head != i:
                    raise LexCRFError("leaf must head itself")
                continue
            splits = [r for r in range(i, j) if (i, r) in cons and (r + 1, j) in cons]
            if len(splits) != 1:
                raise LexCRFError(f"constituent ({i}, {j}) is not binary")
            if self.lexicalized:
                left, right = cons[(i, splits[0])], cons[(splits[0] + 1, j)]
                if (left.head == c.head) == (right.head == c.head):
                    raise LexCRFError(f"({i}, {j}) must inherit exactly one child's head")
        if self.lexicalized:
            children = sorted(ch for _, ch in self.arcs)
            if children != list(range(n)):
                raise LexCRFError("arcs must give every token exactly one parent")
            if sum(1 for p, _ in self.arcs if p == n) != 1:
                raise LexCRFError("exactly one root arc expected")
            induced = {(n, cons[(0, n - 1)].head)}
            for (i, j), c in cons.items():
                if i < j:
                    r = next(r for r in range(i, j) if (i, r) in cons and (r + 1, j) in cons)
                    dep = cons[(i, r)] if cons[(i, r)].head != c.head else cons[(r + 1, j)]
                    induced.add((c.head, dep.head))
            if induced != set(self.arcs):
                raise LexCRFError("arcs disagree with the constituent heads")
        return self


@dataclass
class Prediction:
    entities: list   # list[Entity] with label names

    def spans(self):
        return {e.span for e in self.entities}


# ---------------------------------------------------------------------------
# stage I
# ---------------------------------------------------------------------------

def _best_channel(row, allowed_row):
    masked = row.masked_fill(~allowed_row, NEG)
    return int(masked.argmax())


def viterbi_batch(span: torch.Tensor, arc: Optional[torch.Tensor], scheme: str = "01",
                  decode_penalty: float = 0.0, lexicalized: bool = True) -> list[LexTree]:
    """Best trees for a batch of equal-length sentences (``span [B, n, n, K]``)."""
    span = span.detach()
    B, n, _, K = span.shape
    allowed = allowed_channels(n, K, scheme)[None].expand(B, n, n, K)
    pen = None
    if decode_penalty < 0:
        raise ParameterError("decode penalty must be >= 0")
    if decode_penalty > 0 and lexicalized:
        pen = decode_penalty * penalty_pattern(n, K, "all")[None].expand(B, n, n, K)
    w_att, w_cont = span_weights(MaxSemiring, span, allowed, pen)
    if not lexicalized:
        root, _, bp = cyk_batch(w_att, MaxSemiring, backptr=True)
        return [_cyk_tree(b, n, span, allowed, w_att[0], bp["split"]) for b in range(B)]
    root, _, _, _, bp = eisner_satta_batch(w_att, w_cont, arc.detach(), MaxSemiring, backptr=True)
    pen_sub = pen if pen is not None else torch.zeros_like(span)
    trees = []
    for b in range(B):
        tree = _lex_tree(b, n, span[b], pen_sub[b], allowed[b], w_att[0, b], w_cont[0, b],
                         arc[b].detach(), bp["split"][b].tolist(), bp["attach"][b].tolist())
        trees.append(tree)
    return trees


def _lex_tree(b, n, span, pen, allowed, w_att, w_cont, arc, split, attach):
    w_att, w_cont, arc = w_att.tolist(), w_cont.tolist(), arc.tolist()
    cons, arcs = [], set()

    def visit(i, j, h, role):
        # returns the item value in the same addition order as the inside pass
        row = span[i, j] - pen[i, j] if role == CONT else span[i, j]
        cons.append(Constituent(i, j, _best_channel(row, allowed[i, j]), h, role))
        w = w_cont[i][j] if role == CONT else w_att[i][j]
        if i == j:
            return w
        idx = split[i][j][h]
        r, kind = i + idx // 2, idx % 2
        if kind == 0:
            child = attach[i][r][h]
            arcs.add((h, child))
            inner = (visit(i, r, child, ATT) + arc[h][child]) + visit(r + 1, j, h, CONT)
        else:
            child = attach[r + 1][j][h]
            arcs.add((h, child))
            inner = visit(i, r, h, CONT) + (visit(r + 1, j, child, ATT) + arc[h][child])
        return inner + w

    top = attach[0][n - 1][n]
    arcs.add((n, top))
    score = visit(0, n - 1, top, ATT) + arc[n][top]
    cons.sort(key=lambda c: (c.i, -c.j))
    return LexTree(n, cons, arcs, score, True)


def _cyk_tree(b, n, span, allowed, w_att, split):
    w, sp = w_att[b].tolist(), split[b].tolist()
    cons = []

    def visit(i, j):
        cons.append(Constituent(i, j, _best_channel(span[b, i, j], allowed[b, i, j]), None))
        if i == j:
            return w[i][j]
        r = i + sp[i][j]
        return (visit(i, r) + visit(r + 1, j)) + w[i][j]

    score = visit(0, n - 1)
    cons.sort(key=lambda c: (c.i, -c.j))
    return LexTree(n, cons, set(), score, False)


def viterbi_lexicalized(scores: ScoreSet, decode_penalty=None, scheme: str = "01") -> LexTree:
    """Best tree for one sentence; ``decode_penalty`` is ``c`` or ``(c, "all")``."""
    c = 0.0
    if decode_penalty is not None:
        c, targets = decode_penalty if isinstance(decode_penalty, tuple) else (decode_penalty, "all")
        if targets != "all":
            raise ParameterError("decode-time penalty only targets all spans")
    return viterbi_batch(scores.span[None], scores.arc[None], scheme, float(c))[0]


def viterbi_cyk(scores: ScoreSet, scheme: str = "01") -> LexTree:
    return viterbi_batch(scores.span[None], None, scheme, lexicalized=False)[0]


# ---------------------------------------------------------------------------
# stage II
# ---------------------------------------------------------------------------

def choose_labels(label_scores, null_label: bool = False) -> list[int]:
    """Labels scoring above 0, else the single best one.

    With ``null_label`` index 0 is the empty label: the span is dropped when it
    outscores every entity label; returned ids are shifted back by one.
    """
    s = torch.as_tensor(label_scores, dtype=DTYPE)
    if null_label:
        if int(s.argmax()) == 0:
            return []
        s = s[1:]
    picked = [l for l in range(s.shape[0]) if s[l] > 0]
    return picked or [int(s.argmax())]


def label_entities(tree: LexTree, label_scorer: Callable, labels: Optional[Sequence] = None,
                   null_label: bool = False) -> Prediction:
    """Type every label-1 constituent using ``label_scorer(i, j, h)``."""
    out = []
    for c in tree.entity_constituents():
        ids = choose_labels(label_scorer(c.i, c.j, c.head), null_label)
        if not ids:
            continue
        names = frozenset(labels[l] if labels is not None else l for l in ids)
        out.append(Entity(c.i, c.j, names, c.head))
    return Prediction(sorted(out, key=lambda e: (e.start, -e.end)))


# ---------------------------------------------------------------------------
# model-level prediction
# ---------------------------------------------------------------------------

def _free_head_marginals(span, arc, scheme):
    B, n, _, K = span.shape
    allowed = allowed_channels(n, K, scheme)[None].expand(B, n, n, K)
    offset = torch.zeros(B, n, n, n, dtype=DTYPE, requires_grad=True)
    with torch.enable_grad():
        w_att, _ = span_weights(LogSemiring, span, allowed)
        root, *_ = eisner_satta_batch(w_att, w_att, arc, LogSemiring, head_offset=offset)
        (mu,) = torch.autograd.grad(root[0].sum(), [offset])
    return mu


def _candidates(model, span, arc):
    """Per-sentence lists of ``(i, j, head, channel)`` entity candidates."""
    cfg = model.config
    B, n = span.shape[0], span.shape[1]
    if cfg.parsing:
        trees = viterbi_batch(span, arc, cfg.scheme, cfg.decode_penalty, cfg.lex)
        return [[(c.i, c.j, c.head, c.label) for c in t.entity_constituents()] for t in trees]
    # local span decisions, no tree
    if cfg.scheme == "unlabeled":
        keep = span[..., 1] > 0
        chan = torch.ones_like(keep, dtype=torch.long)
    else:
        best = span.argmax(-1)
        keep, chan = best != 0, best
    mu = _free_head_marginals(span, arc, cfg.scheme) if cfg.lex else None
    out = []
    for b in range(B):
        cands = []
        for i in range(n):
            for j in range(i, n):
                if keep[b, i, j]:
                    h = i + int(mu[b, i, j, i:j + 1].argmax()) if mu is not None else None
                    cands.append((i, j, h, int(chan[b, i, j])))
        out.append(cands)
    return out


@torch.no_grad()
def predict(model, token_lists: Sequence[Sequence[str]], batch_size: int = 64) -> list[Prediction]:
    """Predictions for many sentences, batched by length; order preserved."""
    by_len = defaultdict(list)
    for idx, toks in enumerate(token_lists):
        if len(toks) == 0:
            raise ParameterError("cannot decode an empty sentence")
        by_len[len(toks)].append(idx)
    results: list = [None] * len(token_lists)
    for n in sorted(by_len):
        group = by_len[n]
        for s in range(0, len(group), batch_size):
            chunk = group[s:s + batch_size]
            preds = _predict_chunk(model, [token_lists[k] for k in chunk])
            for k, p in zip(chunk, preds):
                results[k] = p
    return results


def _predict_chunk(model, token_lists):
    cfg = model.config
    ids = model.encode(token_lists)
    span, arc, rep = model.scores(ids)
    cands = _candidates(model, span, arc)
    if cfg.scheme == "labeled":
        return [Prediction(sorted(
            (Entity(i, j, frozenset([model.labels[ch - 1]]), h) for i, j, h, ch in cs),
            key=lambda e: (e.start, -e.end))) for cs in cands]
    # stage II over all (sentence, span, head) triples at once
    bs, is_, js, hs, owner = [], [], [], [], []
    for b, cs in enumerate(cands):
        for ci, (i, j, h, _) in enumerate(cs):
            heads = [h] if h is not None else list(range(i, j + 1))
            for k in heads:
                bs.append(b); is_.append(i); js.append(j); hs.append(k); owner.append((b, ci))
    scores = model.scorer.score_label_triples(rep, bs, is_, js, hs) if bs else None
    pooled = defaultdict(list)
    for row, key in enumerate(owner):
        pooled[key].append(scores[row])
    preds = []
    for b, cs in enumerate(cands):
        ents = []
        for ci, (i, j, h, _) in enumerate(cs):
            s = torch.stack(pooled[(b, ci)]).mean(0)  # mean over heads when unlexicalized
            ids_ = choose_labels(s, model.null_label)
            if ids_:
                ents.append(Entity(i, j, frozenset(model.labels[l] for l in ids_), h))
        preds.append(Prediction(sorted(ents, key=lambda e: (e.start, -e.end))))
    return preds


def decode_sentence(sentence, model) -> Prediction:
    tokens = getattr(sentence, "tokens", sentence)
    return predict(model, [list(tokens)])[0]
