"""Trainable scorer producing span, arc and label scores.

A windowed context mixer stands in for a deep recurrent encoder: each padded
position gets a forward output (window to the left) and a backward output
(window to the right). Span boundaries pair the forward output at fencepost
``i`` with the backward output at ``i + 1``; heads pair both outputs at the
token itself. Biaffine heads score spans and arcs, per-label triaffine tensors
score (span, head) labelings.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ParameterError, UsageError
from .types import DTYPE

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>")


@dataclass
class ScorerConfig:
    vocab_size: int
    n_labels: int
    d_emb: int = 64
    hidden: int = 64
    window: int = 2
    k: int = 100
    k_label: int = 32
    span_channels: int = 2


@dataclass
class BoundaryRepr:
    fence: torch.Tensor   # [B, n+1, 2*hidden]; fence i sits before token i
    head: torch.Tensor    # [B, n, 2*hidden]
    cache: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.head.shape[1]


def bias_augment(x: torch.Tensor) -> torch.Tensor:
    return torch.cat([x, torch.ones_like(x[..., :1])], dim=-1)


def biaffine(x_in: torch.Tensor, x_out: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """``[x_in; 1]^T W [x_out; 1]`` for every (in, out) pair.

    ``x_in``: ``[B, n, k]``, ``x_out``: ``[B, m, k]``; ``weight`` is
    ``[k+1, C, k+1]`` (returns ``[B, n, m, C]``) or ``[k+1, k+1]`` (``[B, n, m]``).
    """
    a, b = bias_augment(x_in), bias_augment(x_out)
    if weight.dim() == 3:
        return torch.einsum("bia,acd,bjd->bijc", a, weight, b)
    return torch.einsum("bia,ad,bjd->bij", a, weight, b)


def triaffine(x: torch.Tensor, y: torch.Tensor, z: torch.Tensor, weight: torch.Tensor) -> torch.Tensor:
    """Per-label trilinear form over bias-augmented ``[T, k]`` inputs.

    ``weight`` is ``[L, k+1, k+1, k+1]``; returns ``[T, L]``.
    """
    x, y, z = bias_augment(x), bias_augment(y), bias_augment(z)
    L, k1 = weight.shape[0], weight.shape[1]
    outer = (x[:, :, None] * y[:, None, :]).reshape(x.shape[0], k1 * k1)
    w = weight.permute(1, 2, 0, 3).reshape(k1 * k1, L * k1)
    v = (outer @ w).reshape(x.shape[0], L, k1)
    return (v * z[:, None, :]).sum(-1)


def potential_normalize(x: torch.Tensor, valid: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Standardize ``x`` per leading batch item over its ``valid`` entries.

    Population statistics; an item whose std falls below ``eps`` maps to zeros.
    Invalid entries are returned as zeros.
    """
    valid = valid.expand_as(x)
    batch = x.shape[0]
    flat_x = x.reshape(batch, -1)
    flat_v = valid.reshape(batch, -1).to(x.dtype)
    count = flat_v.sum(-1)
    if (count == 0).any():
        raise ParameterError("potential normalization needs at least one valid entry")
    mean = (flat_x * flat_v).sum(-1) / count
    centred = (flat_x - mean[:, None]) * flat_v
    var = (centred ** 2).sum(-1) / count
    degenerate = var < eps ** 2
    std = torch.sqrt(torch.where(degenerate, torch.ones_like(var), var))
    out = centred / std[:, None]
    out = torch.where(degenerate[:, None], torch.zeros_like(out), out)
    return out.reshape(x.shape)


class MLP(nn.Module):
    def __init__(self, d_in, d_out):
        super().__init__()
        self.linear = nn.Linear(d_in, d_out, dtype=DTYPE)

    def forward(self, x):
        return torch.tanh(self.linear(x))


class Scorer(nn.Module):
    def __init__(self, config: ScorerConfig, seed: int = 0):
        super().__init__()
        self.config = config
        c = config
        gen = torch.Generator().manual_seed(seed)
        win = (c.window + 1) * c.d_emb
        self.embed = nn.Embedding(c.vocab_size, c.d_emb, dtype=DTYPE)
        self.mix_fwd = nn.Linear(win, c.hidden, dtype=DTYPE)
        self.mix_bwd = nn.Linear(win, c.hidden, dtype=DTYPE)
        d = 2 * c.hidden
        self.mlp_c_in, self.mlp_c_out = MLP(d, c.k), MLP(d, c.k)
        self.mlp_d_in, self.mlp_d_out = MLP(d, c.k), MLP(d, c.k)
        self.mlp_l_in, self.mlp_l_out, self.mlp_l_head = MLP(d, c.k_label), MLP(d, c.k_label), MLP(d, c.k_label)
        self.w_span = nn.Parameter(torch.zeros(c.k + 1, c.span_channels, c.k + 1, dtype=DTYPE))
        self.w_arc = nn.Parameter(torch.zeros(c.k + 1, c.k + 1, dtype=DTYPE))
        self.w_root = nn.Parameter(torch.zeros(c.k + 1, dtype=DTYPE))
        self.w_label = nn.Parameter(torch.zeros(c.n_labels, c.k_label + 1, c.k_label + 1, c.k_label + 1, dtype=DTYPE))
        self._init(gen)

    def _init(self, gen):
        for name, p in self.named_parameters():
            with torch.no_grad():
                if name.startswith("embed"):
                    p.copy_(torch.randn(p.shape, generator=gen, dtype=DTYPE) * 0.5)
                elif name.endswith("bias"):
                    p.zero_()
                elif p.dim() == 2 and "linear" in name or name.startswith("mix"):
                    bound = (6.0 / (p.shape[0] + p.shape[1])) ** 0.5
                    p.copy_((torch.rand(p.shape, generator=gen, dtype=DTYPE) * 2 - 1) * bound)
                else:
                    p.copy_(torch.randn(p.shape, generator=gen, dtype=DTYPE) * 0.05)

    # -- encoder --------------------------------------------------------------
    def encode(self, ids: torch.Tensor) -> BoundaryRepr:
        """``ids``: ``[B, n]`` vocabulary ids (``UNK`` for unknown tokens)."""
        ids = torch.as_tensor(ids, dtype=torch.long)
        if ids.dim() == 1:
            ids = ids[None]
        B, n = ids.shape
        w = self.config.window
        bos = torch.full((B, 1), BOS, dtype=torch.long)
        eos = torch.full((B, 1), EOS, dtype=torch.long)
        pad = torch.full((B, w), PAD, dtype=torch.long)
        padded = torch.cat([pad, bos, ids, eos, pad], dim=1)  # position p of [bos, x, eos] at p + w
        emb = self.embed(padded)                              # [B, n+2+2w, d]
        windows = emb.unfold(1, w + 1, 1)                     # [B, n+2+w, d, w+1]
        windows = windows.permute(0, 1, 3, 2).reshape(B, windows.shape[1], -1)
        m = n + 2
        fwd = torch.tanh(self.mix_fwd(windows[:, :m]))        # covers p-w .. p
        bwd = torch.tanh(self.mix_bwd(windows[:, w:w + m]))   # covers p .. p+w
        fence = torch.cat([fwd[:, :n + 1], bwd[:, 1:n + 2]], dim=-1)
        head = torch.cat([fwd[:, 1:n + 1], bwd[:, 1:n + 1]], dim=-1)
        return BoundaryRepr(fence=fence, head=head)

    # -- structure scores -----------------------------------------------------
    def raw_span_scores(self, rep: BoundaryRepr) -> torch.Tensor:
        e_in = self.mlp_c_in(rep.fence[:, :-1])
        e_out = self.mlp_c_out(rep.fence[:, 1:])
        return biaffine(e_in, e_out, self.w_span)  # [B, n, n, C]

    def raw_arc_scores(self, rep: BoundaryRepr) -> torch.Tensor:
        e_in = self.mlp_d_in(rep.head)
        e_out = self.mlp_d_out(rep.head)
        arcs = biaffine(e_in, e_out, self.w_arc)               # [B, n(parent), n(child)]
        root = bias_augment(e_out) @ self.w_root                 # [B, n]
        return torch.cat([arcs, root[:, None]], dim=1)

    def score_spans(self, rep: BoundaryRepr) -> torch.Tensor:
        raw = self.raw_span_scores(rep)
        n = rep.n
        valid = torch.ones(n, n, dtype=torch.bool).triu()[None, :, :, None]
        return potential_normalize(raw, valid)

    def score_arcs(self, rep: BoundaryRepr) -> torch.Tensor:
        raw = self.raw_arc_scores(rep)
        n = rep.n
        valid = torch.ones(n + 1, n, dtype=torch.bool)
        valid[torch.arange(n), torch.arange(n)] = False
        return potential_normalize(raw, valid[None])

    # -- label scores ---------------------------------------------------------
    def label_inputs(self, rep: BoundaryRepr):
        if "label" not in rep.cache:
            rep.cache["label"] = (
                self.mlp_l_in(rep.fence[:, :-1]),
                self.mlp_l_out(rep.fence[:, 1:]),
                self.mlp_l_head(rep.head),
            )
        return rep.cache["label"]

    def score_label_triples(self, rep: BoundaryRepr, b, i, j, h) -> torch.Tensor:
        """Label scores ``[T, L]`` for triples given as index tensors."""
        e_in, e_out, e_head = self.label_inputs(rep)
        b, i, j, h = (torch.as_tensor(x, dtype=torch.long) for x in (b, i, j, h))
        if ((h < i) | (h > j)).any():
            raise ParameterError("head must lie inside its span")
        return triaffine(e_in[b, i], e_out[b, j], e_head[b, h], self.w_label)

    def score_label(self, rep: BoundaryRepr, i: int, j: int, h: int, b: int = 0) -> torch.Tensor:
        if not i <= h <= j:
            raise ParameterError(f"head {h} outside span ({i}, {j})")
        return self.score_label_triples(rep, [b], [i], [j], [h])[0]

    def forward(self, ids):
        rep = self.encode(ids)
        span, arc = self.score_spans(rep), self.score_arcs(rep)
        rep.cache["outputs"] = (span, arc)
        return span, arc, rep

    def backward_scorer(self, rep: BoundaryRepr | None, span_grad, arc_grad, retain_graph=False) -> dict:
        """Chain score gradients back to parameters via the cached forward pass."""
        if rep is None or "outputs" not in rep.cache:
            raise UsageError("backward_scorer needs the cache of a forward pass")
        span, arc = rep.cache["outputs"]
        params = dict(self.named_parameters())
        grads = torch.autograd.grad([span, arc], list(params.values()),
                                    grad_outputs=[span_grad, arc_grad],
                                    retain_graph=retain_graph, allow_unused=True)
        return {name: (g if g is not None else torch.zeros_like(p))
                for (name, p), g in zip(params.items(), grads)}
