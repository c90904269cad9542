"""Model bundle: vocabulary, label inventory, configuration and scorer."""
from __future__ import annotations

from typing import Sequence

import torch

from .config import TrainConfig
from .scorer import RESERVED, UNK, Scorer, ScorerConfig


class Vocab:
    def __init__(self, words: Sequence[str]):
        self.words = list(RESERVED) + [w for w in words if w not in RESERVED]
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self):
        return len(self.words)

    def encode(self, tokens) -> list[int]:
        return [self.index.get(t, UNK) for t in tokens]

    @classmethod
    def build(cls, records) -> "Vocab":
        words = sorted({t for r in records for t in r.tokens})
        return cls(words)


class LexNERModel:
    """Everything needed to score and decode one sentence batch."""

    def __init__(self, config: TrainConfig, vocab: Vocab, labels: Sequence[str]):
        self.config = config
        self.vocab = vocab
        self.labels = list(labels)
        self.label_index = {l: i for i, l in enumerate(self.labels)}
        self.scorer = Scorer(
            ScorerConfig(
                vocab_size=len(vocab),
                n_labels=self.n_label_outputs,
                d_emb=config.d_emb, hidden=config.hidden, window=config.window,
                k=config.k, k_label=config.k_label,
                span_channels=self.span_channels,
            ),
            seed=config.seed,
        )

    @property
    def span_channels(self) -> int:
        return len(self.labels) + 1 if self.config.scheme == "labeled" else 2

    @property
    def null_label(self) -> bool:
        """Stage II predicts an explicit empty label (non-0-1 two-stage)."""
        return self.config.scheme == "unlabeled"

    @property
    def n_label_outputs(self) -> int:
        return len(self.labels) + (1 if self.null_label else 0)

    def label_ids(self, names) -> frozenset:
        return frozenset(self.label_index[n] for n in names)

    def encode(self, token_lists) -> torch.Tensor:
        return torch.tensor([self.vocab.encode(t) for t in token_lists], dtype=torch.long)

    def scores(self, ids: torch.Tensor):
        return self.scorer(ids)

    def parameters(self):
        return self.scorer.parameters()

    def named_parameters(self):
        return self.scorer.named_parameters()
