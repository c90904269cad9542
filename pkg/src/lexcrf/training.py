"""Mini-batch training: Adam, warmup + linear decay, best-dev selection."""
from __future__ import annotations

import json
import math
import sys
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .config import TrainConfig
from .data import label_inventory
from .errors import LexCRFError, ParameterError
from .evaluate import evaluate_model
from .losses import batch_loss
from .model import LexNERModel, Vocab


class TrainingAborted(LexCRFError):
    pass


def lr_schedule(step: int, total: int, warmup: int) -> float:
    """Multiplier: linear 0 -> 1 over ``warmup`` steps, then 1 -> 0 at ``total``."""
    if not 0 <= step <= total:
        raise ParameterError(f"step {step} outside [0, {total}]")
    if warmup > 0 and step < warmup:
        return step / warmup
    if total == warmup:
        return 1.0 if step < total else 0.0
    return max(0.0, (total - step) / (total - warmup))


def adam_init(params: dict) -> dict:
    return {
        "step": 0,
        "m": {k: torch.zeros_like(v) for k, v in params.items()},
        "v": {k: torch.zeros_like(v) for k, v in params.items()},
    }


@torch.no_grad()
def adam_step(params: dict, grads: dict, state: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict:
    """In-place Adam update of ``params`` (name -> tensor); returns ``state``."""
    bad = [k for k, g in grads.items() if not torch.isfinite(g).all()]
    if bad:
        raise TrainingAborted(f"non-finite gradient in {', '.join(sorted(bad))} at step {state['step'] + 1}")
    state["step"] += 1
    t = state["step"]
    c1, c2 = 1 - beta1 ** t, 1 - beta2 ** t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ParameterError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {k}")
        m, v = state["m"][k], state["v"][k]
        m.mul_(beta1).add_(g, alpha=1 - beta1)
        v.mul_(beta2).addcmul_(g, g, value=1 - beta2)
        p.sub_(lr * (m / c1) / ((v / c2).sqrt() + eps))
    return state


def clip_grads(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g.mul_(scale)
    return norm


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: list
    labels: list
    params: dict                       # name -> float64 tensor
    optimizer: dict = field(default_factory=dict)
    dev_f1: float = 0.0
    epoch: int = 0
    history: list = field(default_factory=list)

    def model(self) -> LexNERModel:
        m = LexNERModel(self.config, Vocab(self.vocab), self.labels)
        with torch.no_grad():
            for name, p in m.named_parameters():
                p.copy_(self.params[name])
        return m


def snapshot(model: LexNERModel, state: dict, dev_f1: float, epoch: int, history=()) -> Checkpoint:
    return Checkpoint(
        config=model.config, vocab=list(model.vocab.words), labels=list(model.labels),
        params={k: v.detach().clone() for k, v in model.named_parameters()},
        optimizer={"step": state["step"],
                   "m": {k: v.clone() for k, v in state["m"].items()},
                   "v": {k: v.clone() for k, v in state["v"].items()}},
        dev_f1=dev_f1, epoch=epoch, history=list(history),
    )


def length_batches(records, batch_size: int, rng: np.random.Generator) -> list:
    """Shuffled batches of equal-length sentences."""
    by_len = defaultdict(list)
    for idx, rec in enumerate(records):
        by_len[rec.n].append(idx)
    batches = []
    for n in sorted(by_len):
        idx = by_len[n]
        order = rng.permutation(len(idx))
        idx = [idx[k] for k in order]
        batches.extend(idx[s:s + batch_size] for s in range(0, len(idx), batch_size))
    order = rng.permutation(len(batches))
    return [batches[k] for k in order]


def train(config: TrainConfig, train_set, dev_set, metrics_path=None, stream=sys.stdout,
          time_budget: Optional[float] = None) -> Checkpoint:
    """Train and return the checkpoint with the best dev labeled F1.

    Each epoch writes one JSON record to ``stream`` and ``metrics_path``.
    ``time_budget`` (seconds) stops training early after the epoch in which
    it is exceeded.
    """
    if not train_set:
        raise ParameterError("empty training set")
    config.validate()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    labels = label_inventory(list(train_set) + list(dev_set))
    model = LexNERModel(config, Vocab.build(train_set), labels)
    params = dict(model.named_parameters())
    state = adam_init(params)

    n_batches = len(length_batches(train_set, config.batch_size, np.random.default_rng(0)))
    total = config.epochs * n_batches
    warmup = config.warmup_epochs * n_batches
    best: Optional[Checkpoint] = None
    history = []
    metrics_fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    start = time.perf_counter()
    try:
        for epoch in range(1, config.epochs + 1):
            sums = defaultdict(float)
            for batch in length_batches(train_set, config.batch_size, rng):
                records = [train_set[k] for k in batch]
                loss, report = batch_loss(model, records, config)
                if not torch.isfinite(loss):
                    raise TrainingAborted(f"non-finite loss at step {state['step'] + 1}")
                grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
                grads = {k: (g if g is not None else torch.zeros_like(p))
                         for (k, p), g in zip(params.items(), grads)}
                clip_grads(grads, config.clip)
                lr = config.lr * lr_schedule(state["step"] + 1, total, warmup)
                adam_step(params, grads, state, lr, config.beta1, config.beta2, config.adam_eps)
                w = len(records)
                sums["n"] += w
                for key in ("l_tree", "l_label", "l_reg", "total"):
                    sums[key] += getattr(report, key) * w
            dev = evaluate_model(model, dev_set) if dev_set else None
            dev_f1 = dev.f1 if dev else 0.0
            record = {
                "epoch": epoch,
                **{k: sums[k] / sums["n"] for k in ("l_tree", "l_label", "l_reg", "total")},
                "dev_f1": dev_f1,
                "dev_precision": dev.precision if dev else None,
                "dev_recall": dev.recall if dev else None,
                "lr": lr,
                "elapsed": round(time.perf_counter() - start, 3),
            }
            history.append(record)
            line = json.dumps(record)
            if stream is not None:
                print(line, file=stream, flush=True)
            if metrics_fh:
                metrics_fh.write(line + "\n")
                metrics_fh.flush()
            if best is None or dev_f1 > best.dev_f1:
                best = snapshot(model, state, dev_f1, epoch)
            if time_budget is not None and time.perf_counter() - start > time_budget:
                break
    finally:
        if metrics_fh:
            metrics_fh.close()
    best.history = history
    return best
