"""Labeled span metrics, head metrics and error breakdown."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .errors import ParameterError

MISS = "<miss>"


def _entities(item):
    """Entities of a record, a prediction, or a plain list."""
    return list(getattr(item, "entities", item))


def _units(entities):
    return {(e.start, e.end, lab) for e in entities for lab in e.labels}


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    head_accuracy: Optional[float] = None
    shared_head_count: int = 0
    n_gold: int = 0
    n_pred: int = 0
    n_correct: int = 0
    confusion: dict = field(default_factory=dict)  # gold label -> Counter(pred label | MISS)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "head_accuracy": self.head_accuracy, "shared_head_count": self.shared_head_count,
            "n_gold": self.n_gold, "n_pred": self.n_pred, "n_correct": self.n_correct,
            "confusion": {g: dict(sorted(row.items())) for g, row in sorted(self.confusion.items())},
        }


def prf(n_correct: int, n_pred: int, n_gold: int):
    p = n_correct / n_pred if n_pred else 0.0
    r = n_correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def head_metrics(pred, gold):
    """``(head_accuracy or None, shared_head_count)`` over aligned sentence lists."""
    if len(pred) != len(gold):
        raise ParameterError(f"{len(pred)} predictions for {len(gold)} gold sentences")
    right = total = shared = 0
    for p_item, g_item in zip(pred, gold):
        p_ents, g_ents = _entities(p_item), _entities(g_item)
        gold_heads = {e.span: e.head for e in g_ents if e.head is not None}
        for e in p_ents:
            if e.end > e.start and e.span in gold_heads and e.head is not None:
                total += 1
                right += int(e.head == gold_heads[e.span])
        heads = Counter(e.head for e in p_ents if e.head is not None)
        shared += sum(c for c in heads.values() if c > 1)
    return (right / total if total else None), shared


def confusion_matrix(pred, gold) -> dict:
    """Per gold unit: the predicted label on the same span (or a miss).

    A gold unit whose label is also predicted on that span counts as correct;
    otherwise it is charged to the first (sorted) other label predicted on
    that span, or to the miss column, so each row sums to the gold count.
    """
    table: dict = {}
    for p_item, g_item in zip(pred, gold):
        p_labels = {}
        for e in _entities(p_item):
            p_labels.setdefault(e.span, set()).update(e.labels)
        for e in _entities(g_item):
            got = p_labels.get(e.span, set())
            for lab in e.labels:
                row = table.setdefault(lab, Counter())
                if lab in got:
                    row[lab] += 1
                else:
                    wrong = sorted(got - e.labels)
                    row[wrong[0] if wrong else MISS] += 1
    return table


def metrics_f1(pred, gold) -> EvalReport:
    """Labeled P/R/F1 with a ``(span, label)`` unit of credit."""
    if len(pred) != len(gold):
        raise ParameterError(f"{len(pred)} predictions for {len(gold)} gold sentences")
    n_pred = n_gold = n_correct = 0
    for p_item, g_item in zip(pred, gold):
        pu, gu = _units(_entities(p_item)), _units(_entities(g_item))
        n_pred += len(pu)
        n_gold += len(gu)
        n_correct += len(pu & gu)
    p, r, f = prf(n_correct, n_pred, n_gold)
    acc, shared = head_metrics(pred, gold)
    return EvalReport(p, r, f, acc, shared, n_gold, n_pred, n_correct, confusion_matrix(pred, gold))


def evaluate_model(model, records, batch_size: int = 64) -> EvalReport:
    from .decode import predict

    preds = predict(model, [r.tokens for r in records], batch_size)
    return metrics_f1(preds, records)
