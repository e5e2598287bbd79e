"""Confusion matrices and accuracy / precision / recall / F1 reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError

AVERAGING = ("weighted", "macro", "positive_class")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    averaging: str = "weighted"
    zero_division: bool = False

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        doc = {
            "summary": {k: round(getattr(self, k), 4) for k in ("accuracy", "precision", "recall", "f1")},
            "metrics": self.to_dict(),
        }
        return json.dumps(doc, indent=2)


def confusion(preds, labels) -> ConfusionMatrix:
    preds = np.asarray(preds).astype(np.int64).ravel()
    labels = np.asarray(labels).astype(np.int64).ravel()
    if preds.shape != labels.shape:
        raise ValidationError(f"length mismatch: {preds.size} predictions vs {labels.size} labels")
    if preds.size == 0:
        raise ValidationError("empty input")
    return ConfusionMatrix(
        tp=int(np.sum((preds == 1) & (labels == 1))),
        fp=int(np.sum((preds == 1) & (labels == 0))),
        tn=int(np.sum((preds == 0) & (labels == 0))),
        fn=int(np.sum((preds == 0) & (labels == 1))),
    )


def _ratio(num, den, flags):
    if den == 0:
        flags.append(True)
        return Fraction(0)
    return Fraction(num, den)


def _per_class(hit, predicted, actual, flags):
    p = _ratio(hit, predicted, flags)
    r = _ratio(hit, actual, flags)
    f = Fraction(0) if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def evaluate(cm: ConfusionMatrix, averaging: str = "weighted") -> EvalReport:
    """Metrics from a confusion matrix.

    Per-class values are computed exactly (rational arithmetic) and then
    combined. Under "weighted", each class is weighted by its label
    support, which makes recall identical to accuracy. 0/0 ratios are 0 and
    set `zero_division`.
    """
    if averaging not in AVERAGING:
        raise ValidationError(f"unknown averaging {averaging!r}")
    n = cm.total
    if n <= 0:
        raise ValidationError("confusion matrix is empty")
    acc = Fraction(cm.tp + cm.tn, n)
    support = {1: cm.tp + cm.fn, 0: cm.tn + cm.fp}
    flags = []
    pos = _per_class(cm.tp, cm.tp + cm.fp, support[1], flags)
    if averaging == "positive_class":
        p, r, f = pos
    else:
        neg = _per_class(cm.tn, cm.tn + cm.fn, support[0], flags)
        if averaging == "weighted":
            w1, w0 = Fraction(support[1], n), Fraction(support[0], n)
            p, r, f = (w1 * a + w0 * b for a, b in zip(pos, neg))
        else:
            present = [c for c, s in ((pos, support[1] + cm.fp), (neg, support[0] + cm.fn)) if s > 0]
            p, r, f = (sum(vals, Fraction(0)) / len(present) for vals in zip(*present))
    return EvalReport(float(acc), float(p), float(r), float(f), averaging, bool(flags))
