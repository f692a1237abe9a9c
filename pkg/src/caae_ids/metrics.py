"""Confusion counts and the ER / recall / precision / F1 detection metrics.

Abnormal is the positive class. Ratios whose denominator is zero are
reported as ``None`` rather than silently becoming 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyEvalError
from .framing import ABNORMAL


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, predicted, actual) -> "Confusion":
        p = np.asarray(predicted) == ABNORMAL
        a = np.asarray(actual) == ABNORMAL
        if p.shape != a.shape:
            raise ValueError(f"prediction/label lengths differ: {p.shape} vs {a.shape}")
        return cls(
            tp=int(np.sum(p & a)),
            tn=int(np.sum(~p & ~a)),
            fp=int(np.sum(p & ~a)),
            fn=int(np.sum(~p & a)),
        )

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.tn + other.tn,
                         self.fp + other.fp, self.fn + other.fn)


@dataclass
class MetricsReport:
    confusion: Confusion
    er: float
    recall: float | None
    precision: float | None
    f1: float | None
    protocol: dict = field(default_factory=dict)

    def as_line(self) -> str:
        """``protocol,train_ratio,label_ratio,er,rec,prec,f1`` for regression tracking."""
        fields = [
            str(self.protocol.get("name", "")),
            _fmt(self.protocol.get("train_ratio")),
            _fmt(self.protocol.get("label_ratio")),
            _fmt(self.er),
            _fmt(self.recall),
            _fmt(self.precision),
            _fmt(self.f1),
        ]
        return ",".join(fields)

    def as_table(self) -> str:
        c = self.confusion
        rows = [
            ("protocol", str(self.protocol.get("name", "-"))),
            ("frames", str(c.total)),
            ("TP / TN / FP / FN", f"{c.tp} / {c.tn} / {c.fp} / {c.fn}"),
            ("ER", _pct(self.er)),
            ("Rec", _fmt(self.recall, "undefined")),
            ("Prec", _fmt(self.precision, "undefined")),
            ("F1", _fmt(self.f1, "undefined")),
        ]
        for key, value in self.protocol.items():
            if key != "name":
                rows.append((key, str(value)))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _fmt(value, missing: str = "") -> str:
    if value is None:
        return missing
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _pct(value: float) -> str:
    return f"{100 * value:.2f}%"


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def compute_metrics(confusion: Confusion, protocol: dict | None = None) -> MetricsReport:
    """ER, recall, precision and F1 from confusion counts.

    Raises:
        EmptyEvalError: all counts are zero.
    """
    c = confusion
    if c.total == 0:
        raise EmptyEvalError("cannot compute metrics over zero frames")
    er = (c.fp + c.fn) / c.total
    rec = _ratio(c.tp, c.tp + c.fn)
    prec = _ratio(c.tp, c.tp + c.fp)
    if rec is None or prec is None or rec + prec == 0:
        f1 = None
    else:
        f1 = 2 * prec * rec / (prec + rec)
    return MetricsReport(c, er, rec, prec, f1, dict(protocol or {}))


def evaluate_predictions(predicted, actual, protocol: dict | None = None) -> MetricsReport:
    return compute_metrics(Confusion.from_predictions(predicted, actual), protocol)
