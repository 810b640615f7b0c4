"""Confusion-matrix scoring of classified streams against ground truth."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

from .errors import LengthMismatch, WindowOutOfRange
from .regions import ClassifiedPoint, Label

RFI_LABELS = frozenset({Label.JAMMING, Label.SPOOFING})
SPOOF_LABELS = frozenset({Label.SPOOFING})
TABLE_COLUMNS = ("Test", "True Positive", "False Positive", "False Negative", "True Negative",
                 "Sensitivity", "Specificity", "Accuracy")


def as_label(value) -> Label:
    """Normalise a label, attributing signal loss to its cause.

    Accepts :class:`Label`, :class:`ClassifiedPoint` or text such as
    ``"SignalLoss/Jamming"``.
    """
    if isinstance(value, ClassifiedPoint):
        return value.resolved
    if isinstance(value, Label):
        return value
    text = str(value)
    if "/" in text:
        text = text.split("/", 1)[1]
    return Label(text)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @staticmethod
    def _ratio(num: int, den: int) -> float | None:
        return num / den if den else None

    @property
    def sensitivity(self) -> float | None:
        return self._ratio(self.tp, self.tp + self.fn)

    @property
    def specificity(self) -> float | None:
        return self._ratio(self.tn, self.tn + self.fp)

    @property
    def accuracy(self) -> float | None:
        return self._ratio(self.tp + self.tn, self.total)


def percent(ratio: float | None) -> str | None:
    """Ratio as a percentage string, half-up to one decimal (``0.99777 -> '99.8'``)."""
    if ratio is None:
        return None
    return str((Decimal(repr(ratio)) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass
class DetectionReport:
    matrix: ConfusionMatrix
    name: str = "all"
    positive_set: frozenset = RFI_LABELS

    @property
    def sensitivity(self):
        return self.matrix.sensitivity

    @property
    def specificity(self):
        return self.matrix.specificity

    @property
    def accuracy(self):
        return self.matrix.accuracy

    def row(self) -> dict:
        m = self.matrix
        return {
            "name": self.name,
            "tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "accuracy": self.accuracy,
            "sensitivity_pct": percent(self.sensitivity),
            "specificity_pct": percent(self.specificity),
            "accuracy_pct": percent(self.accuracy),
        }


def score_detection(pred: Sequence, truth: Sequence, positive_set: Iterable = RFI_LABELS,
                    name: str = "all") -> DetectionReport:
    pred = list(pred)
    truth = list(truth)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truth labels")
    pos = frozenset(as_label(p) for p in positive_set)
    tp = fp = fn = tn = 0
    for p, t in zip(pred, truth):
        pp = as_label(p) in pos
        tt = as_label(t) in pos
        if pp and tt:
            tp += 1
        elif pp:
            fp += 1
        elif tt:
            fn += 1
        else:
            tn += 1
    return DetectionReport(ConfusionMatrix(tp, fp, fn, tn), name, pos)


def window_slice(times: Sequence[float], pred: Sequence, truth: Sequence, windows: Iterable[tuple],
                 epoch: float | None = None) -> dict:
    """Half-open ``[t0, t1)`` sub-streams keyed by window name.

    Windows must lie within ``[times[0], times[-1] + epoch]``; ``epoch``
    defaults to the median spacing of ``times``.
    """
    times = list(times)
    if not (len(times) == len(pred) == len(truth)):
        raise LengthMismatch("times, pred and truth must align")
    if epoch is None:
        gaps = sorted(b - a for a, b in zip(times, times[1:]))
        epoch = gaps[len(gaps) // 2] if gaps else 0.0
    lo = times[0] if times else 0.0
    hi = (times[-1] + epoch) if times else 0.0
    tol = 1e-9 * max(1.0, abs(hi))
    out = {}
    for t0, t1, name in windows:
        if t1 < t0 or t0 < lo - tol or t1 > hi + tol:
            raise WindowOutOfRange(f"window {name!r} [{t0}, {t1}) outside stream [{lo}, {hi}]")
        idx = [k for k, t in enumerate(times) if t0 <= t < t1]
        out[name] = ([pred[k] for k in idx], [truth[k] for k in idx])
    return out


@dataclass
class EvaluationReport:
    reports: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"windows": [r.row() | {"positive_set": sorted(l.value for l in r.positive_set)}
                            for r in self.reports]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in self.reports:
            row = r.row()
            cells = [r.name, row["tp"], row["fp"], row["fn"], row["tn"]]
            for key in ("sensitivity_pct", "specificity_pct", "accuracy_pct"):
                cells.append("-" if row[key] is None else f"{row[key]}%")
            w.writerow(cells)
        return buf.getvalue()
