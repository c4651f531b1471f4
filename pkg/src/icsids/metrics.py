"""Confusion-matrix accounting and accuracy / precision / recall / F1.

Attack is the positive class. Any score whose denominator is zero is reported
as 0 so that an all-Normal predictor is penalised rather than undefined.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyMatrix, LengthMismatch

METRIC_NAMES = ("acc", "prec", "rec", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class Scores:
    acc: float
    prec: float
    rec: float
    f1: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.acc, self.prec, self.rec, self.f1)


@dataclass
class MetricsReport:
    """Per-run scores plus their aggregate, tagged with provenance."""

    runs: list[Scores]
    mean: dict[str, float]
    std: dict[str, float]
    provenance: dict = field(default_factory=dict)


def _as_binary(v, name: str) -> np.ndarray:
    a = np.asarray(v).ravel()
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1)")
    return a.astype(bool)


def confusion(pred, truth) -> ConfusionMatrix:
    p = _as_binary(pred, "pred")
    t = _as_binary(truth, "truth")
    if p.shape != t.shape:
        raise LengthMismatch(f"pred has {p.size} entries, truth has {t.size}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = int(p.size - tp - fp - fn)
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def compute(cm: ConfusionMatrix) -> Scores:
    if cm.total <= 0:
        raise EmptyMatrix("confusion matrix has no samples")
    return Scores(
        acc=(cm.tp + cm.tn) / cm.total,
        prec=_ratio(cm.tp, cm.tp + cm.fp),
        rec=_ratio(cm.tp, cm.tp + cm.fn),
        f1=_ratio(2 * cm.tp, 2 * cm.tp + cm.fn + cm.fp),
    )


def aggregate(entries: Sequence[Scores]) -> tuple[dict[str, float], dict[str, float]]:
    """Mean and sample standard deviation (n-1 denominator; 0 for one entry)."""
    if not entries:
        raise EmptyMatrix("no entries to aggregate")
    mean, std = {}, {}
    n = len(entries)
    for name in METRIC_NAMES:
        vals = [getattr(e, name) for e in entries]
        mu = math.fsum(vals) / n
        mean[name] = mu
        std[name] = math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
    return mean, std


def report(entries: Sequence[Scores], **provenance) -> MetricsReport:
    mean, std = aggregate(entries)
    return MetricsReport(list(entries), mean, std, dict(provenance))


# -- emission -----------------------------------------------------------------

ROW_FIELDS = ("method", "ratio", "repetition", "acc", "prec", "rec", "f1")


def score_row(method: str, ratio: float, repetition: int, s: Scores) -> dict:
    return {"method": method, "ratio": ratio, "repetition": repetition, **asdict(s)}


def rows_to_csv(rows: Iterable[dict], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.DictWriter(buf, fieldnames=ROW_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def rows_to_json(rows: Iterable[dict], **meta) -> str:
    return json.dumps({**meta, "rows": list(rows)}, indent=2, sort_keys=True) + "\n"
