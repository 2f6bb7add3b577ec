"""Confusion matrices and precision/recall/F1 with class exclusion.

With a class excluded (``other`` for DailyDialog), micro averages pool only
the included classes' true positives, yet still count a prediction of an
included class against excluded gold as a false positive and vice versa.
That is why micro precision and micro recall can differ.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (L, L), rows gold, columns predicted

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_labels(self) -> int:
        return self.counts.shape[0]


def confusion(gold: Sequence[int], pred: Sequence[int], n_labels: int | None = None) -> ConfusionMatrix:
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if gold.shape != pred.shape:
        raise InputError(f"{len(gold)} gold labels vs {len(pred)} predictions")
    if n_labels is None:
        n_labels = int(max(gold.max(initial=-1), pred.max(initial=-1))) + 1
    counts = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return ConfusionMatrix(counts)


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _f1(p, r):
    return _safe_div(2 * p * r, p + r)


@dataclass
class MetricReport:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    included: list[int]
    excluded: list[int]
    macro_precision: float
    macro_recall: float
    macro_f1: float  # mean of per-class F1
    macro_f1_of_means: float  # harmonic mean of macro P and macro R
    micro_precision: float
    micro_recall: float
    micro_f1: float
    zero_division: list[int] = field(default_factory=list)
    label_names: list[str] | None = None

    def _name(self, c):
        return self.label_names[c] if self.label_names else str(c)

    def rows(self):
        for c in range(len(self.precision)):
            tag = " (excluded)" if c in self.excluded else ""
            yield self._name(c) + tag, self.precision[c], self.recall[c], self.f1[c], int(self.support[c])

    def to_table(self, scale: float = 100.0, digits: int = 2) -> str:
        lines = [f"{'label':<24}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>9}"]
        for name, p, r, f, s in self.rows():
            lines.append(f"{name:<24}{p * scale:>10.{digits}f}{r * scale:>10.{digits}f}{f * scale:>10.{digits}f}{s:>9d}")
        lines.append(f"{'macro (mean F1)':<24}{self.macro_precision * scale:>10.{digits}f}"
                     f"{self.macro_recall * scale:>10.{digits}f}{self.macro_f1 * scale:>10.{digits}f}")
        lines.append(f"{'macro (F1 of P,R)':<24}{'':>20}{self.macro_f1_of_means * scale:>10.{digits}f}")
        lines.append(f"{'micro':<24}{self.micro_precision * scale:>10.{digits}f}"
                     f"{self.micro_recall * scale:>10.{digits}f}{self.micro_f1 * scale:>10.{digits}f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "precision", "recall", "f1", "support"])
        for name, p, r, f, s in self.rows():
            w.writerow([name, repr(float(p)), repr(float(r)), repr(float(f)), s])
        w.writerow(["macro_mean_f1", repr(self.macro_precision), repr(self.macro_recall), repr(self.macro_f1), ""])
        w.writerow(["macro_f1_of_means", "", "", repr(self.macro_f1_of_means), ""])
        w.writerow(["micro", repr(self.micro_precision), repr(self.micro_recall), repr(self.micro_f1), ""])
        return buf.getvalue()


def metrics(cm: ConfusionMatrix, excluded: Iterable[int] = (), label_names=None) -> MetricReport:
    counts = cm.counts.astype(np.int64)
    L = counts.shape[0]
    excluded = sorted(set(int(c) for c in excluded))
    included = [c for c in range(L) if c not in excluded]
    if not included:
        raise InputError("every class is excluded; nothing to average")

    tp = np.diag(counts)
    pred_tot = counts.sum(axis=0)
    gold_tot = counts.sum(axis=1)
    precision = _safe_div(tp, pred_tot)
    recall = _safe_div(tp, gold_tot)
    f1 = _f1(precision, recall)
    zero = [c for c in range(L) if pred_tot[c] == 0 or gold_tot[c] == 0]

    inc = np.array(included)
    macro_p = float(precision[inc].mean())
    macro_r = float(recall[inc].mean())
    tp_i = int(tp[inc].sum())
    fp_i = int((pred_tot[inc] - tp[inc]).sum())
    fn_i = int((gold_tot[inc] - tp[inc]).sum())
    micro_p = float(_safe_div(tp_i, tp_i + fp_i))
    micro_r = float(_safe_div(tp_i, tp_i + fn_i))
    return MetricReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=gold_tot,
        included=included,
        excluded=excluded,
        macro_precision=macro_p,
        macro_recall=macro_r,
        macro_f1=float(f1[inc].mean()),
        macro_f1_of_means=float(_f1(macro_p, macro_r)),
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=float(_f1(micro_p, micro_r)),
        zero_division=zero,
        label_names=None if label_names is None else list(label_names),
    )


def accuracy(gold, pred) -> float:
    gold = np.asarray(gold)
    return float(np.mean(gold == np.asarray(pred))) if len(gold) else 0.0


def stratified_baseline_micro_f1(gold_freq, prior, excluded: Iterable[int] = ()) -> float:
    """Expected micro F1 of a predictor that draws labels from ``prior``.

    ``gold_freq`` is the test label distribution. For an independent random
    guesser the expected pooled counts are linear in the frequencies, so
    precision is ``sum(q*p) / sum(p)`` and recall ``sum(q*p) / sum(q)`` over
    the included classes.
    """
    q = np.asarray(gold_freq, dtype=np.float64)
    p = np.asarray(prior, dtype=np.float64)
    q, p = q / q.sum(), p / p.sum()
    inc = np.array([c for c in range(len(q)) if c not in set(excluded)])
    hit = float(np.sum(q[inc] * p[inc]))
    prec = hit / p[inc].sum() if p[inc].sum() > 0 else 0.0
    rec = hit / q[inc].sum() if q[inc].sum() > 0 else 0.0
    return 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
