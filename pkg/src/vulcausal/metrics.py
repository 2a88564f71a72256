"""Classification metrics, effect sizes and rank tests for evaluation reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

N_BINS = 20


def f1_score(preds: Sequence[int], labels: Sequence[int]) -> tuple[float, float, float]:
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    if not len(labels):
        raise ValueError("empty input")
    tp = fp = fn = 0
    for p, y in zip(preds, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 1:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def cohens_d(a: Sequence[float], b: Sequence[float]) -> tuple[float, str]:
    """Standardized mean difference (a - b) with pooled sample standard deviation."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na == 0 or nb == 0:
        raise ValueError("empty sample")
    diff = a.mean() - b.mean()
    dof = na + nb - 2
    ss = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum())
    pooled = math.sqrt(ss / dof) if dof > 0 else 0.0
    if pooled == 0.0:
        if diff == 0.0:
            return 0.0, "trivial"
        raise ValueError("pooled standard deviation is zero but means differ")
    d = float(diff / pooled)
    return d, effect_magnitude(d)


def effect_magnitude(d: float) -> str:
    ad = abs(d)
    if ad < 0.2:
        return "trivial"
    if ad < 0.5:
        return "small"
    if ad < 0.8:
        return "medium"
    return "large"


def _ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_v = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided Mann-Whitney U p-value, normal approximation with tie correction."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise ValueError("empty sample")
    allv = np.concatenate([a, b])
    ranks = _ranks(allv)
    u1 = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    mu = n1 * n2 / 2
    n = n1 + n2
    _, counts = np.unique(allv, return_counts=True)
    tie = (counts ** 3 - counts).sum()
    var = n1 * n2 / 12 * ((n + 1) - tie / (n * (n - 1))) if n > 1 else 0.0
    if var <= 0:
        return 1.0
    z = (u1 - mu) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2)))


def bin_index(p: float, bins: int = N_BINS) -> int:
    return min(int(math.floor(p * bins)), bins - 1)


def histogram(per_example: Sequence[tuple[int, int, float, int]], bins: int = N_BINS) -> list[list[float]]:
    """Rows of (bin_lo, bin_hi, count_label0, count_label1) over [0, 1]."""
    counts = np.zeros((bins, 2), dtype=int)
    for _, label, p, _ in per_example:
        counts[bin_index(p, bins), label] += 1
    return [[i / bins, (i + 1) / bins, int(counts[i, 0]), int(counts[i, 1])] for i in range(bins)]


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    per_example: list[tuple[int, int, float, int]] = field(default_factory=list)
    histogram: list[list[float]] = field(default_factory=list)
    flips: int | None = None

    @classmethod
    def from_predictions(cls, ids, labels, probs, preds) -> "EvalReport":
        per = [(int(i), int(y), float(p), int(q)) for i, y, p, q in zip(ids, labels, probs, preds)]
        per.sort(key=lambda r: r[0])
        pr, rc, f1 = f1_score([r[3] for r in per], [r[1] for r in per])
        return cls(pr, rc, f1, per, histogram(per))

    def probs_for_label(self, label: int) -> list[float]:
        return [p for _, y, p, _ in self.per_example if y == label]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_example"] = [list(r) for r in self.per_example]
        return d

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")

    def save_histogram_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count_label0", "count_label1"])
            w.writerows(self.histogram)


def count_flips(vanilla: EvalReport, causal: EvalReport) -> int:
    """Examples predicted wrongly by the vanilla model and correctly by the causal one."""
    v = {i: (y, q) for i, y, _, q in vanilla.per_example}
    n = 0
    for i, y, _, q in causal.per_example:
        if i in v and v[i][1] != v[i][0] and q == y:
            n += 1
    return n
