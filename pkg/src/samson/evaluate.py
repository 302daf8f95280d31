"""Stratified train/test splitting, confusion matrices and accuracy figures."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import EmptyMatrix, InvalidClass, LengthMismatch, TooFewSamples

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_indices(labels, spec: SplitSpec = SplitSpec(), n_classes: int | None = None):
    """Disjoint, exhaustive (train, test) index arrays, each sorted ascending.

    Stratified: each class contributes round_half_up(fraction * n_c) training samples.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng([int(spec.seed), 7])
    if not spec.stratified:
        if len(labels) < 2:
            raise TooFewSamples("need at least two samples to split")
        perm = rng.permutation(len(labels))
        k = round_half_up(spec.train_fraction * len(labels))
        return np.sort(perm[:k]), np.sort(perm[k:])
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    train, test = [], []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            continue
        if len(idx) < 2:
            raise TooFewSamples(f"class {c} has {len(idx)} sample(s); stratified split needs 2")
        idx = idx[rng.permutation(len(idx))]
        k = round_half_up(spec.train_fraction * len(idx))
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split_dataset(data, spec: SplitSpec = SplitSpec()):
    """Split a PhantomDataset into (train, test) datasets."""
    train_idx, test_idx = split_indices(data.labels, spec, len(data.class_counts))
    return data.subset(train_idx), data.subset(test_idx)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def trace(self) -> int:
        return int(np.trace(self.counts))

    def row_percentages(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = np.where(rows > 0, 100.0 * self.counts / np.maximum(rows, 1), 0.0)
        return pct


def build_confusion(preds, labels, n_classes: int = 6, class_names=None) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise LengthMismatch(f"{len(preds)} predictions vs {len(labels)} labels")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise InvalidClass(f"{name} outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    names = tuple(class_names) if class_names else tuple(str(c) for c in range(n_classes))
    return ConfusionMatrix(counts, names)


@dataclass(frozen=True)
class Metrics:
    overall: float
    per_class: tuple[float, ...]
    overall_exact: Fraction
    per_class_exact: tuple[Fraction | None, ...]


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Overall accuracy trace/total and per-class recall counts[c,c]/rowsum(c).

    Empty rows report NaN (and log a warning).
    """
    total = cm.total
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no entries")
    rows = cm.counts.sum(axis=1)
    exact = []
    for c, r in enumerate(rows):
        if r == 0:
            log.warning("class %s has no samples", cm.class_names[c])
            exact.append(None)
        else:
            exact.append(Fraction(int(cm.counts[c, c]), int(r)))
    per_class = tuple(float("nan") if f is None else float(f) for f in exact)
    return Metrics(cm.trace / total, per_class, Fraction(cm.trace, total), tuple(exact))


def format_confusion(cm: ConfusionMatrix, decimals: int = 1) -> str:
    """Aligned text table of row-normalised percentages plus raw counts."""
    pct = cm.row_percentages()
    names = cm.class_names
    width = max(max(len(n) for n in names), decimals + 6)
    head = " " * width + " | " + " ".join(n.rjust(width) for n in names) + " | " + "n".rjust(6)
    lines = ["true \\ predicted (row %)", head, "-" * len(head)]
    for i, name in enumerate(names):
        cells = " ".join(f"{v:.{decimals}f}".rjust(width) for v in pct[i])
        lines.append(f"{name.rjust(width)} | {cells} | {int(cm.counts[i].sum()):6d}")
    return "\n".join(lines)


def format_records(cm: ConfusionMatrix, m: Metrics | None = None) -> str:
    """Line-oriented records: ``cell`` lines (true, predicted, count) and accuracy lines."""
    m = metrics(cm) if m is None else m
    lines = ["# kind\ttrue\tpredicted\tcount"]
    n = cm.counts.shape[0]
    for t in range(n):
        for p in range(n):
            lines.append(f"cell\t{t}\t{p}\t{int(cm.counts[t, p])}")
    lines.append(f"overall\t{cm.trace}\t{cm.total}\t{m.overall!r}")
    for c, v in enumerate(m.per_class):
        lines.append(f"class\t{c}\t{int(cm.counts[c].sum())}\t{v!r}")
    return "\n".join(lines) + "\n"


def parse_records(text: str) -> tuple[np.ndarray, float, tuple[float, ...]]:
    cells, overall, per = {}, None, {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        kind, a, b, v = line.split("\t")
        if kind == "cell":
            cells[int(a), int(b)] = int(v)
        elif kind == "overall":
            overall = float(v)
        elif kind == "class":
            per[int(a)] = float(v)
    n = max(t for t, _ in cells) + 1
    counts = np.zeros((n, n), dtype=np.int64)
    for (t, p), v in cells.items():
        counts[t, p] = v
    return counts, overall, tuple(per[c] for c in sorted(per))
