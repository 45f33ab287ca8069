"""Confusion matrices, F1 scores and stratified cross-validation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import ValidationError


def confusion_counts(predictions: Sequence[str], truths: Sequence[str],
                     classes: Sequence[str]) -> np.ndarray:
    """Raw counts; row = true class, column = predicted class."""
    if len(predictions) != len(truths):
        raise ValidationError("predictions and truths differ in length")
    if len(truths) == 0:
        raise ValidationError("empty input")
    index = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(predictions, truths):
        if p not in index or t not in index:
            raise ValidationError(f"unknown label {p if p not in index else t!r}")
        m[index[t], index[p]] += 1
    return m


def confusion_matrix(predictions, truths, classes, normalize: bool = True) -> np.ndarray:
    """Row-normalised by default: rows sum to 1, or to 0 for absent classes."""
    m = confusion_counts(predictions, truths, classes)
    if not normalize:
        return m
    rows = m.sum(axis=1, keepdims=True)
    return np.divide(m, rows, out=np.zeros(m.shape), where=rows > 0)


def precision_recall_f1(predictions, truths, positive) -> tuple[float, float, float]:
    p = np.asarray(predictions, dtype=object) == positive
    t = np.asarray(truths, dtype=object) == positive
    tp = float(np.sum(p & t))
    fp = float(np.sum(p & ~t))
    fn = float(np.sum(~p & t))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f


def f1(predictions, truths, positive_class) -> float:
    """Binary F1 for one class; 0 when precision and recall are both 0."""
    return precision_recall_f1(predictions, truths, positive_class)[2]


def classification_report(predictions, truths, classes) -> dict:
    per = {}
    for c in classes:
        p, r, f = precision_recall_f1(predictions, truths, c)
        per[c] = {"precision": p, "recall": r, "f1": f,
                  "support": int(np.sum(np.asarray(truths, dtype=object) == c))}
    present = [c for c in classes if per[c]["support"] > 0]
    macro = float(np.mean([per[c]["f1"] for c in present])) if present else 0.0
    acc = float(np.mean(np.asarray(predictions, dtype=object) == np.asarray(truths, dtype=object)))
    return {"per_class": per, "macro_f1": macro, "accuracy": acc}


def stratified_folds(y: np.ndarray, folds: int, seed: int = 0) -> np.ndarray:
    """Fold id per row: each class is shuffled, then dealt round-robin."""
    y = np.asarray(y, dtype=object)
    out = np.empty(len(y), dtype=np.int64)
    rng = np.random.default_rng(seed)
    for c in sorted(set(y.tolist())):
        idx = np.flatnonzero(y == c)
        if len(idx) < folds:
            raise ValidationError(f"class {c!r} has {len(idx)} rows, fewer than {folds} folds")
        idx = idx[rng.permutation(len(idx))]
        out[idx] = np.arange(len(idx)) % folds
    return out


@dataclass
class CVResult:
    folds: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    confusion: Optional[np.ndarray] = None
    classes: tuple = ()

    def to_dict(self) -> dict:
        return {"folds": self.folds, "aggregate": self.aggregate, "classes": list(self.classes),
                "confusion": None if self.confusion is None else self.confusion.tolist()}


def cross_validate(dataset, folds: int = 5, params=None, seed: int = 0, kind: str = "forest",
                   fold_ids: Optional[np.ndarray] = None) -> CVResult:
    """Stratified k-fold CV; aggregate metrics are means over folds."""
    from .models import train
    if folds < 2:
        raise ValidationError("need at least 2 folds")
    ids = stratified_folds(dataset.y, folds, seed) if fold_ids is None else np.asarray(fold_ids)
    classes = tuple(c for c in dataset.classes if np.any(dataset.y == c))
    res = CVResult(classes=classes)
    all_pred, all_true = [], []
    for k in range(folds):
        test = ids == k
        model = train(dataset.subset(np.flatnonzero(~test)), params, seed=seed if kind == "forest" else None,
                      kind=kind)
        pred = model.predict(dataset.X[test])
        truth = dataset.y[test]
        rep = classification_report(pred, truth, classes)
        rep["fold"] = k
        res.folds.append(rep)
        all_pred += list(pred)
        all_true += list(truth)
    res.aggregate = {
        "macro_f1": float(np.mean([f["macro_f1"] for f in res.folds])),
        "accuracy": float(np.mean([f["accuracy"] for f in res.folds])),
        "per_class": {c: {m: float(np.mean([f["per_class"][c][m] for f in res.folds]))
                          for m in ("precision", "recall", "f1")} for c in classes},
    }
    res.confusion = confusion_matrix(all_pred, all_true, classes)
    return res


def write_metrics_csv(result: CVResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "class", "precision", "recall", "f1"])
        for f in result.folds:
            for c, m in f["per_class"].items():
                w.writerow([f["fold"], c, f"{m['precision']:.6f}", f"{m['recall']:.6f}", f"{m['f1']:.6f}"])
        for c, m in result.aggregate["per_class"].items():
            w.writerow(["mean", c, f"{m['precision']:.6f}", f"{m['recall']:.6f}", f"{m['f1']:.6f}"])
