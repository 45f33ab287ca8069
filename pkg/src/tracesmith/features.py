"""Windowed trace features: mean write entropy, R/W throughput, R/W LBA variance."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import ValidationError
from .vdev.layout import SECTOR_BYTES

FEATURE_NAMES = ("h_write_mean", "read_bps", "write_bps", "lba_var_r", "lba_var_w")
DATASET_HEADER = ("window_start_ns", *FEATURE_NAMES, "label")
BENIGN_TAG = "benign"


@dataclass(frozen=True)
class WindowSpec:
    window_s: float = 2.0
    shift_s: Optional[float] = None     # None: same as window_s (no overlap)

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValidationError("window_s must be positive")
        if self.shift_s is not None and self.shift_s <= 0:
            raise ValidationError("shift_s must be positive")

    @property
    def shift(self) -> float:
        return self.window_s if self.shift_s is None else self.shift_s

    @classmethod
    def sliding(cls, window_s: float) -> "WindowSpec":
        """Sliding windows of 1..25 s moved by one second."""
        if not 1 <= window_s <= 25:
            raise ValidationError("sliding mode needs a window of 1 to 25 seconds")
        return cls(window_s, 1.0)


@dataclass(frozen=True)
class FeatureVector:
    window_start_ns: int
    h_write_mean: float
    read_bps: float
    write_bps: float
    lba_var_r: float
    lba_var_w: float
    label: str = ""

    def values(self) -> tuple[float, ...]:
        return (self.h_write_mean, self.read_bps, self.write_bps, self.lba_var_r, self.lba_var_w)


LabelSource = Union[None, str, Mapping[str, str], Callable[[Counter], str]]


def majority_labeler(ransomware_label: str, benign_label: str) -> Callable[[Counter], str]:
    """Label a window by whether benign-tagged records are the majority."""
    def pick(tags: Counter) -> str:
        benign = tags.get(BENIGN_TAG, 0)
        return benign_label if benign * 2 > sum(tags.values()) else ransomware_label
    return pick


def _columns(records):
    n = len(records)
    ts = np.fromiter((r.ts_ns for r in records), np.int64, n)
    is_w = np.fromiter((r.op == "W" for r in records), bool, n)
    lba = np.fromiter((r.lba for r in records), np.float64, n)
    nbytes = np.fromiter((r.len for r in records), np.float64, n) * SECTOR_BYTES
    ent = np.fromiter((r.entropy if r.entropy is not None else 0.0 for r in records), np.float64, n)
    return ts, is_w, lba, nbytes, ent


def _pvar(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(np.var(x))


def extract_windows(records: Sequence, spec: WindowSpec = WindowSpec(),
                    label_source: LabelSource = None, default_label: str = "") -> list[FeatureVector]:
    """One feature vector per window, from t = 0 until the window holding the last record.

    `label_source` is a fixed label, a tag→label map (majority vote over the
    window's mapped tags), or a callable taking the window's tag counts.
    Windows without records get `default_label` (or the fixed label).
    """
    if not records:
        raise ValidationError("cannot extract features from an empty trace")
    ts, is_w, lba, nbytes, ent = _columns(records)
    order = np.argsort(ts, kind="stable")
    if np.any(order != np.arange(len(ts))):
        ts, is_w, lba, nbytes, ent = ts[order], is_w[order], lba[order], nbytes[order], ent[order]
        records = [records[i] for i in order]
    win_ns = spec.window_s * 1e9
    shift_ns = spec.shift * 1e9
    last = int(ts[-1])
    fixed = label_source if isinstance(label_source, str) else None
    out = []
    k = 0
    while True:
        start = k * shift_ns
        if start > last:
            break
        lo = int(np.searchsorted(ts, start, "left"))
        hi = int(np.searchsorted(ts, start + win_ns, "left"))
        w = is_w[lo:hi]
        wl, rl = lba[lo:hi][w], lba[lo:hi][~w]
        nb = nbytes[lo:hi]
        h = float(ent[lo:hi][w].mean()) if w.any() else 0.0
        label = fixed if fixed is not None else default_label
        if fixed is None and label_source is not None and hi > lo:
            tags = Counter(records[i].tag for i in range(lo, hi))
            if callable(label_source):
                label = label_source(tags)
            else:
                votes = Counter()
                for t, c in tags.items():
                    if t in label_source:
                        votes[label_source[t]] += c
                if votes:
                    label = sorted(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        out.append(FeatureVector(int(round(start)), min(max(h, 0.0), 1.0),
                                 float(nb[~w].sum()) / spec.window_s,
                                 float(nb[w].sum()) / spec.window_s,
                                 _pvar(rl), _pvar(wl), label))
        k += 1
    return out


def write_features(vectors: Iterable[FeatureVector], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_HEADER)
        for v in vectors:
            w.writerow([v.window_start_ns, *(f"{x:.9g}" for x in v.values()), v.label])


def read_features(path) -> list[FeatureVector]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != DATASET_HEADER:
        raise ValidationError(f"{path}: expected header {','.join(DATASET_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(DATASET_HEADER):
            raise ValidationError(f"{path}: line {lineno}: expected {len(DATASET_HEADER)} fields")
        try:
            out.append(FeatureVector(int(row[0]), *(float(x) for x in row[1:6]), row[6]))
        except ValueError as exc:
            raise ValidationError(f"{path}: line {lineno}: {exc}") from None
    return out


@dataclass
class LabeledDataset:
    X: np.ndarray                 # (n, 5)
    y: np.ndarray                 # object array of class names
    classes: tuple[str, ...]
    provenance: list              # (run id, window_start_ns) per row
    balance: dict

    def __len__(self):
        return len(self.y)

    def counts(self) -> dict[str, int]:
        return {c: int(np.sum(self.y == c)) for c in self.classes}

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(self.X[idx], self.y[idx], self.classes,
                              [self.provenance[i] for i in idx], self.balance)

    def to_vectors(self) -> list[FeatureVector]:
        return [FeatureVector(int(p[1]), *map(float, x), str(lab))
                for x, lab, p in zip(self.X, self.y, self.provenance)]


def build_dataset(runs: Mapping[str, Sequence[FeatureVector]] | Sequence[Sequence[FeatureVector]],
                  class_names: Optional[Sequence[str]] = None, balance: bool = False,
                  seed: int = 0) -> LabeledDataset:
    """Stack per-run feature lists into one matrix.

    With `balance`, every class is downsampled (seeded, order kept) to the
    minority class count.
    """
    items = runs.items() if isinstance(runs, Mapping) else enumerate(runs)
    rows, labels, prov = [], [], []
    for run_id, vecs in items:
        for v in vecs:
            rows.append(v.values())
            labels.append(v.label)
            prov.append((str(run_id), v.window_start_ns))
    y = np.array(labels, dtype=object)
    classes = tuple(class_names) if class_names is not None else tuple(sorted(set(labels)))
    unknown = set(labels) - set(classes)
    if unknown:
        raise ValidationError(f"labels outside the class list: {sorted(unknown)}")
    before = {c: int(np.sum(y == c)) for c in classes}
    present = [c for c in classes if before[c] > 0]
    if len(present) < 2:
        raise ValidationError("a dataset needs at least two classes with examples")
    X = np.array(rows, dtype=np.float64).reshape(-1, len(FEATURE_NAMES))
    keep = np.arange(len(y))
    if balance:
        m = min(before[c] for c in present)
        rng = np.random.default_rng(seed)
        chosen = []
        for c in present:
            idx = np.flatnonzero(y == c)
            chosen.append(np.sort(rng.choice(idx, size=m, replace=False)))
        keep = np.sort(np.concatenate(chosen))
    after = {c: int(np.sum(y[keep] == c)) for c in classes}
    return LabeledDataset(X[keep], y[keep], classes, [prov[i] for i in keep],
                          {"before": before, "after": after})


def dataset_to_csv(ds: LabeledDataset, path) -> None:
    write_features(ds.to_vectors(), path)


def dataset_from_csv(path, class_names=None, balance=False, seed=0) -> LabeledDataset:
    vecs = read_features(path)
    return build_dataset({Path(path).stem: vecs}, class_names, balance, seed)
