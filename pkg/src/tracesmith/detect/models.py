"""Random forest and kNN classifiers over min-max normalised features."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .. import ValidationError
from .tree import Tree, fit_tree


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    features_per_split: Optional[int] = 2
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValidationError("min_samples_split must be >= 2")


@dataclass(frozen=True)
class KnnParams:
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")


@dataclass
class Normalizer:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Normalizer":
        return cls(X.min(axis=0), X.max(axis=0))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        span = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        return (X - self.lo) / span


def _check_input(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if not np.all(np.isfinite(X)):
        raise ValueError("feature vectors must be finite")
    return X


def _encode_labels(y, classes: Optional[Sequence[str]] = None):
    y = np.asarray(y, dtype=object)
    cls = tuple(sorted(set(y.tolist()))) if classes is None else tuple(sorted(classes))
    if len(set(y.tolist())) < 2:
        raise ValidationError("training needs at least two classes")
    index = {c: i for i, c in enumerate(cls)}
    return np.array([index[v] for v in y], dtype=np.int64), cls


class Model:
    """Common predict interface. Classes are kept in name order for tie-breaks."""

    kind = "base"
    classes: tuple[str, ...]
    norm: Normalizer

    def votes(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray:
        v = self.votes(_check_input(X))
        return v / v.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        v = self.votes(_check_input(X))
        return np.array(self.classes, dtype=object)[np.argmax(v, axis=1)]

    def predict_one(self, x) -> tuple[str, dict[str, float]]:
        frac = self.predict_proba(x)[0]
        return self.classes[int(np.argmax(frac))], dict(zip(self.classes, map(float, frac)))


class RandomForest(Model):
    kind = "forest"

    def __init__(self, trees: list[Tree], classes, norm: Normalizer, params: ForestParams):
        self.trees = trees
        self.classes = tuple(classes)
        self.norm = norm
        self.params = params

    def votes(self, X) -> np.ndarray:
        Z = self.norm(X)
        out = np.zeros((len(Z), len(self.classes)))
        rows = np.arange(len(Z))
        for t in self.trees:
            out[rows, t.predict(Z)] += 1
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "classes": list(self.classes),
                "norm": {"min": self.norm.lo.tolist(), "max": self.norm.hi.tolist()},
                "params": asdict(self.params), "trees": [t.to_nested() for t in self.trees]}


class Knn(Model):
    kind = "knn"

    def __init__(self, X: np.ndarray, y: np.ndarray, classes, norm: Normalizer, params: KnnParams):
        self.X = X            # normalised training matrix
        self.y = y            # class indices
        self.classes = tuple(classes)
        self.norm = norm
        self.params = params

    def votes(self, X) -> np.ndarray:
        Z = self.norm(X)
        k = min(self.params.k, len(self.y))
        d2 = ((Z[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out = np.zeros((len(Z), len(self.classes)))
        for c in range(len(self.classes)):
            out[:, c] = np.sum(self.y[nearest] == c, axis=1)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "classes": list(self.classes),
                "norm": {"min": self.norm.lo.tolist(), "max": self.norm.hi.tolist()},
                "params": asdict(self.params), "X": self.X.tolist(), "y": self.y.tolist()}


def train_forest(X, y, params: ForestParams = ForestParams(), classes=None) -> RandomForest:
    X = _check_input(X)
    yi, cls = _encode_labels(y, classes)
    norm = Normalizer.fit(X)
    Z = norm(X)
    trees = []
    n = len(yi)
    for t in range(params.n_trees):
        rng = np.random.default_rng([params.seed, t])
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        if len(np.unique(yi[idx])) < 2 and params.bootstrap:
            idx = np.arange(n)   # degenerate bootstrap draw: fall back to the full sample
        trees.append(fit_tree(Z[idx], yi[idx], len(cls), rng, params.max_depth,
                              params.min_samples_split, params.features_per_split))
    return RandomForest(trees, cls, norm, params)


def train_knn(X, y, params: KnnParams = KnnParams(), classes=None) -> Knn:
    X = _check_input(X)
    yi, cls = _encode_labels(y, classes)
    norm = Normalizer.fit(X)
    return Knn(norm(X), yi, cls, norm, params)


def train(dataset, params=None, seed: Optional[int] = None, kind: str = "forest") -> Model:
    """Train on a LabeledDataset. `seed` overrides the forest seed when given."""
    if kind == "forest":
        params = params or ForestParams()
        if seed is not None:
            params = ForestParams(**{**asdict(params), "seed": seed})
        return train_forest(dataset.X, dataset.y, params)
    if kind == "knn":
        return train_knn(dataset.X, dataset.y, params or KnnParams())
    raise ValidationError(f"unknown model kind {kind!r}")


def model_from_dict(d: dict) -> Model:
    norm = Normalizer(np.array(d["norm"]["min"], float), np.array(d["norm"]["max"], float))
    if d["kind"] == "forest":
        return RandomForest([Tree.from_nested(t) for t in d["trees"]], d["classes"], norm,
                            ForestParams(**d["params"]))
    if d["kind"] == "knn":
        return Knn(np.array(d["X"], float), np.array(d["y"], np.int64), d["classes"], norm,
                   KnnParams(**d["params"]))
    raise ValidationError(f"unknown model kind {d.get('kind')!r}")


def save_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path) -> Model:
    try:
        with open(path) as fh:
            return model_from_dict(json.load(fh))
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"cannot load model {path}: {exc}") from None
