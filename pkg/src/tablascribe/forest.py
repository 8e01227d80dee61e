"""CART decision trees and a bagged random forest, with JSON persistence.

Trees split on Gini impurity at midpoints between consecutive distinct
values. Every tie is resolved by a fixed rule (lowest feature index, then
lowest threshold; class order D < RT < RB < B) so results are reproducible.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .labels import CLASSES

FORMAT_VERSION = 1
N_CLASSES = len(CLASSES)
_CLASS_RANGE = np.arange(N_CLASSES)


class ModelFormatError(ValueError):
    """Malformed or truncated model document."""


class ModelVersionError(ModelFormatError):
    """Model document written by an incompatible format version."""


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: Optional[int] = None
    max_features: Union[str, int] = "sqrt"
    bootstrap: bool = True
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "log2", "all"):
                raise ValueError(f"unknown max_features {self.max_features!r}")
        elif self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def n_candidates(self, n_features):
        mf = self.max_features
        if mf == "sqrt":
            k = int(math.sqrt(n_features))
        elif mf == "log2":
            k = int(math.log2(n_features)) if n_features > 1 else 1
        elif mf == "all":
            k = n_features
        else:
            if mf > n_features:
                raise ValueError(f"max_features={mf} exceeds {n_features} features")
            k = mf
        return max(1, k)


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, N_CLASSES), nonzero only at leaves
    importance: np.ndarray = field(repr=False, default=None)

    @property
    def n_nodes(self):
        return self.feature.size

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict_index(self, X):
        return np.argmax(self.counts[self.apply(X)], axis=1)


def _weighted_gini(counts, n):
    # n * Gini = n - sum(c^2) / n
    return n - np.einsum("...k,...k->...", counts, counts) / n


def _best_split(Xn, yn, feats):
    """Best (feature, threshold, position) among ``feats`` for one node."""
    n = yn.size
    sub = Xn[:, feats]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = sub[order, np.arange(feats.size)]
    onehot = (yn[order][:, :, None] == _CLASS_RANGE).astype(np.float64)
    left = np.cumsum(onehot, axis=0)[:-1]
    total = left[-1] + onehot[-1]
    right = total[None] - left
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    imp = _weighted_gini(left, nl) + _weighted_gini(right, n - nl)
    valid = xs[:-1] < xs[1:]
    imp = np.where(valid, imp, np.inf)
    pos = np.argmin(imp, axis=0)
    best_imp = imp[pos, np.arange(feats.size)]
    j = int(np.argmin(best_imp))  # feats sorted ascending: lowest index wins ties
    if not np.isfinite(best_imp[j]):
        return None
    p = int(pos[j])
    lo, hi = xs[p, j], xs[p + 1, j]
    thr = (lo + hi) / 2.0
    if not thr < hi:
        thr = lo
    return int(feats[j]), float(thr), float(best_imp[j])


def train_tree(X, y, params: ForestParams, rng) -> DecisionTree:
    """Grow one CART tree on integer class labels ``y``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("cannot train a tree on zero samples")
    n_features = X.shape[1]
    k = params.n_candidates(n_features)
    max_depth = params.max_depth

    feature, threshold, left, right, counts = [], [], [], [], []
    importance = np.zeros(n_features)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(None)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        c = np.bincount(yn, minlength=N_CLASSES).astype(np.float64)
        n = idx.size
        split = None
        if (np.count_nonzero(c) > 1 and n >= params.min_samples_split
                and (max_depth is None or depth < max_depth)):
            Xn = X[idx]
            varying = Xn.max(axis=0) > Xn.min(axis=0)
            perm = rng.permutation(n_features)
            feats = np.sort(perm[varying[perm]][:k])
            if feats.size:
                split = _best_split(Xn, yn, feats)
        if split is None:
            counts[node] = c
            continue
        f, thr, child_imp = split
        go_left = X[idx, f] <= thr
        importance[f] += _weighted_gini(c, n) - child_imp
        feature[node] = f
        threshold[node] = thr
        counts[node] = np.zeros(N_CLASSES)
        lid, rid = new_node(), new_node()
        left[node], right[node] = lid, rid
        stack.append((rid, idx[~go_left], depth + 1))
        stack.append((lid, idx[go_left], depth + 1))

    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(counts), importance)


def tree_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


@dataclass
class ForestModel:
    trees: list
    params: ForestParams
    feature_names: tuple
    importances: np.ndarray
    classes: tuple = CLASSES
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return len(self.feature_names)

    def vote_counts(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        votes = np.zeros((X.shape[0], N_CLASSES))
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            votes[rows, tree.predict_index(X)] += 1
        return votes

    def predict_proba(self, X):
        return self.vote_counts(X) / len(self.trees)

    def predict_index(self, X):
        # argmax picks the first maximum: canonical class order breaks ties
        return np.argmax(self.vote_counts(X), axis=1)

    def predict_labels(self, X):
        return [self.classes[i] for i in self.predict_index(X)]


def _normalized_importances(trees, n_features):
    per_tree = []
    for t in trees:
        total = t.importance.sum()
        if total > 0:
            per_tree.append(t.importance / total)
    if not per_tree:
        return np.full(n_features, 1.0 / n_features)
    mean = np.mean(per_tree, axis=0)
    return mean / mean.sum()


def train_forest(X, y, params: ForestParams = ForestParams(), feature_names=None) -> ForestModel:
    """Fit a forest on feature matrix ``X`` and labels ``y``.

    ``y`` holds class codes (``"D"``...) or indices into :data:`CLASSES`.
    Tree ``i`` draws its bootstrap sample and feature subsets from a stream
    seeded by ``(params.seed, i)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a nonempty 2-D matrix")
    y = encode_labels(y)
    if y.size != X.shape[0]:
        raise ValueError("X and y differ in length")
    n = X.shape[0]
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(X.shape[1]))
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names does not match the data width")

    trees = []
    for i in range(params.n_trees):
        rng = tree_rng(params.seed, i)
        if params.bootstrap:
            sample = rng.integers(0, n, size=n)
            trees.append(train_tree(X[sample], y[sample], params, rng))
        else:
            trees.append(train_tree(X, y, params, rng))
    importances = _normalized_importances(trees, X.shape[1])
    return ForestModel(trees, params, tuple(feature_names), importances)


def encode_labels(y):
    y = list(y) if not isinstance(y, np.ndarray) else y
    if len(y) and isinstance(y[0], str):
        try:
            return np.array([CLASSES.index(v) for v in y], dtype=np.int64)
        except ValueError:
            bad = sorted({v for v in y if v not in CLASSES})
            raise ValueError(f"unknown class labels {bad}") from None
    y = np.asarray(y, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise ValueError("class indices out of range")
    return y


def predict(model: ForestModel, fv):
    """Label and vote distribution for one feature vector."""
    values = getattr(fv, "values", fv)
    proba = model.predict_proba(np.asarray(values, dtype=np.float64).reshape(1, -1))[0]
    return model.classes[int(np.argmax(proba))], dict(zip(model.classes, proba.tolist()))


# -- persistence ----------------------------------------------------------

def _dumps(obj):
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            raise ValueError("cannot serialise non-finite number")
        return "%.16e" % value
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj):
    return _dumps(obj)


def _tree_doc(tree: DecisionTree):
    nodes = []
    for i in range(tree.n_nodes):
        if tree.feature[i] < 0:
            nodes.append({"counts": [int(c) for c in tree.counts[i]]})
        else:
            nodes.append({"feature": int(tree.feature[i]), "threshold": float(tree.threshold[i]),
                          "left": int(tree.left[i]), "right": int(tree.right[i])})
    return {"nodes": nodes}


def model_to_dict(model: ForestModel):
    return {
        "format_version": FORMAT_VERSION,
        "params": asdict(model.params),
        "feature_names": list(model.feature_names),
        "classes": list(model.classes),
        "importances": [float(v) for v in model.importances],
        "metadata": model.metadata,
        "trees": [_tree_doc(t) for t in model.trees],
    }


def save_model(model: ForestModel, path):
    text = _dumps(model_to_dict(model))
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _tree_from_doc(doc, n_features):
    nodes = doc["nodes"]
    m = len(nodes)
    feature = np.full(m, -1, dtype=np.int64)
    threshold = np.zeros(m)
    left = np.full(m, -1, dtype=np.int64)
    right = np.full(m, -1, dtype=np.int64)
    counts = np.zeros((m, N_CLASSES))
    for i, node in enumerate(nodes):
        if "counts" in node:
            if len(node["counts"]) != N_CLASSES or sum(node["counts"]) <= 0:
                raise ModelFormatError(f"leaf {i} has invalid class counts")
            counts[i] = node["counts"]
        else:
            feature[i] = node["feature"]
            threshold[i] = float(node["threshold"])
            left[i], right[i] = node["left"], node["right"]
            if not (0 <= feature[i] < n_features and 0 < left[i] < m and 0 < right[i] < m):
                raise ModelFormatError(f"node {i} has out-of-range references")
    return DecisionTree(feature, threshold, left, right, counts, np.zeros(n_features))


def model_from_dict(doc) -> ForestModel:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFormatError("model document lacks format_version")
    version = doc["format_version"]
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"model format version {version} is not supported (this build reads version "
            f"{FORMAT_VERSION})")
    try:
        raw = dict(doc["params"])
        params = ForestParams(**raw)
        names = tuple(doc["feature_names"])
        classes = tuple(doc["classes"])
        if classes != CLASSES:
            raise ModelFormatError(f"unexpected class set {classes}")
        trees = [_tree_from_doc(t, len(names)) for t in doc["trees"]]
        importances = np.asarray(doc["importances"], dtype=np.float64)
        metadata = dict(doc.get("metadata", {}))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc!r}") from exc
    if importances.size != len(names) or not trees:
        raise ModelFormatError("model document is inconsistent")
    return ForestModel(trees, params, names, importances, classes, metadata)


def load_model(path) -> ForestModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: cannot parse model JSON at line {exc.lineno} "
                               f"column {exc.colno}: {exc.msg}") from exc
    return model_from_dict(doc)
