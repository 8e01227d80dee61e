"""Classification metrics, leave-one-tabla-out CV, RFE and random search."""

import csv
import itertools
import json
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .augment import AugmentConfig, apply_strategy
from .dataset import StrokeDataset
from .forest import ForestParams, encode_labels, train_forest
from .labels import CLASSES

N = len(CLASSES)


@dataclass
class EvalReport:
    confusion: np.ndarray  # rows = truth, columns = prediction, CLASSES order
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f_score: np.ndarray
    macro_f: float
    balanced_accuracy: float

    @property
    def n(self):
        return int(self.confusion.sum())

    def to_dict(self):
        per_class = {c: {"precision": float(self.precision[i]), "recall": float(self.recall[i]),
                         "f_score": float(self.f_score[i]),
                         "support": int(self.confusion[i].sum())}
                     for i, c in enumerate(CLASSES)}
        return {"n": self.n, "accuracy": self.accuracy, "macro_f": self.macro_f,
                "balanced_accuracy": self.balanced_accuracy, "per_class": per_class,
                "confusion": self.confusion.astype(int).tolist()}


def report_from_confusion(confusion) -> EvalReport:
    """Metrics from a 4x4 count matrix (rows truth, columns prediction).

    Macro f averages over classes present in truth or predictions; balanced
    accuracy averages recall over classes present in truth.
    """
    cm = np.asarray(confusion, dtype=np.float64)
    if cm.shape != (N, N):
        raise ValueError(f"confusion matrix must be {N}x{N}")
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(cm)
    truth = cm.sum(axis=1)
    pred = cm.sum(axis=0)
    precision = np.divide(tp, pred, out=np.zeros(N), where=pred > 0)
    recall = np.divide(tp, truth, out=np.zeros(N), where=truth > 0)
    denom = precision + recall
    f = np.divide(2 * precision * recall, denom, out=np.zeros(N), where=denom > 0)
    present = (truth > 0) | (pred > 0)
    return EvalReport(cm, float(tp.sum() / total), precision, recall, f,
                      float(f[present].mean()), float(recall[truth > 0].mean()))


def metrics(preds, truth) -> EvalReport:
    p = encode_labels(preds)
    t = encode_labels(truth)
    if p.size != t.size:
        raise ValueError(f"{p.size} predictions for {t.size} labels")
    if t.size == 0:
        raise ValueError("no samples to score")
    cm = np.zeros((N, N))
    np.add.at(cm, (t, p), 1)
    return report_from_confusion(cm)


@dataclass
class LotoResult:
    folds: dict  # tabla_set -> EvalReport, sorted by set name

    @property
    def accuracies(self):
        return np.array([r.accuracy for r in self.folds.values()])

    @property
    def macro_fs(self):
        return np.array([r.macro_f for r in self.folds.values()])

    @property
    def mean_accuracy(self):
        return float(self.accuracies.mean())

    @property
    def mean_macro_f(self):
        return float(self.macro_fs.mean())

    @property
    def std_macro_f(self):
        return float(self.macro_fs.std())

    def to_dict(self):
        return {"folds": {k: v.to_dict() for k, v in self.folds.items()},
                "mean_accuracy": self.mean_accuracy, "mean_macro_f": self.mean_macro_f}


def loto_splits(ds: StrokeDataset):
    """Yield ``(tabla_set, train_rows, test_rows)`` over original rows."""
    sets = sorted(set(ds.tabla_set.tolist()))
    if len(sets) < 2:
        raise ValueError(f"leave-one-tabla-out needs at least 2 tabla sets, got {sets}")
    original = ~ds.synthetic
    for s in sets:
        held = ds.tabla_set == s
        yield s, np.flatnonzero(original & ~held), np.flatnonzero(original & held)


def fit_dataset(ds: StrokeDataset, params: ForestParams, aug: Optional[AugmentConfig] = None):
    if aug is not None and aug.strategy != "none":
        ds = apply_strategy(ds, aug, seed=params.seed)
    return train_forest(ds.X, ds.labels, params, feature_names=ds.feature_names)


def loto_cv(ds: StrokeDataset, params: ForestParams = ForestParams(),
            aug: Optional[AugmentConfig] = None) -> LotoResult:
    """One fold per tabla set; augmentation touches the training rows only."""
    folds = {}
    for s, train_rows, test_rows in loto_splits(ds):
        model = fit_dataset(ds.subset(train_rows), params, aug)
        test = ds.subset(test_rows)
        folds[s] = metrics(model.predict_index(test.X), test.labels)
    return LotoResult(folds)


@dataclass
class RfeResult:
    curve: list  # (n_features, mean_f, std_f), decreasing n_features
    subsets: dict  # n_features -> tuple of names
    elimination_order: list
    best_count: int

    @property
    def best_subset(self):
        return self.subsets[self.best_count]


def rfe(ds: StrokeDataset, target_counts, params: ForestParams = ForestParams(),
        aug: Optional[AugmentConfig] = None, select_count=None, score=True) -> RfeResult:
    """Recursive feature elimination, one feature per round.

    Each round fits a forest on the current features of ``ds`` and drops the
    least important one (ties: the later feature in ``ds.feature_names``).
    At every count in ``target_counts`` the subset is scored by mean LOTO-CV
    macro-f unless ``score`` is false.
    """
    names = list(ds.feature_names)
    targets = sorted({int(c) for c in target_counts}, reverse=True)
    if not targets or targets[0] > len(names) or targets[-1] < 1:
        raise ValueError(f"target counts must lie in [1, {len(names)}]")
    canonical = {n: i for i, n in enumerate(names)}
    current = list(names)
    curve, subsets, order = [], {}, []
    for target in targets:
        while len(current) > target:
            model = fit_dataset(ds.select_features(current), params)
            imp = model.importances
            # lowest importance first, then highest canonical index
            drop = min(range(len(current)), key=lambda j: (imp[j], -canonical[current[j]]))
            order.append(current.pop(drop))
        subsets[target] = tuple(current)
        if score:
            res = loto_cv(ds.select_features(current), params, aug)
            curve.append((target, res.mean_macro_f, res.std_macro_f))
    if select_count is not None:
        if select_count not in subsets:
            raise ValueError(f"select_count {select_count} is not among the target counts")
        best = select_count
    elif curve:
        best = max(curve, key=lambda row: (row[1], -row[0]))[0]
    else:
        best = targets[-1]
    return RfeResult(curve, subsets, order, best)


@dataclass(frozen=True)
class SearchSpace:
    n_trees: tuple = (50, 100, 200, 300, 400)
    max_depth: tuple = (None, 5, 10, 20, 40)
    max_features: tuple = ("sqrt", "log2", "all")
    bootstrap: tuple = (True, False)
    n_samples: int = 40

    def __post_init__(self):
        for name in ("n_trees", "max_depth", "max_features", "bootstrap"):
            if not getattr(self, name):
                raise ValueError(f"search grid {name} is empty")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def combinations(self):
        return list(itertools.product(self.n_trees, self.max_depth, self.max_features,
                                      self.bootstrap))


@dataclass
class SearchResult:
    best: ForestParams
    best_score: float
    scores: list = field(default_factory=list)  # (ForestParams, mean_f, std_f) in sampled order


def random_search(ds: StrokeDataset, space: SearchSpace = SearchSpace(), seed=0,
                  aug: Optional[AugmentConfig] = None) -> SearchResult:
    """Score randomly drawn grid points by mean LOTO-CV macro-f.

    Draws ``space.n_samples`` distinct combinations (all of them when the
    grid is smaller); the earliest draw wins ties.
    """
    combos = space.combinations()
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(combos), size=min(space.n_samples, len(combos)), replace=False)
    scores = []
    best = None
    for i in picks:
        n_trees, depth, feats, boot = combos[int(i)]
        params = ForestParams(n_trees=n_trees, max_depth=depth, max_features=feats,
                              bootstrap=boot, seed=seed)
        res = loto_cv(ds, params, aug)
        scores.append((params, res.mean_macro_f, res.std_macro_f))
        if best is None or res.mean_macro_f > best[1]:
            best = (params, res.mean_macro_f)
    return SearchResult(best[0], best[1], scores)


# -- report files -----------------------------------------------------------

def _atomic_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_confusion_csv(path, confusion):
    rows = [",".join(["truth\\pred"] + list(CLASSES))]
    for c, row in zip(CLASSES, np.asarray(confusion)):
        rows.append(",".join([c] + [str(int(v)) for v in row]))
    _atomic_text(path, "\n".join(rows) + "\n")


def read_confusion_csv(path):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if tuple(rows[0][1:]) != CLASSES or tuple(r[0] for r in rows[1:]) != CLASSES:
        raise ValueError(f"{path}: confusion matrix must be labelled {CLASSES}")
    return np.array([[int(v) for v in r[1:]] for r in rows[1:]])


def write_json(path, obj):
    _atomic_text(path, json.dumps(obj, indent=2, sort_keys=False) + "\n")


def write_curve_csv(path, curve):
    lines = ["n_features,mean_f,std_f"] + [f"{n},{m!r},{s!r}" for n, m, s in curve]
    _atomic_text(path, "\n".join(lines) + "\n")


def read_curve_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["n_features", "mean_f", "std_f"]:
        raise ValueError(f"{path}: unexpected curve header {rows[0]}")
    return [(int(r[0]), float(r[1]), float(r[2])) for r in rows[1:] if r]


_PARAM_FIELDS = ("n_trees", "max_depth", "max_features", "bootstrap")


def write_search_csv(path, scores):
    lines = [",".join(_PARAM_FIELDS + ("mean_f", "std_f"))]
    for params, m, s in scores:
        d = asdict(params)
        depth = "" if d["max_depth"] is None else str(d["max_depth"])
        lines.append(f"{d['n_trees']},{depth},{d['max_features']},{d['bootstrap']},{m!r},{s!r}")
    _atomic_text(path, "\n".join(lines) + "\n")


def read_search_csv(path, seed=0):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    out = []
    for r in rows[1:]:
        if not r:
            continue
        feats = r[2] if r[2] in ("sqrt", "log2", "all") else int(r[2])
        params = ForestParams(n_trees=int(r[0]), max_depth=int(r[1]) if r[1] else None,
                              max_features=feats, bootstrap=r[3] == "True", seed=seed)
        out.append((params, float(r[4]), float(r[5])))
    return out


def params_to_dict(params: ForestParams):
    return asdict(params)


def params_from_dict(d, **overrides):
    d = {k: v for k, v in dict(d).items() if k in ForestParams.__dataclass_fields__}
    d.update(overrides)
    return ForestParams(**d)


def format_loto_row(name, res: LotoResult):
    """One table row: per-fold accuracies, mean, per-fold f-scores, mean."""
    accs = " ".join(f"{v:.2f}" for v in res.accuracies)
    fs = " ".join(f"{v:.2f}" for v in res.macro_fs)
    return f"{name:<20} acc {accs} | {res.mean_accuracy:.2f}   f {fs} | {res.mean_macro_f:.2f}"


def with_seed(params: ForestParams, seed):
    return replace(params, seed=seed)
