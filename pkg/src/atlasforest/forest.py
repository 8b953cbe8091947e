"""From-scratch CART trees and Random Forest with Gini importances.

Trees are depth-bounded, grown on bootstrap samples with a random feature
subset per node. All randomness flows through per-tree substreams derived
as seed XOR tree index, so fits are deterministic and order-independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError, InvalidValueError

CLASS_WEIGHT_NONE = "none"
CLASS_WEIGHT_INVERSE = "inverse_frequency"

# Hyperparameter grid domain used for tuning.
GRID_MAX_DEPTHS = (1, 2, 3, 4, 5)
GRID_N_TREES = (2, 5, 10, 100, 1000)


@dataclass(frozen=True)
class HyperParams:
    max_depth: int
    n_trees: int
    features_per_split: Optional[int] = None  # None -> ceil(sqrt(F))
    class_weighting: str = CLASS_WEIGHT_NONE
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1: {self.max_depth}")
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1: {self.n_trees}")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ConfigError("features_per_split must be >= 1")
        if self.class_weighting not in (CLASS_WEIGHT_NONE, CLASS_WEIGHT_INVERSE):
            raise ConfigError(f"unknown class_weighting: {self.class_weighting!r}")


@dataclass
class Leaf:
    class_counts: np.ndarray  # weighted, length n_classes
    depth: int


@dataclass
class Split:
    feature_index: int
    threshold: float
    left: Union["Split", Leaf]
    right: Union["Split", Leaf]


TreeNode = Union[Split, Leaf]


@dataclass
class ForestModel:
    trees: list[TreeNode]
    params: HyperParams
    classes: tuple
    n_features: int
    importances: np.ndarray  # normalized to sum 1 when any split exists
    oob_fractions: list[float] = field(default_factory=list)


def gini(weighted_counts: np.ndarray) -> float:
    """Gini impurity 1 - sum(p^2) over weighted class counts."""
    counts = np.asarray(weighted_counts, dtype=float)
    if (counts < 0).any():
        raise InvalidValueError("negative class weights")
    total = counts.sum()
    if total <= 0:
        raise InvalidValueError("all-zero class weights")
    p = counts / total
    return float(1.0 - (p * p).sum())


def best_split(X: np.ndarray, y: np.ndarray, candidate_features: Sequence[int],
               weights: np.ndarray, n_classes: Optional[int] = None,
               ) -> Optional[tuple[int, float, float]]:
    """Exhaustive midpoint-threshold search over the candidate features.

    Returns (feature, threshold, weighted impurity decrease) maximizing the
    decrease, or None when no split helps. Ties break to the lowest feature
    index, then the lowest threshold.
    """
    y = np.asarray(y)
    weights = np.asarray(weights, dtype=float)
    k = n_classes if n_classes is not None else int(y.max()) + 1
    total_w = weights.sum()
    parent_counts = np.bincount(y, weights=weights, minlength=k)
    parent_gini = gini(parent_counts)
    n = y.size
    if n < 2:
        return None

    feats = np.asarray(sorted(candidate_features), dtype=np.intp)
    cols = X[:, feats]  # (n, m)
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    valid = xs[:-1] < xs[1:]  # (n-1, m)
    if not valid.any():
        return None

    if k == 2:
        # binary fast path: weighted Gini of a side is 2*pos*neg/side_weight
        left_w = np.cumsum(weights[order], axis=0)[:-1]
        left_pos = np.cumsum((weights * y)[order], axis=0)[:-1]
        right_w = total_w - left_w
        right_pos = parent_counts[1] - left_pos
        with np.errstate(invalid="ignore", divide="ignore"):
            child = (left_pos * (left_w - left_pos) / left_w
                     + right_pos * (right_w - right_pos) / right_w)
            decrease = parent_gini - 2.0 * child / total_w
    else:
        onehot = np.zeros((n, k))
        onehot[np.arange(n), y] = weights
        cum = np.cumsum(onehot[order], axis=0)[:-1]  # (n-1, m, k) left class weights
        left_w = cum.sum(axis=2)
        right_w = total_w - left_w
        right = parent_counts - cum
        with np.errstate(invalid="ignore", divide="ignore"):
            gini_l = 1.0 - ((cum / left_w[:, :, None]) ** 2).sum(axis=2)
            gini_r = 1.0 - ((right / right_w[:, :, None]) ** 2).sum(axis=2)
            decrease = parent_gini - (left_w * gini_l + right_w * gini_r) / total_w
    decrease[~valid] = -np.inf

    top = decrease.max()
    if not np.isfinite(top) or top <= 0:
        return None
    # ties: lowest feature index first (column-major scan), then lowest threshold
    flat = np.flatnonzero((decrease == top).T)[0]
    col, row = divmod(int(flat), n - 1)
    threshold = float((xs[row, col] + xs[row + 1, col]) / 2.0)
    return int(feats[col]), threshold, float(top)


def _grow(X: np.ndarray, y: np.ndarray, weights: np.ndarray, depth: int,
          params: HyperParams, mtry: int, rng: np.random.Generator,
          n_classes: int, importances: np.ndarray, total_weight: float) -> TreeNode:
    counts = np.bincount(y, weights=weights, minlength=n_classes)
    if depth >= params.max_depth or y.size < 2 or np.count_nonzero(counts) < 2:
        return Leaf(class_counts=counts, depth=depth)
    candidates = rng.choice(X.shape[1], size=mtry, replace=False)
    found = best_split(X, y, candidates, weights, n_classes=n_classes)
    if found is None:
        return Leaf(class_counts=counts, depth=depth)
    f, threshold, decrease = found
    importances[f] += (weights.sum() / total_weight) * decrease
    go_left = X[:, f] <= threshold
    left = _grow(X[go_left], y[go_left], weights[go_left], depth + 1,
                 params, mtry, rng, n_classes, importances, total_weight)
    right = _grow(X[~go_left], y[~go_left], weights[~go_left], depth + 1,
                  params, mtry, rng, n_classes, importances, total_weight)
    return Split(feature_index=f, threshold=threshold, left=left, right=right)


def fit_tree(X: np.ndarray, y: np.ndarray, weights: np.ndarray,
             params: HyperParams, rng: np.random.Generator,
             n_classes: int, importances: Optional[np.ndarray] = None) -> TreeNode:
    """Grow one tree on the given rows (no bootstrap); exposed for testing."""
    if importances is None:
        importances = np.zeros(X.shape[1])
    mtry = params.features_per_split or math.ceil(math.sqrt(X.shape[1]))
    mtry = min(mtry, X.shape[1])
    return _grow(X, y, weights, 0, params, mtry, rng, n_classes,
                 importances, float(weights.sum()))


def _encode_labels(y) -> tuple[np.ndarray, tuple]:
    classes = tuple(sorted(v.item() if isinstance(v, np.generic) else v
                           for v in set(y)))
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[v] for v in y], dtype=np.intp), classes


def fit_forest(X: np.ndarray, y, params: HyperParams) -> ForestModel:
    """Fit the ensemble; deterministic for a given params.seed."""
    X = np.asarray(X, dtype=float)
    if np.isnan(X).any():
        raise DataError("missing cells in training matrix")
    y_enc, classes = _encode_labels(y)
    if len(classes) < 2:
        raise DataError("training labels contain a single class")
    if y_enc.size != X.shape[0]:
        raise DataError("X and y row counts differ")
    n, n_features = X.shape
    k = len(classes)

    if params.class_weighting == CLASS_WEIGHT_INVERSE:
        class_counts = np.bincount(y_enc, minlength=k)
        class_w = n / (k * class_counts.astype(float))
    else:
        class_w = np.ones(k)

    trees: list[TreeNode] = []
    importances = np.zeros(n_features)
    oob_fractions: list[float] = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(params.seed ^ t)
        idx = rng.integers(0, n, size=n)
        oob_fractions.append(1.0 - np.unique(idx).size / n)
        tree_imp = np.zeros(n_features)
        tree = fit_tree(X[idx], y_enc[idx], class_w[y_enc[idx]], params, rng,
                        k, importances=tree_imp)
        importances += tree_imp
        trees.append(tree)

    importances /= params.n_trees
    total = importances.sum()
    if total > 0:
        importances /= total
    return ForestModel(trees=trees, params=params, classes=classes,
                       n_features=n_features, importances=importances,
                       oob_fractions=oob_fractions)


def _tree_proba(tree: TreeNode, X: np.ndarray, out: np.ndarray,
                idx: np.ndarray) -> None:
    if isinstance(tree, Leaf):
        total = tree.class_counts.sum()
        out[idx] = tree.class_counts / total if total > 0 else 1.0 / out.shape[1]
        return
    go_left = X[idx, tree.feature_index] <= tree.threshold
    if go_left.any():
        _tree_proba(tree.left, X, out, idx[go_left])
    if not go_left.all():
        _tree_proba(tree.right, X, out, idx[~go_left])


def predict_proba(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Mean over trees of leaf weighted class proportions; rows sum to 1."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise DataError(
            f"feature dimension {X.shape[1]} differs from training {model.n_features}")
    k = len(model.classes)
    acc = np.zeros((X.shape[0], k))
    buf = np.empty((X.shape[0], k))
    all_rows = np.arange(X.shape[0])
    for tree in model.trees:
        _tree_proba(tree, X, buf, all_rows)
        acc += buf
    return acc / len(model.trees)


def predict(model: ForestModel, X: np.ndarray, threshold: float = 0.5,
            positive_class=None) -> np.ndarray:
    """Positive class iff its probability >= threshold (ties go positive)."""
    if positive_class is None:
        positive_class = model.classes[-1]
    pos = model.classes.index(positive_class)
    proba = predict_proba(model, X)
    neg = model.classes[0] if pos != 0 else model.classes[1]
    return np.where(proba[:, pos] >= threshold,
                    np.full(proba.shape[0], positive_class, dtype=object),
                    np.full(proba.shape[0], neg, dtype=object))


SERIALIZATION_VERSION = 1


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": True, "class_counts": node.class_counts.tolist(),
                "depth": node.depth}
    return {"leaf": False, "feature_index": node.feature_index,
            "threshold": node.threshold, "left": _node_to_dict(node.left),
            "right": _node_to_dict(node.right)}


def _node_from_dict(d: dict) -> TreeNode:
    if d["leaf"]:
        return Leaf(class_counts=np.array(d["class_counts"], dtype=float),
                    depth=d["depth"])
    return Split(feature_index=d["feature_index"], threshold=d["threshold"],
                 left=_node_from_dict(d["left"]), right=_node_from_dict(d["right"]))


def forest_to_json(model: ForestModel) -> str:
    doc = {
        "version": SERIALIZATION_VERSION,
        "params": {
            "max_depth": model.params.max_depth,
            "n_trees": model.params.n_trees,
            "features_per_split": model.params.features_per_split,
            "class_weighting": model.params.class_weighting,
            "seed": model.params.seed,
        },
        "classes": list(model.classes),
        "n_features": model.n_features,
        "importances": model.importances.tolist(),
        "oob_fractions": model.oob_fractions,
        "trees": [_node_to_dict(t) for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True)


def forest_from_json(text: str) -> ForestModel:
    doc = json.loads(text)
    if doc.get("version") != SERIALIZATION_VERSION:
        raise DataError(f"unsupported forest serialization version: {doc.get('version')}")
    params = HyperParams(**doc["params"])
    return ForestModel(
        trees=[_node_from_dict(t) for t in doc["trees"]],
        params=params,
        classes=tuple(doc["classes"]),
        n_features=doc["n_features"],
        importances=np.array(doc["importances"], dtype=float),
        oob_fractions=list(doc["oob_fractions"]),
    )


def derive_params(params: HyperParams, *entropy: int) -> HyperParams:
    """New params with a seed deterministically derived from extra entropy."""
    ss = np.random.SeedSequence([params.seed & 0xFFFFFFFF, *entropy])
    return replace(params, seed=int(ss.generate_state(1)[0]))
