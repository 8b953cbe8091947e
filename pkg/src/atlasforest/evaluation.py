"""Classification metrics, ROC/AUC, and 5x2 nested cross-validation.

The outer 5 folds are stratified and each serves as the test set once; the
inner 2-fold loop selects hyperparameters by mean validation F1. Imputation
is fitted strictly inside the outer training fold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UndefinedMetricError
from .features import FeatureMatrix, apply_imputer, fit_imputer
from .forest import HyperParams, derive_params, fit_forest, predict_proba

N_OUTER = 5
N_INNER = 2


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise DataError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def recall(c: Confusion) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError("recall undefined: tp + fn = 0")
    return c.tp / (c.tp + c.fn)


def precision(c: Confusion) -> float:
    if c.tp + c.fp == 0:
        raise UndefinedMetricError("precision undefined: tp + fp = 0")
    return c.tp / (c.tp + c.fp)


def f1(c: Confusion) -> float:
    p, r = precision(c), recall(c)
    if p + r == 0:
        raise UndefinedMetricError("f1 undefined: precision + recall = 0")
    return 2.0 * p * r / (p + r)


def confusion_from_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> Confusion:
    """y arrays are 0/1 with 1 the positive class."""
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    return Confusion(
        tp=int(((y_true == 1) & (y_pred == 1)).sum()),
        fp=int(((y_true == 0) & (y_pred == 1)).sum()),
        tn=int(((y_true == 0) & (y_pred == 0)).sum()),
        fn=int(((y_true == 1) & (y_pred == 0)).sum()),
    )


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """(fpr, tpr) points at every distinct score, anchored at (0,0) and (1,1)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC requires both classes")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tps = np.cumsum(sorted_labels == 1)
    fps = np.cumsum(sorted_labels == 0)
    # keep only the last index of each tied score block
    distinct = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    tpr = tps[distinct] / n_pos
    fpr = fps[distinct] / n_neg
    points = np.column_stack([np.r_[0.0, fpr], np.r_[0.0, tpr]])
    if points[-1, 0] != 1.0 or points[-1, 1] != 1.0:
        points = np.vstack([points, [1.0, 1.0]])
    return points


def roc_thresholds(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Decision thresholds aligned with roc_curve's points (anchor is +inf)."""
    scores = np.asarray(scores, dtype=float)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    distinct = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    thresholds = np.r_[np.inf, sorted_scores[distinct]]
    n_points = roc_curve(scores, labels).shape[0]
    if thresholds.size < n_points:  # (1,1) anchor was appended
        thresholds = np.r_[thresholds, -np.inf]
    return thresholds


def auc(points: np.ndarray) -> float:
    """Trapezoidal area under ordered (fpr, tpr) points."""
    points = np.asarray(points, dtype=float)
    return float(np.trapezoid(points[:, 1], points[:, 0]))


@dataclass(frozen=True)
class FoldPlan:
    outer: tuple[np.ndarray, ...]  # test indices per outer fold
    inner: tuple[tuple[np.ndarray, ...], ...]  # validation splits per fold
    seed: int


def _stratified_split(indices_by_class: list[np.ndarray], n_folds: int,
                      rng: np.random.Generator) -> list[np.ndarray]:
    folds: list[list[int]] = [[] for _ in range(n_folds)]
    for cls_idx in indices_by_class:
        perm = rng.permutation(cls_idx)
        for i, idx in enumerate(perm):
            folds[i % n_folds].append(int(idx))
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


def make_fold_plan(y: np.ndarray, seed: int) -> FoldPlan:
    """Stratified outer 5-fold and, per fold, stratified inner 2-fold."""
    y = np.asarray(y).astype(int)
    n = y.size
    if n < 10:
        raise DataError(f"need >= 10 rows for 5x2 CV, got {n}")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2 or counts.min() < N_OUTER:
        raise DataError("both classes must have >= 5 rows to stratify")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0]))
    by_class = [np.flatnonzero(y == c) for c in classes]
    outer = _stratified_split(by_class, N_OUTER, rng)

    inner = []
    for fold_i, test_idx in enumerate(outer):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        rng_i = np.random.default_rng(
            np.random.SeedSequence([seed & 0xFFFFFFFF, 1, fold_i]))
        by_class_train = [train_idx[y[train_idx] == c] for c in classes]
        inner.append(tuple(_stratified_split(by_class_train, N_INNER, rng_i)))
    return FoldPlan(outer=tuple(outer), inner=tuple(inner), seed=seed)


@dataclass
class FoldResult:
    fold: int
    best_params: HyperParams
    confusion: Confusion
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    roc_points: np.ndarray
    roc_thresholds: np.ndarray
    auc: float


@dataclass
class CvReport:
    folds: list[FoldResult]
    pooled_confusion: Confusion
    pooled_precision: Optional[float]
    pooled_recall: Optional[float]
    pooled_f1: Optional[float]
    pooled_auc: float
    row_scores: np.ndarray  # positive-class probability, one per input row
    row_predictions: np.ndarray
    seed: int


def _safe(metric, c: Confusion) -> Optional[float]:
    try:
        return metric(c)
    except UndefinedMetricError:
        return None


def _grid_sort_key(item: tuple[int, HyperParams]):
    gi, p = item
    return (p.n_trees, p.max_depth, gi)


def nested_cv(X: FeatureMatrix, y: np.ndarray, grid: Sequence[HyperParams],
              seed: int) -> CvReport:
    """Run the full nested loop; every row is scored exactly once."""
    if not grid:
        raise DataError("empty hyperparameter grid")
    y = np.asarray(y).astype(int)
    plan = make_fold_plan(y, seed)
    n = y.size

    fold_results: list[FoldResult] = []
    row_scores = np.full(n, np.nan)
    row_predictions = np.full(n, -1, dtype=int)
    for fold_i, test_idx in enumerate(plan.outer):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        imputer = fit_imputer(X.take(train_idx))
        train = apply_imputer(imputer, X.take(train_idx))
        test = apply_imputer(imputer, X.take(test_idx))
        y_train = y[train_idx]

        # inner 2-fold grid search on validation F1
        pos_of = {int(r): i for i, r in enumerate(train_idx)}
        scores: list[Optional[float]] = []
        for gi, params in enumerate(grid):
            inner_f1: list[float] = []
            for ii, val_idx in enumerate(plan.inner[fold_i]):
                val_pos = np.array([pos_of[int(r)] for r in val_idx], dtype=np.intp)
                fit_pos = np.setdiff1d(np.arange(train_idx.size), val_pos)
                fitted = fit_forest(train.values[fit_pos], y_train[fit_pos],
                                    derive_params(params, 10, fold_i, ii, gi))
                proba = predict_proba(fitted, train.values[val_pos])
                pos_col = fitted.classes.index(1)
                pred = (proba[:, pos_col] >= 0.5).astype(int)
                c = confusion_from_predictions(y_train[val_pos], pred)
                v = _safe(f1, c)
                if v is not None:
                    inner_f1.append(v)
            scores.append(float(np.mean(inner_f1)) if inner_f1 else None)

        defined = [(gi, grid[gi]) for gi in range(len(grid)) if scores[gi] is not None]
        if not defined:
            raise UndefinedMetricError(
                f"fold {fold_i}: validation F1 undefined for every grid point")
        best_score = max(scores[gi] for gi, _ in defined)
        tied = [(gi, p) for gi, p in defined if scores[gi] == best_score]
        best_gi, best_params = min(tied, key=_grid_sort_key)

        # refit on the combined training fold, evaluate on the held-out test fold
        fitted = fit_forest(train.values, y_train,
                            derive_params(best_params, 20, fold_i))
        proba = predict_proba(fitted, test.values)
        pos_col = fitted.classes.index(1)
        test_scores = proba[:, pos_col]
        pred = (test_scores >= 0.5).astype(int)
        row_scores[test_idx] = test_scores
        row_predictions[test_idx] = pred

        c = confusion_from_predictions(y[test_idx], pred)
        points = roc_curve(test_scores, y[test_idx])
        fold_results.append(FoldResult(
            fold=fold_i, best_params=best_params, confusion=c,
            precision=_safe(precision, c), recall=_safe(recall, c),
            f1=_safe(f1, c), roc_points=points,
            roc_thresholds=roc_thresholds(test_scores, y[test_idx]),
            auc=auc(points),
        ))

    pooled = confusion_from_predictions(y, row_predictions)
    pooled_points = roc_curve(row_scores, y)
    return CvReport(
        folds=fold_results,
        pooled_confusion=pooled,
        pooled_precision=_safe(precision, pooled),
        pooled_recall=_safe(recall, pooled),
        pooled_f1=_safe(f1, pooled),
        pooled_auc=auc(pooled_points),
        row_scores=row_scores,
        row_predictions=row_predictions,
        seed=seed,
    )


@dataclass
class BaselineRecall:
    per_group: dict[str, float]
    counts: dict[str, tuple[int, int]]  # group -> (tp, total)
    skipped: int


def baseline_recall(records, assignments=None) -> BaselineRecall:
    """Recall of the initial clinician AD diagnosis within tAD and atAD groups."""
    from .cohort import Group, assign_group

    if assignments is None:
        assignments = [assign_group(r) for r in records]
    per_group: dict[str, float] = {}
    counts: dict[str, tuple[int, int]] = {}
    skipped = 0
    for group in (Group.TAD, Group.ATAD):
        tp = fn = 0
        for r, a in zip(records, assignments):
            if a.group is not group:
                continue
            if r.initial_clinician_dx is None:
                skipped += 1
                continue
            if r.initial_clinician_dx == "AD":
                tp += 1
            else:
                fn += 1
        if tp + fn == 0:
            raise UndefinedMetricError(f"no {group.value} records with a clinician diagnosis")
        per_group[group.value] = tp / (tp + fn)
        counts[group.value] = (tp, tp + fn)
    return BaselineRecall(per_group=per_group, counts=counts, skipped=skipped)
