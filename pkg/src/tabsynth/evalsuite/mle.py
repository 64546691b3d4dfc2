"""Machine-learning efficiency: train the built-in evaluators on synthetic
data, test on real data, and compare with the same evaluators trained on the
real training set.

Classification reports accuracy, ROC-AUC (one-vs-rest macro beyond two
classes), and macro-F1; regression reports mean squared error. Each metric is
a mean and standard deviation over the supplied seeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import EvalError, SingleClassTargetError
from ..tables import FeatureKind, Table
from .featurize import Featurizer, ensure_same_features
from .models import DecisionTree, LinearGd, LogisticGd, RandomForest

EVALUATORS = ("LinearOrLogistic", "DecisionTree", "RandomForest")


@dataclass(frozen=True)
class MleResult:
    task: str
    scores: dict[str, dict[str, tuple[float, float]]]

    def to_json(self) -> dict:
        return {
            "task": self.task,
            "models": {
                model: {
                    metric: {"mean": mean, "std": std}
                    for metric, (mean, std) in metrics.items()
                }
                for model, metrics in self.scores.items()
            },
        }


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean(y_true == y_pred))


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    """Macro average over the classes present in y_true."""
    scores = []
    for c in range(n_classes):
        support = np.sum(y_true == c)
        if support == 0:
            continue
        tp = np.sum((y_true == c) & (y_pred == c))
        fp = np.sum((y_true != c) & (y_pred == c))
        fn = support - tp
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores)) if scores else 0.0


def _binary_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    pos = int(labels.sum())
    neg = len(labels) - pos
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - pos * (pos + 1) / 2) / (pos * neg))


def roc_auc(y_true: np.ndarray, proba: np.ndarray, n_classes: int) -> float:
    """Rank-based AUC; one-vs-rest macro over classes with both outcomes."""
    aucs = []
    for c in range(n_classes):
        labels = (y_true == c).astype(np.int64)
        if labels.sum() in (0, len(labels)):
            continue
        aucs.append(_binary_auc(labels, proba[:, c]))
    if not aucs:
        return 0.5
    if n_classes == 2:
        return aucs[-1]
    return float(np.mean(aucs))


def mse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean((y_true - y_pred) ** 2))


def _classification_targets(tables: list[Table], target: str):
    labels = sorted({c for t in tables for c in t.column(target)})
    index = {v: i for i, v in enumerate(labels)}
    encoded = [
        np.array([index[c] for c in t.column(target)], dtype=np.int64)
        for t in tables
    ]
    return labels, encoded


def _regression_targets(tables: list[Table], target: str):
    out = []
    for t in tables:
        col = t.numeric_column(target)
        if np.isnan(col).any():
            raise EvalError(f"target {target!r} has missing cells")
        out.append(col)
    return out


def _fit_predict(model_name, task, x_train, y_train, x_test, n_classes, seed,
                 tree_depth, forest_trees, gd_max_iter):
    if model_name == "LinearOrLogistic":
        if task == "classify":
            model = LogisticGd(n_classes=n_classes, max_iter=gd_max_iter)
            model.fit(x_train, y_train)
            return model.predict(x_test), model.predict_proba(x_test)
        model = LinearGd(max_iter=gd_max_iter).fit(x_train, y_train)
        return model.predict(x_test), None
    if model_name == "DecisionTree":
        tree = DecisionTree(
            task=task, max_depth=tree_depth, n_classes=n_classes
        ).fit(x_train, y_train)
        if task == "classify":
            return tree.predict(x_test), tree.predict_proba(x_test)
        return tree.predict(x_test), None
    forest = RandomForest(
        task=task, n_trees=forest_trees, max_depth=tree_depth,
        n_classes=n_classes, seed=seed,
    ).fit(x_train, y_train)
    if task == "classify":
        return forest.predict(x_test), forest.predict_proba(x_test)
    return forest.predict(x_test), None


def mle(
    real_train: Table,
    synth_train: Table,
    real_test: Table,
    target: str,
    seeds=(0, 1, 2, 3, 4),
    *,
    tree_depth: int = 12,
    forest_trees: int = 100,
    gd_max_iter: int = 500,
) -> tuple[MleResult, MleResult]:
    """Returns (synthetic-trained result, real-trained baseline result)."""
    ensure_same_features(real_train, synth_train, real_test)
    schema = real_train.schema
    if target not in schema.names:
        raise EvalError(f"unknown target feature {target!r}")
    task = (
        "classify"
        if schema.kind_of(target) is FeatureKind.CATEGORICAL
        else "regress"
    )
    tables = [real_train, synth_train, real_test]
    feat = Featurizer.fit(tables, exclude=(target,))
    x_rt, x_st, x_te = (feat.transform(t) for t in tables)

    if task == "classify":
        labels, (y_rt, y_st, y_te) = _classification_targets(tables, target)
        n_classes = len(labels)
        for name, y in (("real", y_rt), ("synthetic", y_st)):
            if len(np.unique(y)) < 2:
                raise SingleClassTargetError(
                    f"{name} training set has a single target class"
                )
    else:
        y_rt, y_st, y_te = _regression_targets(tables, target)
        n_classes = None

    def run(x_train, y_train) -> MleResult:
        scores: dict[str, dict[str, tuple[float, float]]] = {}
        for model_name in EVALUATORS:
            per_metric: dict[str, list[float]] = {}
            for seed in seeds:
                pred, proba = _fit_predict(
                    model_name, task, x_train, y_train, x_te, n_classes,
                    seed, tree_depth, forest_trees, gd_max_iter,
                )
                if task == "classify":
                    values = {
                        "accuracy": accuracy(y_te, pred),
                        "roc_auc": roc_auc(y_te, proba, n_classes),
                        "macro_f1": macro_f1(y_te, pred, n_classes),
                    }
                else:
                    values = {"mse": mse(y_te, pred)}
                for metric, value in values.items():
                    per_metric.setdefault(metric, []).append(value)
            scores[model_name] = {
                metric: (float(np.mean(vals)), float(np.std(vals)))
                for metric, vals in per_metric.items()
            }
        return MleResult(task=task, scores=scores)

    return run(x_st, y_st), run(x_rt, y_rt)
