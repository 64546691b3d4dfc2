"""Evaluator models implemented in-repo: gradient-descent linear/logistic
regression, a CART decision tree, and a bagged random forest.

Everything operates on the featurized float matrix. The tree takes a split
even at zero impurity gain as long as the node is impure, so interactions
like XOR resolve within the depth budget; ties break toward the lowest
feature index, then the lowest threshold.
"""

from __future__ import annotations

import numpy as np

from ..errors import EvalError
from ..seeding import rng as derive_rng


def _max_eigen(gram: np.ndarray, iters: int = 30) -> float:
    d = gram.shape[0]
    v = np.full(d, 1.0 / np.sqrt(d))
    for _ in range(iters):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 1.0
        v = w / norm
    return float(max(v @ gram @ v, 1e-12))


class _Scaler:
    def fit(self, x: np.ndarray) -> np.ndarray:
        self.mean = x.mean(axis=0)
        self.std = x.std(axis=0)
        self.std = np.where(self.std < 1e-12, 1.0, self.std)
        return self.transform(x)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def _with_bias(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


class LogisticGd:
    """Full-batch softmax regression; z-scales features internally."""

    def __init__(self, n_classes: int, max_iter: int = 500):
        self.n_classes = n_classes
        self.max_iter = max_iter

    def fit(self, x: np.ndarray, y: np.ndarray) -> "LogisticGd":
        self.scaler = _Scaler()
        z = _with_bias(self.scaler.fit(x))
        n = z.shape[0]
        onehot = np.eye(self.n_classes)[y]
        # Step size from the curvature bound: logistic Hessian <= gram / 4.
        lr = 4.0 / _max_eigen(z.T @ z / n)
        self.w = np.zeros((z.shape[1], self.n_classes))
        for _ in range(self.max_iter):
            p = self._softmax(z @ self.w)
            self.w -= lr * (z.T @ (p - onehot) / n)
        return self

    @staticmethod
    def _softmax(scores: np.ndarray) -> np.ndarray:
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return self._softmax(_with_bias(self.scaler.transform(x)) @ self.w)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


class LinearGd:
    """Full-batch gradient-descent least squares; scales x and y internally."""

    def __init__(self, max_iter: int = 500):
        self.max_iter = max_iter

    def fit(self, x: np.ndarray, y: np.ndarray) -> "LinearGd":
        self.scaler = _Scaler()
        z = _with_bias(self.scaler.fit(x))
        self.y_mean = float(y.mean())
        self.y_std = float(y.std()) or 1.0
        target = (y - self.y_mean) / self.y_std
        n = z.shape[0]
        lr = 1.0 / _max_eigen(z.T @ z / n)
        self.w = np.zeros(z.shape[1])
        for _ in range(self.max_iter):
            self.w -= lr * (z.T @ (z @ self.w - target) / n)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        z = _with_bias(self.scaler.transform(x))
        return z @ self.w * self.y_std + self.y_mean


def _best_split_classify(xs, onehot, feats, min_leaf):
    m = onehot.shape[0]
    totals = onehot.sum(axis=0)
    parent = 1.0 - ((totals / m) ** 2).sum()
    best = None
    for j in feats:
        col = xs[:, j]
        order = np.argsort(col, kind="stable")
        sc = col[order]
        boundaries = np.flatnonzero(sc[1:] > sc[:-1])
        if boundaries.size == 0:
            continue
        nl = boundaries + 1
        nr = m - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        boundaries, nl, nr = boundaries[ok], nl[ok], nr[ok]
        cum = np.cumsum(onehot[order], axis=0)
        lc = cum[boundaries]
        rc = totals - lc
        gini_l = 1.0 - ((lc / nl[:, None]) ** 2).sum(axis=1)
        gini_r = 1.0 - ((rc / nr[:, None]) ** 2).sum(axis=1)
        weighted = (nl * gini_l + nr * gini_r) / m
        i = int(np.argmin(weighted))
        gain = parent - weighted[i]
        if best is None or gain > best[0] + 1e-12:
            thr = 0.5 * (sc[boundaries[i]] + sc[boundaries[i] + 1])
            best = (gain, int(j), float(thr))
    return best


def _best_split_regress(xs, ys, feats, min_leaf):
    m = ys.shape[0]
    total = ys.sum()
    total_sq = (ys**2).sum()
    parent = total_sq - total**2 / m
    best = None
    for j in feats:
        col = xs[:, j]
        order = np.argsort(col, kind="stable")
        sc = col[order]
        boundaries = np.flatnonzero(sc[1:] > sc[:-1])
        if boundaries.size == 0:
            continue
        nl = boundaries + 1
        nr = m - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        boundaries, nl, nr = boundaries[ok], nl[ok], nr[ok]
        ys_sorted = ys[order]
        cum = np.cumsum(ys_sorted)
        cum_sq = np.cumsum(ys_sorted**2)
        ls, lss = cum[boundaries], cum_sq[boundaries]
        sse_l = lss - ls**2 / nl
        sse_r = (total_sq - lss) - (total - ls) ** 2 / nr
        weighted = sse_l + sse_r
        i = int(np.argmin(weighted))
        gain = parent - weighted[i]
        if best is None or gain > best[0] + 1e-12:
            thr = 0.5 * (sc[boundaries[i]] + sc[boundaries[i] + 1])
            best = (gain, int(j), float(thr))
    return best


class DecisionTree:
    """CART: Gini splits for classification, variance splits for regression.

    ``feature_subsample`` draws ceil(sqrt(d)) candidate features per node from
    the supplied rng (used by the forest); otherwise all features compete.
    """

    def __init__(
        self,
        task: str,
        max_depth: int = 12,
        min_leaf: int = 1,
        n_classes: int | None = None,
        feature_subsample: bool = False,
    ):
        if task not in ("classify", "regress"):
            raise EvalError(f"unknown tree task {task!r}")
        if task == "classify" and not n_classes:
            raise EvalError("classification tree needs n_classes")
        self.task = task
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_classes = n_classes
        self.feature_subsample = feature_subsample

    def fit(self, x, y, rng: np.random.Generator | None = None):
        x = np.asarray(x, dtype=np.float64)
        self._feat: list[int] = []
        self._thr: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._value: list[np.ndarray | float] = []
        d = x.shape[1]
        if self.feature_subsample and rng is None:
            raise EvalError("feature subsampling needs an rng")
        if self.task == "classify":
            onehot = np.eye(self.n_classes)[np.asarray(y, dtype=np.int64)]
            self._build(x, onehot, None, 0, rng, d)
        else:
            self._build(x, None, np.asarray(y, dtype=np.float64), 0, rng, d)
        return self

    def _candidates(self, d, rng):
        if not self.feature_subsample:
            return np.arange(d)
        k = max(1, int(np.ceil(np.sqrt(d))))
        return np.sort(rng.choice(d, size=min(k, d), replace=False))

    def _build(self, x, onehot, ys, depth, rng, d) -> int:
        node = len(self._feat)
        self._feat.append(-1)
        self._thr.append(0.0)
        self._left.append(-1)
        self._right.append(-1)
        if onehot is not None:
            counts = onehot.sum(axis=0)
            self._value.append(counts / counts.sum())
            pure = counts.max() == counts.sum()
        else:
            self._value.append(float(ys.mean()))
            pure = ys.max() - ys.min() < 1e-15
        m = x.shape[0]
        if pure or depth >= self.max_depth or m < 2 * self.min_leaf:
            return node
        feats = self._candidates(d, rng)
        if onehot is not None:
            best = _best_split_classify(x, onehot, feats, self.min_leaf)
        else:
            best = _best_split_regress(x, ys, feats, self.min_leaf)
        if best is None:
            return node
        _, j, thr = best
        mask = x[:, j] <= thr
        self._feat[node] = j
        self._thr[node] = thr
        self._left[node] = self._build(
            x[mask], None if onehot is None else onehot[mask],
            None if ys is None else ys[mask], depth + 1, rng, d,
        )
        self._right[node] = self._build(
            x[~mask], None if onehot is None else onehot[~mask],
            None if ys is None else ys[~mask], depth + 1, rng, d,
        )
        return node

    def _leaf_of(self, row) -> int:
        node = 0
        while self._feat[node] >= 0:
            node = (
                self._left[node]
                if row[self._feat[node]] <= self._thr[node]
                else self._right[node]
            )
        return node

    def predict_proba(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.stack([self._value[self._leaf_of(row)] for row in x])

    def predict(self, x) -> np.ndarray:
        if self.task == "classify":
            return self.predict_proba(x).argmax(axis=1)
        x = np.asarray(x, dtype=np.float64)
        return np.array([self._value[self._leaf_of(row)] for row in x])


class RandomForest:
    """Bagged CART trees with per-node sqrt(d) feature subsampling."""

    def __init__(
        self,
        task: str,
        n_trees: int = 100,
        max_depth: int = 12,
        min_leaf: int = 1,
        n_classes: int | None = None,
        seed: int = 0,
    ):
        self.task = task
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_classes = n_classes
        self.seed = seed

    def fit(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        n = x.shape[0]
        self.trees = []
        for t in range(self.n_trees):
            rng = derive_rng(self.seed, "rf-tree", t)
            idx = rng.integers(n, size=n)
            tree = DecisionTree(
                task=self.task,
                max_depth=self.max_depth,
                min_leaf=self.min_leaf,
                n_classes=self.n_classes,
                feature_subsample=True,
            )
            tree.fit(x[idx], y[idx], rng=rng)
            self.trees.append(tree)
        return self

    def predict_proba(self, x) -> np.ndarray:
        return np.mean([t.predict_proba(x) for t in self.trees], axis=0)

    def predict(self, x) -> np.ndarray:
        if self.task == "classify":
            return self.predict_proba(x).argmax(axis=1)
        return np.mean([t.predict(x) for t in self.trees], axis=0)
