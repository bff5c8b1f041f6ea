"""Least-squares gradient boosting over histogram regression trees.

Every feature is cut into at most ``max_bins`` bins once, before boosting.
When a feature has no more distinct values than that, the cuts are the
midpoints between neighbouring values and split finding is exactly greedy;
otherwise the cuts sit at empirical quantiles.  Trees grow level by level and
each level costs one weighted histogram per feature.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, EmptyTraining, NumericError, ShapeError


@dataclass
class GbdtConfig:
    n_trees: int = 200
    max_depth: int = 6
    learning_rate: float = 0.05
    min_leaf: int = 20
    subsample: float = 1.0
    seed: int = 0
    max_bins: int = 256


@dataclass(eq=False)
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                return self.value[node]
            r = rows[inner]
            n = node[inner]
            go_left = X[r, feat[inner]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])


@dataclass(eq=False)
class GbdtModel:
    init: float
    learning_rate: float
    trees: list = field(default_factory=list)
    n_features: int = 0
    max_depth: int = 0
    train_mse: list = field(default_factory=list, repr=False)


@dataclass(frozen=True, eq=False)
class Binning:
    """Per-feature ascending cut points and the bin code of every training row.

    A row's code is the number of cuts strictly below its value, so
    ``x <= cuts[b]`` holds exactly when ``code <= b``.
    """

    cuts: list
    codes: np.ndarray  # (d, n), one contiguous row per feature

    def take(self, rows) -> "Binning":
        return Binning(self.cuts, self.codes[:, rows])


def make_bins(X: np.ndarray, max_bins: int = 256) -> Binning:
    n, d = X.shape
    codes = np.empty((d, n), dtype=np.int64)
    cuts = []
    for j in range(d):
        col = X[:, j]
        uniq = np.unique(col)
        if len(uniq) <= max_bins:
            mid = uniq[:-1] + (uniq[1:] - uniq[:-1]) / 2
            c = np.where(mid < uniq[1:], mid, uniq[:-1])  # guard against rounding up to the upper value
        else:
            q = np.quantile(col, np.arange(1, max_bins) / max_bins, method="inverted_cdf")
            c = np.unique(q)
            c = c[c < uniq[-1]]
        cuts.append(c)
        codes[j] = np.searchsorted(c, col, side="left")
    return Binning(cuts, codes)


def _best_splits(binning: Binning, residual, node_of, k, splittable, min_leaf):
    """Best (feature, threshold) for each of the ``k`` frontier nodes.

    ``node_of`` holds labels 0..k-1 for rows of frontier nodes and ``k`` for
    rows already sitting in finished leaves.
    """
    best_gain = np.zeros(k)
    best_feat = np.full(k, -1)
    best_thr = np.zeros(k)
    active = node_of < k
    lid = node_of[active]
    r = residual[active]
    counts = np.bincount(lid, minlength=k).astype(float)
    totals = np.bincount(lid, weights=r, minlength=k)
    parent = np.where(counts > 0, totals**2 / np.maximum(counts, 1), 0.0)
    for j, cuts in enumerate(binning.cuts):
        n_bins = len(cuts) + 1
        if n_bins < 2:
            continue
        idx = lid * n_bins + binning.codes[j][active]
        cnt = np.bincount(idx, minlength=k * n_bins).reshape(k, n_bins)
        sm = np.bincount(idx, weights=r, minlength=k * n_bins).reshape(k, n_bins)
        # split after bin b: left holds bins 0..b
        n_left = np.cumsum(cnt, axis=1)[:, :-1].astype(float)
        s_left = np.cumsum(sm, axis=1)[:, :-1]
        n_right = counts[:, None] - n_left
        s_right = totals[:, None] - s_left
        ok = (n_left >= min_leaf) & (n_right >= min_leaf) & splittable[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = s_left**2 / n_left + s_right**2 / n_right - parent[:, None]
        gain = np.where(ok, gain, -np.inf)
        b = np.argmax(gain, axis=1)
        g = gain[np.arange(k), b]
        better = g > best_gain * (1 + 1e-12) + 1e-12
        best_gain[better] = g[better]
        best_feat[better] = j
        best_thr[better] = cuts[b[better]]
    return best_feat, best_thr


def fit_tree(X, residual, max_depth, min_leaf, binning: Binning | None = None, max_bins: int = 256) -> Tree:
    n, d = X.shape
    if binning is None:
        binning = make_bins(X, max_bins)
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    node_of = np.zeros(n, dtype=np.int64)
    frontier = [0]
    for _depth in range(max_depth):
        # relabel rows of the frontier nodes 0..k-1; rows in finished leaves get k
        k = len(frontier)
        local = np.full(len(feature), k, dtype=np.int64)
        local[frontier] = np.arange(k)
        lid = local[node_of]
        counts = np.bincount(lid, minlength=k + 1)
        splittable = counts[:k] >= 2 * min_leaf
        if not splittable.any():
            break
        feats, thrs = _best_splits(binning, residual, lid, k, splittable, min_leaf)
        new_frontier = []
        for i, node in enumerate(frontier):
            if feats[i] < 0:
                continue
            feature[node] = int(feats[i])
            threshold[node] = float(thrs[i])
            left[node] = len(feature)
            right[node] = len(feature) + 1
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
            new_frontier += [left[node], right[node]]
            rows = node_of == node
            go_left = X[:, feats[i]] <= thrs[i]
            node_of[rows & go_left] = left[node]
            node_of[rows & ~go_left] = right[node]
        if not new_frontier:
            break
        frontier = new_frontier
    n_nodes = len(feature)
    sums = np.bincount(node_of, weights=residual, minlength=n_nodes)
    counts = np.bincount(node_of, minlength=n_nodes)
    value = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        value,
    )


def fit_gbdt(X, y, config: GbdtConfig | None = None) -> GbdtModel:
    cfg = config or GbdtConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"X shape {X.shape} does not match {len(y)} targets")
    if len(y) == 0:
        raise EmptyTraining("no training rows")
    if len(y) < 2 * cfg.min_leaf:
        raise ConfigError(f"{len(y)} rows cannot hold two leaves of min_leaf={cfg.min_leaf}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite value in training data")
    if not 0 < cfg.subsample <= 1:
        raise ConfigError("subsample must lie in (0, 1]")
    if cfg.max_bins < 2:
        raise ConfigError("max_bins must be at least 2")

    rng = np.random.default_rng(cfg.seed)
    init = float(y.mean())
    pred = np.full(len(y), init)
    model = GbdtModel(init, cfg.learning_rate, [], X.shape[1], cfg.max_depth, [float(np.mean((y - pred) ** 2))])
    binning = make_bins(X, cfg.max_bins)
    for _ in range(cfg.n_trees):
        residual = y - pred
        if cfg.subsample < 1:
            rows = np.sort(rng.choice(len(y), size=max(2 * cfg.min_leaf, int(cfg.subsample * len(y))), replace=False))
            tree = fit_tree(X[rows], residual[rows], cfg.max_depth, cfg.min_leaf, binning.take(rows))
        else:
            tree = fit_tree(X, residual, cfg.max_depth, cfg.min_leaf, binning)
        if tree.n_nodes == 1 and abs(tree.value[0]) <= 1e-15 * max(1.0, abs(init)):
            break
        pred = pred + cfg.learning_rate * tree.predict(X)
        model.trees.append(tree)
        model.train_mse.append(float(np.mean((y - pred) ** 2)))
    return model


def predict_gbdt(model: GbdtModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got {X.shape[1]}")
    out = np.full(len(X), model.init)
    for tree in model.trees:
        out += model.learning_rate * tree.predict(X)
    return out
