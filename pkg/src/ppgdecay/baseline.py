"""Random-forest baseline over the 34 handcrafted features.

Plain CART with Gini impurity, bootstrap resampling, and per-split feature
subsampling. The forest ignores time gaps entirely; it exists as the
reference point that the decay-weighted scorer is compared against.

Determinism: tree ``t`` draws everything from ``default_rng(seed + t)``,
consuming first the bootstrap indices, then one feature subset per node in
depth-first (pre-order) construction order. Candidate features are visited
in ascending index order and thresholds in ascending value order, with a
strictly-better rule for accepting splits, so ties resolve identically to
an exhaustive scan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    features_per_split: int = 5  # floor(sqrt(34))
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if not 1 <= self.features_per_split:
            raise ValueError("features_per_split must be at least 1")


@dataclass
class DecisionTree:
    """Node table in parallel arrays; feature == -1 marks a leaf."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)  # positive fraction

    def add_node(self, fraction: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(fraction)
        return len(self.feature) - 1


@dataclass
class Forest:
    config: ForestConfig
    trees: list[DecisionTree]


def _gini(pos: float, n: float) -> float:
    return 1.0 - (pos / n) ** 2 - ((n - pos) / n) ** 2


def _best_split(X: np.ndarray, y: np.ndarray, feature_ids: np.ndarray,
                min_leaf: int) -> tuple[int, float, float] | None:
    """Strictly best (feature, threshold, weighted Gini) or None.

    Thresholds are midpoints between consecutive distinct sorted values.
    """
    n = len(y)
    best: tuple[int, float, float] | None = None
    for f in feature_ids:
        col = X[:, f]
        order = np.argsort(col, kind="mergesort")
        vals = col[order]
        pos_prefix = np.cumsum(y[order])
        n_left = np.arange(1, n)
        valid = (vals[1:] != vals[:-1]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not np.any(valid):
            continue
        pos_left = pos_prefix[:-1]
        n_right = n - n_left
        pos_right = pos_prefix[-1] - pos_left
        gini_left = 1.0 - (pos_left / n_left) ** 2 - ((n_left - pos_left) / n_left) ** 2
        gini_right = 1.0 - (pos_right / n_right) ** 2 - ((n_right - pos_right) / n_right) ** 2
        weighted = (n_left * gini_left + n_right * gini_right) / n
        weighted = np.where(valid, weighted, np.inf)
        idx = int(np.argmin(weighted))
        score = float(weighted[idx])
        if best is None or score < best[2]:
            threshold = (float(vals[idx]) + float(vals[idx + 1])) / 2.0
            best = (int(f), threshold, score)
    return best


def _grow(tree: DecisionTree, X: np.ndarray, y: np.ndarray, idx: np.ndarray,
          depth: int, cfg: ForestConfig, rng: np.random.Generator) -> int:
    n = len(idx)
    pos = float(np.sum(y[idx]))
    node = tree.add_node(pos / n)
    parent_gini = _gini(pos, n)
    if depth >= cfg.max_depth or n < 2 * cfg.min_leaf or parent_gini == 0.0:
        return node

    k = min(cfg.features_per_split, X.shape[1])
    feats = np.sort(rng.choice(X.shape[1], size=k, replace=False))
    found = _best_split(X[idx], y[idx], feats, cfg.min_leaf)
    if found is None or found[2] >= parent_gini:
        return node

    f, threshold, _ = found
    go_left = X[idx, f] <= threshold
    tree.feature[node] = f
    tree.threshold[node] = threshold
    tree.left[node] = _grow(tree, X, y, idx[go_left], depth + 1, cfg, rng)
    tree.right[node] = _grow(tree, X, y, idx[~go_left], depth + 1, cfg, rng)
    return node


def fit(X: np.ndarray, y: np.ndarray, cfg: ForestConfig | None = None) -> Forest:
    """Fit the forest. Requires both classes in ``y``."""
    cfg = cfg or ForestConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise ValueError("training data contains a single class")

    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(cfg.seed + t)
        if cfg.bootstrap:
            idx = rng.integers(0, len(y), size=len(y))
        else:
            idx = np.arange(len(y))
        tree = DecisionTree()
        _grow(tree, X, y, idx, 0, cfg, rng)
        trees.append(tree)
    return Forest(config=cfg, trees=trees)


def _tree_predict(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(0, np.arange(len(X)))]
    while stack:
        node, rows = stack.pop()
        if len(rows) == 0:
            continue
        f = tree.feature[node]
        if f == -1:
            out[rows] = tree.value[node]
            continue
        go_left = X[rows, f] <= tree.threshold[node]
        stack.append((tree.left[node], rows[go_left]))
        stack.append((tree.right[node], rows[~go_left]))
    return out


def predict_proba(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Soft vote: mean leaf positive-fraction over trees, in [0, 1]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    votes = np.zeros(len(X))
    for tree in forest.trees:
        votes += _tree_predict(tree, X)
    return votes / len(forest.trees)


def forest_to_json(forest: Forest) -> str:
    return json.dumps({
        "config": asdict(forest.config),
        "trees": [asdict(t) for t in forest.trees],
    }, sort_keys=True)


def forest_from_json(payload: str) -> Forest:
    doc = json.loads(payload)
    cfg = ForestConfig(**doc["config"])
    trees = [DecisionTree(**t) for t in doc["trees"]]
    return Forest(config=cfg, trees=trees)
