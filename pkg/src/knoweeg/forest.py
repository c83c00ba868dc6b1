"""The Fusion Forest: a random forest drawing per-tree feature subsets
independently from two feature modes.

Each of the K trees sees a bootstrap sample of the N rows, floor(sqrt(A))
columns drawn without replacement from mode A and floor(sqrt(B)) from
mode B (never fewer than one from each mode). Within a tree, every
pooled column is a candidate at every node; trees are unpruned Gini
trees (min split 2, min leaf 1) with midpoint thresholds and
deterministic tie-breaking (lowest feature index, then lowest
threshold). The classical random forest used for connectivity-metric
selection is the single-mode degenerate configuration of the same
machinery.

Seeding: tree k draws from ``SeedSequence((master_seed, k))``, so
fitting is reproducible for any worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AlignmentError, DegenerateLabelsError, InputError, ParamError
from .feature_matrix import FeatureMatrix

MODEL_SCHEMA = "knoweeg-fusion-forest"
MODEL_VERSION = 1

_LEAF = -1


def gini_impurity(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature`` holds global column indices, -1 at leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) training class counts per node
    feature_pool: np.ndarray  # global column indices visible to this tree

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
            "feature_pool": self.feature_pool.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            counts=np.asarray(d["counts"], dtype=np.int64),
            feature_pool=np.asarray(d["feature_pool"], dtype=np.int64),
        )


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Exhaustive Gini split search over all (feature, midpoint) pairs.

    Returns (local_feature, threshold, gain) maximizing the impurity
    decrease, ties broken by lowest feature then lowest threshold, or
    None when the node is pure or unsplittable.
    """
    m, n_feat = X.shape
    counts = np.bincount(y, minlength=n_classes).astype(float)
    parent_gini = 1.0 - np.sum((counts / m) ** 2)
    if parent_gini <= 0.0 or m < 2:
        return None

    order = np.argsort(X, axis=0, kind="stable")
    sorted_x = np.take_along_axis(X, order, axis=0)
    sorted_y = y[order]  # (m, n_feat)
    onehot = sorted_y[:, None, :] == np.arange(n_classes)[None, :, None]
    left_counts = np.cumsum(onehot, axis=0)[:-1]  # (m-1, C, F) after i+1 rows
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left

    left_gini = 1.0 - np.sum((left_counts / n_left[:, None, :]) ** 2, axis=1)
    right_counts = counts[None, :, None] - left_counts
    right_gini = 1.0 - np.sum((right_counts / n_right[:, None, :]) ** 2, axis=1)
    weighted = (n_left * left_gini + n_right * right_gini) / m
    gain = parent_gini - weighted  # (m-1, F)

    valid = sorted_x[1:] > sorted_x[:-1]
    gain[~valid] = -np.inf
    best_flat = int(np.argmax(gain.T))  # feature-major: lowest feature, then
    feat, pos = divmod(best_flat, m - 1)  # lowest threshold on ties
    if not np.isfinite(gain[pos, feat]):
        return None
    threshold = (sorted_x[pos, feat] + sorted_x[pos + 1, feat]) / 2.0
    return feat, float(threshold), float(gain[pos, feat])


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    feature_pool: np.ndarray | None = None,
    importance_out: np.ndarray | None = None,
) -> DecisionTree:
    """Grow one unpruned Gini tree on (X, y).

    ``feature_pool`` maps local columns to global indices (identity when
    omitted). ``importance_out`` accumulates weighted impurity decreases
    per global column.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    n_root = X.shape[0]
    if n_root == 0:
        raise InputError("cannot grow a tree on zero rows")
    pool = (
        np.arange(X.shape[1], dtype=np.int64)
        if feature_pool is None
        else np.asarray(feature_pool, dtype=np.int64)
    )

    feature, threshold, left, right, counts = [], [], [], [], []
    stack = [(np.arange(n_root), None, None)]  # (row indices, parent, side)
    while stack:
        rows, parent, side = stack.pop()
        node_id = len(feature)
        if parent is not None:
            if side == "l":
                left[parent] = node_id
            else:
                right[parent] = node_id
        node_counts = np.bincount(y[rows], minlength=n_classes)
        counts.append(node_counts)
        split = _best_split(X[rows], y[rows], n_classes)
        if split is None:
            feature.append(_LEAF)
            threshold.append(0.0)
            left.append(_LEAF)
            right.append(_LEAF)
            continue
        local_feat, thr, gain = split
        if importance_out is not None:
            importance_out[pool[local_feat]] += rows.size / n_root * gain
        feature.append(int(pool[local_feat]))
        threshold.append(thr)
        left.append(-2)  # patched when children pop
        right.append(-2)
        go_left = X[rows, local_feat] <= thr
        # push right first so the left child is emitted next (preorder)
        stack.append((rows[~go_left], node_id, "r"))
        stack.append((rows[go_left], node_id, "l"))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        feature_pool=pool,
    )


@dataclass
class FusionForestModel:
    trees: list[DecisionTree]
    n_classes: int
    seed: int
    mode_a_names: tuple[str, ...]
    mode_b_names: tuple[str, ...] | None
    per_tree_subsets: list[dict]
    importances: np.ndarray

    @property
    def k_trees(self) -> int:
        return len(self.trees)

    @property
    def n_columns(self) -> int:
        b = len(self.mode_b_names) if self.mode_b_names is not None else 0
        return len(self.mode_a_names) + b


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed % 2**63, tree_index)))


def _subset_size(n_columns: int) -> int:
    return max(1, math.isqrt(n_columns))


def draw_bootstrap(rng: np.random.Generator, n_samples: int) -> np.ndarray:
    return rng.integers(0, n_samples, size=n_samples)


def resolve_n_jobs(n_jobs: int | None = None) -> int:
    if n_jobs is not None and n_jobs >= 1:
        return n_jobs
    env = os.environ.get("KNOWEEG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _fit_forest(
    matrices: list[np.ndarray],
    names: list[tuple[str, ...]],
    labels: np.ndarray,
    k_trees: int,
    seed: int,
    n_jobs: int | None,
) -> tuple[list[DecisionTree], list[dict], np.ndarray, int]:
    if k_trees <= 0:
        raise ParamError(f"k_trees must be >= 1, got {k_trees}")
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    for mat in matrices:
        if mat.shape[0] != n:
            raise InputError("all feature modes must share n_samples")
        if mat.shape[1] < 1:
            raise InputError("each feature mode needs at least one column")
    classes = np.unique(labels)
    if classes.size < 2:
        raise DegenerateLabelsError("labels contain a single class")
    n_classes = int(labels.max()) + 1

    offsets = np.cumsum([0] + [m.shape[1] for m in matrices])
    subset_sizes = [_subset_size(m.shape[1]) for m in matrices]

    def build(k: int) -> tuple[DecisionTree, dict, np.ndarray]:
        rng = _tree_rng(seed, k)
        boot = draw_bootstrap(rng, n)
        subsets = [
            np.sort(rng.choice(m.shape[1], size=sz, replace=False))
            for m, sz in zip(matrices, subset_sizes)
        ]
        pool = np.concatenate(
            [off + sub for off, sub in zip(offsets[:-1], subsets)]
        )
        X = np.concatenate(
            [m[boot][:, sub] for m, sub in zip(matrices, subsets)], axis=1
        )
        importance = np.zeros(offsets[-1])
        tree = grow_tree(X, labels[boot], n_classes, pool, importance)
        subset_record = {"a": subsets[0]}
        if len(subsets) > 1:
            subset_record["b"] = subsets[1]
        return tree, subset_record, importance

    workers = resolve_n_jobs(n_jobs)
    if workers == 1:
        results = [build(k) for k in range(k_trees)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool_exec:
            results = list(pool_exec.map(build, range(k_trees)))

    trees = [r[0] for r in results]
    subsets = [r[1] for r in results]
    total_importance = np.sum([r[2] for r in results], axis=0) / k_trees
    s = total_importance.sum()
    if s > 0:
        total_importance = total_importance / s
    return trees, subsets, total_importance, n_classes


def fit(
    features_a: FeatureMatrix,
    features_b: FeatureMatrix,
    labels,
    k_trees: int,
    seed: int,
    n_jobs: int | None = None,
) -> FusionForestModel:
    """Fit a Fusion Forest on two feature modes."""
    trees, subsets, importances, n_classes = _fit_forest(
        [features_a.values, features_b.values],
        [features_a.column_names, features_b.column_names],
        np.asarray(labels),
        k_trees,
        seed,
        n_jobs,
    )
    return FusionForestModel(
        trees=trees,
        n_classes=n_classes,
        seed=seed,
        mode_a_names=features_a.column_names,
        mode_b_names=features_b.column_names,
        per_tree_subsets=subsets,
        importances=importances,
    )


def fit_standard_rf(
    features: FeatureMatrix,
    labels,
    k_trees: int = 100,
    seed: int = 0,
    n_jobs: int | None = None,
) -> FusionForestModel:
    """Classical random forest: one mode, per-tree sqrt(total) columns."""
    trees, subsets, importances, n_classes = _fit_forest(
        [features.values],
        [features.column_names],
        np.asarray(labels),
        k_trees,
        seed,
        n_jobs,
    )
    return FusionForestModel(
        trees=trees,
        n_classes=n_classes,
        seed=seed,
        mode_a_names=features.column_names,
        mode_b_names=None,
        per_tree_subsets=subsets,
        importances=importances,
    )


def _tree_proba(tree: DecisionTree, X: np.ndarray, n_classes: int) -> np.ndarray:
    proba = np.empty((X.shape[0], n_classes))
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if rows.size == 0:
            continue
        if tree.feature[node] == _LEAF:
            counts = tree.counts[node].astype(float)
            total = counts.sum()
            proba[rows] = counts / total if total > 0 else 1.0 / n_classes
            continue
        go_left = X[rows, tree.feature[node]] <= tree.threshold[node]
        stack.append((tree.left[node], rows[go_left]))
        stack.append((tree.right[node], rows[~go_left]))
    return proba


def _stacked_values(
    model: FusionForestModel,
    features_a: FeatureMatrix,
    features_b: FeatureMatrix | None,
) -> np.ndarray:
    if features_a.column_names != model.mode_a_names:
        raise AlignmentError("mode-A columns do not match the trained model")
    if model.mode_b_names is None:
        if features_b is not None:
            raise AlignmentError("model was trained without a mode-B matrix")
        return features_a.values
    if features_b is None or features_b.column_names != model.mode_b_names:
        raise AlignmentError("mode-B columns do not match the trained model")
    if features_a.n_samples != features_b.n_samples:
        raise AlignmentError("mode matrices have different row counts")
    return np.concatenate([features_a.values, features_b.values], axis=1)


def predict_proba(
    model: FusionForestModel,
    features_a: FeatureMatrix,
    features_b: FeatureMatrix | None = None,
) -> np.ndarray:
    """Mean of per-tree leaf class frequencies; rows sum to 1."""
    X = _stacked_values(model, features_a, features_b)
    proba = np.zeros((X.shape[0], model.n_classes))
    for tree in model.trees:
        proba += _tree_proba(tree, X, model.n_classes)
    return proba / len(model.trees)


def predict(
    model: FusionForestModel,
    features_a: FeatureMatrix,
    features_b: FeatureMatrix | None = None,
) -> np.ndarray:
    return np.argmax(predict_proba(model, features_a, features_b), axis=1)


def gini_importances(model: FusionForestModel) -> np.ndarray:
    """Per-column Gini importance over the global [mode A | mode B] space."""
    return model.importances


def model_to_dict(model: FusionForestModel) -> dict:
    return {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "n_classes": model.n_classes,
        "seed": model.seed,
        "k_trees": model.k_trees,
        "mode_a_names": list(model.mode_a_names),
        "mode_b_names": list(model.mode_b_names) if model.mode_b_names is not None else None,
        "per_tree_subsets": [
            {k: v.tolist() for k, v in sub.items()} for sub in model.per_tree_subsets
        ],
        "importances": [float(v) for v in model.importances],
        "trees": [t.to_dict() for t in model.trees],
    }


def model_from_dict(d: dict) -> FusionForestModel:
    if d.get("schema") != MODEL_SCHEMA:
        raise InputError(f"not a fusion forest model file: {d.get('schema')!r}")
    if d.get("version") != MODEL_VERSION:
        raise InputError(f"unsupported model version {d.get('version')!r}")
    return FusionForestModel(
        trees=[DecisionTree.from_dict(t) for t in d["trees"]],
        n_classes=int(d["n_classes"]),
        seed=int(d["seed"]),
        mode_a_names=tuple(d["mode_a_names"]),
        mode_b_names=tuple(d["mode_b_names"]) if d["mode_b_names"] is not None else None,
        per_tree_subsets=[
            {k: np.asarray(v, dtype=np.int64) for k, v in sub.items()}
            for sub in d["per_tree_subsets"]
        ],
        importances=np.asarray(d["importances"], dtype=float),
    )


def save_model(model: FusionForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True))


def load_model(path: str | Path) -> FusionForestModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def model_hash(model: FusionForestModel) -> str:
    payload = json.dumps(model_to_dict(model), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()
