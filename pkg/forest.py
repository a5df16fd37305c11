"""Random forest regressor grown from scratch.

Trees are CART regressors splitting on variance reduction. Each tree draws its
bootstrap sample and per-node feature subsets from its own generator, seeded
from (forest seed, tree index), so the worker count never changes a model.
Nodes are stored in flat arrays in preorder.
"""
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict

from dataset import FEATURE_COLUMNS, FeatureTable
from errors import DataError, SchemaError
from metrics import compute_metrics
from schemas import FeatureImportance, ForestConfig, ImportanceReport

logger = logging.getLogger(__name__)

MODEL_HEADER = "# airq-forest v1"

LEAF = -1
# Decreases closer than this (relative to the node SSE) count as ties
TIE_TOLERANCE = 1e-12
_PREDICT_CHUNK = 16384


class Split(NamedTuple):
    feature: int
    threshold: float
    impurity_decrease: float


class TreeNode(NamedTuple):
    feature_index: int
    threshold: float
    left: int
    right: int
    value: float
    n_samples: int
    impurity_decrease: float

    @property
    def is_leaf(self) -> bool:
        return self.feature_index == LEAF


class Tree(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray

    @property
    def node_count(self) -> int:
        return int(self.feature.size)

    @property
    def n_splits(self) -> int:
        return int(np.count_nonzero(self.feature != LEAF))

    def node(self, i: int) -> TreeNode:
        return TreeNode(
            int(self.feature[i]), float(self.threshold[i]), int(self.left[i]), int(self.right[i]),
            float(self.value[i]), int(self.n_samples[i]), float(self.impurity_decrease[i]),
        )

    def nodes(self) -> List[TreeNode]:
        return [self.node(i) for i in range(self.node_count)]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row"""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            current = node[active]
            features = self.feature[current]
            internal = features != LEAF
            active, current, features = active[internal], current[internal], features[internal]
            if not active.size:
                break
            go_left = X[active, features] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


class ForestModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    trees: List[Tree]
    feature_names: List[str]
    config: ForestConfig
    tree_seeds: List[int]
    target_range: Tuple[float, float]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def impurity_decreases(self) -> np.ndarray:
        """Per-feature impurity decrease summed over every split of every tree"""
        totals = np.zeros(self.n_features)
        for tree in self.trees:
            internal = tree.feature != LEAF
            np.add.at(totals, tree.feature[internal], tree.impurity_decrease[internal])
        return totals


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    candidate_features: Sequence[int],
    min_samples_leaf: int = 1,
) -> Optional[Split]:
    """Variance-reduction split of one node over the candidate features.

    Thresholds are midpoints between consecutive distinct values. The
    decrease is n*Var(parent) - n_l*Var(left) - n_r*Var(right); ties go to the
    lowest feature index, then the lowest threshold. None when no split
    reduces the variance.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    features = np.unique(np.asarray(candidate_features, dtype=np.int64))
    if n < 2 or features.size == 0 or np.ptp(y) == 0:
        return None

    centred = y - y.mean()
    sse = float(np.dot(centred, centred))
    tolerance = TIE_TOLERANCE * sse

    columns = X[:, features]
    order = np.argsort(columns, axis=0, kind="stable")
    xs = np.take_along_axis(columns, order, axis=0)
    ys = centred[order]

    total = centred.sum()
    left_sum = np.cumsum(ys, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    n_right = n - n_left
    decrease = left_sum ** 2 / n_left + (total - left_sum) ** 2 / n_right - total ** 2 / n

    valid = (xs[1:] > xs[:-1]) & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    decrease = np.where(valid, decrease, -np.inf)
    best = decrease.max()
    if not best > tolerance:
        return None

    hits = decrease >= best - tolerance
    col = int(np.argmax(hits.any(axis=0)))
    row = int(np.argmax(hits[:, col]))

    lo, hi = xs[row, col], xs[row + 1, col]
    threshold = (lo + hi) / 2.0
    # The midpoint of adjacent floats can round up onto the upper value
    if threshold >= hi:
        threshold = lo
    return Split(int(features[col]), float(threshold), float(decrease[row, col]))


def tree_seed(seed: int, tree_index: int) -> int:
    """Seed of one tree, derived from the forest seed and the tree index"""
    return int(np.random.SeedSequence([int(seed), int(tree_index)]).generate_state(1, np.uint64)[0])


def grow_tree(X: np.ndarray, y: np.ndarray, config: ForestConfig, seed: int) -> Tree:
    """Grow one tree until purity or the min-sample limits stop it"""
    rng = np.random.default_rng(seed)
    n, p = X.shape
    sample = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
    subset = config.max_features_mode.subset_size(p)

    feature, threshold, left, right, value, counts, decrease = [], [], [], [], [], [], []
    # Right child pushed first so nodes come off the stack in preorder
    stack = [(sample, -1, False)]
    while stack:
        idx, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            if is_left:
                left[parent] = node_id
            else:
                right[parent] = node_id

        y_node = y[idx]
        split = None
        if idx.size >= config.min_samples_split and idx.size >= 2 * config.min_samples_leaf and np.ptp(y_node) > 0:
            X_node = X[idx]
            if subset < p:
                order = rng.permutation(p)
                split = best_split(X_node, y_node, np.sort(order[:subset]), config.min_samples_leaf)
                # Keep looking past the subset before settling for a leaf
                if split is None:
                    split = best_split(X_node, y_node, np.sort(order[subset:]), config.min_samples_leaf)
            else:
                split = best_split(X_node, y_node, np.arange(p), config.min_samples_leaf)

        value.append(float(y_node.mean()))
        counts.append(int(idx.size))
        left.append(LEAF)
        right.append(LEAF)
        if split is None:
            feature.append(LEAF)
            threshold.append(0.0)
            decrease.append(0.0)
            continue

        feature.append(split.feature)
        threshold.append(split.threshold)
        decrease.append(split.impurity_decrease)
        goes_left = X[idx, split.feature] <= split.threshold
        stack.append((idx[~goes_left], node_id, False))
        stack.append((idx[goes_left], node_id, True))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
        n_samples=np.asarray(counts, dtype=np.int64),
        impurity_decrease=np.asarray(decrease, dtype=np.float64),
    )


def _check_training_arrays(X: np.ndarray, y: np.ndarray):
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("cannot fit a forest on an empty table")
    if X.shape[1] == 0:
        raise DataError("training table has no feature columns")
    if y.shape != (X.shape[0],):
        raise DataError("targets do not match the feature rows")
    if not np.all(np.isfinite(X)):
        raise DataError("training features must be finite")
    if not np.all(np.isfinite(y)):
        raise DataError("training targets must be finite")


def fit_arrays(X, y, feature_names: Sequence[str], config: ForestConfig, threads: int = 1) -> ForestModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_training_arrays(X, y)
    if len(feature_names) != X.shape[1]:
        raise DataError("feature names do not match the feature columns")

    seeds = [tree_seed(config.seed, i) for i in range(config.n_estimators)]
    trees = Parallel(n_jobs=threads, prefer="threads")(
        delayed(grow_tree)(X, y, config, s) for s in seeds
    )
    logger.debug("Grew %d trees on %d rows (mode=%s)", len(trees), X.shape[0], config.max_features_mode.value)
    return ForestModel(
        trees=trees,
        feature_names=list(feature_names),
        config=config,
        tree_seeds=seeds,
        target_range=(float(y.min()), float(y.max())),
    )


def fit(table: FeatureTable, config: ForestConfig, threads: int = 1) -> ForestModel:
    """Train a forest on every feature column of a table"""
    if len(table) == 0:
        raise DataError("cannot fit a forest on an empty table")
    return fit_arrays(table.features, table.targets, FEATURE_COLUMNS, config, threads)


def _feature_matrix(model: ForestModel, rows: Union[FeatureTable, np.ndarray]) -> np.ndarray:
    if isinstance(rows, FeatureTable):
        if list(FEATURE_COLUMNS) != model.feature_names:
            raise DataError("model was not trained on the feature table schema")
        X = rows.features
    else:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DataError(f"expected {model.n_features} feature columns, got {X.shape[-1]}")
    if not np.all(np.isfinite(X)):
        raise DataError("prediction features must be finite")
    return X


def predict(model: ForestModel, rows: Union[FeatureTable, np.ndarray], threads: int = 1) -> np.ndarray:
    """Mean of the tree outputs for every row"""
    X = _feature_matrix(model, rows)
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], _PREDICT_CHUNK):
        chunk = X[start:start + _PREDICT_CHUNK]
        outputs = Parallel(n_jobs=threads, prefer="threads")(
            delayed(tree.predict)(chunk) for tree in model.trees
        )
        out[start:start + chunk.shape[0]] = np.sum(np.vstack(outputs), axis=0) / len(model.trees)
    # Rounding in the sum must not leave the training range
    return np.clip(out, *model.target_range)


def gini_importance(model: ForestModel) -> np.ndarray:
    """Impurity decrease per feature, averaged over trees and normalized to 1"""
    scores = model.impurity_decreases() / len(model.trees)
    total = scores.sum()
    if total <= 0:
        return np.zeros(model.n_features)
    return scores / total


def permutation_importance(
    model: ForestModel,
    test_table: Union[FeatureTable, Tuple[np.ndarray, np.ndarray]],
    n_repeats: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and stdev of the R2 drop when one column is shuffled"""
    if n_repeats < 1:
        raise DataError("n_repeats must be at least 1")
    if isinstance(test_table, FeatureTable):
        X, y = _feature_matrix(model, test_table), test_table.targets
    else:
        X, y = _feature_matrix(model, test_table[0]), np.asarray(test_table[1], dtype=np.float64)
    if X.shape[0] == 0:
        raise DataError("permutation importance needs a non-empty test table")

    baseline = compute_metrics(y, predict(model, X, threads)).r2
    means = np.zeros(model.n_features)
    stds = np.zeros(model.n_features)
    for j in range(model.n_features):
        rng = np.random.default_rng([int(seed), j])
        drops = []
        for _ in range(n_repeats):
            shuffled = X.copy()
            shuffled[:, j] = rng.permutation(X[:, j])
            drops.append(baseline - compute_metrics(y, predict(model, shuffled, threads)).r2)
        means[j] = np.mean(drops)
        stds[j] = np.std(drops)
    return means, stds


def importance_report(model: ForestModel, test_table: Optional[FeatureTable] = None,
                      n_repeats: int = 10, seed: int = 0, threads: int = 1) -> ImportanceReport:
    gini = gini_importance(model)
    perm_mean = perm_std = None
    if test_table is not None:
        perm_mean, perm_std = permutation_importance(model, test_table, n_repeats, seed, threads)
    return ImportanceReport(features=[
        FeatureImportance(
            feature=name,
            gini=float(gini[j]),
            permutation_mean=None if perm_mean is None else float(perm_mean[j]),
            permutation_std=None if perm_std is None else float(perm_std[j]),
        )
        for j, name in enumerate(model.feature_names)
    ])


# Persistence
def _num(x: float) -> str:
    return format(float(x), ".17g")


def save_model(model: ForestModel, path: Union[str, Path]) -> Path:
    """Flat text serialization; trees in preorder, 17 significant digits"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        MODEL_HEADER,
        "config " + model.config.model_dump_json(),
        "features " + ",".join(model.feature_names),
        f"target_range {_num(model.target_range[0])} {_num(model.target_range[1])}",
    ]
    for index, (tree, seed) in enumerate(zip(model.trees, model.tree_seeds)):
        lines.append(f"tree {index} {tree.node_count} {seed}")
        for node in tree.nodes():
            if node.is_leaf:
                lines.append(f"L {_num(node.value)} {node.n_samples}")
            else:
                lines.append(
                    f"N {node.feature_index} {_num(node.threshold)} {_num(node.impurity_decrease)} "
                    f"{node.n_samples} {_num(node.value)}"
                )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _parse_tree(lines: List[str], start: int, node_count: int, source: str) -> Tree:
    feature = np.full(node_count, LEAF, dtype=np.int64)
    threshold = np.zeros(node_count)
    left = np.full(node_count, LEAF, dtype=np.int64)
    right = np.full(node_count, LEAF, dtype=np.int64)
    value = np.zeros(node_count)
    counts = np.zeros(node_count, dtype=np.int64)
    decrease = np.zeros(node_count)

    pending = []
    for i in range(node_count):
        lineno = start + i
        if lineno >= len(lines):
            raise SchemaError(f"{source}: truncated tree", row=lineno + 1)
        parts = lines[lineno].split()
        if pending:
            parent = pending[-1]
            if left[parent] == LEAF:
                left[parent] = i
            else:
                right[parent] = i
                pending.pop()
        try:
            if parts[0] == "L" and len(parts) == 3:
                value[i], counts[i] = float(parts[1]), int(parts[2])
            elif parts[0] == "N" and len(parts) == 6:
                feature[i] = int(parts[1])
                threshold[i], decrease[i] = float(parts[2]), float(parts[3])
                counts[i], value[i] = int(parts[4]), float(parts[5])
                pending.append(i)
            else:
                raise ValueError(parts[0])
        except (ValueError, IndexError):
            raise SchemaError(f"{source}: malformed node line", row=lineno + 1)
    if pending:
        raise SchemaError(f"{source}: tree ends with unfinished nodes", row=start + node_count)

    return Tree(feature=feature, threshold=threshold, left=left, right=right,
                value=value, n_samples=counts, impurity_decrease=decrease)


def load_model(path: Union[str, Path]) -> ForestModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"File not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    source = str(path)
    if not lines or lines[0].strip() != MODEL_HEADER:
        raise SchemaError(f"{source}: not a forest model file", row=1)

    try:
        config = ForestConfig(**json.loads(lines[1].split(" ", 1)[1]))
        feature_names = lines[2].split(" ", 1)[1].split(",")
        _, lo, hi = lines[3].split()
        target_range = (float(lo), float(hi))
    except (IndexError, ValueError) as exc:
        raise SchemaError(f"{source}: bad model header: {exc}")

    trees, seeds = [], []
    cursor = 4
    while cursor < len(lines):
        parts = lines[cursor].split()
        if len(parts) != 4 or parts[0] != "tree":
            raise SchemaError(f"{source}: expected a tree line", row=cursor + 1)
        try:
            node_count, seed = int(parts[2]), int(parts[3])
        except ValueError:
            raise SchemaError(f"{source}: malformed tree line", row=cursor + 1)
        trees.append(_parse_tree(lines, cursor + 1, node_count, source))
        seeds.append(seed)
        cursor += 1 + node_count

    if len(trees) != config.n_estimators:
        raise SchemaError(f"{source}: expected {config.n_estimators} trees, found {len(trees)}")
    return ForestModel(trees=trees, feature_names=feature_names, config=config,
                       tree_seeds=seeds, target_range=target_range)
