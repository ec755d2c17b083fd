"""Random forests over binary decision trees for five task kinds: binary
classification, regression, multi-target regression, multi-label
classification and right-censored survival.

Every node records the fraction of the tree's training sample that reaches
it and a task-typed running prediction, so decision paths can be rendered
and vectorized downstream.  Split rule: x goes left iff x[j] <= threshold;
candidate thresholds are midpoints between consecutive distinct sorted
values; gain ties resolve to the lowest covariate index, then the lowest
threshold.  Training is bit-deterministic: tree i draws from an RNG stream
seeded by (seed, i), independent of thread count.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import parallel_map
from .data import Dataset, TaskKind
from .errors import UndefinedMetricError
from .metrics import auroc, mae, weighted_auroc
from .survival import StepFunction, concordance_index, kaplan_meier, risk_score

_MIN_GAIN = 1e-12


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    min_samples_split: int | None = None  # None: 10 for survival, else 5
    mtry: int | None = None  # None: ceil(sqrt(p)) or ceil(p/3), see resolve_mtry
    seed: int = 0
    max_depth: int | None = None
    bootstrap: bool = True

    def resolve_min_split(self, task: TaskKind) -> int:
        if self.min_samples_split is not None:
            if self.min_samples_split < 2:
                raise ValueError("min_samples_split must be at least 2")
            return self.min_samples_split
        return 10 if task is TaskKind.SURVIVAL else 5

    def resolve_mtry(self, task: TaskKind, p: int) -> int:
        if self.mtry is not None:
            if not 1 <= self.mtry <= p:
                raise ValueError(f"mtry must lie in [1, {p}]")
            return self.mtry
        if task.classification_like:
            return min(p, max(1, math.ceil(math.sqrt(p))))
        return min(p, max(1, math.ceil(p / 3)))


@dataclass
class Tree:
    """Node arena in flat arrays; feature[i] == -1 marks a leaf."""

    task: TaskKind
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    sample_fraction: np.ndarray
    sample_count: np.ndarray
    node_pred: np.ndarray  # (n_nodes, w)
    bootstrap_indices: np.ndarray
    oob_indices: np.ndarray
    leaf_km: dict[int, StepFunction] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth_stats(self) -> tuple[int, float]:
        """(max leaf depth, mean leaf depth) by traversal."""
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        order = [0]
        for node in order:
            if not self.is_leaf(node):
                for child in (int(self.left[node]), int(self.right[node])):
                    depths[child] = depths[node] + 1
                    order.append(child)
        leaf_depths = depths[self.feature < 0]
        return int(leaf_depths.max()), float(leaf_depths.mean())


@dataclass(frozen=True)
class PathStep:
    """One node on a root-to-leaf decision path.  Split steps carry the test
    (feature, threshold, direction); the final step is the leaf (feature is
    None) and carries the leaf prediction."""

    node_id: int
    feature: int | None
    threshold: float | None
    went_left: bool | None
    sample_fraction: float
    prediction: np.ndarray


@dataclass
class Forest:
    trees: list[Tree]
    task: TaskKind
    p: int
    prediction_width: int
    params: ForestParams
    min_samples_split: int
    mtry: int
    event_grid: np.ndarray | None = None
    covariate_names: tuple[str, ...] | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)


# ---------------------------------------------------------------------------
# Splitting criteria
# ---------------------------------------------------------------------------

def gini(labels) -> float:
    """Binary Gini impurity 2q(1-q) for positive fraction q."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("gini of an empty node")
    q = float(labels.mean())
    return 2.0 * q * (1.0 - q)


def variance_reduction(parent, left, right) -> float:
    """Mean over targets of Var(parent) - (nL/n)Var(left) - (nR/n)Var(right),
    population variances."""
    parent = np.atleast_2d(np.asarray(parent, dtype=np.float64).T).T
    left = np.atleast_2d(np.asarray(left, dtype=np.float64).T).T
    right = np.atleast_2d(np.asarray(right, dtype=np.float64).T).T
    n, n_l, n_r = parent.shape[0], left.shape[0], right.shape[0]
    if n_l + n_r != n:
        raise ValueError("left and right must partition parent")
    reduction = (
        parent.var(axis=0)
        - (n_l / n) * left.var(axis=0)
        - (n_r / n) * right.var(axis=0)
    )
    return float(reduction.mean())


def _scan_impurity(values: np.ndarray, y: np.ndarray, regression: bool):
    """Best (threshold, gain) along one covariate, or None.

    Shared scan for Gini (labels) and variance (targets): prefix sums give
    the left/right child statistics at every boundary between consecutive
    distinct sorted values in a single pass.
    """
    order = np.argsort(values, kind="stable")
    sv = values[order]
    cuts = np.flatnonzero(sv[:-1] < sv[1:])
    if cuts.size == 0:
        return None
    sy = y[order]
    n = sv.size
    n_left = (cuts + 1).astype(np.float64)
    n_right = n - n_left
    cum = np.cumsum(sy, axis=0)
    left_sum = cum[cuts]
    total = cum[-1]
    right_sum = total - left_sum

    if regression:
        cum2 = np.cumsum(sy * sy, axis=0)
        left_sq = cum2[cuts]
        total_sq = cum2[-1]
        var_parent = np.maximum(total_sq / n - (total / n) ** 2, 0.0)
        var_left = np.maximum(left_sq / n_left[:, None] - (left_sum / n_left[:, None]) ** 2, 0.0)
        var_right = np.maximum(
            (total_sq - left_sq) / n_right[:, None]
            - (right_sum / n_right[:, None]) ** 2,
            0.0,
        )
        gain = (
            var_parent[None, :]
            - (n_left / n)[:, None] * var_left
            - (n_right / n)[:, None] * var_right
        ).mean(axis=1)
    else:
        q_parent = total / n
        q_left = left_sum / n_left[:, None]
        q_right = right_sum / n_right[:, None]
        g_parent = (2.0 * q_parent * (1.0 - q_parent)).mean()
        g_left = (2.0 * q_left * (1.0 - q_left)).mean(axis=1)
        g_right = (2.0 * q_right * (1.0 - q_right)).mean(axis=1)
        gain = g_parent - (n_left / n) * g_left - (n_right / n) * g_right

    best = int(np.argmax(gain))
    threshold = 0.5 * (sv[cuts[best]] + sv[cuts[best] + 1])
    return threshold, float(gain[best])


def _scan_logrank(values: np.ndarray, times: np.ndarray, events: np.ndarray):
    """Best (threshold, |logrank statistic|) along one covariate, or None."""
    order = np.argsort(values, kind="stable")
    sv = values[order]
    cuts = np.flatnonzero(sv[:-1] < sv[1:])
    if cuts.size == 0:
        return None
    t = times[order]
    e = events[order]
    grid = np.unique(t[e])
    if grid.size == 0:
        return None
    at_risk = t[:, None] >= grid[None, :]
    event_at = e[:, None] & (t[:, None] == grid[None, :])
    n_risk = at_risk.sum(axis=0).astype(np.float64)
    n_events = event_at.sum(axis=0).astype(np.float64)
    left_risk = np.cumsum(at_risk, axis=0)[cuts].astype(np.float64)
    left_events = np.cumsum(event_at, axis=0)[cuts].astype(np.float64)

    observed_minus_expected = (left_events - n_events * left_risk / n_risk).sum(axis=1)
    ratio = left_risk / n_risk
    with np.errstate(divide="ignore", invalid="ignore"):
        var_terms = np.where(
            n_risk > 1,
            n_events * ratio * (1.0 - ratio) * (n_risk - n_events) / (n_risk - 1.0),
            0.0,
        )
    variance = var_terms.sum(axis=1)
    score = np.where(variance > 0, np.abs(observed_minus_expected) / np.sqrt(np.maximum(variance, 1e-300)), 0.0)
    best = int(np.argmax(score))
    if score[best] <= 0.0:
        return None
    threshold = 0.5 * (sv[cuts[best]] + sv[cuts[best] + 1])
    return threshold, float(score[best])


def best_split(
    X: np.ndarray,
    Y: np.ndarray,
    task: TaskKind,
    rows: np.ndarray,
    candidates: np.ndarray,
) -> tuple[int, float, float] | None:
    """Best (covariate, threshold, score) over the candidate covariates, or
    None when no candidate separates the rows with positive gain."""
    rows = np.asarray(rows)
    if rows.size < 2:
        return None
    sub_y = Y[rows]
    best_result: tuple[int, float, float] | None = None
    for j in np.sort(np.asarray(candidates)):
        values = X[rows, j]
        if task is TaskKind.SURVIVAL:
            found = _scan_logrank(values, sub_y[:, 0], sub_y[:, 1] > 0.5)
        else:
            found = _scan_impurity(values, sub_y, regression=not task.classification_like)
        if found is None:
            continue
        threshold, score = found
        if score > _MIN_GAIN and (best_result is None or score > best_result[2]):
            best_result = (int(j), threshold, score)
    return best_result


# ---------------------------------------------------------------------------
# Tree growing
# ---------------------------------------------------------------------------

def _node_value(task: TaskKind, Y_rows: np.ndarray, event_grid: np.ndarray | None) -> np.ndarray:
    if task is TaskKind.SURVIVAL:
        return np.array(
            [risk_score(Y_rows[:, 0], Y_rows[:, 1] > 0.5, event_grid)]
        )
    return Y_rows.mean(axis=0)


def _is_pure(task: TaskKind, Y_rows: np.ndarray) -> bool:
    if task is TaskKind.SURVIVAL and not np.any(Y_rows[:, 1] > 0.5):
        return True  # no events: the hazard cannot be split further
    return bool(np.all(Y_rows == Y_rows[0]))


def _grow_tree(
    X: np.ndarray,
    Y: np.ndarray,
    task: TaskKind,
    sample: np.ndarray,
    rng: np.random.Generator,
    min_split: int,
    mtry: int,
    max_depth: int | None,
    event_grid: np.ndarray | None,
    oob: np.ndarray,
) -> Tree:
    p = X.shape[1]
    n_sample = sample.size
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    fraction: list[float] = []
    count: list[int] = []
    preds: list[np.ndarray] = []
    leaf_km: dict[int, StepFunction] = {}

    def alloc() -> int:
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        fraction.append(0.0)
        count.append(0)
        preds.append(None)  # type: ignore[arg-type]
        return len(feature) - 1

    all_features = np.arange(p)
    stack: list[tuple[int, np.ndarray, int]] = [(alloc(), sample, 0)]
    while stack:
        nid, rows, depth = stack.pop()
        count[nid] = rows.size
        fraction[nid] = rows.size / n_sample
        y_rows = Y[rows]
        preds[nid] = _node_value(task, y_rows, event_grid)

        split = None
        can_split = (
            rows.size >= min_split
            and (max_depth is None or depth < max_depth)
            and not _is_pure(task, y_rows)
        )
        if can_split:
            if mtry < p:
                cand = np.sort(rng.choice(p, size=mtry, replace=False))
            else:
                cand = all_features
            split = best_split(X, Y, task, rows, cand)
            if split is None and mtry < p:
                rest = np.setdiff1d(all_features, cand)
                if rest.size:
                    split = best_split(X, Y, task, rows, rest)
        if split is None:
            if task is TaskKind.SURVIVAL:
                leaf_km[nid] = kaplan_meier(y_rows[:, 0], y_rows[:, 1] > 0.5)
            continue
        j, theta, _ = split
        go_left = X[rows, j] <= theta
        lid = alloc()
        rid = alloc()
        feature[nid] = j
        threshold[nid] = theta
        left[nid] = lid
        right[nid] = rid
        stack.append((rid, rows[~go_left], depth + 1))
        stack.append((lid, rows[go_left], depth + 1))

    return Tree(
        task=task,
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        sample_fraction=np.array(fraction, dtype=np.float64),
        sample_count=np.array(count, dtype=np.int64),
        node_pred=np.vstack(preds),
        bootstrap_indices=sample,
        oob_indices=oob,
        leaf_km=leaf_km,
    )


def fit_forest(train: Dataset, params: ForestParams) -> Forest:
    """Grow ``params.n_trees`` trees on bootstrap samples of the training set.

    Tree i draws bootstrap and split candidates from an RNG stream seeded by
    (params.seed, i); identical inputs give bit-identical forests regardless
    of BELLATREX_THREADS.
    """
    if not train.preprocessed:
        raise ValueError("fit_forest expects a preprocessed Dataset")
    if params.n_trees < 1:
        raise ValueError("n_trees must be at least 1")
    min_split = params.resolve_min_split(train.task)
    mtry = params.resolve_mtry(train.task, train.p)
    if train.n < min_split:
        raise ValueError(f"need at least min_samples_split={min_split} training instances")

    event_grid = None
    if train.task is TaskKind.SURVIVAL:
        event_grid = np.unique(train.times[train.events])

    X = np.ascontiguousarray(train.covariates, dtype=np.float64)
    Y = np.ascontiguousarray(train.targets, dtype=np.float64)
    n = train.n
    everything = np.arange(n)

    def build(i: int) -> Tree:
        rng = np.random.default_rng([params.seed, i])
        if params.bootstrap:
            sample = rng.integers(0, n, size=n)
            oob = np.setdiff1d(everything, np.unique(sample))
        else:
            sample = everything
            oob = np.array([], dtype=np.int64)
        return _grow_tree(
            X, Y, train.task, sample, rng, min_split, mtry,
            params.max_depth, event_grid, oob,
        )

    trees = parallel_map(build, range(params.n_trees))
    return Forest(
        trees=trees,
        task=train.task,
        p=train.p,
        prediction_width=train.prediction_width,
        params=params,
        min_samples_split=min_split,
        mtry=mtry,
        event_grid=event_grid,
        covariate_names=train.covariate_names,
    )


# ---------------------------------------------------------------------------
# Prediction and paths
# ---------------------------------------------------------------------------

def apply(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf id reached by every row of X (vectorized routing)."""
    X = np.atleast_2d(X)
    idx = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(tree.feature[idx] >= 0)
    while active.size:
        nodes = idx[active]
        go_left = X[active, tree.feature[nodes]] <= tree.threshold[nodes]
        idx[active] = np.where(go_left, tree.left[nodes], tree.right[nodes])
        active = active[tree.feature[idx[active]] >= 0]
    return idx


def tree_predict(tree: Tree, x: np.ndarray) -> np.ndarray:
    """Leaf prototype for one instance: shape (w,)."""
    feature, threshold = tree.feature, tree.threshold
    left, right = tree.left, tree.right
    node = 0
    while feature[node] >= 0:
        node = left[node] if x[feature[node]] <= threshold[node] else right[node]
    return tree.node_pred[node]


def tree_predict_batch(tree: Tree, X: np.ndarray) -> np.ndarray:
    return tree.node_pred[apply(tree, X)]


def tree_leaf_km(tree: Tree, x: np.ndarray) -> StepFunction | None:
    """Kaplan-Meier curve of the leaf reached by x (survival trees only)."""
    leaf = int(apply(tree, x[None, :])[0])
    return tree.leaf_km.get(leaf)


def forest_predict(forest: Forest, x: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the tree predictions (component-wise for vectors,
    mean risk score for survival)."""
    total = np.zeros(forest.prediction_width)
    for tree in forest.trees:
        total += tree_predict(tree, x)
    return total / forest.n_trees


def forest_predict_batch(forest: Forest, X: np.ndarray) -> np.ndarray:
    total = np.zeros((X.shape[0], forest.prediction_width))
    for tree in forest.trees:
        total += tree_predict_batch(tree, X)
    return total / forest.n_trees


def all_tree_predictions(forest: Forest, x: np.ndarray) -> np.ndarray:
    """(n_trees, w) matrix of every tree's prediction for one instance."""
    return np.vstack([tree_predict(tree, x) for tree in forest.trees])


def decision_path(tree: Tree, x: np.ndarray) -> list[PathStep]:
    """Ordered root-to-leaf steps for one instance; the final entry is the
    leaf and carries the leaf prediction."""
    steps: list[PathStep] = []
    node = 0
    while not tree.is_leaf(node):
        j = int(tree.feature[node])
        theta = float(tree.threshold[node])
        went_left = bool(x[j] <= theta)
        steps.append(PathStep(
            node_id=node,
            feature=j,
            threshold=theta,
            went_left=went_left,
            sample_fraction=float(tree.sample_fraction[node]),
            prediction=tree.node_pred[node],
        ))
        node = int(tree.left[node]) if went_left else int(tree.right[node])
    steps.append(PathStep(
        node_id=node,
        feature=None,
        threshold=None,
        went_left=None,
        sample_fraction=float(tree.sample_fraction[node]),
        prediction=tree.node_pred[node],
    ))
    return steps


def path_length(steps: list[PathStep]) -> int:
    """Number of split tests on a decision path."""
    return len(steps) - 1


# ---------------------------------------------------------------------------
# Out-of-bag errors
# ---------------------------------------------------------------------------

def _error_for_task(task: TaskKind, preds: np.ndarray, ds: Dataset, rows: np.ndarray) -> float:
    if task is TaskKind.BINARY:
        return 1.0 - auroc(preds[:, 0], ds.targets[rows, 0])
    if task is TaskKind.REGRESSION:
        return mae(preds[:, 0], ds.targets[rows, 0])
    if task is TaskKind.MULTI_TARGET:
        return mae(preds, ds.targets[rows])
    if task is TaskKind.MULTI_LABEL:
        return 1.0 - weighted_auroc(preds, ds.targets[rows])
    if task is TaskKind.SURVIVAL:
        return 1.0 - concordance_index(preds[:, 0], ds.times[rows], ds.events[rows])
    raise AssertionError(task)


def oob_errors(forest: Forest, train: Dataset) -> np.ndarray:
    """Per-tree error on its out-of-bag rows; trees with no OOB rows (or an
    undefined metric, e.g. single-class OOB labels) get worst-case 1.0."""
    errors = np.ones(forest.n_trees)
    for i, tree in enumerate(forest.trees):
        rows = tree.oob_indices
        if rows.size == 0:
            continue
        preds = tree_predict_batch(tree, train.covariates[rows])
        try:
            errors[i] = _error_for_task(forest.task, preds, train, rows)
        except UndefinedMetricError:
            errors[i] = 1.0
    return errors


# ---------------------------------------------------------------------------
# Serialization (JSON, exact float round-trip via repr)
# ---------------------------------------------------------------------------

_FORMAT = "bellatrex-forest"
_VERSION = 1


def forest_to_dict(forest: Forest) -> dict:
    trees = []
    for tree in forest.trees:
        trees.append({
            "feature": tree.feature.tolist(),
            "threshold": [None if math.isnan(v) else v for v in tree.threshold.tolist()],
            "left": tree.left.tolist(),
            "right": tree.right.tolist(),
            "sample_fraction": tree.sample_fraction.tolist(),
            "sample_count": tree.sample_count.tolist(),
            "node_pred": tree.node_pred.tolist(),
            "bootstrap": tree.bootstrap_indices.tolist(),
            "oob": tree.oob_indices.tolist(),
            "leaf_km": {
                str(node): [km.times.tolist(), km.values.tolist()]
                for node, km in tree.leaf_km.items()
            },
        })
    return {
        "format": _FORMAT,
        "version": _VERSION,
        "task": forest.task.value,
        "p": forest.p,
        "prediction_width": forest.prediction_width,
        "covariate_names": list(forest.covariate_names) if forest.covariate_names else None,
        "params": {
            "n_trees": forest.params.n_trees,
            "min_samples_split": forest.params.min_samples_split,
            "mtry": forest.params.mtry,
            "seed": forest.params.seed,
            "max_depth": forest.params.max_depth,
            "bootstrap": forest.params.bootstrap,
        },
        "resolved": {
            "min_samples_split": forest.min_samples_split,
            "mtry": forest.mtry,
        },
        "event_grid": forest.event_grid.tolist() if forest.event_grid is not None else None,
        "trees": trees,
    }


def forest_from_dict(data: dict) -> Forest:
    if data.get("format") != _FORMAT:
        raise ValueError("not a serialized forest")
    task = TaskKind(data["task"])
    trees = []
    for td in data["trees"]:
        trees.append(Tree(
            task=task,
            feature=np.array(td["feature"], dtype=np.int32),
            threshold=np.array(
                [math.nan if v is None else v for v in td["threshold"]], dtype=np.float64
            ),
            left=np.array(td["left"], dtype=np.int32),
            right=np.array(td["right"], dtype=np.int32),
            sample_fraction=np.array(td["sample_fraction"], dtype=np.float64),
            sample_count=np.array(td["sample_count"], dtype=np.int64),
            node_pred=np.array(td["node_pred"], dtype=np.float64),
            bootstrap_indices=np.array(td["bootstrap"], dtype=np.int64),
            oob_indices=np.array(td["oob"], dtype=np.int64),
            leaf_km={
                int(node): StepFunction(
                    times=np.array(tv[0], dtype=np.float64),
                    values=np.array(tv[1], dtype=np.float64),
                    baseline=1.0,
                )
                for node, tv in td["leaf_km"].items()
            },
        ))
    params = ForestParams(**data["params"])
    event_grid = data["event_grid"]
    return Forest(
        trees=trees,
        task=task,
        p=int(data["p"]),
        prediction_width=int(data["prediction_width"]),
        params=params,
        min_samples_split=int(data["resolved"]["min_samples_split"]),
        mtry=int(data["resolved"]["mtry"]),
        event_grid=np.array(event_grid, dtype=np.float64) if event_grid is not None else None,
        covariate_names=tuple(data["covariate_names"]) if data["covariate_names"] else None,
    )


def save_forest(forest: Forest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(forest_to_dict(forest)))


def load_forest(path: str | Path) -> Forest:
    return forest_from_dict(json.loads(Path(path).read_text()))
