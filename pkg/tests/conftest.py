"""Shared helpers: hand-built trees/forests with known structure."""
from __future__ import annotations

import math

import numpy as np
import pytest

from bellatrex.data import TaskKind
from bellatrex.forest import Forest, ForestParams, Tree


def make_tree(nodes: list[dict], task: TaskKind = TaskKind.BINARY) -> Tree:
    """Build a Tree from node dicts.

    Split nodes: {"feature": j, "threshold": t, "left": id, "right": id,
    "fraction": w, "pred": value}; leaves omit feature/threshold/children.
    Predictions may be scalars or vectors.
    """
    n = len(nodes)
    feature = np.full(n, -1, dtype=np.int32)
    threshold = np.full(n, math.nan)
    left = np.full(n, -1, dtype=np.int32)
    right = np.full(n, -1, dtype=np.int32)
    fraction = np.ones(n)
    count = np.ones(n, dtype=np.int64)
    preds = []
    for i, spec in enumerate(nodes):
        if "feature" in spec:
            feature[i] = spec["feature"]
            threshold[i] = spec["threshold"]
            left[i] = spec["left"]
            right[i] = spec["right"]
        fraction[i] = spec.get("fraction", 1.0)
        count[i] = spec.get("count", 1)
        preds.append(np.atleast_1d(np.asarray(spec.get("pred", 0.0), dtype=np.float64)))
    return Tree(
        task=task,
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        sample_fraction=fraction,
        sample_count=count,
        node_pred=np.vstack(preds),
        bootstrap_indices=np.arange(1),
        oob_indices=np.array([], dtype=np.int64),
    )


def leaf_tree(value, task: TaskKind = TaskKind.BINARY) -> Tree:
    return make_tree([{"pred": value}], task=task)


def make_forest(trees: list[Tree], p: int, task: TaskKind = TaskKind.BINARY) -> Forest:
    width = trees[0].node_pred.shape[1]
    return Forest(
        trees=trees,
        task=task,
        p=p,
        prediction_width=width,
        params=ForestParams(n_trees=len(trees)),
        min_samples_split=5,
        mtry=max(1, p),
        event_grid=None,
        covariate_names=tuple(f"x{j}" for j in range(p)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
