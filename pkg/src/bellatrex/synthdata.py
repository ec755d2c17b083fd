"""Deterministic synthetic tabular datasets for demos and desk-scale
benchmarks.

Signals are built from sparse monotone/step transforms of a few informative
covariates plus an interaction term, which axis-aligned trees can learn;
``temperature`` controls label noise (higher = harder).  All generators are
pure functions of their arguments.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Dataset, TaskKind


def _latent_score(X: np.ndarray, rng: np.random.Generator, informative: int) -> np.ndarray:
    n, p = X.shape
    k = min(informative, p)
    weights = rng.uniform(0.6, 1.4, size=k) * rng.choice([-1.0, 1.0], size=k)
    centers = rng.normal(0.0, 0.4, size=k)
    score = np.zeros(n)
    for j in range(k):
        if j % 3 == 2:
            score += weights[j] * np.sign(X[:, j] - centers[j])
        else:
            score += weights[j] * np.tanh(1.5 * (X[:, j] - centers[j]))
    if k >= 2:
        score += 0.8 * np.sign(X[:, 0]) * np.sign(X[:, 1])
    std = score.std()
    return score / std if std > 0 else score


def _covariate_names(p: int) -> tuple[str, ...]:
    return tuple(f"x{j}" for j in range(p))


def make_binary(n: int, p: int, seed: int, informative: int | None = None,
                temperature: float = 0.5, pos_rate: float = 0.4) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    score = _latent_score(X, rng, informative or max(2, p // 6))
    threshold = np.quantile(score, 1.0 - pos_rate)
    prob = 1.0 / (1.0 + np.exp(-(score - threshold) / temperature))
    y = (rng.random(n) < prob).astype(np.float64)
    return Dataset(
        task=TaskKind.BINARY,
        covariates=X,
        covariate_names=_covariate_names(p),
        targets=y[:, None],
        target_names=("label",),
        preprocessed=True,
    )


def make_regression(n: int, p: int, seed: int, informative: int | None = None,
                    noise: float = 0.15) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    score = _latent_score(X, rng, informative or max(2, p // 6))
    y = score + rng.normal(scale=noise, size=n)
    y = (y - y.min()) / (y.max() - y.min())
    return Dataset(
        task=TaskKind.REGRESSION,
        covariates=X,
        covariate_names=_covariate_names(p),
        targets=y[:, None],
        target_names=("target",),
        preprocessed=True,
    )


def make_multitarget(n: int, p: int, n_targets: int, seed: int,
                     noise: float = 0.15) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    cols = []
    for _ in range(n_targets):
        score = _latent_score(X, rng, max(2, p // 4))
        y = score + rng.normal(scale=noise, size=n)
        cols.append((y - y.min()) / (y.max() - y.min()))
    return Dataset(
        task=TaskKind.MULTI_TARGET,
        covariates=X,
        covariate_names=_covariate_names(p),
        targets=np.column_stack(cols),
        target_names=tuple(f"target{t}" for t in range(n_targets)),
        preprocessed=True,
    )


def make_multilabel(n: int, p: int, n_labels: int, seed: int,
                    temperature: float = 0.6) -> Dataset:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    shared = _latent_score(X, rng, max(2, p // 4))
    cols = []
    for _ in range(n_labels):
        own = _latent_score(X, rng, max(2, p // 6))
        score = 0.6 * shared + 0.8 * own
        rate = rng.uniform(0.25, 0.55)
        threshold = np.quantile(score, 1.0 - rate)
        prob = 1.0 / (1.0 + np.exp(-(score - threshold) / temperature))
        cols.append((rng.random(n) < prob).astype(np.float64))
    return Dataset(
        task=TaskKind.MULTI_LABEL,
        covariates=X,
        covariate_names=_covariate_names(p),
        targets=np.column_stack(cols),
        target_names=tuple(f"label{t}" for t in range(n_labels)),
        preprocessed=True,
    )


def make_survival(n: int, p: int, seed: int, informative: int | None = None,
                  censoring: float = 0.4, shape: float = 1.5) -> Dataset:
    """Weibull proportional-hazards times with uniform right censoring."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    score = _latent_score(X, rng, informative or max(2, p // 4))
    u = rng.random(n)
    latent = (-np.log(u)) ** (1.0 / shape) * np.exp(-score / shape)
    latent += 1e-3
    if censoring > 0:
        horizon = 2.0 * np.quantile(latent, 1.0 - censoring)
        censor = rng.uniform(1e-3, horizon, size=n)
        time = np.minimum(latent, censor)
        event = (latent <= censor).astype(np.float64)
    else:
        time = latent
        event = np.ones(n)
    return Dataset(
        task=TaskKind.SURVIVAL,
        covariates=X,
        covariate_names=_covariate_names(p),
        targets=np.column_stack([time, event]),
        target_names=("time", "event"),
        preprocessed=True,
    )


def write_csv(ds: Dataset, path: str | Path) -> None:
    header = list(ds.covariate_names) + list(ds.target_names)
    lines = [",".join(header)]
    for i in range(ds.n):
        cells = [repr(float(v)) for v in ds.covariates[i]]
        cells += [repr(float(v)) for v in ds.targets[i]]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_schema(ds: Dataset, path: str | Path) -> None:
    lines = [f"task={ds.task.value}"]
    if ds.task is TaskKind.SURVIVAL:
        lines.append(f"time={ds.target_names[0]}")
        lines.append(f"event={ds.target_names[1]}")
    elif len(ds.target_names) == 1:
        lines.append(f"target={ds.target_names[0]}")
    else:
        lines.append("targets=" + ",".join(ds.target_names))
    Path(path).write_text("\n".join(lines) + "\n")
