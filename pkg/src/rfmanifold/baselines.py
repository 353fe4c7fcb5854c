"""Unsupervised Euclidean distances and the class-conditional dissimilarity
used as the supervised comparison baseline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import CLASSIFICATION, Dataset
from .proximity import DistanceMatrix


@dataclass(frozen=True)
class ClassConditionalParams:
    """alpha softens the between-class offset; beta scales squared distances
    (conventionally the average pairwise distance)."""

    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


def euclidean_distances(dataset: Dataset) -> DistanceMatrix:
    """Standard pairwise Euclidean distances (z-scored input recommended)."""
    X = dataset.features
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    d2 = 0.5 * (d2 + d2.T)
    values = np.sqrt(d2)
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(values=values, provenance={"kind": "euclidean"})


def default_beta(distances: DistanceMatrix) -> float:
    """Mean pairwise distance over i < j."""
    v = distances.values
    n = v.shape[0]
    if n < 2:
        raise ValueError("need at least 2 points")
    iu = np.triu_indices(n, k=1)
    return float(v[iu].mean())


def class_conditional_distance(
    distances: DistanceMatrix,
    labels: np.ndarray,
    params: ClassConditionalParams,
) -> DistanceMatrix:
    """Dissimilarity conditioned on label agreement.

    Same class: sqrt(1 - exp(-D^2/beta)), bounded in [0, 1). Different class:
    sqrt(exp(D^2/beta)) - alpha, unbounded above. The map deliberately
    exaggerates between-class separation and need not satisfy metric axioms.
    Negative values (alpha > 1) are clamped to 0 with a warning.
    """
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("class-conditional distances require classification labels")
    same = labels[:, None] == labels[None, :]
    ratio = distances.values**2 / params.beta
    with np.errstate(over="ignore"):
        values = np.where(
            same,
            np.sqrt(-np.expm1(-ratio)),
            np.sqrt(np.exp(ratio)) - params.alpha,
        )
    if (values < 0).any():
        warnings.warn("clamping negative class-conditional dissimilarities to 0 (alpha > 1)")
        np.maximum(values, 0.0, out=values)
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(
        values=values,
        provenance={"kind": "class_conditional", "alpha": params.alpha, "beta": params.beta},
    )
