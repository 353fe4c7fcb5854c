"""Forest-derived pairwise similarities, their kernelization, and the
weighted-vote prediction check that pins the geometry-and-accuracy-preserving
variant to the forest's out-of-bag behaviour."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import CLASSIFICATION, Dataset
from .forest import Forest, argmax_with_ties

ORIGINAL = "original"
OOB = "oob"
RFGAP = "rfgap"
PROXIMITY_KINDS = (ORIGINAL, OOB, RFGAP)

_ROW_CHUNK = 64


@dataclass
class ProximityMatrix:
    """n x n pairwise similarity of one of the three kinds.

    original/oob: symmetric, unit diagonal, entries in [0, 1].
    rfgap: asymmetric row-stochastic weights with zero diagonal; rows of
    uncovered observations (never OOB) are zero and flagged.
    """

    values: np.ndarray
    kind: str
    unit_diagonal: bool
    provenance: dict = field(default_factory=dict)
    undefined_pairs: np.ndarray | None = None  # oob: pairs never co-OOB
    uncovered: np.ndarray | None = None  # rfgap: rows with no OOB tree


@dataclass
class Kernel:
    """Symmetric, unit-diagonal, max-normalized similarity matrix."""

    values: np.ndarray
    provenance: dict = field(default_factory=dict)


@dataclass
class DistanceMatrix:
    """Symmetric nonnegative dissimilarities with zero diagonal."""

    values: np.ndarray
    provenance: dict = field(default_factory=dict)


@dataclass
class KernelPredictions:
    """Weighted-vote predictions ``sum_j p(i, j) y_j`` from rfgap rows."""

    task: str
    votes: np.ndarray
    predictions: np.ndarray
    covered: np.ndarray


def _provenance(forest: Forest, kind: str) -> dict:
    return {"kind": kind, "forest_seed": forest.config.seed, "n_trees": forest.n_trees}


def proximity_original(forest: Forest) -> ProximityMatrix:
    """Fraction of trees in which two observations share a terminal node."""
    leaves = forest.leaf_of
    n, t = leaves.shape
    values = np.empty((n, n))
    for start in range(0, n, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, n)
        same = leaves[start:stop, None, :] == leaves[None, :, :]
        values[start:stop] = same.sum(axis=2) / t
    return ProximityMatrix(
        values=values, kind=ORIGINAL, unit_diagonal=True, provenance=_provenance(forest, ORIGINAL)
    )


def proximity_oob(forest: Forest) -> ProximityMatrix:
    """Shared-leaf fraction restricted to trees where both observations are OOB.

    Pairs with no co-OOB tree get 0 and are flagged in ``undefined_pairs``;
    the diagonal is 1 by convention.
    """
    leaves = forest.leaf_of
    oob = forest.oob_mask()
    n = leaves.shape[0]
    values = np.empty((n, n))
    undefined = np.zeros((n, n), dtype=bool)
    for start in range(0, n, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, n)
        both = oob[start:stop, None, :] & oob[None, :, :]
        same = both & (leaves[start:stop, None, :] == leaves[None, :, :])
        num = same.sum(axis=2)
        den = both.sum(axis=2)
        undefined[start:stop] = den == 0
        values[start:stop] = num / np.maximum(den, 1)
    np.fill_diagonal(values, 1.0)
    np.fill_diagonal(undefined, False)
    return ProximityMatrix(
        values=values,
        kind=OOB,
        unit_diagonal=True,
        provenance=_provenance(forest, OOB),
        undefined_pairs=undefined,
    )


def proximity_rfgap(forest: Forest) -> ProximityMatrix:
    """Row-stochastic proximities that reproduce the forest's OOB votes.

    Row i averages, over the trees where i is out-of-bag, the in-bag bootstrap
    multiplicity of j in i's terminal node divided by that node's total in-bag
    multiplicity. The diagonal is 0 and each covered row sums to 1, so the
    row is exactly the weight vector of the forest's OOB vote for i.
    """
    leaves = forest.leaf_of
    counts = forest.inbag_counts.astype(np.float64).T  # (n, n_trees)
    oob = forest.oob_mask()
    n = leaves.shape[0]
    values = np.zeros((n, n))
    uncovered = np.zeros(n, dtype=bool)
    for i in range(n):
        trees = np.flatnonzero(oob[i])
        if trees.size == 0:
            uncovered[i] = True
            continue
        match = leaves[:, trees] == leaves[i, trees]
        weight = np.where(match, counts[:, trees], 0.0)
        mass = weight.sum(axis=0)  # in-bag mass of i's leaf, >= min_leaf >= 1
        values[i] = (weight / mass).sum(axis=1) / trees.size
    if uncovered.any():
        warnings.warn(f"{int(uncovered.sum())} observations are never OOB; their rows are zero")
    return ProximityMatrix(
        values=values,
        kind=RFGAP,
        unit_diagonal=False,
        provenance=_provenance(forest, RFGAP),
        uncovered=uncovered,
    )


def compute_proximity(forest: Forest, kind: str) -> ProximityMatrix:
    if kind == ORIGINAL:
        return proximity_original(forest)
    if kind == OOB:
        return proximity_oob(forest)
    if kind == RFGAP:
        return proximity_rfgap(forest)
    raise ValueError(f"unknown proximity kind {kind!r}; expected one of {PROXIMITY_KINDS}")


def kernelize(values: np.ndarray, provenance: dict | None = None) -> Kernel:
    """Turn any nonnegative similarity matrix into a proper kernel.

    Off-diagonal entries are scaled by their maximum, the matrix is averaged
    with its transpose, and the off-diagonal maximum is rescaled to exactly 1
    (averaging an asymmetric pair can pull it below 1). The diagonal is set
    to 1 last. All-zero off-diagonals degrade to the identity with a warning.
    """
    values = np.array(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("kernelize expects a square matrix")
    if values.min() < 0:
        raise ValueError("similarities must be nonnegative")
    off = ~np.eye(values.shape[0], dtype=bool)
    top = values[off].max() if values.shape[0] > 1 else 0.0
    if top <= 0.0:
        warnings.warn("all off-diagonal similarities are zero; returning the identity kernel")
        return Kernel(values=np.eye(values.shape[0]), provenance=dict(provenance or {}))
    values[off] /= top
    values = 0.5 * (values + values.T)
    top = values[off].max()
    if top < 1.0:
        values[off] /= top
    np.fill_diagonal(values, 1.0)
    return Kernel(values=values, provenance=dict(provenance or {}))


def to_kernel(proximity: ProximityMatrix) -> Kernel:
    """Kernelize a proximity matrix (any kind)."""
    return kernelize(proximity.values, proximity.provenance)


def validate_kernel(kernel: Kernel) -> None:
    """Raise unless symmetric, unit diagonal, entries in [0,1], max off-diag 1."""
    v = kernel.values
    if not np.array_equal(v, v.T):
        raise AssertionError("kernel is not exactly symmetric")
    if not np.all(np.diag(v) == 1.0):
        raise AssertionError("kernel diagonal is not exactly 1")
    if v.min() < 0.0 or v.max() > 1.0:
        raise AssertionError("kernel entries outside [0, 1]")
    off = v[~np.eye(v.shape[0], dtype=bool)]
    if off.size and off.max() > 0.0 and off.max() != 1.0:
        raise AssertionError("kernel max off-diagonal is not exactly 1")


def kernel_to_distance(kernel: Kernel, form: str = "sqrt") -> DistanceMatrix:
    """d(i, j) = sqrt(1 - k(i, j)) by default, or 1 - k with ``form="linear"``.

    Zero diagonal, symmetric by construction.
    """
    if form == "sqrt":
        values = np.sqrt(1.0 - kernel.values)
    elif form == "linear":
        values = 1.0 - kernel.values
    else:
        raise ValueError(f"unknown form {form!r}; expected 'sqrt' or 'linear'")
    np.fill_diagonal(values, 0.0)
    return DistanceMatrix(values=values, provenance=dict(kernel.provenance))


def kernel_prediction(proximity: ProximityMatrix, dataset: Dataset) -> KernelPredictions:
    """Predict each label as the proximity-weighted vote over all other points.

    Only rfgap rows carry the reconstruction guarantee, so other kinds are
    rejected. Uncovered rows (all-zero weights) are flagged, not predicted.
    """
    if proximity.kind != RFGAP:
        raise ValueError("kernel prediction is only defined for rfgap proximities")
    P = proximity.values
    covered = (
        ~proximity.uncovered if proximity.uncovered is not None else np.ones(P.shape[0], bool)
    )
    if dataset.label_kind == CLASSIFICATION:
        onehot = np.zeros((dataset.n, dataset.n_classes))
        onehot[np.arange(dataset.n), dataset.labels] = 1.0
        votes = P @ onehot
        predictions = argmax_with_ties(votes)
        predictions[~covered] = -1
    else:
        votes = P @ dataset.labels
        predictions = votes.copy()
        predictions[~covered] = np.nan
    return KernelPredictions(
        task=dataset.label_kind, votes=votes, predictions=predictions, covered=covered
    )
