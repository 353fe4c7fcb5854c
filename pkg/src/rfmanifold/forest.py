"""Random forests with the bootstrap/leaf bookkeeping proximity work needs.

Trees store split structure only; leaf statistics are always recomputed from
``leaf_of`` and ``inbag_counts`` so that out-of-bag predictions and proximity
weights are built from the exact same quantities.
"""

from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import CLASSIFICATION, REGRESSION, Dataset

_ARGMAX_TIE_TOL = 1e-9


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters. ``mtry``/``min_leaf`` default per task when None."""

    n_trees: int = 500
    mtry: int | None = None
    min_leaf: int | None = None
    max_depth: int | None = None
    seed: int = 0
    task: str = CLASSIFICATION

    def resolved(self, p: int) -> "ForestConfig":
        """Fill task-dependent defaults: mtry=ceil(sqrt(p)) / ceil(p/3), min_leaf=1 / 5."""
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task {self.task!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        mtry = self.mtry
        if mtry is None:
            mtry = math.ceil(math.sqrt(p)) if self.task == CLASSIFICATION else math.ceil(p / 3)
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry must be in [1, {p}], got {mtry}")
        min_leaf = self.min_leaf
        if min_leaf is None:
            min_leaf = 1 if self.task == CLASSIFICATION else 5
        if min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        return replace(self, mtry=mtry, min_leaf=min_leaf)


@dataclass
class Tree:
    """Binary split structure. ``feature[i] < 0`` marks node i as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Terminal node id for every row of X. Routing rule: x[f] <= t goes left."""
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            rows = np.flatnonzero(active)
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows[go_left]] = self.left[node[rows[go_left]]]
            node[rows[~go_left]] = self.right[node[rows[~go_left]]]


@dataclass
class Forest:
    """A trained forest plus the per-tree bookkeeping all proximities derive from.

    ``inbag_counts[t, j]`` is the bootstrap multiplicity of observation j in
    tree t (0 means out-of-bag); ``leaf_of[i, t]`` is observation i's terminal
    node in tree t. For every tree the multiplicities sum to n.
    """

    config: ForestConfig
    trees: list[Tree]
    inbag_counts: np.ndarray  # (n_trees, n) int64
    leaf_of: np.ndarray  # (n, n_trees) int32
    n_features: int
    n_classes: int = 0  # 0 for regression
    label_names: tuple[str, ...] = ()

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def n(self) -> int:
        return self.inbag_counts.shape[1]

    @property
    def task(self) -> str:
        return self.config.task

    def oob_mask(self) -> np.ndarray:
        """(n, n_trees) boolean mask: observation OOB in tree."""
        return (self.inbag_counts == 0).T


@dataclass
class OobReport:
    """Out-of-bag predictions and score.

    ``votes`` holds per-class fractions (classification) or one predicted value
    per observation (regression); rows for uncovered observations (in-bag in
    every tree) are flagged in ``covered`` and excluded from ``oob_score``.
    """

    task: str
    votes: np.ndarray
    predictions: np.ndarray
    covered: np.ndarray
    oob_score: float
    coverage: float


def fit_forest(dataset: Dataset, config: ForestConfig) -> Forest:
    """Train a seeded forest; tree t consumes the PRNG stream keyed by (seed, t).

    Splits minimize weighted Gini impurity (classification) or weighted
    variance (regression) over ``mtry`` features sampled without replacement
    per node; ties break toward the lowest feature index, then the lowest
    threshold. Thresholds sit at midpoints of consecutive sorted in-bag values.
    """
    if config.task != dataset.label_kind:
        raise ValueError(
            f"config task {config.task!r} does not match dataset label kind {dataset.label_kind!r}"
        )
    cfg = config.resolved(dataset.p)
    X = dataset.features
    n = dataset.n
    n_classes = 0
    if cfg.task == CLASSIFICATION:
        n_classes = dataset.n_classes
        if n_classes < 2:
            warnings.warn("single-class dataset: forest is degenerate (all-leaf trees)")
        y = dataset.labels.astype(np.int64)
    else:
        y = dataset.labels.astype(np.float64)

    trees: list[Tree] = []
    inbag = np.empty((cfg.n_trees, n), dtype=np.int64)
    leaf_of = np.empty((n, cfg.n_trees), dtype=np.int32)
    for t in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, t])
        boot = rng.integers(0, n, size=n)
        counts = np.bincount(boot, minlength=n)
        tree = _grow_tree(X, y, counts.astype(np.float64), cfg, rng, n_classes)
        trees.append(tree)
        inbag[t] = counts
        leaf_of[:, t] = tree.apply(X)
    return Forest(
        config=cfg,
        trees=trees,
        inbag_counts=inbag,
        leaf_of=leaf_of,
        n_features=dataset.p,
        n_classes=n_classes,
        label_names=dataset.label_names,
    )


def _grow_tree(X, y, weights, cfg: ForestConfig, rng, n_classes: int) -> Tree:
    n, p = X.shape
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]

    classification = cfg.task == CLASSIFICATION
    root_idx = np.flatnonzero(weights > 0)
    # Stack of (node_id, member indices, depth); LIFO with left pushed last so
    # PRNG consumption follows a fixed depth-first, left-first order.
    stack = [(0, root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        w = weights[idx]
        total_w = w.sum()
        if total_w < 2 * cfg.min_leaf or (cfg.max_depth is not None and depth >= cfg.max_depth):
            continue
        yn = y[idx]
        if (yn == yn[0]).all():  # pure node / zero variance
            continue

        feats = rng.choice(p, size=cfg.mtry, replace=False)
        feats.sort()
        best = None  # (score, feature, threshold, sorted order, split position)
        for f in feats:
            x = X[idx, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            ws = w[order]
            cum_w = np.cumsum(ws)[:-1]
            valid = (xs[:-1] < xs[1:]) & (cum_w >= cfg.min_leaf) & (total_w - cum_w >= cfg.min_leaf)
            if not valid.any():
                continue
            if classification:
                onehot = np.zeros((idx.size, n_classes))
                onehot[np.arange(idx.size), yn[order]] = ws
                totals = onehot.sum(axis=0)
                cum_c = np.cumsum(onehot, axis=0)[:-1]
                left_sq = np.einsum("ij,ij->i", cum_c, cum_c)
                right_c = totals[None, :] - cum_c
                right_sq = np.einsum("ij,ij->i", right_c, right_c)
            else:
                wy = ws * yn[order]
                total_s = wy.sum()
                cum_s = np.cumsum(wy)[:-1]
                left_sq = cum_s * cum_s
                right_sq = (total_s - cum_s) ** 2
            score = np.where(valid, left_sq / cum_w + right_sq / (total_w - cum_w), -np.inf)
            k = int(np.argmax(score))
            if best is None or score[k] > best[0]:
                mid = 0.5 * (xs[k] + xs[k + 1])
                if not mid < xs[k + 1]:  # adjacent floats: keep the split non-empty
                    mid = xs[k]
                best = (score[k], f, mid, idx[order], k)

        if best is None:
            continue
        _, f, thr, ordered_idx, k = best
        node_l = len(feature)
        node_r = node_l + 1
        feature.extend([-1, -1])
        threshold.extend([0.0, 0.0])
        left.extend([-1, -1])
        right.extend([-1, -1])
        feature[node] = int(f)
        threshold[node] = float(thr)
        left[node] = node_l
        right[node] = node_r
        stack.append((node_r, ordered_idx[k + 1 :], depth + 1))
        stack.append((node_l, ordered_idx[: k + 1], depth + 1))

    return Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
    )


def leaf_assignments(forest: Forest, x: np.ndarray) -> np.ndarray:
    """Route one feature vector through every tree; returns (n_trees,) node ids."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.n_features,):
        raise ValueError(f"expected {forest.n_features} features, got shape {x.shape}")
    row = x.reshape(1, -1)
    return np.array([tree.apply(row)[0] for tree in forest.trees], dtype=np.int32)


def _leaf_stats(forest: Forest, t: int, y: np.ndarray):
    """Per-leaf in-bag mass and weighted label stats for tree t."""
    leaves = forest.leaf_of[:, t]
    counts = forest.inbag_counts[t].astype(np.float64)
    inbag = counts > 0
    size = forest.trees[t].n_nodes
    mass = np.bincount(leaves[inbag], weights=counts[inbag], minlength=size)
    if forest.task == CLASSIFICATION:
        stats = np.zeros((size, forest.n_classes))
        np.add.at(stats, (leaves[inbag], y[inbag]), counts[inbag])
    else:
        stats = np.bincount(leaves[inbag], weights=counts[inbag] * y[inbag], minlength=size)
    return mass, stats


def argmax_with_ties(fractions: np.ndarray, tol: float = _ARGMAX_TIE_TOL) -> np.ndarray:
    """Row argmax choosing the lowest class id among near-ties.

    Shared by OOB voting and kernel prediction so both resolve exact vote ties
    identically and the reconstruction identity holds at argmax level.
    """
    top = fractions.max(axis=1, keepdims=True)
    return np.argmax(fractions >= top - tol, axis=1)


def oob_predict(forest: Forest, dataset: Dataset) -> OobReport:
    """Out-of-bag predictions: each tree contributes its leaf's in-bag,
    multiplicity-weighted class distribution (or mean), averaged over the trees
    where the observation is OOB."""
    if dataset.n != forest.n or dataset.p != forest.n_features:
        raise ValueError("dataset shape does not match the forest's training data")
    n = forest.n
    y = dataset.labels
    oob = forest.oob_mask()
    n_oob_trees = oob.sum(axis=1)
    covered = n_oob_trees > 0

    if forest.task == CLASSIFICATION:
        votes = np.zeros((n, forest.n_classes))
    else:
        votes = np.zeros(n)
    for t in range(forest.n_trees):
        mass, stats = _leaf_stats(forest, t, y)
        rows = np.flatnonzero(oob[:, t])
        leaves = forest.leaf_of[rows, t]
        if forest.task == CLASSIFICATION:
            votes[rows] += stats[leaves] / mass[leaves][:, None]
        else:
            votes[rows] += stats[leaves] / mass[leaves]
    denom = np.where(covered, n_oob_trees, 1).astype(np.float64)
    if forest.task == CLASSIFICATION:
        votes /= denom[:, None]
        predictions = argmax_with_ties(votes)
        predictions[~covered] = -1
        hits = predictions[covered] == y[covered]
        oob_score = float(hits.mean()) if covered.any() else float("nan")
    else:
        votes /= denom
        predictions = votes.copy()
        if covered.any():
            resid = y[covered] - predictions[covered]
            spread = y[covered] - y[covered].mean()
            ss_tot = float(spread @ spread)
            oob_score = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
        else:
            oob_score = float("nan")
    return OobReport(
        task=forest.task,
        votes=votes,
        predictions=predictions,
        covered=covered,
        oob_score=oob_score,
        coverage=float(covered.mean()),
    )


_MAGIC = b"RFMF"
_FORMAT_VERSION = 1


def save_forest(forest: Forest, path) -> None:
    """Serialize to the versioned binary container (exact round-trip).

    Layout: magic ``RFMF``, little-endian uint32 format version, uint64 JSON
    header length, the UTF-8 JSON header (config, dims, array manifest), then
    each array's raw C-order bytes in manifest order.
    """
    arrays: list[tuple[str, np.ndarray]] = [
        ("inbag_counts", forest.inbag_counts),
        ("leaf_of", forest.leaf_of),
    ]
    for i, tree in enumerate(forest.trees):
        arrays.append((f"tree{i}.feature", tree.feature))
        arrays.append((f"tree{i}.threshold", tree.threshold))
        arrays.append((f"tree{i}.left", tree.left))
        arrays.append((f"tree{i}.right", tree.right))
    cfg = forest.config
    header = {
        "config": {
            "n_trees": cfg.n_trees,
            "mtry": cfg.mtry,
            "min_leaf": cfg.min_leaf,
            "max_depth": cfg.max_depth,
            "seed": cfg.seed,
            "task": cfg.task,
        },
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "label_names": list(forest.label_names),
        "arrays": [
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
            for name, arr in arrays
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_FORMAT_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_forest(path) -> Forest:
    """Inverse of save_forest."""
    with open(path, "rb") as fh:
        raw = fh.read()
    buf = io.BytesIO(raw)
    if buf.read(4) != _MAGIC:
        raise ValueError(f"{path}: not a forest file")
    version = int(np.frombuffer(buf.read(4), dtype=np.uint32)[0])
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    header_len = int(np.frombuffer(buf.read(8), dtype=np.uint64)[0])
    header = json.loads(buf.read(header_len).decode("utf-8"))
    arrays: dict[str, np.ndarray] = {}
    for meta in header["arrays"]:
        dtype = np.dtype(meta["dtype"])
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf.read(count * dtype.itemsize), dtype=dtype).reshape(shape)
        arrays[meta["name"]] = arr.copy()
    cfg = ForestConfig(**header["config"])
    trees = []
    for i in range(cfg.n_trees):
        trees.append(
            Tree(
                feature=arrays[f"tree{i}.feature"],
                threshold=arrays[f"tree{i}.threshold"],
                left=arrays[f"tree{i}.left"],
                right=arrays[f"tree{i}.right"],
            )
        )
    return Forest(
        config=cfg,
        trees=trees,
        inbag_counts=arrays["inbag_counts"],
        leaf_of=arrays["leaf_of"],
        n_features=int(header["n_features"]),
        n_classes=int(header["n_classes"]),
        label_names=tuple(header["label_names"]),
    )
