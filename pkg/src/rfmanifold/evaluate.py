"""Embedding evaluation: leave-one-out k-NN accuracy deltas, permutation
importance correlation, and the comparison grid that aggregates both over
datasets, methods, and seeds."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.stats

from .data import CLASSIFICATION, REGRESSION, Dataset, zscore_normalize
from .embed import Embedding
from .forest import ForestConfig, OobReport
from .methods import FOREST_SOURCES, MethodSpec, PipelineContext, build_embedding


@dataclass
class ImportanceScores:
    """Per-feature permutation importance for one scoring target."""

    scores: np.ndarray
    target: str  # "task" or "embedding"
    repeats: int
    seed: int
    feature_names: tuple[str, ...] = ()


@dataclass
class CorrelationResult:
    pearson: float
    spearman: float
    defined: bool


def _pairwise_sq(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return 0.5 * (d2 + d2.T)


def _loocv_neighbors(d2: np.ndarray, k: int) -> np.ndarray:
    """First k neighbors per row, self excluded, distance ties to lower index."""
    work = d2.copy()
    np.fill_diagonal(work, np.inf)
    return np.argsort(work, axis=1, kind="stable")[:, :k]


def _classify_from_d2(d2: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """LOOCV k-NN votes; vote ties go to the class with the smallest mean
    neighbor distance, then the lowest class id."""
    n = d2.shape[0]
    n_classes = int(labels.max()) + 1
    neighbors = _loocv_neighbors(d2, k)
    neighbor_labels = labels[neighbors]
    counts = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.repeat(np.arange(n), k)
    np.add.at(counts, (rows, neighbor_labels.ravel()), 1)
    top = counts.max(axis=1)
    tied = (counts == top[:, None]).sum(axis=1) > 1
    predictions = np.argmax(counts, axis=1)
    for i in np.flatnonzero(tied):
        candidates = np.flatnonzero(counts[i] == top[i])
        dists = np.sqrt(d2[i, neighbors[i]])
        means = [dists[neighbor_labels[i] == c].mean() for c in candidates]
        predictions[i] = candidates[int(np.argmin(means))]
    return predictions


def knn_loocv_accuracy(features: np.ndarray, labels: np.ndarray, k: int = 5) -> float:
    """Leave-one-out k-NN classification accuracy."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    n = features.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    predictions = _classify_from_d2(_pairwise_sq(features), labels, k)
    return float((predictions == labels).mean())


def accuracy_delta(embedding: Embedding, dataset: Dataset, k: int = 5) -> float:
    """Embedding LOOCV accuracy minus full-feature LOOCV accuracy, same k and
    tie rules. ``dataset`` should already be normalized."""
    if dataset.label_kind != CLASSIFICATION:
        raise ValueError("accuracy delta requires classification labels")
    full = knn_loocv_accuracy(dataset.features, dataset.labels, k)
    embedded = knn_loocv_accuracy(embedding.coords, dataset.labels, k)
    return embedded - full


def oob_delta(embedding: Embedding, report: OobReport, dataset: Dataset, k: int = 5) -> float:
    """Embedding LOOCV accuracy minus the forest's out-of-bag score."""
    if dataset.label_kind != CLASSIFICATION:
        raise ValueError("oob delta requires classification labels")
    return knn_loocv_accuracy(embedding.coords, dataset.labels, k) - report.oob_score


def _column_sq_contrib(column: np.ndarray) -> np.ndarray:
    diff = column[:, None] - column[None, :]
    return diff * diff


def _task_permutation_scores(
    X: np.ndarray, labels: np.ndarray, k: int, permutations: list[list[np.ndarray]]
) -> np.ndarray:
    """Accuracy drop per feature for explicit permutations.

    The unpermuted reference is evaluated through the same
    subtract-and-re-add expression as the permuted runs, so an identity
    permutation scores exactly zero.
    """
    full = _pairwise_sq(X)
    scores = np.zeros(X.shape[1])
    for f, perms in enumerate(permutations):
        contrib = _column_sq_contrib(X[:, f])
        base = full - contrib
        reference = _accuracy_from_d2(base + contrib, labels, k)
        drops = []
        for perm in perms:
            permuted = _column_sq_contrib(X[perm, f])
            drops.append(reference - _accuracy_from_d2(base + permuted, labels, k))
        scores[f] = float(np.mean(drops))
    return scores


def _accuracy_from_d2(d2, labels, k) -> float:
    return float((_classify_from_d2(d2, labels, k) == labels).mean())


def _seeded_permutations(n: int, p: int, repeats: int, seed: int) -> list[list[np.ndarray]]:
    return [
        [np.random.default_rng([seed, f, r]).permutation(n) for r in range(repeats)]
        for f in range(p)
    ]


def knn_permutation_importance(
    dataset: Dataset, k: int = 5, repeats: int = 5, seed: int = 0
) -> ImportanceScores:
    """Mean LOOCV accuracy drop when one feature column is shuffled."""
    if dataset.label_kind != CLASSIFICATION:
        raise ValueError("task importance requires classification labels")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    perms = _seeded_permutations(dataset.n, dataset.p, repeats, seed)
    scores = _task_permutation_scores(dataset.features, dataset.labels, k, perms)
    return ImportanceScores(
        scores=scores,
        target="task",
        repeats=repeats,
        seed=seed,
        feature_names=dataset.feature_names,
    )


def _regression_error_from_d2(d2: np.ndarray, targets: np.ndarray, k: int) -> float:
    neighbors = _loocv_neighbors(d2, k)
    predictions = targets[neighbors].mean(axis=1)
    residual = predictions - targets
    return float(np.sum(residual * residual, axis=1).mean())


def _embedding_permutation_scores(
    X: np.ndarray, targets: np.ndarray, k: int, permutations: list[list[np.ndarray]]
) -> np.ndarray:
    full = _pairwise_sq(X)
    scores = np.zeros(X.shape[1])
    for f, perms in enumerate(permutations):
        contrib = _column_sq_contrib(X[:, f])
        base = full - contrib
        reference = _regression_error_from_d2(base + contrib, targets, k)
        rises = []
        for perm in perms:
            permuted = _column_sq_contrib(X[perm, f])
            rises.append(_regression_error_from_d2(base + permuted, targets, k) - reference)
        scores[f] = float(np.mean(rises)) / reference
    return scores


def embedding_permutation_importance(
    dataset: Dataset,
    embedding: Embedding,
    k: int = 5,
    repeats: int = 5,
    seed: int = 0,
) -> ImportanceScores:
    """Importance of each original feature for predicting the embedding.

    A k-NN regressor in the original feature space predicts the (standardized)
    embedding coordinates under LOOCV; the score is the relative rise in
    summed squared error when the feature column is shuffled.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if embedding.n != dataset.n:
        raise ValueError("embedding and dataset sizes differ")
    spread = embedding.coords.std(axis=0)
    if (spread == 0).any():
        raise ValueError("embedding has a zero-variance coordinate; importance is undefined")
    targets = (embedding.coords - embedding.coords.mean(axis=0)) / spread
    perms = _seeded_permutations(dataset.n, dataset.p, repeats, seed)
    scores = _embedding_permutation_scores(dataset.features, targets, k, perms)
    return ImportanceScores(
        scores=scores,
        target="embedding",
        repeats=repeats,
        seed=seed,
        feature_names=dataset.feature_names,
    )


def importance_correlation(a: ImportanceScores, b: ImportanceScores) -> CorrelationResult:
    """Pearson (headline) and Spearman correlation between two score vectors."""
    x = np.asarray(a.scores, dtype=np.float64)
    y = np.asarray(b.scores, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("importance score vectors have different lengths")
    if x.std() == 0 or y.std() == 0:
        warnings.warn("importance correlation undefined: zero variance in scores")
        return CorrelationResult(pearson=float("nan"), spearman=float("nan"), defined=False)
    pearson = float(np.corrcoef(x, y)[0, 1])
    rx = scipy.stats.rankdata(x)
    ry = scipy.stats.rankdata(y)
    spearman = float(np.corrcoef(rx, ry)[0, 1])
    return CorrelationResult(pearson=pearson, spearman=spearman, defined=True)


@dataclass
class EvalConfig:
    knn_k: int = 5
    embed_dim: int = 2
    importance_repeats: int = 5
    alpha: float = 1.0
    beta: float | None = None
    graph_k: int = 10
    forest: ForestConfig = field(default_factory=ForestConfig)


@dataclass
class EvalCell:
    dataset: str
    source: str
    algorithm: str
    seed: int
    status: str = "ok"
    error: str = ""
    metrics: dict = field(default_factory=dict)

    @property
    def method(self) -> str:
        return f"{self.source}:{self.algorithm}"


@dataclass
class EvalReport:
    cells: list[EvalCell]
    aggregates: list[dict]
    seeds: tuple
    knn_k: int
    checks: list = field(default_factory=list)

    def aggregate(self, dataset: str, source: str, algorithm: str, metric: str):
        for row in self.aggregates:
            if (
                row["dataset"] == dataset
                and row["source"] == source
                and row["algorithm"] == algorithm
                and row["metric"] == metric
            ):
                return row
        raise KeyError(f"no aggregate for {dataset}/{source}:{algorithm}/{metric}")


METRIC_COLUMNS = (
    "full_accuracy",
    "embedding_accuracy",
    "accuracy_delta",
    "oob_score",
    "oob_delta",
    "importance_pearson",
    "importance_spearman",
    "progression_spearman",
)


def _evaluate_cell(
    ctx: PipelineContext,
    spec: MethodSpec,
    dataset: Dataset,
    config: EvalConfig,
    full_accuracy: float | None,
    task_importance: ImportanceScores | None,
) -> dict:
    embedding = build_embedding(ctx, spec, embed_dim=config.embed_dim)
    metrics: dict = {}
    if dataset.label_kind == CLASSIFICATION:
        embed_acc = knn_loocv_accuracy(embedding.coords, dataset.labels, config.knn_k)
        metrics["full_accuracy"] = full_accuracy
        metrics["embedding_accuracy"] = embed_acc
        metrics["accuracy_delta"] = embed_acc - full_accuracy
        emb_importance = embedding_permutation_importance(
            dataset, embedding, k=config.knn_k, repeats=config.importance_repeats, seed=ctx.seed
        )
        corr = importance_correlation(task_importance, emb_importance)
        metrics["importance_pearson"] = corr.pearson
        metrics["importance_spearman"] = corr.spearman
        metrics["importance_scores"] = emb_importance.scores
        if spec.source in FOREST_SOURCES:
            report = ctx.oob_report()
            metrics["oob_score"] = report.oob_score
            metrics["oob_delta"] = embed_acc - report.oob_score
    else:
        rho = scipy.stats.spearmanr(embedding.coords[:, 0], dataset.labels).statistic
        metrics["progression_spearman"] = abs(float(rho))
        if spec.source in FOREST_SOURCES:
            metrics["oob_score"] = ctx.oob_report().oob_score
    return metrics


def run_comparison(
    datasets: dict[str, Dataset],
    methods: list[MethodSpec],
    seeds: tuple,
    config: EvalConfig | None = None,
) -> EvalReport:
    """Run the full dataset x method x seed grid.

    Datasets are z-scored once; the forest for a given (dataset, seed) is
    shared across forest-backed methods. Individual cell failures are recorded
    and the grid keeps going.
    """
    config = config or EvalConfig()
    if not seeds:
        raise ValueError("need at least one seed")
    cells: list[EvalCell] = []
    checks: list = []
    for name, dataset in datasets.items():
        normalized, _ = zscore_normalize(dataset)
        full_accuracy = None
        if normalized.label_kind == CLASSIFICATION:
            full_accuracy = knn_loocv_accuracy(
                normalized.features, normalized.labels, config.knn_k
            )
        for seed in seeds:
            ctx = PipelineContext(
                normalized,
                seed,
                forest_config=config.forest,
                alpha=config.alpha,
                beta=config.beta,
                graph_k=config.graph_k,
            )
            task_importance = None
            if normalized.label_kind == CLASSIFICATION:
                task_importance = knn_permutation_importance(
                    normalized, k=config.knn_k, repeats=config.importance_repeats, seed=seed
                )
            for spec in methods:
                cell = EvalCell(dataset=name, source=spec.source, algorithm=spec.algorithm, seed=seed)
                try:
                    cell.metrics = _evaluate_cell(
                        ctx, spec, normalized, config, full_accuracy, task_importance
                    )
                except Exception as exc:  # record and continue with the grid
                    cell.status = "failed"
                    cell.error = f"{type(exc).__name__}: {exc}"
                cells.append(cell)
            checks.extend(ctx.checks)
    aggregates = _aggregate(cells)
    return EvalReport(
        cells=cells, aggregates=aggregates, seeds=tuple(seeds), knn_k=config.knn_k, checks=checks
    )


def _aggregate(cells: list[EvalCell]) -> list[dict]:
    keys: list[tuple[str, str, str]] = []
    for cell in cells:
        key = (cell.dataset, cell.source, cell.algorithm)
        if key not in keys:
            keys.append(key)
    rows = []
    for dataset, source, algorithm in keys:
        group = [
            c
            for c in cells
            if (c.dataset, c.source, c.algorithm) == (dataset, source, algorithm)
            and c.status == "ok"
        ]
        for metric in METRIC_COLUMNS:
            values = [c.metrics[metric] for c in group if metric in c.metrics]
            values = [v for v in values if v is not None and np.isfinite(v)]
            if not values:
                continue
            arr = np.array(values, dtype=np.float64)
            rows.append(
                {
                    "dataset": dataset,
                    "source": source,
                    "algorithm": algorithm,
                    "metric": metric,
                    "mean": float(arr.mean()),
                    "sd": float(arr.std()),
                    "n": int(arr.size),
                }
            )
    return rows
