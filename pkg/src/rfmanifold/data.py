"""Labeled tabular datasets: CSV ingestion, z-scoring, synthetic generators."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

MISSING_MARKERS = {"", "NA", "?"}

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class Dataset:
    """An immutable feature matrix with categorical or continuous labels.

    Classification labels are contiguous integer ids ``0..C-1``; the original
    label strings live in ``label_names``. ``info`` carries provenance such as
    which synthetic features are noise.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    label_kind: str
    label_names: tuple[str, ...] = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, p = features.shape
        if n < 2:
            raise ValueError(f"need at least 2 observations, got {n}")
        if p < 1:
            raise ValueError("need at least 1 feature")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if len(self.feature_names) != p:
            raise ValueError("feature_names length does not match feature count")
        if self.label_kind == CLASSIFICATION:
            labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError("labels must be one id per observation")
            counts = np.bincount(labels) if labels.size else np.array([])
            if labels.min(initial=0) < 0 or np.any(counts == 0):
                raise ValueError("class ids must be contiguous 0..C-1 with every class populated")
            if self.label_names and len(self.label_names) != counts.size:
                raise ValueError("label_names length does not match class count")
        elif self.label_kind == REGRESSION:
            labels = np.ascontiguousarray(self.labels, dtype=np.float64)
            if labels.shape != (n,) or not np.all(np.isfinite(labels)):
                raise ValueError("regression labels must be one finite value per observation")
        else:
            raise ValueError(f"unknown label_kind {self.label_kind!r}")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        if self.label_kind != CLASSIFICATION:
            raise ValueError("n_classes is only defined for classification datasets")
        return int(self.labels.max()) + 1

    def label_strings(self) -> list[str]:
        """Labels rendered back to their original string form."""
        if self.label_kind == CLASSIFICATION:
            names = self.label_names or tuple(str(c) for c in range(self.n_classes))
            return [names[c] for c in self.labels]
        return [repr(float(y)) for y in self.labels]


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-feature centering/scaling used for z-scoring.

    Population (ddof=0) standard deviation; constant columns are dropped and
    listed in ``dropped_features``.
    """

    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple[str, ...]
    dropped_features: tuple[str, ...]
    population_std: bool = True


def load_csv(
    path,
    label_column,
    label_kind: str,
    drop_columns: tuple = (),
) -> Dataset:
    """Load a UTF-8, comma-delimited, headered CSV into a Dataset.

    Rows containing any missing cell (empty, ``NA`` or ``?``) are dropped.
    Categorical labels are mapped to 0..C-1 in first-appearance order; the
    mapping is kept in ``label_names``. ``label_column`` and entries of
    ``drop_columns`` may be header names or 0-based indices.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [[cell.strip() for cell in row] for row in reader if row]

    label_idx = _resolve_column(header, label_column, path)
    drop_idx = {_resolve_column(header, c, path) for c in drop_columns}
    drop_idx.discard(label_idx)
    feature_idx = [i for i in range(len(header)) if i != label_idx and i not in drop_idx]
    if not feature_idx:
        raise ValueError(f"{path}: no feature columns remain after drops")

    kept_features: list[list[float]] = []
    raw_labels: list[str] = []
    n_dropped = 0
    for rownum, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{rownum}: expected {len(header)} cells, got {len(row)}")
        cells = [row[i] for i in feature_idx] + [row[label_idx]]
        if any(c in MISSING_MARKERS for c in cells):
            n_dropped += 1
            continue
        values = []
        for i in feature_idx:
            try:
                values.append(float(row[i]))
            except ValueError:
                raise ValueError(
                    f"{path}:{rownum}: non-numeric value {row[i]!r} in column {header[i]!r}"
                ) from None
        kept_features.append(values)
        raw_labels.append(row[label_idx])

    if len(kept_features) < 2:
        raise ValueError(f"{path}: fewer than 2 usable rows ({n_dropped} dropped as incomplete)")

    features = np.array(kept_features, dtype=np.float64)
    info = {
        "source": str(path),
        "label_column": header[label_idx],
        "dropped_rows": n_dropped,
        "dropped_columns": tuple(header[i] for i in sorted(drop_idx)),
    }
    if label_kind == CLASSIFICATION:
        order: dict[str, int] = {}
        for s in raw_labels:
            order.setdefault(s, len(order))
        labels = np.array([order[s] for s in raw_labels], dtype=np.int64)
        label_names = tuple(order)
    else:
        try:
            labels = np.array([float(s) for s in raw_labels], dtype=np.float64)
        except ValueError:
            raise ValueError(f"{path}: regression label column contains non-numeric values") from None
        label_names = ()
    return Dataset(
        features=features,
        labels=labels,
        feature_names=tuple(header[i] for i in feature_idx),
        label_kind=label_kind,
        label_names=label_names,
        info=info,
    )


def _resolve_column(header: list[str], column, path) -> int:
    if isinstance(column, int):
        if not 0 <= column < len(header):
            raise ValueError(f"{path}: column index {column} out of range")
        return column
    try:
        return header.index(column)
    except ValueError:
        raise ValueError(f"{path}: no column named {column!r} (header: {header})") from None


def write_csv(dataset: Dataset, path, label_column: str = "label") -> None:
    """Export a Dataset in the same CSV dialect load_csv accepts."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [label_column])
        for row, label in zip(dataset.features, dataset.label_strings()):
            writer.writerow([repr(float(v)) for v in row] + [label])


def zscore_normalize(dataset: Dataset) -> tuple[Dataset, NormalizationRecord]:
    """Center and scale every feature to mean 0, population std 1.

    Constant columns carry no information and would divide by zero; they are
    dropped and recorded.
    """
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    keep = std > 0.0
    if not np.any(keep):
        raise ValueError("all feature columns are constant; nothing to normalize")
    dropped = tuple(name for name, k in zip(dataset.feature_names, keep) if not k)
    if dropped:
        warnings.warn(f"dropping constant feature columns: {dropped}")
    normalized = (dataset.features[:, keep] - mean[keep]) / std[keep]
    record = NormalizationRecord(
        mean=mean[keep],
        std=std[keep],
        feature_names=tuple(n for n, k in zip(dataset.feature_names, keep) if k),
        dropped_features=dropped,
    )
    kept_positions = np.flatnonzero(keep)
    info = dict(dataset.info)
    info["normalized"] = True
    if "noise_features" in info:
        remap = {int(old): new for new, old in enumerate(kept_positions)}
        info["noise_features"] = tuple(
            remap[f] for f in info["noise_features"] if int(f) in remap
        )
    return (
        Dataset(
            features=normalized,
            labels=dataset.labels,
            feature_names=record.feature_names,
            label_kind=dataset.label_kind,
            label_names=dataset.label_names,
            info=info,
        ),
        record,
    )


def synthesize_blobs(
    n_per_class: int,
    p: int,
    n_noise_features: int,
    class_separation: float,
    seed: int,
) -> Dataset:
    """Two Gaussian blobs with known informative and noise features.

    The class centers sit ``class_separation`` apart along the diagonal of the
    ``p`` informative dimensions; the ``n_noise_features`` extra columns are
    label-independent standard normals. ``info['noise_features']`` flags them.
    """
    if n_per_class < 1 or p < 1 or n_noise_features < 0:
        raise ValueError("counts must be positive (noise feature count may be 0)")
    rng = np.random.default_rng(seed)
    offset = (class_separation / 2.0) / math.sqrt(p)
    n = 2 * n_per_class
    informative = rng.standard_normal((n, p))
    informative[:n_per_class] -= offset
    informative[n_per_class:] += offset
    noise = rng.standard_normal((n, n_noise_features))
    features = np.hstack([informative, noise])
    labels = np.repeat(np.array([0, 1], dtype=np.int64), n_per_class)
    names = tuple(f"x{j}" for j in range(p)) + tuple(f"noise{j}" for j in range(n_noise_features))
    return Dataset(
        features=features,
        labels=labels,
        feature_names=names,
        label_kind=CLASSIFICATION,
        label_names=("a", "b"),
        info={
            "generator": "blobs",
            "noise_features": tuple(range(p, p + n_noise_features)),
            "class_separation": class_separation,
            "seed": seed,
        },
    )


def synthesize_regression_gradient(n: int, p: int, seed: int) -> Dataset:
    """Regression data whose label follows one latent coordinate.

    Half the features (rounded up) are smooth functions of a latent ``u`` in
    [0, 1] plus small noise; the rest are pure noise. The label is the smooth
    monotone ``u + u^2`` plus noise. ``info['latent']`` stores ``u``.
    """
    if n < 10:
        raise ValueError(f"need n >= 10, got {n}")
    if p < 1:
        raise ValueError("need p >= 1")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, size=n)
    n_signal = (p + 1) // 2
    curves = [
        lambda t: t,
        lambda t: t * t,
        lambda t: np.sin(1.5 * t),
        lambda t: np.expm1(t),
        lambda t: np.sqrt(t),
    ]
    columns = []
    for j in range(n_signal):
        columns.append(curves[j % len(curves)](u) + 0.05 * rng.standard_normal(n))
    for _ in range(p - n_signal):
        columns.append(rng.standard_normal(n))
    features = np.column_stack(columns)
    labels = u + u * u + 0.05 * rng.standard_normal(n)
    names = tuple(f"s{j}" for j in range(n_signal)) + tuple(
        f"noise{j}" for j in range(p - n_signal)
    )
    latent = u.copy()
    latent.setflags(write=False)
    return Dataset(
        features=features,
        labels=labels,
        feature_names=names,
        label_kind=REGRESSION,
        info={
            "generator": "regression_gradient",
            "noise_features": tuple(range(n_signal, p)),
            "latent": latent,
            "seed": seed,
        },
    )
