"""Registry wiring similarity sources to embedding algorithms.

A method is a (source, algorithm) pair: the source decides how pairwise
structure is built (plain Euclidean, class-conditional, or one of the forest
proximity kinds) and the algorithm consumes either a kernel or a distance
matrix. PipelineContext caches the expensive shared pieces per
(dataset, seed) and validates every kernel it hands out.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, embed, proximity
from .data import CLASSIFICATION, Dataset
from .forest import Forest, ForestConfig, OobReport, fit_forest, oob_predict
from .proximity import (
    RFGAP,
    DistanceMatrix,
    Kernel,
    kernel_prediction,
    kernel_to_distance,
    kernelize,
    to_kernel,
    validate_kernel,
)

EUCLIDEAN = "euclidean"
CLASS_CONDITIONAL = "class_conditional"
SOURCES = (EUCLIDEAN, CLASS_CONDITIONAL) + proximity.PROXIMITY_KINDS
FOREST_SOURCES = proximity.PROXIMITY_KINDS

KERNEL_ALGORITHMS = ("diffusion_map", "potential", "laplacian_eigenmaps", "kernel_pca")
DISTANCE_ALGORITHMS = ("isomap", "tsne", "classical_mds", "metric_mds")
ALGORITHMS = KERNEL_ALGORITHMS + DISTANCE_ALGORITHMS


@dataclass(frozen=True)
class MethodSpec:
    source: str
    algorithm: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}; registered: {SOURCES}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; registered: {ALGORITHMS}")

    @property
    def name(self) -> str:
        return f"{self.source}:{self.algorithm}"


@dataclass
class CheckRecord:
    name: str
    passed: bool
    detail: str = ""


class PipelineContext:
    """Lazy per-(dataset, seed) cache of distances, forests, and kernels.

    ``dataset`` is expected to be normalized already. All kernels that leave
    this object have passed the kernel contract; check outcomes (including the
    out-of-bag reconstruction identity for rfgap) are appended to ``checks``.
    """

    def __init__(
        self,
        dataset: Dataset,
        seed: int,
        forest_config: ForestConfig | None = None,
        alpha: float = 1.0,
        beta: float | None = None,
        graph_k: int = 10,
        forest: Forest | None = None,
    ):
        self.dataset = dataset
        self.seed = seed
        base = forest_config or ForestConfig()
        self.forest_config = replace(base, seed=seed, task=dataset.label_kind)
        self.alpha = alpha
        self.beta = beta
        self.graph_k = min(graph_k, dataset.n - 1)
        self.checks: list[CheckRecord] = []
        self._euclidean: DistanceMatrix | None = None
        self._class_conditional: DistanceMatrix | None = None
        self._forest: Forest | None = forest
        self._oob_report: OobReport | None = None
        self._proximities: dict[str, proximity.ProximityMatrix] = {}
        self._kernels: dict[str, Kernel] = {}
        self._distances: dict[str, DistanceMatrix] = {}

    def euclidean_distances(self) -> DistanceMatrix:
        if self._euclidean is None:
            self._euclidean = baselines.euclidean_distances(self.dataset)
        return self._euclidean

    def class_conditional_distances(self) -> DistanceMatrix:
        if self._class_conditional is None:
            if self.dataset.label_kind != CLASSIFICATION:
                raise ValueError("class-conditional distances need classification labels")
            base = self.euclidean_distances()
            beta = self.beta if self.beta is not None else baselines.default_beta(base)
            params = baselines.ClassConditionalParams(alpha=self.alpha, beta=beta)
            self._class_conditional = baselines.class_conditional_distance(
                base, self.dataset.labels, params
            )
        return self._class_conditional

    def forest(self) -> Forest:
        if self._forest is None:
            self._forest = fit_forest(self.dataset, self.forest_config)
        return self._forest

    def oob_report(self) -> OobReport:
        if self._oob_report is None:
            self._oob_report = oob_predict(self.forest(), self.dataset)
        return self._oob_report

    def proximity_matrix(self, kind: str) -> proximity.ProximityMatrix:
        if kind not in self._proximities:
            self._proximities[kind] = proximity.compute_proximity(self.forest(), kind)
            if kind == RFGAP:
                self._record_reconstruction_check(self._proximities[kind])
        return self._proximities[kind]

    def _record_reconstruction_check(self, prox) -> None:
        report = self.oob_report()
        predicted = kernel_prediction(prox, self.dataset)
        covered = predicted.covered & report.covered
        if self.dataset.label_kind == CLASSIFICATION:
            exact = bool(
                np.array_equal(predicted.predictions[covered], report.predictions[covered])
            )
            gap = float(np.abs(predicted.votes[covered] - report.votes[covered]).max())
            ok = exact and gap <= 1e-12
            detail = f"argmax match={exact}, max vote gap={gap:.3e}"
        else:
            ref = report.predictions[covered]
            gap = float(
                np.max(np.abs(predicted.predictions[covered] - ref) / np.maximum(np.abs(ref), 1.0))
            )
            ok = gap <= 1e-12
            detail = f"max relative error={gap:.3e}"
        self.checks.append(CheckRecord("oob-reconstruction identity", ok, detail))

    def _checked(self, name: str, kernel: Kernel) -> Kernel:
        try:
            validate_kernel(kernel)
            self.checks.append(CheckRecord(f"kernel contract [{name}]", True))
        except AssertionError as exc:
            self.checks.append(CheckRecord(f"kernel contract [{name}]", False, str(exc)))
        operator = embed.diffusion_operator(kernel)
        gap = float(np.abs(operator.values.sum(axis=1) - 1.0).max())
        self.checks.append(
            CheckRecord(f"diffusion rows [{name}]", gap <= 1e-12, f"max |row sum - 1| = {gap:.3e}")
        )
        return kernel

    def kernel(self, source: str) -> Kernel:
        if source not in self._kernels:
            if source in FOREST_SOURCES:
                k = to_kernel(self.proximity_matrix(source))
            else:
                distances = self.distance_for_affinity(source)
                affinity = embed.gaussian_affinity(distances, adaptive_k=self.graph_k)
                k = kernelize(affinity.values, affinity.provenance)
            self._kernels[source] = self._checked(source, k)
        return self._kernels[source]

    def distance_for_affinity(self, source: str) -> DistanceMatrix:
        if source == EUCLIDEAN:
            return self.euclidean_distances()
        if source == CLASS_CONDITIONAL:
            return self.class_conditional_distances()
        raise ValueError(f"source {source!r} does not start from a distance matrix")

    def distance(self, source: str) -> DistanceMatrix:
        if source not in self._distances:
            if source in FOREST_SOURCES:
                self._distances[source] = kernel_to_distance(self.kernel(source))
            else:
                self._distances[source] = self.distance_for_affinity(source)
        return self._distances[source]


def build_embedding(ctx: PipelineContext, spec: MethodSpec, embed_dim: int = 2) -> embed.Embedding:
    """Run one registered method inside a context; the context seed feeds any
    stochastic algorithm."""
    params = dict(spec.params)
    d = int(params.pop("d", embed_dim))
    if spec.algorithm in KERNEL_ALGORITHMS:
        kernel = ctx.kernel(spec.source)
        if spec.algorithm == "diffusion_map":
            emb = embed.diffusion_map(kernel, t=int(params.pop("t", 1)), d=d)
        elif spec.algorithm == "potential":
            emb = embed.potential_embedding(
                kernel,
                d=d,
                t=params.pop("t", "auto"),
                epsilon=float(params.pop("epsilon", 1e-7)),
            )
        elif spec.algorithm == "laplacian_eigenmaps":
            emb = embed.laplacian_eigenmaps(kernel, d=d)
        else:
            emb = embed.kernel_pca(kernel, d=d)
    else:
        distances = ctx.distance(spec.source)
        if spec.algorithm == "isomap":
            emb = embed.isomap(
                distances, k=int(params.pop("k", ctx.graph_k)), d=d,
                strict=bool(params.pop("strict", False)),
            )
            emb.info.pop("geodesic_matrix", None)
        elif spec.algorithm == "tsne":
            n = ctx.dataset.n
            perplexity = float(params.pop("perplexity", 30.0))
            perplexity = min(perplexity, (n - 1) / 3.0 - 1e-9)
            emb = embed.tsne(
                distances,
                perplexity=perplexity,
                d=d,
                seed=ctx.seed,
                iters=int(params.pop("iters", 1000)),
            )
        elif spec.algorithm == "classical_mds":
            emb = embed.classical_mds(distances, d=d)
        else:
            init = embed.classical_mds(distances, d=d)
            if init.d < d:
                init = embed.Embedding(
                    coords=np.hstack([init.coords, np.zeros((init.n, d - init.d))]),
                    method=init.method,
                )
            emb = embed.stress_majorization(
                distances, d, init,
                iters=int(params.pop("iters", 300)),
                tol=float(params.pop("tol", 1e-9)),
            )
    if params:
        raise ValueError(f"unused parameters for {spec.name}: {sorted(params)}")
    emb.source = spec.source
    return emb
