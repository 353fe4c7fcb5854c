"""Supervised manifold learning from random-forest proximity kernels.

Train forests, derive proximities whose weighted votes reproduce the forest's
out-of-bag predictions, kernelize them, and feed them into a suite of
embedding algorithms with evaluation against unsupervised and
class-conditional baselines.
"""

__version__ = "0.1.0"

from .baselines import ClassConditionalParams, class_conditional_distance, default_beta, euclidean_distances
from .data import (
    Dataset,
    NormalizationRecord,
    load_csv,
    synthesize_blobs,
    synthesize_regression_gradient,
    write_csv,
    zscore_normalize,
)
from .embed import (
    Embedding,
    NeighborGraph,
    StochasticMatrix,
    classical_mds,
    diffusion_map,
    diffusion_operator,
    gaussian_affinity,
    isomap,
    kernel_pca,
    knn_graph,
    laplacian_eigenmaps,
    potential_embedding,
    power_operator,
    procrustes_error,
    stress_majorization,
    tsne,
)
from .evaluate import (
    EvalConfig,
    EvalReport,
    ImportanceScores,
    accuracy_delta,
    embedding_permutation_importance,
    importance_correlation,
    knn_loocv_accuracy,
    knn_permutation_importance,
    oob_delta,
    run_comparison,
)
from .forest import Forest, ForestConfig, OobReport, fit_forest, leaf_assignments, load_forest, oob_predict, save_forest
from .methods import MethodSpec, PipelineContext, build_embedding
from .proximity import (
    DistanceMatrix,
    Kernel,
    KernelPredictions,
    ProximityMatrix,
    kernel_prediction,
    kernel_to_distance,
    kernelize,
    proximity_oob,
    proximity_original,
    proximity_rfgap,
    to_kernel,
    validate_kernel,
)
