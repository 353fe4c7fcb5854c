"""Embedding algorithms over kernels and distance matrices.

Spectral methods (diffusion map, Laplacian eigenmaps, classical MDS, kernel
PCA) share the same eigensolver conventions: eigenpairs are sorted, and each
coordinate's sign is fixed so its largest-magnitude entry is positive, making
results independent of solver internals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph as csgraph

from .proximity import DistanceMatrix, Kernel


@dataclass
class Embedding:
    """n x d coordinates plus method/provenance metadata."""

    coords: np.ndarray
    method: str
    source: str = ""
    params: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2:
            raise ValueError("coords must be 2-D")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("embedding coordinates must be finite")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def d(self) -> int:
        return self.coords.shape[1]


@dataclass
class NeighborGraph:
    """k nearest neighbors per node plus the symmetrized (union) edge set."""

    neighbors: np.ndarray  # (n, k) indices
    neighbor_distances: np.ndarray  # (n, k)
    edges: np.ndarray  # (m, 2) canonical i < j pairs
    component_labels: np.ndarray  # (n,)
    n_components: int

    @property
    def is_connected(self) -> bool:
        return self.n_components == 1


@dataclass
class StochasticMatrix:
    """Row-stochastic transition matrix; ``steps`` counts the power applied."""

    values: np.ndarray
    steps: int = 1


def _fix_signs(coords: np.ndarray) -> np.ndarray:
    for j in range(coords.shape[1]):
        col = coords[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            coords[:, j] = -col
    return coords


def _double_center(M: np.ndarray) -> np.ndarray:
    row = M.mean(axis=1, keepdims=True)
    col = M.mean(axis=0, keepdims=True)
    return M - row - col + M.mean()


def procrustes_error(A: np.ndarray, B: np.ndarray) -> float:
    """RMS residual after aligning B to A by translation plus orthogonal map."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError("configurations must have the same shape")
    A0 = A - A.mean(axis=0)
    B0 = B - B.mean(axis=0)
    U, _, Vt = np.linalg.svd(B0.T @ A0)
    R = U @ Vt
    resid = A0 - B0 @ R
    return float(np.sqrt((resid * resid).sum() / A.shape[0]))


def knn_graph(distances: DistanceMatrix, k: int) -> NeighborGraph:
    """k nearest neighbors by distance (ties to the lower index), symmetrized
    by union; connected components are labeled."""
    D = distances.values
    n = D.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    work = D.copy()
    np.fill_diagonal(work, np.inf)
    order = np.argsort(work, axis=1, kind="stable")
    neighbors = order[:, :k]
    neighbor_distances = np.take_along_axis(work, neighbors, axis=1)
    rows = np.repeat(np.arange(n), k)
    cols = neighbors.ravel()
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    edges = np.unique(np.column_stack([lo, hi]), axis=0)
    adj = scipy.sparse.coo_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
    )
    n_components, labels = csgraph.connected_components(adj, directed=False)
    return NeighborGraph(
        neighbors=neighbors,
        neighbor_distances=neighbor_distances,
        edges=edges,
        component_labels=labels,
        n_components=int(n_components),
    )


def gaussian_affinity(
    distances: DistanceMatrix,
    sigma: float | None = None,
    adaptive_k: int | None = None,
) -> Kernel:
    """Gaussian affinities exp(-d^2 / (sigma_i sigma_j)).

    Either a fixed bandwidth ``sigma`` or an adaptive one (distance to the
    ``adaptive_k``-th neighbor per point). Unit diagonal; symmetric because
    the input is.
    """
    D = distances.values
    n = D.shape[0]
    if (sigma is None) == (adaptive_k is None):
        raise ValueError("give exactly one of sigma or adaptive_k")
    if sigma is not None:
        if sigma <= 0:
            raise ValueError("bandwidth must be positive")
        scale = np.full(n, float(sigma))
    else:
        if not 1 <= adaptive_k < n:
            raise ValueError(f"adaptive_k must be in [1, {n - 1}]")
        work = D.copy()
        np.fill_diagonal(work, np.inf)
        scale = np.sort(work, axis=1)[:, adaptive_k - 1]
        if (scale <= 0).any():
            raise ValueError("zero adaptive bandwidth: duplicate points at the requested k")
    values = np.exp(-(D * D) / np.outer(scale, scale))
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    prov = dict(distances.provenance)
    prov["affinity"] = {"sigma": sigma, "adaptive_k": adaptive_k}
    return Kernel(values=values, provenance=prov)


def diffusion_operator(kernel: Kernel) -> StochasticMatrix:
    """Row-normalize a kernel into a transition matrix."""
    K = kernel.values
    sums = K.sum(axis=1)
    bad = np.flatnonzero(sums <= 0)
    if bad.size:
        raise ValueError(f"kernel row {int(bad[0])} sums to zero; point is isolated")
    return StochasticMatrix(values=K / sums[:, None], steps=1)


def power_operator(operator: StochasticMatrix, t: int) -> StochasticMatrix:
    """Walk the chain t steps: P^t."""
    if not isinstance(t, (int, np.integer)) or t < 1:
        raise ValueError(f"t must be an integer >= 1, got {t!r}")
    return StochasticMatrix(
        values=np.linalg.matrix_power(operator.values, int(t)),
        steps=operator.steps * int(t),
    )


def _conjugate_spectrum(kernel: Kernel):
    """Eigendecomposition of D^{-1/2} K D^{-1/2}, which shares eigenvalues with
    the diffusion operator and yields its right eigenvectors via D^{-1/2}."""
    K = kernel.values
    sums = K.sum(axis=1)
    if (sums <= 0).any():
        raise ValueError("kernel has a zero row; cannot build the diffusion operator")
    inv_sqrt = 1.0 / np.sqrt(sums)
    S = K * inv_sqrt[:, None] * inv_sqrt[None, :]
    S = 0.5 * (S + S.T)
    eigenvalues, eigenvectors = np.linalg.eigh(S)
    order = np.argsort(-np.abs(eigenvalues), kind="stable")
    return eigenvalues[order], eigenvectors[:, order], inv_sqrt


def diffusion_map(kernel: Kernel, t: int = 1, d: int = 2) -> Embedding:
    """Coordinates lambda_m^t psi_m for the top d nontrivial eigenpairs of the
    diffusion operator (largest |lambda| first, the trivial unit pair skipped)."""
    n = kernel.values.shape[0]
    if not 1 <= d < n:
        raise ValueError(f"d must be in [1, {n - 1}]")
    if t < 1:
        raise ValueError("t must be >= 1")
    eigenvalues, eigenvectors, inv_sqrt = _conjugate_spectrum(kernel)
    lam = eigenvalues[1 : d + 1]
    psi = eigenvectors[:, 1 : d + 1] * inv_sqrt[:, None]
    coords = _fix_signs(psi * lam[None, :] ** t)
    return Embedding(
        coords=coords,
        method="diffusion_map",
        params={"t": t, "d": d},
        info={"eigenvalues": lam.copy(), "trivial_eigenvalue": float(eigenvalues[0])},
    )


def von_neumann_entropy_curve(kernel: Kernel, max_t: int = 64) -> np.ndarray:
    """Spectral entropy of the diffused operator for t = 1..max_t."""
    eigenvalues, _, _ = _conjugate_spectrum(kernel)
    mags = np.abs(eigenvalues)
    curve = np.empty(max_t)
    for i, t in enumerate(range(1, max_t + 1)):
        powered = mags**t
        total = powered.sum()
        if total <= 0:
            curve[i] = 0.0
            continue
        eta = powered / total
        nz = eta[eta > 0]
        curve[i] = float(-(nz * np.log(nz)).sum())
    return curve


def _entropy_knee(curve: np.ndarray) -> int:
    """t at maximum distance from the chord between the curve's endpoints."""
    t = np.arange(1, curve.size + 1, dtype=np.float64)
    p1 = np.array([t[0], curve[0]])
    p2 = np.array([t[-1], curve[-1]])
    chord = p2 - p1
    norm = np.hypot(*chord)
    if norm == 0:
        return 1
    dist = np.abs(chord[0] * (curve - p1[1]) - chord[1] * (t - p1[0])) / norm
    return int(np.argmax(dist)) + 1


def potential_embedding(
    kernel: Kernel,
    d: int = 2,
    t: int | str = "auto",
    epsilon: float = 1e-7,
    mds_iters: int = 300,
    mds_tol: float = 1e-9,
) -> Embedding:
    """Diffusion-potential embedding: power the operator (entropy-knee t when
    auto), take distances between -log transition rows, embed them with
    classical MDS refined by stress majorization."""
    operator = diffusion_operator(kernel)
    if t == "auto":
        curve = von_neumann_entropy_curve(kernel)
        t_used = _entropy_knee(curve)
    else:
        t_used = int(t)
        if t_used < 1:
            raise ValueError("t must be >= 1")
        curve = None
    powered = power_operator(operator, t_used).values
    potential = -np.log(powered + epsilon)
    sq = np.sum(potential * potential, axis=1)
    gram = potential @ potential.T
    U = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0))
    U = 0.5 * (U + U.T)
    np.fill_diagonal(U, 0.0)
    potentials = DistanceMatrix(values=U, provenance=dict(kernel.provenance))
    init = classical_mds(potentials, d)
    if init.d < d:  # degenerate potential geometry; pad to the requested width
        pad = np.zeros((init.n, d - init.d))
        init = Embedding(
            coords=np.hstack([init.coords, pad]),
            method=init.method,
            params=init.params,
            info=init.info,
        )
    emb = stress_majorization(potentials, d, init, iters=mds_iters, tol=mds_tol)
    emb.method = "potential"
    emb.params = {"t": t_used, "d": d, "epsilon": epsilon}
    if curve is not None:
        emb.info["entropy_curve"] = curve
    emb.info["t"] = t_used
    return emb


def laplacian_eigenmaps(kernel: Kernel, d: int = 2) -> Embedding:
    """Generalized eigenvectors of (L, Deg) for the d smallest nonzero
    eigenvalues; disconnected kernels are embedded per component with a warning."""
    W = kernel.values.copy()
    np.fill_diagonal(W, 0.0)
    n = W.shape[0]
    if not 1 <= d < n:
        raise ValueError(f"d must be in [1, {n - 1}]")
    adj = scipy.sparse.csr_matrix(W > 0)
    n_components, labels = csgraph.connected_components(adj, directed=False)
    if n_components > 1:
        warnings.warn(
            f"kernel graph has {n_components} components; embedding each separately"
        )
    coords = np.zeros((n, d))
    eigenvalue_sets = []
    for c in range(n_components):
        idx = np.flatnonzero(labels == c)
        if idx.size == 1:
            continue
        Wc = W[np.ix_(idx, idx)]
        deg = Wc.sum(axis=1)
        L = np.diag(deg) - Wc
        eigenvalues, eigenvectors = scipy.linalg.eigh(L, np.diag(deg))
        take = min(d, idx.size - 1)
        coords[idx, :take] = eigenvectors[:, 1 : take + 1]
        eigenvalue_sets.append(eigenvalues[1 : take + 1].copy())
    return Embedding(
        coords=_fix_signs(coords),
        method="laplacian_eigenmaps",
        params={"d": d},
        info={"n_components": int(n_components), "eigenvalues": eigenvalue_sets},
    )


def classical_mds(distances: DistanceMatrix, d: int = 2) -> Embedding:
    """Double-center -D^2/2, keep the top-d positive eigenpairs, scale
    eigenvectors by sqrt(eigenvalue). Negative spectral mass is reported."""
    D = distances.values
    n = D.shape[0]
    if not 1 <= d < n:
        raise ValueError(f"d must be in [1, {n - 1}]")
    B = _double_center(-0.5 * D * D)
    B = 0.5 * (B + B.T)
    eigenvalues, eigenvectors = np.linalg.eigh(B)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    total = np.abs(eigenvalues).sum()
    negative_mass = float(np.abs(eigenvalues[eigenvalues < 0]).sum() / total) if total > 0 else 0.0
    n_positive = int((eigenvalues > 0).sum())
    k = min(d, n_positive)
    if k < d:
        warnings.warn(f"only {k} positive eigenvalues; embedding reduced from {d} to {k} dims")
    coords = eigenvectors[:, :k] * np.sqrt(eigenvalues[:k])[None, :]
    return Embedding(
        coords=_fix_signs(coords),
        method="classical_mds",
        params={"d": d},
        info={
            "eigenvalues": eigenvalues[: max(k, d)].copy(),
            "negative_eigenvalue_mass": negative_mass,
            "effective_d": k,
        },
    )


def stress_majorization(
    distances: DistanceMatrix,
    d: int,
    init: Embedding,
    iters: int = 300,
    tol: float = 1e-9,
) -> Embedding:
    """SMACOF iterations from ``init``; raw stress is non-increasing and the
    loop stops when its relative change drops below ``tol``."""
    delta = distances.values
    n = delta.shape[0]
    X = np.asarray(init.coords, dtype=np.float64).copy()
    if X.shape != (n, d):
        raise ValueError(f"init must be ({n}, {d}), got {X.shape}")
    if not np.all(np.isfinite(delta)):
        raise ValueError("distances must be finite")
    X -= X.mean(axis=0)

    def current_distances(Y):
        sq = np.sum(Y * Y, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T), 0.0)
        out = np.sqrt(d2)
        np.fill_diagonal(out, 0.0)
        return out

    def stress(dist):
        diff = delta - dist
        return float((diff * diff).sum() / 2.0)

    dist = current_distances(X)
    stresses = [stress(dist)]
    for _ in range(iters):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 0, delta / dist, 0.0)
        B = -ratio
        np.fill_diagonal(B, 0.0)
        np.fill_diagonal(B, -B.sum(axis=1))
        X = (B @ X) / n
        X -= X.mean(axis=0)
        dist = current_distances(X)
        stresses.append(stress(dist))
        previous = stresses[-2]
        if previous - stresses[-1] <= tol * max(previous, np.finfo(float).tiny):
            break
    return Embedding(
        coords=X,
        method="metric_mds",
        params={"d": d, "iters": iters, "tol": tol},
        info={"stress": stresses, "iterations": len(stresses) - 1},
    )


def kernel_pca(kernel: Kernel, d: int = 2) -> Embedding:
    """Double-center the kernel and project on its top-d positive eigenpairs.

    Proximity kernels carry no PSD guarantee, so dropped negative mass is
    reported just as for classical MDS.
    """
    K = kernel.values
    n = K.shape[0]
    if not 1 <= d < n:
        raise ValueError(f"d must be in [1, {n - 1}]")
    Kc = _double_center(K.copy())
    Kc = 0.5 * (Kc + Kc.T)
    eigenvalues, eigenvectors = np.linalg.eigh(Kc)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    eigenvectors = eigenvectors[:, order]
    total = np.abs(eigenvalues).sum()
    negative_mass = float(np.abs(eigenvalues[eigenvalues < 0]).sum() / total) if total > 0 else 0.0
    n_positive = int((eigenvalues > 0).sum())
    k = min(d, n_positive)
    if k < d:
        warnings.warn(f"only {k} positive eigenvalues; embedding reduced from {d} to {k} dims")
    coords = eigenvectors[:, :k] * np.sqrt(eigenvalues[:k])[None, :]
    return Embedding(
        coords=_fix_signs(coords),
        method="kernel_pca",
        params={"d": d},
        info={"negative_eigenvalue_mass": negative_mass, "effective_d": k},
    )


def isomap(distances: DistanceMatrix, k: int, d: int = 2, strict: bool = False) -> Embedding:
    """Geodesic distances over the k-NN graph (Dijkstra per source) followed by
    classical MDS.

    A disconnected graph fails under ``strict``; otherwise each component pair
    is bridged by its single shortest inter-component edge, and the bridges are
    recorded.
    """
    D = distances.values
    graph = knn_graph(distances, k)
    edges = graph.edges
    weights = D[edges[:, 0], edges[:, 1]]
    bridges = []
    if graph.n_components > 1:
        if strict:
            raise ValueError(f"k-NN graph has {graph.n_components} components (strict mode)")
        labels = graph.component_labels
        extra = []
        for a in range(graph.n_components):
            ia = np.flatnonzero(labels == a)
            for b in range(a + 1, graph.n_components):
                ib = np.flatnonzero(labels == b)
                sub = D[np.ix_(ia, ib)]
                flat = int(np.argmin(sub))
                r, c = divmod(flat, ib.size)
                extra.append((int(ia[r]), int(ib[c]), float(sub[r, c])))
        warnings.warn(f"bridging {len(extra)} disconnected component pairs in the k-NN graph")
        bridges = extra
        edges = np.vstack([edges, [[i, j] for i, j, _ in extra]])
        weights = np.concatenate([weights, [w for _, _, w in extra]])
    n = D.shape[0]
    adjacency = scipy.sparse.coo_matrix((weights, (edges[:, 0], edges[:, 1])), shape=(n, n))
    geodesic = csgraph.shortest_path(adjacency, method="D", directed=False)
    emb = classical_mds(DistanceMatrix(values=geodesic, provenance=dict(distances.provenance)), d)
    emb.method = "isomap"
    emb.params = {"k": k, "d": d}
    emb.info["bridged_edges"] = bridges
    emb.info["geodesic_matrix"] = geodesic
    return emb


def tsne_input_probabilities(
    distances: DistanceMatrix,
    perplexity: float,
    tol: float = 1e-5,
    max_bisect: int = 64,
):
    """Per-row Gaussian conditionals whose entropy matches log(perplexity).

    Bandwidths are found by bisection; rows whose distances are all equal have
    no usable bandwidth and fall back to uniform with a warning. Returns the
    symmetrized joint matrix and the per-row conditional matrix.
    """
    D = distances.values
    n = D.shape[0]
    if not 1.0 < perplexity < (n - 1) / 3.0:
        raise ValueError(f"perplexity must be in (1, {(n - 1) / 3.0:.3g}), got {perplexity}")
    target = math.log(perplexity)
    conditionals = np.zeros((n, n))
    degenerate_rows = []
    for i in range(n):
        row = np.delete(D[i], i) ** 2
        spread = row.max() - row.min()
        if spread <= 0:
            degenerate_rows.append(i)
            p = np.full(n - 1, 1.0 / (n - 1))
        else:
            shifted = row - row.min()

            def entropy_and_p(beta):
                w = np.exp(-beta * shifted)
                s = w.sum()
                p = w / s
                h = math.log(s) + beta * float(shifted @ w) / s
                return h, p

            lo, hi = 0.0, 1.0
            h, p = entropy_and_p(hi)
            while h > target and hi < 1e300:  # entropy decreases in beta
                lo, hi = hi, hi * 2.0
                h, p = entropy_and_p(hi)
            for _ in range(max_bisect):
                mid = 0.5 * (lo + hi)
                h, p = entropy_and_p(mid)
                if abs(h - target) <= tol:
                    break
                if h > target:
                    lo = mid
                else:
                    hi = mid
        conditionals[i, np.arange(n) != i] = p
    if degenerate_rows:
        warnings.warn(
            f"{len(degenerate_rows)} rows have all-equal distances; using uniform affinities"
        )
    joint = (conditionals + conditionals.T) / (2.0 * n)
    return joint, conditionals


def _tsne_kl_and_grad(P: np.ndarray, Y: np.ndarray):
    """KL(P || Q) under Student-t low-dimensional affinities, with its gradient."""
    sq = np.sum(Y * Y, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T), 0.0)
    W = 1.0 / (1.0 + d2)
    np.fill_diagonal(W, 0.0)
    Z = W.sum()
    Q = W / Z
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))))
    M = (P - Q) * W
    grad = 4.0 * ((np.diag(M.sum(axis=1)) - M) @ Y)
    return kl, grad


def tsne(
    distances: DistanceMatrix,
    perplexity: float = 30.0,
    d: int = 2,
    seed: int = 0,
    iters: int = 1000,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
    learning_rate: float | None = None,
) -> Embedding:
    """Gradient-descent t-SNE on a precomputed distance matrix.

    Momentum 0.5 during the early-exaggeration window and 0.8 after;
    learning rate defaults to n / early_exaggeration. Deterministic for a
    fixed seed.
    """
    n = distances.values.shape[0]
    P, _ = tsne_input_probabilities(distances, perplexity)
    if learning_rate is None:
        learning_rate = n / early_exaggeration
    rng = np.random.default_rng(seed)
    Y = 1e-4 * rng.standard_normal((n, d))
    velocity = np.zeros_like(Y)
    kl_history = []
    exaggeration_iters = min(exaggeration_iters, iters)
    for it in range(iters):
        exaggerating = it < exaggeration_iters
        if exaggerating:
            _, grad = _tsne_kl_and_grad(P * early_exaggeration, Y)
            kl = _tsne_kl_and_grad(P, Y)[0]
        else:
            kl, grad = _tsne_kl_and_grad(P, Y)
        kl_history.append(kl)
        momentum = 0.5 if exaggerating else 0.8
        velocity = momentum * velocity - learning_rate * grad
        Y = Y + velocity
        Y -= Y.mean(axis=0)
    kl_final = _tsne_kl_and_grad(P, Y)[0]
    kl_history.append(kl_final)
    return Embedding(
        coords=Y,
        method="tsne",
        params={
            "perplexity": perplexity,
            "d": d,
            "seed": seed,
            "iters": iters,
            "early_exaggeration": early_exaggeration,
            "learning_rate": learning_rate,
        },
        info={
            "kl_history": kl_history,
            "kl_post_exaggeration": kl_history[exaggeration_iters] if iters else None,
            "kl_final": kl_final,
        },
    )
