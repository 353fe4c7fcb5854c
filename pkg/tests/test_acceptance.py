"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines interleaved; without ``-s`` they appear in the captured-output section
of any failure.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

import rfmanifold as rf
from rfmanifold.cli import main as cli_main
from rfmanifold.embed import _tsne_kl_and_grad, tsne_input_probabilities
from rfmanifold.evaluate import EvalConfig
from rfmanifold.methods import MethodSpec, PipelineContext
from rfmanifold.proximity import DistanceMatrix, validate_kernel

DATASET_DIR = Path(__file__).resolve().parent.parent / "datasets"
SEEDS = (0, 1, 2, 3, 4)


def report(number: int, name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {number:02d} {name}: {status}{suffix}")
    assert passed, f"criterion {number} failed: {name} {suffix}"


def load_iris():
    return rf.load_csv(DATASET_DIR / "iris.csv", "species", "classification")


def load_wine():
    return rf.load_csv(DATASET_DIR / "wine.csv", "cultivar", "classification")


@pytest.fixture(scope="module")
def blobs_fixture():
    # n=300: two informative dimensions plus four pure-noise dimensions.
    return rf.synthesize_blobs(150, 2, 4, 3.0, seed=0)


@pytest.fixture(scope="module")
def ordering_report(blobs_fixture):
    methods = [
        MethodSpec("euclidean", "isomap"),
        MethodSpec("euclidean", "diffusion_map"),
        MethodSpec("class_conditional", "isomap"),
        MethodSpec("class_conditional", "diffusion_map"),
        MethodSpec("rfgap", "diffusion_map"),
        MethodSpec("rfgap", "isomap"),
    ]
    config = EvalConfig(
        knn_k=5,
        importance_repeats=5,
        alpha=0.0,
        graph_k=10,
        forest=rf.ForestConfig(n_trees=150),
    )
    start = time.monotonic()
    out = rf.run_comparison({"blobs": blobs_fixture}, methods, SEEDS, config)
    out.elapsed = time.monotonic() - start
    return out


def test_criterion_01_reconstruction_identity():
    elapsed = {}
    datasets = {
        "blobs": rf.synthesize_blobs(100, 2, 2, 4.0, seed=3),
        "gradient": rf.synthesize_regression_gradient(200, 5, seed=3),
        "iris": load_iris(),
    }
    worst = {"argmax": True, "votes": 0.0, "relative": 0.0}
    for name, dataset in datasets.items():
        start = time.monotonic()
        normalized, _ = rf.zscore_normalize(dataset)
        for seed in SEEDS:
            cfg = rf.ForestConfig(n_trees=100, seed=seed, task=dataset.label_kind)
            forest = rf.fit_forest(normalized, cfg)
            oob = rf.oob_predict(forest, normalized)
            predicted = rf.kernel_prediction(rf.proximity_rfgap(forest), normalized)
            covered = predicted.covered & oob.covered
            if dataset.label_kind == "classification":
                worst["argmax"] &= bool(
                    np.array_equal(predicted.predictions[covered], oob.predictions[covered])
                )
                worst["votes"] = max(
                    worst["votes"],
                    float(np.abs(predicted.votes[covered] - oob.votes[covered]).max()),
                )
            else:
                ref = oob.predictions[covered]
                rel = np.abs(predicted.predictions[covered] - ref) / np.maximum(np.abs(ref), 1.0)
                worst["relative"] = max(worst["relative"], float(rel.max()))
        elapsed[name] = time.monotonic() - start
    passed = (
        worst["argmax"]
        and worst["relative"] <= 1e-12
        and max(elapsed.values()) <= 60.0
    )
    report(
        1,
        "out-of-bag reconstruction identity",
        passed,
        f"argmax 100%={worst['argmax']}, max vote gap={worst['votes']:.2e}, "
        f"max rel err={worst['relative']:.2e}, slowest dataset {max(elapsed.values()):.1f}s",
    )


def test_criterion_02_kernel_contract(ordering_report, blobs_fixture):
    records = [c for c in ordering_report.checks if c.name.startswith("kernel contract")]
    direct_ok = True
    normalized, _ = rf.zscore_normalize(blobs_fixture)
    for source in ("euclidean", "class_conditional", "rfgap", "original", "oob"):
        ctx = PipelineContext(normalized, 0, forest_config=rf.ForestConfig(n_trees=60), alpha=0.0)
        try:
            validate_kernel(ctx.kernel(source))
        except AssertionError:
            direct_ok = False
    passed = bool(records) and all(c.passed for c in records) and direct_ok
    report(
        2,
        "kernel contract on every pipeline kernel",
        passed,
        f"{len(records)} pipeline kernels + 5 direct sources checked",
    )


def test_criterion_03_diffusion_contract(blobs_fixture):
    normalized, _ = rf.zscore_normalize(blobs_fixture)
    worst_construction = 0.0
    worst_powered = 0.0
    for source in ("rfgap", "euclidean"):
        ctx = PipelineContext(normalized, 1, forest_config=rf.ForestConfig(n_trees=80))
        operator = rf.diffusion_operator(ctx.kernel(source))
        worst_construction = max(
            worst_construction, float(np.abs(operator.values.sum(axis=1) - 1.0).max())
        )
        for t in (2, 8, 64):
            powered = rf.power_operator(operator, t)
            worst_powered = max(
                worst_powered, float(np.abs(powered.values.sum(axis=1) - 1.0).max())
            )
    passed = worst_construction <= 1e-12 and worst_powered <= 1e-10
    report(
        3,
        "diffusion operator row-stochasticity",
        passed,
        f"construction gap={worst_construction:.2e}, powered gap={worst_powered:.2e}",
    )


def test_criterion_04_oob_alignment_iris_wine():
    start = time.monotonic()
    deltas = {}
    for name, dataset in (("iris", load_iris()), ("wine", load_wine())):
        normalized, _ = rf.zscore_normalize(dataset)
        per_seed = []
        for seed in SEEDS:
            forest = rf.fit_forest(normalized, rf.ForestConfig(n_trees=500, seed=seed))
            oob = rf.oob_predict(forest, normalized)
            kernel = rf.to_kernel(rf.proximity_rfgap(forest))
            embedding = rf.diffusion_map(kernel, t=1, d=2)
            per_seed.append(rf.oob_delta(embedding, oob, normalized, k=5))
        deltas[name] = float(np.mean(per_seed))
    elapsed = time.monotonic() - start
    passed = all(abs(v) <= 0.05 for v in deltas.values()) and elapsed <= 300.0
    report(
        4,
        "rfgap diffusion-map accuracy tracks OOB score",
        passed,
        f"mean deltas iris={deltas['iris']:+.4f}, wine={deltas['wine']:+.4f}, {elapsed:.0f}s",
    )


def _family_mean(report_obj, pairs, metric):
    values = [
        report_obj.aggregate("blobs", source, algorithm, metric)["mean"]
        for source, algorithm in pairs
    ]
    return float(np.mean(values))


def test_criterion_05_accuracy_delta_ordering(ordering_report):
    unsupervised = _family_mean(
        ordering_report,
        [("euclidean", "isomap"), ("euclidean", "diffusion_map")],
        "accuracy_delta",
    )
    class_conditional = _family_mean(
        ordering_report,
        [("class_conditional", "isomap"), ("class_conditional", "diffusion_map")],
        "accuracy_delta",
    )
    rfgap_based = _family_mean(
        ordering_report,
        [("rfgap", "diffusion_map"), ("rfgap", "isomap")],
        "accuracy_delta",
    )
    cc_absolute = _family_mean(
        ordering_report,
        [("class_conditional", "isomap"), ("class_conditional", "diffusion_map")],
        "embedding_accuracy",
    )
    ordering_ok = (
        unsupervised <= 0.0 + 0.02
        and class_conditional >= rfgap_based - 0.02
        and unsupervised <= rfgap_based + 0.02
        and cc_absolute >= 0.98
    )
    passed = ordering_ok and ordering_report.elapsed <= 300.0
    report(
        5,
        "supervision inflates embedding accuracy in order",
        passed,
        f"unsup={unsupervised:+.4f} <= rfgap={rfgap_based:+.4f} <= cc={class_conditional:+.4f}, "
        f"cc absolute={cc_absolute:.4f}, {ordering_report.elapsed:.0f}s",
    )


def test_criterion_06_importance_correlation_ordering(ordering_report, blobs_fixture):
    rfgap_corr = ordering_report.aggregate("blobs", "rfgap", "diffusion_map", "importance_pearson")
    unsup_corr = ordering_report.aggregate(
        "blobs", "euclidean", "diffusion_map", "importance_pearson"
    )
    gap = rfgap_corr["mean"] - unsup_corr["mean"]
    noise = set(rf.zscore_normalize(blobs_fixture)[0].info["noise_features"])
    hits = 0
    for cell in ordering_report.cells:
        if (cell.source, cell.algorithm) != ("rfgap", "diffusion_map") or cell.status != "ok":
            continue
        scores = cell.metrics["importance_scores"]
        lowest4 = set(np.argsort(scores)[:4].tolist())
        hits += int(lowest4 == noise)
    passed = gap >= 0.1 and hits >= 4
    report(
        6,
        "rfgap embeddings preserve the importance hierarchy",
        passed,
        f"pearson gap={gap:+.3f} (rfgap {rfgap_corr['mean']:.3f} vs unsupervised "
        f"{unsup_corr['mean']:.3f}), noise-lowest-4 in {hits}/5 seeds",
    )


def test_criterion_07_class_conditional_units():
    params0 = rf.ClassConditionalParams(alpha=0.4, beta=2.0)
    zero = DistanceMatrix(np.zeros((2, 2)))
    same0 = rf.class_conditional_distance(zero, np.array([0, 0]), params0).values[0, 1]
    diff0 = rf.class_conditional_distance(zero, np.array([0, 1]), params0).values[0, 1]
    beta = 1.7
    at_beta = DistanceMatrix(np.array([[0.0, math.sqrt(beta)], [math.sqrt(beta), 0.0]]))
    same_beta = rf.class_conditional_distance(
        at_beta, np.array([0, 0]), rf.ClassConditionalParams(alpha=0.4, beta=beta)
    ).values[0, 1]
    grid = np.linspace(0.05, 4.0, 60)
    monotone = True
    for labels in (np.array([0, 0, 0]), np.array([0, 1, 1])):
        previous = -np.inf
        for i in range(len(grid) - 1):
            D = DistanceMatrix(
                np.array(
                    [[0.0, grid[i], grid[i + 1]], [grid[i], 0.0, 0.0], [grid[i + 1], 0.0, 0.0]]
                )
            )
            values = rf.class_conditional_distance(
                D, labels, rf.ClassConditionalParams(alpha=0.4, beta=1.3)
            ).values
            monotone &= values[0, 1] < values[0, 2]
    checks = {
        "same-class at zero": same0 == 0.0,
        "cross-class at zero": abs(diff0 - (1.0 - 0.4)) <= 1e-15,
        "same-class at beta": abs(same_beta - math.sqrt(1.0 - math.exp(-1.0))) <= 1e-12,
        "within-branch monotone": monotone,
    }
    report(
        7,
        "class-conditional dissimilarity unit suite",
        all(checks.values()),
        ", ".join(f"{k}={'ok' if v else 'BAD'}" for k, v in checks.items()),
    )


def test_criterion_08_embedding_oracles():
    rng = np.random.default_rng(42)
    details = []

    X = rng.standard_normal((35, 2))
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(2))
    mds_err = rf.procrustes_error(X, rf.classical_mds(DistanceMatrix(D), 2).coords)
    details.append(f"mds procrustes={mds_err:.1e}")
    ok = mds_err <= 1e-8

    monotone = True
    for _ in range(100):
        pts = rng.standard_normal((10, 3))
        delta = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(2))
        init = rf.Embedding(coords=rng.standard_normal((10, 2)), method="init")
        out = rf.stress_majorization(DistanceMatrix(delta), 2, init, iters=40, tol=0.0)
        s = np.array(out.info["stress"])
        monotone &= bool((s[1:] <= s[:-1] * (1 + 1e-12) + 1e-15).all())
    details.append(f"stress monotone on 100 instances={monotone}")
    ok &= monotone

    Xs = rng.standard_normal((6, 3))
    Ds = np.sqrt(((Xs[:, None, :] - Xs[None, :, :]) ** 2).sum(2))
    P, _ = tsne_input_probabilities(DistanceMatrix(Ds), 1.4)
    Y = rng.standard_normal((6, 2))
    _, grad = _tsne_kl_and_grad(P, Y)
    numeric = np.zeros_like(Y)
    h = 1e-6
    for i in range(6):
        for j in range(2):
            up, down = Y.copy(), Y.copy()
            up[i, j] += h
            down[i, j] -= h
            numeric[i, j] = (
                _tsne_kl_and_grad(P, up)[0] - _tsne_kl_and_grad(P, down)[0]
            ) / (2 * h)
    tsne_rel = float(np.abs(grad - numeric).max() / np.abs(numeric).max())
    details.append(f"tsne grad rel={tsne_rel:.1e}")
    ok &= tsne_rel <= 1e-5

    path = np.eye(4)
    for i in range(3):
        path[i, i + 1] = path[i + 1, i] = 1.0
    second = rf.laplacian_eigenmaps(rf.Kernel(values=path), d=1).coords[:, 0]
    le_monotone = bool((np.diff(second) > 0).all() or (np.diff(second) < 0).all())
    W = path.copy()
    np.fill_diagonal(W, 0.0)
    deg = W.sum(1)
    eigenvalues, eigenvectors = np.linalg.eig(np.diag(1.0 / deg) @ (np.diag(deg) - W))
    oracle = eigenvectors[:, np.argsort(eigenvalues.real)[1]].real
    cos = abs(oracle @ second) / (np.linalg.norm(oracle) * np.linalg.norm(second))
    details.append(f"laplacian path monotone={le_monotone}, oracle cos={cos:.6f}")
    ok &= le_monotone and abs(cos - 1.0) <= 1e-8

    theta = np.sort(rng.uniform(0, 2 * np.pi, 150))
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    circle += 0.02 * rng.standard_normal(circle.shape)
    Dc = np.sqrt(((circle[:, None, :] - circle[None, :, :]) ** 2).sum(2))
    iso = rf.isomap(DistanceMatrix(Dc), k=8, d=2)
    j = int(np.argmax(Dc[0]))
    ratio = iso.info["geodesic_matrix"][0, j] / Dc[0, j]
    in_band = 0.8 * math.pi / 2 <= ratio <= 1.2 * math.pi / 2
    details.append(f"isomap circle ratio={ratio:.3f}")
    ok &= in_band

    report(8, "embedding oracle suite", bool(ok), ", ".join(details))


def test_criterion_09_byte_determinism(tmp_path):
    import hashlib
    import json

    config = {
        "version": 1,
        "dataset": {
            "synthetic": "blobs",
            "name": "blobs",
            "n_per_class": 40,
            "p": 2,
            "n_noise": 2,
            "separation": 4.0,
            "seed": 0,
        },
        "forest": {"n_trees": 60},
        "methods": [
            {"source": "rfgap", "algorithm": "diffusion_map"},
            {"source": "euclidean", "algorithm": "isomap"},
        ],
        "seeds": [0, 1],
        "graph_k": 6,
        "importance_repeats": 2,
        "out": str(tmp_path / "out"),
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))

    def digest():
        out = {}
        for path in sorted((tmp_path / "out").rglob("*")):
            if path.is_file():
                out[str(path.relative_to(tmp_path / "out"))] = hashlib.sha256(
                    path.read_bytes()
                ).hexdigest()
        return out

    assert cli_main(["evaluate", "--config", str(config_path)]) == 0
    first = digest()
    assert cli_main(["evaluate", "--config", str(config_path)]) == 0
    second = digest()
    assert cli_main(["evaluate", "--config", str(config_path), "--jobs", "4"]) == 0
    third = digest()
    assert cli_main(["embed", "--config", str(config_path)]) == 0
    fourth = digest()
    assert cli_main(["embed", "--config", str(config_path), "--jobs", "3"]) == 0
    fifth = digest()
    passed = first == second == third and fourth == fifth
    report(
        9,
        "byte-identical reruns at any worker count",
        passed,
        f"{len(first)} evaluate files, {len(fourth)} total after embed",
    )


def test_criterion_10_continuous_label_progression():
    rhos = []
    dataset = rf.synthesize_regression_gradient(200, 5, seed=1)
    normalized, _ = rf.zscore_normalize(dataset)
    for seed in SEEDS:
        forest = rf.fit_forest(
            normalized, rf.ForestConfig(n_trees=200, seed=seed, task="regression")
        )
        kernel = rf.to_kernel(rf.proximity_rfgap(forest))
        embedding = rf.potential_embedding(kernel, d=2)
        rho = scipy.stats.spearmanr(embedding.coords[:, 0], normalized.labels).statistic
        rhos.append(abs(float(rho)))
    mean_rho = float(np.mean(rhos))
    report(
        10,
        "potential embedding follows a continuous label",
        mean_rho > 0.8,
        f"mean |spearman|={mean_rho:.3f} over {len(SEEDS)} seeds",
    )
