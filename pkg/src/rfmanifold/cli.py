"""Config-driven pipeline runner.

Subcommands: ``embed`` (one embedding CSV + descriptor + figure per method and
seed), ``evaluate`` (comparison report, summary, figures), ``proximity``
(matrix exports plus the out-of-bag reconstruction check), and ``datasets``
(registry listing). All outputs are deterministic: rerunning an unchanged
config yields byte-identical files at any worker count.

Config files are strict JSON (schema version 1); unknown keys are rejected and
malformed fields are errors, never silently defaulted. CSV paths inside a
config resolve relative to the config file; ``out`` resolves relative to the
working directory.

Matrix export format: sparse CSV triplets with header ``row,col,value``
(nonzero entries only) or, with ``dense: true`` in the proximity section, a
headerless n x n dense CSV.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import matplotlib
import numpy as np
import scipy

from . import __version__, evaluate, plotting
from .data import (
    CLASSIFICATION,
    REGRESSION,
    Dataset,
    load_csv,
    synthesize_blobs,
    synthesize_regression_gradient,
    zscore_normalize,
)
from .forest import Forest, ForestConfig, fit_forest, load_forest, save_forest
from .methods import (
    ALGORITHMS,
    FOREST_SOURCES,
    SOURCES,
    MethodSpec,
    PipelineContext,
    build_embedding,
)
from .proximity import PROXIMITY_KINDS, RFGAP

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A malformed pipeline configuration; the message names the field."""


def _fail(where: str, message: str):
    raise ConfigError(f"config field {where!r}: {message}")


def _expect_mapping(obj, where: str, required: tuple, optional: tuple) -> dict:
    if not isinstance(obj, dict):
        _fail(where, f"expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        _fail(where, f"unknown keys {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        _fail(where, f"missing required keys {missing}")
    return obj


def _expect(obj, types, where: str):
    if not isinstance(obj, types) or isinstance(obj, bool) and bool not in _astuple(types):
        names = "/".join(t.__name__ for t in _astuple(types))
        _fail(where, f"expected {names}, got {type(obj).__name__}")
    return obj


def _astuple(types):
    return types if isinstance(types, tuple) else (types,)


_DATASET_KEYS_CSV = ("csv", "label_column", "label_kind")
_DATASET_KEYS_BLOBS = ("synthetic", "n_per_class", "p", "n_noise", "separation", "seed")
_DATASET_KEYS_GRADIENT = ("synthetic", "n", "p", "seed")


def _parse_dataset(obj, where: str, config_dir: Path) -> tuple[str, Dataset]:
    if not isinstance(obj, dict):
        _fail(where, "expected an object")
    if "csv" in obj:
        _expect_mapping(obj, where, _DATASET_KEYS_CSV, ("drop_columns", "name"))
        path = Path(_expect(obj["csv"], str, where + ".csv"))
        if not path.is_absolute():
            path = config_dir / path
        kind = _expect(obj["label_kind"], str, where + ".label_kind")
        if kind not in (CLASSIFICATION, REGRESSION):
            _fail(where + ".label_kind", f"expected classification or regression, got {kind!r}")
        label_column = obj["label_column"]
        if not isinstance(label_column, (str, int)) or isinstance(label_column, bool):
            _fail(where + ".label_column", "expected a column name or index")
        drop = obj.get("drop_columns", [])
        if not isinstance(drop, list):
            _fail(where + ".drop_columns", "expected a list")
        dataset = load_csv(path, label_column, kind, drop_columns=tuple(drop))
        name = obj.get("name", path.stem)
        return _expect(name, str, where + ".name"), dataset
    if "synthetic" in obj:
        recipe = _expect(obj["synthetic"], str, where + ".synthetic")
        if recipe == "blobs":
            _expect_mapping(obj, where, _DATASET_KEYS_BLOBS, ("name",))
            dataset = synthesize_blobs(
                n_per_class=_expect(obj["n_per_class"], int, where + ".n_per_class"),
                p=_expect(obj["p"], int, where + ".p"),
                n_noise_features=_expect(obj["n_noise"], int, where + ".n_noise"),
                class_separation=float(_expect(obj["separation"], (int, float), where + ".separation")),
                seed=_expect(obj["seed"], int, where + ".seed"),
            )
            return _expect(obj.get("name", "blobs"), str, where + ".name"), dataset
        if recipe == "regression_gradient":
            _expect_mapping(obj, where, _DATASET_KEYS_GRADIENT, ("name",))
            dataset = synthesize_regression_gradient(
                n=_expect(obj["n"], int, where + ".n"),
                p=_expect(obj["p"], int, where + ".p"),
                seed=_expect(obj["seed"], int, where + ".seed"),
            )
            return _expect(obj.get("name", "regression_gradient"), str, where + ".name"), dataset
        _fail(where + ".synthetic", f"unknown recipe {recipe!r}; registered: blobs, regression_gradient")
    _fail(where, "need either a 'csv' or a 'synthetic' dataset spec")


_FOREST_KEYS = ("n_trees", "mtry", "min_leaf", "max_depth")


def _parse_forest(obj, where: str) -> ForestConfig:
    _expect_mapping(obj, where, (), _FOREST_KEYS)
    cfg = ForestConfig()
    if "n_trees" in obj:
        cfg = replace(cfg, n_trees=_expect(obj["n_trees"], int, where + ".n_trees"))
    for key in ("mtry", "min_leaf", "max_depth"):
        if key in obj and obj[key] is not None:
            cfg = replace(cfg, **{key: _expect(obj[key], int, f"{where}.{key}")})
    return cfg


_TOP_KEYS_REQUIRED = ("version", "dataset", "seeds")
_TOP_KEYS_OPTIONAL = (
    "forest",
    "proximity",
    "methods",
    "knn_k",
    "alpha",
    "beta",
    "graph_k",
    "embed_dim",
    "importance_repeats",
    "out",
    "dense",
)


class PipelineConfig:
    """Validated configuration plus the loaded dataset."""

    def __init__(self, raw: dict, config_dir: Path):
        _expect_mapping(raw, "<root>", _TOP_KEYS_REQUIRED, _TOP_KEYS_OPTIONAL)
        if raw["version"] != SCHEMA_VERSION:
            _fail("version", f"expected {SCHEMA_VERSION}, got {raw['version']!r}")
        self.raw = raw
        self.dataset_name, self.dataset = _parse_dataset(raw["dataset"], "dataset", config_dir)
        seeds = _expect(raw["seeds"], list, "seeds")
        if not seeds:
            _fail("seeds", "must not be empty")
        for i, s in enumerate(seeds):
            if not isinstance(s, int) or isinstance(s, bool) or s < 0:
                _fail(f"seeds[{i}]", "seeds must be non-negative integers")
        self.seeds = tuple(seeds)
        self.forest = _parse_forest(raw.get("forest", {}), "forest")
        self.proximity_kind = raw.get("proximity", RFGAP)
        if self.proximity_kind not in PROXIMITY_KINDS:
            _fail("proximity", f"expected one of {PROXIMITY_KINDS}, got {self.proximity_kind!r}")
        self.methods = []
        for i, m in enumerate(raw.get("methods", [])):
            where = f"methods[{i}]"
            _expect_mapping(m, where, ("source", "algorithm"), ("params",))
            params = m.get("params", {})
            if not isinstance(params, dict):
                _fail(where + ".params", "expected an object")
            try:
                self.methods.append(
                    MethodSpec(source=m["source"], algorithm=m["algorithm"], params=params)
                )
            except ValueError as exc:
                _fail(where, str(exc))
        self.knn_k = _expect(raw.get("knn_k", 5), int, "knn_k")
        self.alpha = float(_expect(raw.get("alpha", 1.0), (int, float), "alpha"))
        beta = raw.get("beta", None)
        if beta is not None and beta != "auto":
            beta = float(_expect(beta, (int, float), "beta"))
        else:
            beta = None
        self.beta = beta
        self.graph_k = _expect(raw.get("graph_k", 10), int, "graph_k")
        self.embed_dim = _expect(raw.get("embed_dim", 2), int, "embed_dim")
        self.importance_repeats = _expect(raw.get("importance_repeats", 5), int, "importance_repeats")
        self.out = raw.get("out")
        if self.out is not None:
            self.out = _expect(self.out, str, "out")
        self.dense = bool(raw.get("dense", False))

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))


def load_config(path, overrides: argparse.Namespace) -> PipelineConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if overrides.seeds is not None:
        raw["seeds"] = [int(s) for s in overrides.seeds.split(",") if s != ""]
    if overrides.trees is not None:
        raw.setdefault("forest", {})["n_trees"] = overrides.trees
    if overrides.k is not None:
        raw["knn_k"] = overrides.k
    if overrides.alpha is not None:
        raw["alpha"] = overrides.alpha
    if overrides.beta is not None:
        if overrides.beta == "auto":
            raw["beta"] = "auto"
        else:
            try:
                raw["beta"] = float(overrides.beta)
            except ValueError:
                raise ConfigError(f"--beta must be a number or 'auto', got {overrides.beta!r}") from None
    if overrides.out is not None:
        raw["out"] = overrides.out
    return PipelineConfig(raw, path.parent)


def _out_dir(config: PipelineConfig) -> Path:
    if not config.out:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    out = Path(config.out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _forest_cache_key(dataset: Dataset, cfg: ForestConfig) -> str:
    hasher = hashlib.sha256()
    hasher.update(dataset.features.tobytes())
    hasher.update(np.ascontiguousarray(dataset.labels).tobytes())
    hasher.update(
        json.dumps(
            {
                "n_trees": cfg.n_trees,
                "mtry": cfg.mtry,
                "min_leaf": cfg.min_leaf,
                "max_depth": cfg.max_depth,
                "seed": cfg.seed,
                "task": cfg.task,
            },
            sort_keys=True,
        ).encode()
    )
    return hasher.hexdigest()


def _cached_forest(dataset: Dataset, cfg: ForestConfig, cache_dir: Path) -> Forest:
    cfg = replace(cfg, task=dataset.label_kind).resolved(dataset.p)
    key = _forest_cache_key(dataset, cfg)
    path = cache_dir / f"forest-{key}.rff"
    if path.exists():
        print(f"forest cache hit: {path.name}", file=sys.stderr)
        return load_forest(path)
    forest = fit_forest(dataset, cfg)
    cache_dir.mkdir(parents=True, exist_ok=True)
    save_forest(forest, path)
    return forest


def _context(config: PipelineConfig, dataset: Dataset, seed: int, cache_dir: Path | None):
    forest = None
    if cache_dir is not None and any(m.source in FOREST_SOURCES for m in config.methods):
        forest = _cached_forest(dataset, replace(config.forest, seed=seed), cache_dir)
    return PipelineContext(
        dataset,
        seed,
        forest_config=config.forest,
        alpha=config.alpha,
        beta=config.beta,
        graph_k=config.graph_k,
        forest=forest,
    )


def _float_repr(x: float) -> str:
    return repr(float(x))


def write_embedding_csv(path, embedding, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = ["id"] + [f"coord_{j + 1}" for j in range(embedding.d)] + ["label"]
        fh.write(",".join(header) + "\n")
        for i, (row, label) in enumerate(zip(embedding.coords, dataset.label_strings())):
            fh.write(",".join([str(i)] + [_float_repr(v) for v in row] + [label]) + "\n")


def write_matrix_csv(path, values: np.ndarray, dense: bool) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if dense:
            for row in values:
                fh.write(",".join(_float_repr(v) for v in row) + "\n")
        else:
            fh.write("row,col,value\n")
            rows, cols = np.nonzero(values)
            for r, c in zip(rows, cols):
                fh.write(f"{r},{c},{_float_repr(values[r, c])}\n")


def _descriptor(embedding, dataset: Dataset, seed: int, title: str) -> dict:
    legend: dict = {}
    if dataset.label_kind == CLASSIFICATION:
        names = dataset.label_names or tuple(str(c) for c in range(dataset.n_classes))
        legend = {str(c): names[c] for c in range(dataset.n_classes)}
    return {
        "title": title,
        "x_axis": "coord_1",
        "y_axis": "coord_2" if embedding.d > 1 else "(flat)",
        "color": "label",
        "legend": legend,
        "method": embedding.method,
        "source": embedding.source,
        "seed": seed,
        "params": {k: v for k, v in embedding.params.items() if isinstance(v, (int, float, str))},
    }


class Manifest:
    def __init__(self, command: str, config: PipelineConfig, out: Path):
        self.command = command
        self.config = config
        self.out = out
        self.files: list[str] = []
        self.checks: list[tuple[str, bool, str]] = []

    def add_file(self, path: Path):
        self.files.append(path.name)

    def add_checks(self, records, seed=None):
        prefix = f"[seed {seed}] " if seed is not None else ""
        for rec in records:
            self.checks.append((prefix + rec.name, rec.passed, rec.detail))

    def add_check(self, name: str, passed: bool, detail: str = ""):
        self.checks.append((name, passed, detail))

    @property
    def all_passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def write(self) -> Path:
        lines = [
            "rfmanifold manifest v1",
            f"tool: rfmanifold {__version__}",
            f"libs: numpy {np.__version__}, scipy {scipy.__version__}, matplotlib {matplotlib.__version__}",
            f"command: {self.command}",
            f"config: {self.config.canonical_json()}",
            "outputs:",
        ]
        for name in self.files:
            digest = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
            lines.append(f"  {name} sha256={digest}")
        lines.append("checks:")
        if not self.checks:
            lines.append("  (none)")
        for name, ok, detail in self.checks:
            suffix = f" ({detail})" if detail else ""
            lines.append(f"  {name}: {'PASS' if ok else 'FAIL'}{suffix}")
        path = self.out / "manifest.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def _run_seeds(seeds, worker, jobs: int) -> dict:
    """Run per-seed work, optionally in a thread pool; results keyed by seed."""
    if jobs <= 1:
        return {seed: worker(seed) for seed in seeds}
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {seed: pool.submit(worker, seed) for seed in seeds}
        return {seed: futures[seed].result() for seed in seeds}


def cmd_embed(config: PipelineConfig, jobs: int, check: bool, strict: bool) -> int:
    if not config.methods:
        raise ConfigError("embed needs a non-empty 'methods' list")
    out = _out_dir(config)
    normalized, _ = zscore_normalize(config.dataset)
    manifest = Manifest("embed", config, out)

    def worker(seed: int):
        ctx = _context(config, normalized, seed, out / "cache")
        results = []
        for spec in config.methods:
            if strict and spec.algorithm == "isomap":
                spec = MethodSpec(spec.source, spec.algorithm, {**spec.params, "strict": True})
            try:
                results.append((spec, build_embedding(ctx, spec, embed_dim=config.embed_dim)))
            except Exception as exc:  # partial failure: record, keep going
                results.append((spec, exc))
        return ctx, results

    outcome = _run_seeds(config.seeds, worker, jobs)
    for seed in config.seeds:
        ctx, results = outcome[seed]
        for spec, embedding in results:
            if isinstance(embedding, Exception):
                manifest.add_check(
                    f"[seed {seed}] embedding {spec.name}",
                    False,
                    f"{type(embedding).__name__}: {embedding}",
                )
                continue
            stem = f"embedding__{config.dataset_name}__{spec.source}__{spec.algorithm}__seed{seed}"
            csv_path = out / f"{stem}.csv"
            write_embedding_csv(csv_path, embedding, normalized)
            manifest.add_file(csv_path)
            title = f"{config.dataset_name}: {spec.name} (seed {seed})"
            descriptor = out / f"{stem}.descriptor.json"
            descriptor.write_text(
                json.dumps(_descriptor(embedding, normalized, seed, title), indent=2, sort_keys=True)
                + "\n",
                encoding="utf-8",
            )
            manifest.add_file(descriptor)
            figure = out / f"{stem}.png"
            plotting.save_embedding_figure(
                embedding,
                normalized.labels,
                normalized.label_kind,
                figure,
                title=title,
                label_names=normalized.label_names,
            )
            manifest.add_file(figure)
        manifest.add_checks(ctx.checks, seed=seed)
    manifest_path = manifest.write()
    print(f"wrote {len(manifest.files)} files + {manifest_path}")
    if check and not manifest.all_passed:
        return 1
    return 0


_REPORT_COLUMNS = (
    "dataset",
    "source",
    "algorithm",
    "seed",
    "status",
    "error",
) + evaluate.METRIC_COLUMNS


def write_report_csv(path, report: evaluate.EvalReport) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(("kind",) + _REPORT_COLUMNS + ("sd", "n")) + "\n")
        for cell in report.cells:
            row = ["cell", cell.dataset, cell.source, cell.algorithm, str(cell.seed), cell.status,
                   cell.error.replace(",", ";")]
            for metric in evaluate.METRIC_COLUMNS:
                value = cell.metrics.get(metric)
                row.append(_float_repr(value) if isinstance(value, (int, float)) else "")
            row += ["", ""]
            fh.write(",".join(row) + "\n")
        for agg in report.aggregates:
            row = ["aggregate", agg["dataset"], agg["source"], agg["algorithm"], "", "", ""]
            for metric in evaluate.METRIC_COLUMNS:
                row.append(_float_repr(agg["mean"]) if agg["metric"] == metric else "")
            row += [_float_repr(agg["sd"]), str(agg["n"])]
            fh.write(",".join(row) + "\n")


def summarize_report(report: evaluate.EvalReport) -> str:
    lines = [
        "method comparison (mean +/- sd over seeds)",
        f"conventions: k={report.knn_k} LOOCV k-NN; embedding importance = relative rise in",
        "summed squared error of a k-NN regression onto standardized embedding coordinates;",
        "progression_spearman = |rank correlation| of the first coordinate with the label",
        "",
    ]
    width = max((len(f"{a['source']}:{a['algorithm']}") for a in report.aggregates), default=20)
    for metric in evaluate.METRIC_COLUMNS:
        rows = [a for a in report.aggregates if a["metric"] == metric]
        if not rows:
            continue
        lines.append(f"{metric}:")
        for a in sorted(rows, key=lambda r: (r["dataset"], -r["mean"])):
            name = f"{a['source']}:{a['algorithm']}"
            lines.append(
                f"  {a['dataset']:<16} {name:<{width}} {a['mean']:+.4f} +/- {a['sd']:.4f} (n={a['n']})"
            )
        lines.append("")
    failed = [c for c in report.cells if c.status != "ok"]
    if failed:
        lines.append("failed cells:")
        for c in failed:
            lines.append(f"  {c.dataset} {c.method} seed {c.seed}: {c.error}")
        lines.append("")
    return "\n".join(lines)


def cmd_evaluate(config: PipelineConfig, jobs: int, check: bool, strict: bool) -> int:
    if not config.methods:
        raise ConfigError("evaluate needs a non-empty 'methods' list")
    if strict:
        config.methods = [
            MethodSpec(m.source, m.algorithm, {**m.params, "strict": True})
            if m.algorithm == "isomap"
            else m
            for m in config.methods
        ]
    out = _out_dir(config)
    eval_config = evaluate.EvalConfig(
        knn_k=config.knn_k,
        embed_dim=config.embed_dim,
        importance_repeats=config.importance_repeats,
        alpha=config.alpha,
        beta=config.beta,
        graph_k=config.graph_k,
        forest=config.forest,
    )
    datasets = {config.dataset_name: config.dataset}

    def worker(seed: int) -> evaluate.EvalReport:
        return evaluate.run_comparison(datasets, config.methods, (seed,), eval_config)

    partial = _run_seeds(config.seeds, worker, jobs)
    cells = []
    checks = []
    for seed in config.seeds:
        cells.extend(partial[seed].cells)
        checks.extend(partial[seed].checks)
    report = evaluate.EvalReport(
        cells=cells,
        aggregates=evaluate._aggregate(cells),
        seeds=config.seeds,
        knn_k=config.knn_k,
        checks=checks,
    )

    manifest = Manifest("evaluate", config, out)
    report_path = out / "report.csv"
    write_report_csv(report_path, report)
    manifest.add_file(report_path)
    summary_path = out / "summary.txt"
    summary_path.write_text(summarize_report(report), encoding="utf-8")
    manifest.add_file(summary_path)
    for metric, reference in (
        ("accuracy_delta", 0.0),
        ("oob_delta", 0.0),
        ("importance_pearson", None),
        ("progression_spearman", None),
    ):
        rows = [a for a in report.aggregates if a["metric"] == metric]
        if not rows:
            continue
        figure = out / f"{metric}.png"
        plotting.save_metric_bars(report.aggregates, metric, figure, reference=reference)
        manifest.add_file(figure)
    manifest.add_checks(report.checks)
    failed_cells = [c for c in report.cells if c.status != "ok"]
    manifest.add_check(
        "all cells completed", not failed_cells, f"{len(failed_cells)} failed" if failed_cells else ""
    )
    for agg in report.aggregates:
        if agg["metric"] == "oob_delta" and agg["source"] == RFGAP and agg["algorithm"] == "diffusion_map":
            gap = abs(agg["mean"])
            manifest.add_check(
                "rfgap diffusion-map oob delta within 0.05",
                gap <= 0.05,
                f"|mean delta| = {gap:.4f}",
            )
    manifest_path = manifest.write()
    print(summarize_report(report))
    print(f"wrote report to {report_path} + {manifest_path}")
    if check and not manifest.all_passed:
        return 1
    return 0


def cmd_proximity(config: PipelineConfig, jobs: int, check: bool, strict: bool) -> int:
    out = _out_dir(config)
    normalized, _ = zscore_normalize(config.dataset)
    manifest = Manifest("proximity", config, out)
    kind = config.proximity_kind

    def worker(seed: int):
        ctx = _context_for_proximity(config, normalized, seed, out / "cache")
        prox = ctx.proximity_matrix(kind)
        kernel = ctx.kernel(kind)
        return ctx, prox, kernel

    outcome = _run_seeds(config.seeds, worker, jobs)
    for seed in config.seeds:
        ctx, prox, kernel = outcome[seed]
        if kind != RFGAP:
            sym = bool(np.array_equal(prox.values, prox.values.T))
            diag = bool(np.all(np.diag(prox.values) == 1.0))
            manifest.add_check(f"[seed {seed}] {kind} proximity symmetric, unit diagonal", sym and diag)
        prox_path = out / f"proximity__{config.dataset_name}__{kind}__seed{seed}.csv"
        write_matrix_csv(prox_path, prox.values, config.dense)
        manifest.add_file(prox_path)
        kernel_path = out / f"kernel__{config.dataset_name}__{kind}__seed{seed}.csv"
        write_matrix_csv(kernel_path, kernel.values, config.dense)
        manifest.add_file(kernel_path)
        manifest.add_checks(ctx.checks, seed=seed)
    manifest_path = manifest.write()
    print(f"wrote proximity matrices + {manifest_path}")
    if check and not manifest.all_passed:
        return 1
    return 0


def _context_for_proximity(config, dataset, seed, cache_dir):
    forest = _cached_forest(dataset, replace(config.forest, seed=seed), cache_dir)
    return PipelineContext(
        dataset,
        seed,
        forest_config=config.forest,
        alpha=config.alpha,
        beta=config.beta,
        graph_k=config.graph_k,
        forest=forest,
    )


def cmd_datasets() -> int:
    print("synthetic dataset recipes:")
    print('  blobs                 {"synthetic": "blobs", "n_per_class": ..., "p": ...,')
    print('                         "n_noise": ..., "separation": ..., "seed": ...}')
    print('  regression_gradient   {"synthetic": "regression_gradient", "n": ..., "p": ..., "seed": ...}')
    print('CSV datasets:           {"csv": "path", "label_column": ..., "label_kind": ...,')
    print('                         "drop_columns": [...]}')
    print()
    print(f"similarity sources: {', '.join(SOURCES)}")
    print(f"embedding algorithms: {', '.join(ALGORITHMS)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfmanifold",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("embed", "write embedding CSVs, descriptors, and figures per method and seed"),
        ("evaluate", "run the method-comparison grid and write report, summary, and figures"),
        ("proximity", "export proximity and kernel matrices with the reconstruction check"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON (schema v1)")
        p.add_argument("--seeds", help="comma-separated seed override")
        p.add_argument("--k", type=int, help="k-NN evaluation k override")
        p.add_argument("--alpha", type=float, help="class-conditional alpha override")
        p.add_argument("--beta", help="class-conditional beta override (number or 'auto')")
        p.add_argument("--trees", type=int, help="forest size override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--check", action="store_true", help="exit nonzero if any check fails")
        p.add_argument("--strict", action="store_true", help="fail on disconnected k-NN graphs")
        p.add_argument("--jobs", type=int, default=1, help="worker threads over seeds")
    sub.add_parser("datasets", help="list dataset recipes and registered methods")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "datasets":
        return cmd_datasets()
    try:
        config = load_config(args.config, args)
        if args.command == "embed":
            return cmd_embed(config, args.jobs, args.check, args.strict)
        if args.command == "evaluate":
            return cmd_evaluate(config, args.jobs, args.check, args.strict)
        return cmd_proximity(config, args.jobs, args.check, args.strict)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
