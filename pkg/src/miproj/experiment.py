"""Configuration-driven benchmark runner.

Reproduces the evaluation protocol end to end: load a dataset, fit
per-class mixtures, design projections by every requested method and
target dimension, score the induced Bayes classifier, and emit CSV /
JSON / markdown reports with a reproducibility manifest.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .classify import evaluate
from .datasets import _resolve_paths, load_dataset, standardize
from .designers import (
    DesignerConfig,
    design_ida,
    design_lda,
    design_renyi,
    design_shannon,
    kkt_residual,
    random_baseline,
)
from .mixture import EmConfig, SignalModel, fit_class_gmm
from .mmse import estimate_sigma_tilde
from .objectives import GaussStats, estimate_shannon_mi, fano_bounds
from .posterior import MeasurementModel, isotropic_noise

__all__ = [
    "ExperimentConfig",
    "ReportRow",
    "ExperimentReport",
    "parse_config",
    "load_config",
    "build_signal_model",
    "run_experiment",
    "run_experiment_on",
    "emit_report",
]

_METHODS = ("lda", "ida", "renyi", "proposed", "random")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one benchmark run needs, with protocol defaults."""

    dataset: str = "satellite"
    data_dir: str = "data/satellite"
    methods: tuple = _METHODS
    components: tuple = (1,)
    d_list: tuple = (1, 2, 3, 4, 5)
    noise: float = 1e-6
    seed: int = 0
    standardize: bool = False
    output_dir: str = "out"
    designer: DesignerConfig = DesignerConfig()
    em: EmConfig = EmConfig()

    def __post_init__(self):
        if self.noise <= 0:
            raise ValueError("noise must be positive")
        for method in self.methods:
            if method not in _METHODS:
                raise ValueError(f"unknown method {method!r}; choose from {_METHODS}")
        if any(d < 1 for d in self.d_list):
            raise ValueError("d_list entries must be >= 1")
        if any(o < 1 for o in self.components):
            raise ValueError("components entries must be >= 1")


@dataclass(frozen=True)
class ReportRow:
    """One scored (method, components, d) cell of the benchmark grid."""

    method: str
    components: int
    d: int
    accuracy: float
    mi_estimate: float
    mi_std_err: float
    fano_upper: float
    kkt_residual: float
    wall_time: float


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    """Rows plus failures, design traces, and the environment manifest."""

    rows: tuple
    errors: tuple
    traces: tuple
    manifest: dict


def _parse_bool(value, key):
    low = value.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"key {key!r}: expected a boolean, got {value!r}")


def _parse_int_list(value, key):
    try:
        return tuple(int(tok.strip()) for tok in value.split(",") if tok.strip())
    except ValueError:
        raise ValueError(f"key {key!r}: expected integers, got {value!r}") from None


_TOP_KEYS = {
    "dataset": str,
    "data_dir": str,
    "methods": "str_list",
    "components": "int_list",
    "d_list": "int_list",
    "noise": float,
    "seed": int,
    "standardize": "bool",
    "output_dir": str,
}

_DESIGNER_KEYS = {
    "step_size": float,
    "max_iters": int,
    "n_particles": int,
    "seed": int,
    "rel_obj_tol": float,
    "grad_tol": float,
    "patience": int,
    "backtracking": "bool",
    "backtrack_shrink": float,
    "max_halvings": int,
    "freeze_particles": "bool",
    "realign_restart": "bool",
}

_EM_KEYS = {
    "max_iters": int,
    "loglik_tol": float,
    "reg_floor": float,
    "restarts": int,
    "seed": int,
}


def _convert(kind, value, key):
    if kind == "bool":
        return _parse_bool(value, key)
    if kind == "int_list":
        return _parse_int_list(value, key)
    if kind == "str_list":
        return tuple(tok.strip() for tok in value.split(",") if tok.strip())
    try:
        return kind(value)
    except ValueError:
        raise ValueError(f"key {key!r}: cannot parse {value!r}") from None


def _convert_line(lineno, kind, value, key):
    try:
        return _convert(kind, value, key)
    except ValueError as exc:
        raise ValueError(f"config line {lineno}: {exc}") from None


def parse_config(text):
    """Parse the flat key = value config format (# starts a comment).

    Dotted keys set designer.* and em.* fields; any unknown key is an
    error.
    """
    top = {}
    designer = {}
    em = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not value:
            raise ValueError(f"config line {lineno}: empty value for {key!r}")
        if key.startswith("designer."):
            field = key[len("designer.") :]
            if field not in _DESIGNER_KEYS:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            designer[field] = _convert_line(lineno, _DESIGNER_KEYS[field], value, key)
        elif key.startswith("em."):
            field = key[len("em.") :]
            if field not in _EM_KEYS:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            em[field] = _convert_line(lineno, _EM_KEYS[field], value, key)
        elif key in _TOP_KEYS:
            top[key] = _convert_line(lineno, _TOP_KEYS[key], value, key)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return ExperimentConfig(
        designer=replace(DesignerConfig(), **designer),
        em=replace(EmConfig(), **em),
        **top,
    )


def load_config(path):
    """Parse a config file from disk."""
    return parse_config(Path(path).read_text())


def build_signal_model(features, labels, n_classes, n_components, em_cfg):
    """Fit one mixture per class; priors are the empirical class rates."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=n_classes)
    if np.any(counts == 0):
        missing = int(np.flatnonzero(counts == 0)[0])
        raise ValueError(f"class {missing} has no training samples")
    classes = []
    for m in range(n_classes):
        cfg_m = replace(em_cfg, seed=(em_cfg.seed, 50_000 + m, n_components))
        classes.append(fit_class_gmm(features[labels == m], n_components, cfg_m))
    priors = counts / counts.sum()
    return SignalModel(class_priors=priors, classes=tuple(classes))


def _design_row(method, model, stats, d, precision, dcfg, row_seed):
    if method == "lda":
        return design_lda(stats, d, precision)
    if method == "ida":
        return design_ida(stats, d, precision, dcfg)
    if method == "renyi":
        return design_renyi(model, d, precision, dcfg)
    if method == "proposed":
        return design_shannon(model, d, precision, dcfg)
    if method == "random":
        return random_baseline(stats.dim, d, row_seed)
    raise ValueError(f"unknown method {method!r}")


def _config_echo(cfg):
    echo = dataclasses.asdict(cfg)
    echo["designer"] = dataclasses.asdict(cfg.designer)
    echo["em"] = dataclasses.asdict(cfg.em)
    return echo


def _data_manifest(cfg):
    files = {}
    for role, path in _resolve_paths(cfg.dataset, cfg.data_dir).items():
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        files[role] = {"path": str(path), "sha256": digest}
    return files


def run_experiment(cfg):
    """Run the full benchmark grid described by ``cfg``.

    Deterministic given the master seed: every row derives its own
    streams from (seed, row index).  A failing row is recorded in
    ``errors`` and does not stop the sweep.
    """
    ds = load_dataset(cfg.dataset, cfg.data_dir)
    return run_experiment_on(ds, cfg, data_files=_data_manifest(cfg))


def run_experiment_on(ds, cfg, data_files=None):
    """Run the benchmark grid on an already-loaded dataset."""
    manifest = {
        "dataset": ds.name,
        "data_files": data_files or {},
        "config": _config_echo(cfg),
        "master_seed": cfg.seed,
        "n_features": ds.n_features,
        "n_classes": ds.n_classes,
        "feature_range": [float(ds.train_features.min()), float(ds.train_features.max())],
        "standardize": cfg.standardize,
        "versions": {"package": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }
    if cfg.standardize:
        ds, record = standardize(ds)
        manifest["standardize_record"] = record.to_dict()
    if any(d > ds.n_features for d in cfg.d_list):
        raise ValueError(f"d_list entries must be <= {ds.n_features}")

    # em.seed = 0 (the default) means: derive the EM streams from the master seed
    em_base = replace(cfg.em, seed=(cfg.seed, 1) if cfg.em.seed == 0 else cfg.em.seed)
    models = {}
    for n_comp in cfg.components:
        models[n_comp] = build_signal_model(
            ds.train_features, ds.train_labels, ds.n_classes, n_comp, em_base
        )
    # discriminant stats always come from the closed-form single-Gaussian
    # fit, so lda/ida projections do not depend on the mixture order
    model_single = models.get(1) or build_signal_model(
        ds.train_features, ds.train_labels, ds.n_classes, 1, em_base
    )
    stats = GaussStats.from_model(model_single)
    precision = 1.0 / cfg.noise

    rows = []
    errors = []
    traces = []
    row_index = 0
    for n_comp in cfg.components:
        model = models[n_comp]
        for d in cfg.d_list:
            for method in cfg.methods:
                row_seed = (cfg.seed, 2, row_index)
                row_index += 1
                start = time.perf_counter()
                try:
                    dcfg = replace(cfg.designer, seed=row_seed)
                    report = _design_row(method, model, stats, d, precision, dcfg, row_seed)
                    meas = MeasurementModel(report.projection, isotropic_noise(d, cfg.noise))
                    batch = evaluate(model, meas, ds.test_features, ds.test_labels)
                    mi, se = estimate_shannon_mi(
                        model, meas, cfg.designer.n_particles, (row_seed, 3)
                    )
                    bounds = fano_bounds(mi, model.class_priors)
                    sig = estimate_sigma_tilde(
                        model, meas, cfg.designer.n_particles, (row_seed, 4)
                    )
                    kkt = kkt_residual(meas, sig)
                    rows.append(
                        ReportRow(
                            method=method,
                            components=n_comp,
                            d=d,
                            accuracy=batch.accuracy,
                            mi_estimate=mi,
                            mi_std_err=se,
                            fano_upper=bounds.upper,
                            kkt_residual=kkt,
                            wall_time=time.perf_counter() - start,
                        )
                    )
                    traces.append(
                        {
                            "method": method,
                            "components": n_comp,
                            "d": d,
                            "objective_trace": list(report.objective_trace),
                            "kkt_residual_trace": list(report.kkt_residual_trace),
                            "iterations_run": report.iterations_run,
                            "stop_reason": report.stop_reason,
                        }
                    )
                except Exception as exc:  # row isolation: sweeps must survive
                    errors.append(
                        {
                            "method": method,
                            "components": n_comp,
                            "d": d,
                            "error": f"{type(exc).__name__}: {exc}",
                        }
                    )
    return ExperimentReport(rows=tuple(rows), errors=tuple(errors), traces=tuple(traces), manifest=manifest)


_FIELDS = [f.name for f in dataclasses.fields(ReportRow)]


def _markdown_tables(report):
    lines = []
    by_comp = {}
    for row in report.rows:
        by_comp.setdefault(row.components, []).append(row)
    for n_comp in sorted(by_comp):
        rows = by_comp[n_comp]
        methods = []
        for row in rows:
            if row.method not in methods:
                methods.append(row.method)
        cells = {(row.d, row.method): row.accuracy for row in rows}
        lines.append(f"## components per class = {n_comp}")
        lines.append("")
        lines.append("| d | " + " | ".join(methods) + " |")
        lines.append("|---" * (len(methods) + 1) + "|")
        for d in sorted({row.d for row in rows}):
            vals = [
                f"{cells[(d, m)]:.4f}" if (d, m) in cells else "n/a" for m in methods
            ]
            lines.append(f"| {d} | " + " | ".join(vals) + " |")
        lines.append("")
    return "\n".join(lines)


def emit_report(report, fmt, path):
    """Write the report in one format; returns the written path.

    csv: one line per row, columns in ReportRow order.  json: rows,
    errors, traces, and manifest.  markdown-table: per-mixture-order
    accuracy grids with methods as columns and d as rows.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        lines = [",".join(_FIELDS)]
        for row in report.rows:
            lines.append(",".join(repr(getattr(row, f)) if not isinstance(getattr(row, f), str) else getattr(row, f) for f in _FIELDS))
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "json":
        doc = {
            "rows": [dataclasses.asdict(row) for row in report.rows],
            "errors": list(report.errors),
            "traces": list(report.traces),
            "manifest": report.manifest,
        }
        path.write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    elif fmt in ("markdown", "markdown-table"):
        path.write_text(_markdown_tables(report) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
