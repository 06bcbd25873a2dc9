"""Command-line interface.

Four subcommands mirror the library workflow: ``fit`` learns and caches
a signal model, ``design`` produces one projection, ``eval`` scores a
cached model + projection on a dataset, and ``bench`` runs a full
config-driven sweep.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classify import evaluate
from .datasets import load_dataset, standardize
from .designers import DesignerConfig
from .experiment import (
    ExperimentConfig,
    build_signal_model,
    emit_report,
    load_config,
    run_experiment,
    _design_row,
)
from .mixture import EmConfig
from .modelio import load_model, load_projection, save_model, save_projection
from .objectives import GaussStats, estimate_shannon_mi, fano_bounds
from .posterior import MeasurementModel, isotropic_noise

__all__ = ["main"]

_FORMATS = ("csv", "json", "markdown-table")


def _add_data_flags(sub):
    sub.add_argument("--dataset", required=True, choices=("satellite", "letter", "usps"))
    sub.add_argument("--data-dir", required=True, help="directory with the canonical data files")
    sub.add_argument("--standardize", action="store_true", help="fit per-feature scaling on train")


def _load(args):
    ds = load_dataset(args.dataset, args.data_dir)
    if args.standardize:
        ds, _ = standardize(ds)
    return ds


def _cmd_fit(args):
    ds = _load(args)
    em = EmConfig(seed=(args.seed, 1))
    model = build_signal_model(ds.train_features, ds.train_labels, ds.n_classes, args.components, em)
    save_model(model, args.out)
    print(f"fitted {ds.n_classes} classes with {args.components} component(s) each -> {args.out}")
    return 0


def _cmd_design(args):
    model = load_model(args.model)
    cfg = DesignerConfig(
        step_size=args.step,
        n_particles=args.particles,
        seed=args.seed,
    )
    # discriminant methods see the model through its first two moments
    stats = GaussStats.from_model(model)
    precision = 1.0 / args.noise
    report = _design_row(args.method, model, stats, args.d, precision, cfg, args.seed)
    np.set_printoptions(precision=6, linewidth=120, threshold=sys.maxsize)
    print(report.projection)
    print(f"method: {args.method}  d: {args.d}")
    print(f"stop_reason: {report.stop_reason}  iterations_run: {report.iterations_run}")
    if report.objective_trace:
        print(f"final objective: {report.objective_trace[-1]:.6f}")
    if report.kkt_residual_trace:
        print(f"final kkt residual: {report.kkt_residual_trace[-1]:.6f}")
    if args.out:
        save_projection(report.projection, args.out)
        print(f"projection written to {args.out}")
    return 0


def _cmd_eval(args):
    model = load_model(args.model)
    phi = load_projection(args.projection)
    ds = _load(args)
    meas = MeasurementModel(phi, isotropic_noise(phi.shape[0], args.noise))
    batch = evaluate(model, meas, ds.test_features, ds.test_labels)
    mi, se = estimate_shannon_mi(model, meas, args.particles, (args.seed, 3))
    bounds = fano_bounds(mi, model.class_priors)
    print(f"accuracy: {batch.accuracy:.4f}")
    print(f"mi_estimate: {mi:.4f} nats  (std err {se:.4f})")
    print(f"fano upper bound on error: {bounds.upper:.4f}")
    return 0


def _cmd_bench(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out_dir = Path(args.out) if args.out else Path(cfg.output_dir)
    report = run_experiment(cfg)
    formats = _FORMATS if args.format == "all" else (args.format,)
    suffix = {"csv": "report.csv", "json": "report.json", "markdown-table": "report.md"}
    for fmt in formats:
        written = emit_report(report, fmt, out_dir / suffix[fmt])
        print(f"wrote {written}")
    if report.errors:
        print(f"{len(report.errors)} row(s) failed:", file=sys.stderr)
        for err in report.errors:
            print(f"  {err['method']} O={err['components']} d={err['d']}: {err['error']}", file=sys.stderr)
    return 1 if report.errors and not report.rows else 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="miproj",
        description="Design and evaluate information-maximizing linear projections.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    fit = subs.add_parser("fit", help="fit per-class mixtures and cache the model")
    _add_data_flags(fit)
    fit.add_argument("--components", type=int, default=1, help="mixture components per class")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True, help="output model file (json)")
    fit.set_defaults(func=_cmd_fit)

    design = subs.add_parser("design", help="design one projection from a cached model")
    design.add_argument("--model", required=True, help="model file from `fit`")
    design.add_argument("--method", required=True, choices=("lda", "ida", "renyi", "proposed", "random"))
    design.add_argument("--d", type=int, required=True, help="projection rank")
    design.add_argument("--particles", type=int, default=2000)
    design.add_argument("--step", type=float, default=0.01)
    design.add_argument("--noise", type=float, default=1e-6, help="measurement noise variance scale")
    design.add_argument("--seed", type=int, default=0)
    design.add_argument("--out", help="write the projection here (json)")
    design.set_defaults(func=_cmd_design)

    ev = subs.add_parser("eval", help="score a cached model + projection on a dataset")
    ev.add_argument("--model", required=True)
    ev.add_argument("--projection", required=True)
    _add_data_flags(ev)
    ev.add_argument("--particles", type=int, default=2000)
    ev.add_argument("--noise", type=float, default=1e-6)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=_cmd_eval)

    bench = subs.add_parser("bench", help="run the full benchmark grid from a config file")
    bench.add_argument("--config", required=True)
    bench.add_argument("--seed", type=int, default=None, help="override the config master seed")
    bench.add_argument("--out", help="override the config output directory")
    bench.add_argument("--format", default="all", choices=_FORMATS + ("all",))
    bench.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
