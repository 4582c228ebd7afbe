"""Command-line front end: generate, train, ablate, fuse, summary.

Exit codes are a stable contract: 0 success, 1 IO/runtime failure,
2 configuration error. Every command echoes its effective configuration
into the output directory. Log verbosity comes from RSCNET_LOG_LEVEL.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .ablation import icf_sweep_points, neuron_sweep_points, run_sweep, sweep_report_csv
from .config import ConfigError, load_run_config, write_effective_config
from .data import (
    CLASS_NAMES,
    dataset_summary,
    format_timestamp,
    generate_synthetic,
    join_weather,
    load_image_dataset,
    write_dataset,
)
from .fusion import DEFAULT_GRIDS, fusion_experiment, grid_search_fusion
from .model import build_plan, init_params, plan_table, size_ratios
from .network import predict_probs
from .training import (
    evaluate_arrays,
    load_model,
    overfit_gap,
    save_model,
    split_indices,
    stack_samples,
    train_arrays,
    write_metrics_csv,
)

logger = logging.getLogger(__name__)


def cmd_generate(cfg, args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples, log = generate_synthetic(cfg.synthetic)
    write_dataset(samples, log, out)
    write_effective_config(cfg, out)
    counts = [sum(1 for s in samples if s.label == c) for c in range(3)]
    print(f"generated {len(samples)} samples into {out} " f"(bare/partial/full = {counts[0]}/{counts[1]}/{counts[2]})")
    return 0


def _load_samples(input_size, data_dir):
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise FileNotFoundError(f"data directory not found: {data_dir}")
    samples = load_image_dataset(data_dir, input_size)
    weather_csv = data_dir / "weather.csv"
    if weather_csv.exists():
        samples, unmatched = join_weather(samples, weather_csv)
        if unmatched:
            logger.info("%d sample(s) without a weather record", unmatched)
    return samples


def cmd_train(cfg, args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = _load_samples(cfg.model.input_size, args.data)
    plan = build_plan(cfg.model)
    params = init_params(plan, cfg.seed)

    labels = [s.label for s in samples]
    tr, va, te = split_indices(labels, cfg.split)
    x_tr, y_tr = stack_samples([samples[i] for i in tr])
    x_va, y_va = stack_samples([samples[i] for i in va])
    x_te, y_te = stack_samples([samples[i] for i in te])

    params, records = train_arrays(plan, params, x_tr, y_tr, x_va, y_va, cfg.train)
    _, test_acc, _ = evaluate_arrays(plan, params, x_te, y_te)

    save_model(plan, params, out / "model.wrml")
    write_metrics_csv(records, out / "metrics.csv")
    table = plan_table(plan)
    pr, lr = size_ratios(plan)
    summary = (
        table
        + f"\nsize vs reference models: {pr * 100:.1f}% of parameters, {lr * 100:.1f}% of layers\n"
    )
    (out / "param_summary.txt").write_text(summary)
    write_effective_config(cfg, out)

    last = records[-1]
    print(table)
    print(
        f"final: train_acc={last.train_acc:.4f} val_acc={last.val_acc:.4f} "
        f"test_acc={test_acc:.4f} overfit_gap={overfit_gap(records):.4f}"
    )
    print(f"model and metrics written to {out}")
    return 0


def cmd_ablate(cfg, args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    samples = _load_samples(cfg.model.input_size, args.data)
    if args.mode == "icf":
        configs = icf_sweep_points(cfg.ablation.icf_values, cfg.model)
    else:
        configs = neuron_sweep_points(
            cfg.model,
            start=cfg.ablation.neuron_start,
            step=cfg.ablation.neuron_step,
            floor_total=cfg.ablation.neuron_floor,
        )
    points = run_sweep(configs, samples, cfg.train, cfg.split, mode=args.mode)
    report = sweep_report_csv(points)
    (out / "sweep.csv").write_text(report)
    write_effective_config(cfg, out)
    print(report, end="")
    print(f"sweep report written to {out / 'sweep.csv'}")
    return 0


def _write_fusion_dataset(samples, probs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["station_id", "timestamp", "p_bare", "p_partial", "p_full", "air_temp", "rh", "pressure", "wind_speed", "label"]
        )
        for s, p in zip(samples, probs):
            wx = s.weather.fusion_vector() if s.weather is not None else np.full(4, np.nan)
            w.writerow(
                [s.station_id, format_timestamp(s.timestamp) if s.timestamp else ""]
                + [repr(float(v)) for v in p]
                + ["" if np.isnan(v) else repr(float(v)) for v in wx]
                + [s.label]
            )


def cmd_fuse(cfg, args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    plan, params = load_model(args.model)
    if plan.config != cfg.model:
        logger.info("using the architecture stored in %s", args.model)
    samples = _load_samples(plan.config.input_size, args.data)

    labels = np.array([s.label for s in samples], dtype=np.intp)
    tr, va, te = split_indices(labels, cfg.split)
    train_idx = np.sort(np.concatenate([tr, va]))  # model-fitting pool
    x_all, _ = stack_samples(samples)
    probs = np.empty((len(samples), plan.config.num_classes))
    for start in range(0, len(samples), 256):
        probs[start : start + 256] = predict_probs(plan, params, x_all[start : start + 256])
    weather = np.stack(
        [s.weather.fusion_vector() if s.weather is not None else np.full(4, np.nan) for s in samples]
    )

    classifier = args.classifier or cfg.fusion.classifier
    chosen_params = {}
    if cfg.fusion.use_grid_search:
        from .fusion import PreprocessState, fuse_matrix

        state = PreprocessState.fit(weather[train_idx])
        fused_train = fuse_matrix(probs[train_idx], state.transform(weather[train_idx]))
        grid = cfg.fusion.grid if cfg.fusion.grid is not None else DEFAULT_GRIDS[classifier]
        result = grid_search_fusion(
            classifier, fused_train, labels[train_idx], k_folds=cfg.fusion.k_folds, seed=cfg.seed, grid=grid
        )
        chosen_params = result.best_params
        with open(out / "grid_scores.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            names = list(grid.keys())
            w.writerow(names + ["mean_score"] + [f"fold{i}" for i in range(cfg.fusion.k_folds)])
            for cell_params, mean, fold_scores in result.cells:
                w.writerow([cell_params[n] for n in names] + [repr(mean)] + [repr(v) for v in fold_scores])
        print(f"grid search selected {chosen_params} (cv score {result.best_score:.4f})")

    report = fusion_experiment(
        probs, weather, labels, train_idx, te, classifier=classifier, classifier_params=chosen_params, seed=cfg.seed
    )
    (out / "fusion_report.csv").write_text(report.to_csv_text())
    _write_fusion_dataset(samples, probs, out / "fusion_dataset.csv")
    write_effective_config(cfg, out)

    print(f"classifier={classifier} params={report.params}")
    print(f"test accuracy: image argmax {report.image_argmax.accuracy:.4f}, " f"image {classifier} {report.image_clf.accuracy:.4f}, fused {report.fused.accuracy:.4f}")
    print(f"fused macro F1 {report.fused.macro_f1:.4f}, weighted F1 {report.fused.weighted_f1:.4f}")
    for c, name in enumerate(CLASS_NAMES):
        print(
            f"recall[{name}]: fused-vs-argmax {report.recall_delta_vs_argmax[c]:+.4f}, "
            f"fused-vs-{classifier} {report.recall_delta_vs_clf[c]:+.4f}"
        )
    print(f"fusion report written to {out / 'fusion_report.csv'}")
    return 0


def cmd_summary(cfg, args):
    samples = _load_samples(cfg.model.input_size, args.data)
    summary = dataset_summary(samples)
    text = summary.to_csv_text()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.csv").write_text(text)
        write_effective_config(cfg, out)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rscnet",
        description="Road surface condition engine: synthetic data, training, ablation, weather fusion.",
    )
    parser.add_argument("--config", help="JSON run configuration file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the CNN on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="run an ablation sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("icf", "neurons"), required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("fuse", help="weather-fusion experiment with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", choices=("nb", "rf", "svm"))
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("summary", help="dataset descriptive statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_summary)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RSCNET_LOG_LEVEL", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config, seed_override=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
