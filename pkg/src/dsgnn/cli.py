"""Command-line entry point: generate, train, estimate, ablate.

Exit codes: 0 success, 2 usage/config problems, 1 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from .config import load_config
from .data import AIR_QUALITY_CHANNELS, fill_missing_air_quality, load_dataset, save_dataset
from .errors import ConfigError, DsgnnError, LoadError, ProtocolError
from .model import DSGNN, VARIANTS
from .report import (
    write_ablation_table,
    write_heatmap,
    write_label_map,
    write_csv,
    write_run_report,
)
from .synthetic import SynthConfig, gen_synthetic
from .training import (
    ablation_sweep,
    make_windows,
    prepare_fold_inputs,
    run_protocol,
    StationFold,
    TrainConfig,
    _sample_windows,
)


def cmd_generate(args) -> int:
    out = args.out
    if os.path.isdir(out) and os.listdir(out) and not args.force:
        raise ConfigError(f"output directory {out} is not empty (use --force)")
    cfg = SynthConfig(
        h=args.h, w=args.w, t=args.t, clusters=args.clusters,
        noise=args.noise, seed=args.seed, station_frac=args.station_frac,
    )
    dataset = gen_synthetic(cfg)
    save_dataset(dataset, out)
    write_label_map(os.path.join(out, "planted_labels"), dataset.planted_labels)
    print(f"wrote {dataset.T}x{dataset.H}x{dataset.W} dataset to {out}")
    return 0


def _export_fold_artifacts(out_dir: str, dataset, cfg: TrainConfig, result):
    """Per-fold parameter snapshot, label maps, and edge-weight CSVs."""
    h, w = dataset.H, dataset.W
    snap = {f"state/{k}": v for k, v in result.state.items()}
    for view, (mean, std) in result.stats.items():
        snap[f"stats/{view}/mean"] = mean
        snap[f"stats/{view}/std"] = std
    for view, e in result.e_sta.items():
        snap[f"e_sta/{view}"] = e
    snap["config_json"] = np.array(json.dumps(asdict(cfg)))
    snap["fold_id"] = np.array(result.fold_id)
    np.savez(os.path.join(out_dir, f"fold{result.fold_id}_params.npz"), **snap)

    # rebuild the model to export assignments and edge weights
    model = DSGNN(cfg.model_config(h, w), seed=0)
    model.load_state_arrays(result.state)
    from .data import make_folds  # fold cells are re-derivable from the seed
    fold = make_folds(dataset, cfg.seed)[result.fold_id]
    fold_data = prepare_fold_inputs(dataset, fold, cfg)
    t = fold_data.splits.test[0] if fold_data.splits.test else fold_data.splits.train[-1]
    res = model.forward(_sample_windows(fold_data, t, cfg.tau),
                        e_sta=fold_data.e_sta, training=False)
    for (view, kind), assignment in res.assignments.items():
        base = os.path.join(out_dir, f"fold{result.fold_id}_{view}_{kind}_labels")
        write_label_map(base, assignment.label_map(h, w))
    for (view, kind), graph in res.graphs.items():
        path = os.path.join(out_dir, f"fold{result.fold_id}_{view}_{kind}_edge_weights.csv")
        write_csv(path, None, [[f"{v:.10g}" for v in row] for row in graph.edge_weight.data])


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.variant is not None:
        cfg = TrainConfig(**{**asdict(cfg), "variant": args.variant})
    dataset = load_dataset(args.dataset)
    os.makedirs(args.out, exist_ok=True)
    report = run_protocol(dataset, cfg, jobs=args.jobs)
    write_run_report(args.out, report)
    for result in report.fold_results:
        _export_fold_artifacts(args.out, dataset, cfg, result)
    print(f"mean MAE {report.mean_mae:.6g} "
          f"(folds: {', '.join(f'{m:.6g}' for m in report.fold_maes)})")
    return 0


def cmd_estimate(args) -> int:
    dataset = load_dataset(args.dataset)
    if not os.path.exists(args.params):
        raise LoadError(f"parameter snapshot not found: {args.params}")
    snap = np.load(args.params, allow_pickle=False)
    cfg = TrainConfig(**json.loads(str(snap["config_json"])))
    if args.channel is not None:
        if args.channel not in AIR_QUALITY_CHANNELS:
            raise ConfigError(
                f"unknown channel {args.channel!r}; valid: {', '.join(AIR_QUALITY_CHANNELS)}"
            )
        cfg = TrainConfig(**{**asdict(cfg), "target_channel": args.channel})
    splits = make_windows(dataset.T, cfg.tau)
    if args.time not in splits.test:
        raise ProtocolError(
            f"time step {args.time} is not a test-split window end "
            f"(test ends: {splits.test[0]}..{splits.test[-1]})"
        )
    fold_id = int(snap["fold_id"])
    from .data import make_folds
    fold = make_folds(dataset, cfg.seed)[fold_id]
    fold_data = prepare_fold_inputs(dataset, fold, cfg)
    model = DSGNN(cfg.model_config(dataset.H, dataset.W), seed=0)
    model.load_state_arrays(
        {k[len("state/"):]: snap[k] for k in snap.files if k.startswith("state/")}
    )
    res = model.forward(_sample_windows(fold_data, args.time, cfg.tau),
                        e_sta=fold_data.e_sta, training=False)
    base = args.out[:-4] if args.out.endswith(".csv") else args.out
    write_heatmap(base, res.estimate.data,
                  title=f"{cfg.target_channel} estimate, t={args.time}")
    print(f"wrote estimate for t={args.time} to {base}.csv/.pgm/.png")
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    dataset = load_dataset(args.dataset)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants:
        raise ConfigError("no variants given")
    os.makedirs(args.out, exist_ok=True)
    reports = ablation_sweep(dataset, cfg, variants, jobs=args.jobs)
    write_ablation_table(os.path.join(args.out, "ablation"), reports)
    for name, rep in reports.items():
        print(f"{name}: mean MAE {rep.mean_mae:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsgnn",
        description="Dual-view supergrid air-quality estimation at desk scale",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--h", type=int, default=24)
    p.add_argument("--w", type=int, default=24)
    p.add_argument("--t", type=int, default=400)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--station-frac", type=float, default=0.15)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="run the five-fold protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=list(VARIANTS) + ["DSGNN"], default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="write an estimated air-quality map")
    p.add_argument("--params", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--time", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channel", default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("ablate", help="compare ablation variants")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--variants", required=True, help="comma-separated variant names")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, LoadError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DsgnnError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
