"""Command-line entry point: ``lmakit <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .costmodel import bench_memory, rows_to_csv
from .distill import train_teacher
from .errors import ConfigurationError, FormatError, UnsupportedActivationError
from .experiment import atomic_write, run_experiment, summarize_csv, sweep_segments
from .model import ArchSpec, save_model
from .regions import count_regions_1d, count_regions_2d, generic_model, hidden_breakpoints_1d, maxout_region_bound


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    seeds = None
    if getattr(args, "seeds", None):
        seeds = tuple(args.seeds)
    elif getattr(args, "seed", None) is not None:
        seeds = (args.seed,)
    return cfg.override(
        seeds=seeds,
        activations=(args.activation,) if getattr(args, "activation", None) else None,
        segments=args.segments[0] if getattr(args, "segments", None) else None,
        quant_bits=getattr(args, "quant_bits", None),
        out_dir=getattr(args, "out", None),
    )


def cmd_train_teacher(args):
    cfg = _config(args)
    data = cfg.dataset()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in cfg.seeds:
        trained = train_teacher(cfg.teacher_arch(data), data, cfg.train, seed)
        path = out / f"teacher_seed{seed}.lmak"
        save_model(trained.model, path, trained.metrics())
        results.append({"seed": seed, "test_accuracy": trained.test_accuracy, "model": str(path)})
    print(json.dumps(results, indent=2))


def cmd_distill(args):
    cfg = _config(args)
    report = run_experiment(cfg)
    report.write(cfg.out_dir)
    print(report.to_csv(), end="")


def cmd_quant_distill(args):
    cfg = _config(args)
    if not cfg.quant_bits:
        raise ConfigurationError("quant-distill needs --quant-bits B (2..8) or quant_bits in the config")
    report = run_experiment(cfg)
    report.write(cfg.out_dir, stem=f"quant{cfg.quant_bits}")
    print(report.to_csv(), end="")


def cmd_sweep_segments(args):
    cfg = _config(args)
    ks = args.segments or [4, 6, 8, 10, 12]
    kinds = (args.activation,) if args.activation else ("lma",)
    report = sweep_segments(cfg, ks, kinds)
    report.write(cfg.out_dir, stem="sweep")
    print(report.to_csv(), end="")


def cmd_count_regions(args):
    kind = args.activation or "relu"
    k = args.segments[0] if args.segments else (2 if kind in ("relu", "prelu") else 8)
    arch = ArchSpec(input_dim=args.dim, hidden=tuple([args.width] * args.layers), output_dim=1,
                    activation=kind, segments=k)
    model, degenerate = generic_model(arch, args.seed if args.seed is not None else 0)
    if args.dim == 1:
        if args.layers == 1:
            kinks = hidden_breakpoints_1d(model)
            interval = (float(kinks.min()) - 1.0, float(kinks.max()) + 1.0) if len(kinks) else (-4.0, 4.0)
        else:
            interval = (-4.0, 4.0)
        rc = count_regions_1d(model, interval, args.resolution)
    else:
        rc = count_regions_2d(model, ((-args.box, args.box), (-args.box, args.box)), args.grid)
    rank = 2 if kind in ("relu", "prelu") else k
    record = {"arch": arch.to_dict(), "k": k, "method": rc.method, "regions": rc.regions,
              "bound": maxout_region_bound(args.layers, args.width, rank).bound,
              "degenerate": degenerate or rc.degenerate}
    print(json.dumps(record, sort_keys=True))


def cmd_bench_memory(args):
    ns = tuple(args.n) if args.n else (4, 16, 64)
    ks = tuple(args.segments) if args.segments else (4, 8, 12)
    kinds = (args.activation,) if args.activation else ("relu", "prelu", "swish", "maxout", "aplu", "lma")
    text = rows_to_csv(bench_memory(ns, ks, kinds))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "bench_memory.csv", text)
    print(text, end="")


def cmd_report(args):
    out = Path(args.out or "runs")
    summaries = {}
    for path in sorted(out.glob("*.csv")):
        if path.name == "bench_memory.csv":
            continue
        summaries[path.stem] = summarize_csv(path.read_text())
    text = json.dumps(summaries, indent=2, sort_keys=True, default=str)
    atomic_write(out / "summary.json", text)
    for stem, arms in summaries.items():
        print(f"[{stem}]")
        for arm, agg in arms.items():
            print(f"  {arm:<12} mean={agg['mean']:.4f} std={agg['std']:.4f} n={agg['n']} failed={agg['failed']}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmakit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int)
        if seeds:
            p.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
        p.add_argument("--activation", choices=("relu", "prelu", "swish", "maxout", "aplu", "lma"))
        p.add_argument("--segments", type=_int_list, help="segment count (comma list for sweeps)")
        p.add_argument("--quant-bits", type=int, help="student weight bits; 0 disables")
        p.add_argument("--out", help="output directory")
        return p

    common(sub.add_parser("train-teacher", help="train and save teachers")).set_defaults(func=cmd_train_teacher)
    common(sub.add_parser("distill", help="teacher + student arms")).set_defaults(func=cmd_distill)
    common(sub.add_parser("sweep-segments", help="student accuracy across k")).set_defaults(func=cmd_sweep_segments)
    common(sub.add_parser("quant-distill", help="distillation into a quantized student")).set_defaults(
        func=cmd_quant_distill)

    p = common(sub.add_parser("count-regions", help="linear regions of a random tiny network"), seeds=False)
    p.add_argument("--dim", type=int, choices=(1, 2), default=1)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--resolution", type=int, default=2001)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--box", type=float, default=4.0)
    p.set_defaults(func=cmd_count_regions)

    p = common(sub.add_parser("bench-memory", help="parameter and workspace counts"), seeds=False)
    p.add_argument("--n", type=_int_list, help="comma-separated widths")
    p.set_defaults(func=cmd_bench_memory)

    p = sub.add_parser("report", help="recompute aggregates from result CSVs")
    p.add_argument("--out", help="directory holding result CSVs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigurationError, FormatError, UnsupportedActivationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
