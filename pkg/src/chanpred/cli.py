"""Command-line entry point: generation, training, evaluation, ablation.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 divergence.
Every training flag has a config-file equivalent (same key, underscores);
flags override the file.  Results land in
``<out>/<method>/<backbone>/<seed>/`` as metrics.json + metrics.csv plus a
model checkpoint.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .channel import generate_dataset, write_dataset
from .errors import ConfigError, DataError, DivergenceError, EngineError
from .harness import (ExperimentConfig, build_experiment_config, export_results,
                      load_experiment_file, parse_snr_grid, pivot_table,
                      run_ablation_grid, run_continual, run_many, snr_sweep_eval,
                      task_data_from_file, METHODS)
from .models import PredictorConfig, load_checkpoint, save_checkpoint
from .scenarios import PRESETS, get_preset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _add_experiment_flags(parser):
    """Flags mirroring ExperimentConfig fields (file keys use the same names)."""
    parser.add_argument("--config", help="experiment config file (ini-style sections)")
    parser.add_argument("--method", choices=METHODS, help="training pipeline")
    parser.add_argument("--backbone", choices=("lstm", "gru", "transformer"))
    parser.add_argument("--seq-len", type=int, dest="seq_len", help="history window length")
    parser.add_argument("--buffer", type=int, dest="buffer_capacity", help="replay buffer capacity")
    parser.add_argument("--lambda", type=float, dest="mix_lambda",
                        help="current/replay mixing weight (also the distillation mix)")
    parser.add_argument("--alpha", type=float, dest="ewc_alpha", help="consolidation stability coefficient")
    parser.add_argument("--beta", type=float, dest="si_beta", help="synaptic-importance weight")
    parser.add_argument("--xi", type=float, dest="si_xi", help="synaptic-importance damping")
    parser.add_argument("--epsilon", type=float, dest="lars_epsilon", help="loss-aware eviction damping")
    parser.add_argument("--lwf-variant", choices=("convex", "additive"), dest="lwf_variant")
    parser.add_argument("--lr", type=float, dest="learning_rate")
    parser.add_argument("--clip", type=float, dest="clip_norm", help="gradient norm cap (0 disables)")
    parser.add_argument("--batch", type=int, dest="batch_size")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--tasks", help="comma-separated scenario names")
    parser.add_argument("--train-task", dest="train_task", help="training scenario for zero-shot")
    parser.add_argument("--snr", dest="snr_grid_db", help="SNR grid, start:stop:step or comma list")
    parser.add_argument("--seeds", help="comma-separated seed list")
    parser.add_argument("--users", type=int, dest="n_users")
    parser.add_argument("--windows-per-user", type=int, dest="windows_per_user")
    parser.add_argument("--eval-windows-per-user", type=int, dest="eval_windows_per_user")
    parser.add_argument("--test-fraction", type=float, dest="test_fraction")
    parser.add_argument("--full-scale", action="store_const", const=True,
                        dest="full_scale", default=None,
                        help="use full-size scenario dimensions instead of desk scale")


def _experiment_config(args) -> ExperimentConfig:
    file_values = load_experiment_file(args.config) if args.config else {}
    overrides = {}
    for field in ("method", "backbone", "seq_len", "buffer_capacity", "mix_lambda",
                  "ewc_alpha", "si_beta", "si_xi", "lars_epsilon", "lwf_variant",
                  "learning_rate", "clip_norm", "batch_size", "epochs", "tasks",
                  "train_task", "snr_grid_db", "seeds", "n_users", "windows_per_user",
                  "eval_windows_per_user", "test_fraction", "full_scale"):
        value = getattr(args, field, None)
        if value is not None:
            overrides[field] = value
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = str(args.seed)
    return build_experiment_config(file_values, overrides)


def _run_dir(out, record):
    path = Path(out) / record.method / record.backbone / str(record.seed)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_run(out, record, theta=None, pcfg=None):
    rdir = _run_dir(out, record)
    export_results([record], rdir / "metrics.json", fmt="json")
    export_results([record], rdir / "metrics.csv", fmt="csv")
    if theta is not None:
        save_checkpoint(rdir / "model.ckpt", theta, config=pcfg.to_dict())
    return rdir


def cmd_gen(args):
    scen = get_preset(args.scenario, desk=args.desk)
    n_users = args.users if args.users else scen.default_users
    dataset = generate_dataset(scen, n_users, args.seed or 0, iteration=args.iteration)
    out = args.out
    if str(out).endswith(("/", "\\")) or Path(out).is_dir():
        prefix = Path(out) / args.scenario
    else:
        prefix = Path(out)
    tensor_path, meta_path = write_dataset(dataset, prefix)
    print(f"wrote {tensor_path} and {meta_path} shape={dataset.disk_shape}")
    return EXIT_OK


def cmd_train(args):
    config = _experiment_config(args)
    record, theta, pcfg = run_continual(config, seed=config.seeds[0], verbose=True,
                                        return_model=True)
    rdir = _write_run(args.out, record, theta, pcfg)
    print(f"run complete: {rdir}")
    return EXIT_OK


def cmd_eval(args):
    theta, meta = load_checkpoint(args.checkpoint)
    if not meta:
        raise DataError(f"{args.checkpoint}: checkpoint carries no architecture metadata")
    pcfg = PredictorConfig.from_dict(meta)
    data = task_data_from_file(args.data, pcfg.seq_len)
    grid = parse_snr_grid(args.snr) if args.snr else (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    curve = snr_sweep_eval(theta, data, grid, args.seed or 0, pcfg)
    for snr, db in curve:
        print(f"eval task={data.name} snr={snr:g} nmse_db={db:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    config = _experiment_config(args)
    methods = [m.strip() for m in args.methods.split(",")] if args.methods else [config.method]
    jobs = []
    for method in methods:
        cfg = replace(config, method=method)
        jobs += [(cfg, s) for s in cfg.seeds]
    records = run_many(jobs, threads=args.threads, verbose=True)
    for record in records:
        _write_run(args.out, record)
    export_results(records, Path(args.out) / "sweep.csv", fmt="csv")
    export_results(records, Path(args.out) / "sweep.json", fmt="json")
    print(f"sweep complete: {len(records)} runs -> {args.out}")
    return EXIT_OK


def cmd_ablate(args):
    if args.grid != "appendixC":
        raise ConfigError(f"unknown ablation grid '{args.grid}'")
    config = _experiment_config(args)
    records = run_ablation_grid(config, seeds=config.seeds, threads=args.threads,
                                verbose=True)
    for record in records:
        rdir = Path(args.out) / record.method / record.backbone / (
            f"seq{record.seq_len}_buf{record.buffer_capacity}") / str(record.seed)
        rdir.mkdir(parents=True, exist_ok=True)
        export_results([record], rdir / "metrics.json", fmt="json")
    export_results(records, Path(args.out) / "ablation.csv", fmt="csv")
    export_results(records, Path(args.out) / "ablation.json", fmt="json")
    print(f"ablation complete: {len(records)} runs -> {args.out}")
    return EXIT_OK


def cmd_pivot(args):
    print(pivot_table(args.csv, snr=args.snr))
    return EXIT_OK


def _add_globals(parser):
    # SUPPRESS keeps a subcommand's unset flag from clobbering the value
    # parsed at the top level.
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="master seed (overrides config seeds)")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker processes for multi-seed sweeps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chanpred",
        description="Continual-learning engine for MIMO channel prediction")
    parser.add_argument("--seed", type=int, help="master seed (overrides config seeds)")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for multi-seed sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a channel dataset")
    p_gen.add_argument("--scenario", required=True, choices=sorted(PRESETS))
    p_gen.add_argument("--users", type=int, help="user count (default: scenario preset)")
    p_gen.add_argument("--out", required=True, help="output file prefix or directory")
    p_gen.add_argument("--iteration", type=int, default=0,
                       help="displacement iteration for correlated re-draws")
    p_gen.add_argument("--desk", action="store_true", help="desk-scale dimensions")
    _add_globals(p_gen)

    p_train = sub.add_parser("train", help="run one continual/baseline training")
    _add_experiment_flags(p_train)
    p_train.add_argument("--out", default="results", help="output directory")
    _add_globals(p_train)

    p_eval = sub.add_parser("eval", help="SNR-sweep a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True, help="dataset file prefix")
    p_eval.add_argument("--snr", help="SNR grid, start:stop:step or comma list")
    _add_globals(p_eval)

    p_sweep = sub.add_parser("sweep", help="multi-method, multi-seed experiment sweep")
    _add_experiment_flags(p_sweep)
    p_sweep.add_argument("--methods", help="comma-separated method list")
    p_sweep.add_argument("--out", default="results", help="output directory")
    _add_globals(p_sweep)

    p_ablate = sub.add_parser("ablate", help="hyperparameter sensitivity grids")
    _add_experiment_flags(p_ablate)
    p_ablate.add_argument("--grid", default="appendixC",
                          help="grid name (appendixC: seq len and buffer size)")
    p_ablate.add_argument("--out", default="ablation", help="output directory")
    _add_globals(p_ablate)

    p_pivot = sub.add_parser("pivot", help="render a method x task x backbone table")
    p_pivot.add_argument("--csv", required=True, help="exported results CSV")
    p_pivot.add_argument("--snr", help="SNR column to pivot (default: highest finite)")
    _add_globals(p_pivot)
    return parser


_COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "pivot": cmd_pivot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
