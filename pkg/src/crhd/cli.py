"""Command-line interface.

Subcommands: simulate, fit, depth, rank-test, rank-recovery, size-power.
Experiment commands read a YAML config (see README for the schema) and
write CSV tables plus a JSON run manifest into --out-dir.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from . import __version__
from .depth import DepthRequest
from .dgp import TrueModel, gen_true_curves, sparsify
from .directions import RegularizationSpec
from .exceptions import CrhdError
from .harness import ExperimentConfig, run_rank_recovery, run_single_depth, run_size_power
from .inference import depth_kw_test
from .io import write_depth_csv, write_manifest, write_model_json, write_sample_csv, read_sample_csv
from .numerics import Grid, substream
from .smoothing import fit_model


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="root RNG seed")
    parser.add_argument("--threads", type=int, default=1, help="replicate worker processes")
    parser.add_argument("--out-dir", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--config", type=Path, default=None, help="YAML config file")


def _cmd_simulate(args) -> int:
    grid = Grid.uniform(args.grid_size)
    model = TrueModel.make(
        grid=grid,
        decay_a=args.decay_a,
        k_star=args.k_star,
        mean_slope=args.mean_slope,
        score_dist=args.score_dist,
        error_dist=args.error_dist,
        noise_var=args.noise_var,
    )
    values, _ = gen_true_curves(args.n, model, substream(args.seed, 1))
    sample = sparsify(
        values, grid, args.error_dist, args.noise_var, substream(args.seed, 2)
    )
    out = args.out_dir / f"{args.name}.csv"
    write_sample_csv(out, sample)
    sidecar = {
        "n": args.n,
        "decay_a": args.decay_a,
        "k_star": args.k_star,
        "mean_slope": args.mean_slope,
        "score_dist": args.score_dist,
        "error_dist": args.error_dist,
        "noise_var": args.noise_var,
        "grid_size": args.grid_size,
        "seed": args.seed,
        "eigenvalues": model.eigenvalues.tolist(),
    }
    (args.out_dir / f"{args.name}.model.json").write_text(json.dumps(sidecar, indent=2))
    print(f"wrote {out}")
    return 0


def _cmd_fit(args) -> int:
    sample = read_sample_csv(args.sample)
    model = fit_model(sample, Grid.uniform(args.grid_size), seed=args.seed)
    write_model_json(args.out, model)
    print(f"wrote {args.out} (K={model.n_components}, sigma2={model.sigma2:.4g})")
    return 0


def _cmd_depth(args) -> int:
    rows = run_single_depth(
        args.sample,
        args.model,
        args.evals,
        method=args.method,
        k=args.K,
        u=args.u,
        lam=getattr(args, "lambda"),
        l_target=args.L,
        seed=args.seed,
    )
    out = args.out_dir / args.out
    write_depth_csv(out, rows)
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def _cmd_rank_test(args) -> int:
    group0 = read_sample_csv(args.group0)
    group1 = read_sample_csv(args.group1)
    reg = None if args.method == "two_stage_thd" else RegularizationSpec.quantiles(args.u)
    request = DepthRequest(method=args.method, k=args.K, reg=reg, l_target=args.L, n_proj=args.L)
    result = depth_kw_test(group0, group1, request, alpha=args.alpha, seed=args.seed)
    payload = dataclasses.asdict(result)
    out = args.out_dir / args.out
    out.write_text(json.dumps(payload, indent=2))
    print(json.dumps(payload))
    return 0


def _experiment_config(args, experiment: str) -> ExperimentConfig:
    if args.config is not None:
        config = ExperimentConfig.from_yaml(args.config)
        if config.experiment != experiment:
            raise CrhdError(
                f"config is for {config.experiment!r}, expected {experiment!r}"
            )
        return config
    return ExperimentConfig(experiment=experiment, seed=args.seed)


def _cmd_rank_recovery(args) -> int:
    config = _experiment_config(args, "rank_recovery")
    t0 = time.perf_counter()
    table = run_rank_recovery(config, threads=args.threads)
    elapsed = time.perf_counter() - t0
    args.out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(args.out_dir / "rank_recovery.csv")
    write_manifest(args.out_dir / "manifest.json", config.to_dict(), {"total": elapsed})
    print(f"wrote {args.out_dir / 'rank_recovery.csv'} in {elapsed:.1f}s")
    return 0


def _cmd_size_power(args) -> int:
    config = _experiment_config(args, "size_power")
    t0 = time.perf_counter()
    table = run_size_power(config, threads=args.threads)
    elapsed = time.perf_counter() - t0
    args.out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(args.out_dir / "size_power.csv")
    write_manifest(args.out_dir / "manifest.json", config.to_dict(), {"total": elapsed})
    print(f"wrote {args.out_dir / 'size_power.csv'} in {elapsed:.1f}s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crhd", description="Conditional regularized halfspace depth toolkit"
    )
    parser.add_argument("--version", action="version", version=f"crhd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a sparse sample CSV")
    _common(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--decay-a", dest="decay_a", type=float, default=5.0)
    p.add_argument("--k-star", dest="k_star", type=int, default=15)
    p.add_argument("--mean-slope", dest="mean_slope", type=float, default=0.0)
    p.add_argument("--score-dist", dest="score_dist", default="nn",
                   choices=["gaussian", "nn", "uu"])
    p.add_argument("--error-dist", dest="error_dist", default="chi2",
                   choices=["normal", "chi2"])
    p.add_argument("--noise-var", dest="noise_var", type=float, default=0.1)
    p.add_argument("--grid-size", dest="grid_size", type=int, default=51)
    p.add_argument("--name", default="sample")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit a model from a sample CSV")
    _common(p)
    p.add_argument("sample", type=Path)
    p.add_argument("--grid-size", dest="grid_size", type=int, default=51)
    p.add_argument("--out", type=Path, default=Path("model.json"))
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("depth", help="evaluate depths of curves in a CSV")
    _common(p)
    p.add_argument("sample", type=Path)
    p.add_argument("model", type=Path)
    p.add_argument("evals", type=Path)
    p.add_argument("--method", required=True,
                   choices=["acrhd", "pcrhd", "two_stage_rhd", "two_stage_thd"])
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--u", type=float, default=None, help="quantile level in (0,1)")
    p.add_argument("--lambda", type=float, default=None, help="explicit regularization")
    p.add_argument("--L", type=int, default=None, help="accepted-direction target")
    p.add_argument("--out", default="depths.csv")
    p.set_defaults(func=_cmd_depth)

    p = sub.add_parser("rank-test", help="two-sample depth KW test")
    _common(p)
    p.add_argument("group0", type=Path)
    p.add_argument("group1", type=Path)
    p.add_argument("--method", default="acrhd",
                   choices=["acrhd", "pcrhd", "two_stage_rhd", "two_stage_thd"])
    p.add_argument("--K", type=int, default=6)
    p.add_argument("--u", type=float, default=0.95)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default="rank_test.json")
    p.set_defaults(func=_cmd_rank_test)

    p = sub.add_parser("rank-recovery", help="rank-recovery Monte Carlo study")
    _common(p)
    p.set_defaults(func=_cmd_rank_recovery)

    p = sub.add_parser("size-power", help="size/power Monte Carlo study")
    _common(p)
    p.set_defaults(func=_cmd_size_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "out_dir"):
        args.out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except CrhdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
