"""Command-line interface: run one scenario, sweep a grid, pivot results,
or print the malicious-exposure distribution."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import yaml

from .config import ConfigError, config_from_dict, parse_config
from .engine import Simulation
from .sweep import SweepGrid, render_table, run_sweep
from .topology import malicious_exposure_pmf


def _load_sweep_file(path: str) -> SweepGrid:
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict) or "base" not in raw:
        raise ConfigError("<file>", "sweep file needs a 'base' mapping (and optional 'axes')")
    axes = raw.get("axes", {})
    if not isinstance(axes, dict):
        raise ConfigError("axes", "must be a mapping of axis name to value list")
    base = config_from_dict(raw["base"], base_dir=os.path.dirname(os.path.abspath(path)))
    return SweepGrid(base=base, axes={str(k): list(v) for k, v in axes.items()})


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.subsample is not None:
        cfg = replace(cfg, dataset=replace(cfg.dataset, subsample=args.subsample))
    if args.parallel is not None:
        cfg = replace(cfg, workers=args.parallel)
    sim = Simulation(cfg)
    sim.run()
    rows = sim.metric_rows()
    out = args.out
    if out:
        grid = SweepGrid(base=cfg)
        run_sweep(grid, out, overwrite=args.overwrite)
        print(f"wrote {out}")
    for row in rows:
        print(f"round {row.round_index:3d}  {row.metric:>14s}  {row.value:.4f}")
    if not rows:
        print("no rounds executed")
    return 0


def _cmd_sweep(args) -> int:
    grid = _load_sweep_file(args.config)
    if args.seed is not None:
        grid = SweepGrid(base=replace(grid.base, master_seed=args.seed), axes=grid.axes)
    if args.subsample is not None:
        grid = SweepGrid(base=replace(grid.base,
                                      dataset=replace(grid.base.dataset,
                                                      subsample=args.subsample)),
                         axes=grid.axes)
    configs = run_sweep(grid, args.out, parallel_scenarios=args.parallel,
                        overwrite=args.overwrite)
    print(f"ran {len(configs)} scenarios -> {args.out}")
    return 0


def _cmd_table(args) -> int:
    text = render_table(args.results, metric=args.metric, row_axis=args.rows,
                        col_axis=args.cols)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_exposure(args) -> int:
    pmf = malicious_exposure_pmf(args.nodes, args.malicious, args.degree)
    print(f"P(X=x) for a benign node with degree {args.degree} among "
          f"{args.nodes} nodes ({args.malicious} malicious):")
    for x, p in enumerate(pmf):
        print(f"  x={x:2d}  {p:.6f}")
    print(f"  E[X] = {sum(x * p for x, p in enumerate(pmf)):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dflsim",
                                     description="Poisoning-robustness benchmark "
                                                 "harness for decentralized FL")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single scenario config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="optional results CSV path")
    p_run.add_argument("--seed", type=int, help="override master_seed")
    p_run.add_argument("--subsample", type=float, help="override dataset.subsample")
    p_run.add_argument("--parallel", type=int, help="worker threads inside the scenario")
    p_run.add_argument("--overwrite", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a base-config x axes grid")
    p_sweep.add_argument("--config", required=True, help="sweep file with base + axes")
    p_sweep.add_argument("--out", required=True, help="results CSV path")
    p_sweep.add_argument("--parallel", type=int, default=1,
                         help="scenarios to run concurrently")
    p_sweep.add_argument("--seed", type=int, help="override base master_seed")
    p_sweep.add_argument("--subsample", type=float, help="override dataset.subsample")
    p_sweep.add_argument("--overwrite", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_table = sub.add_parser("table", help="pivot a results CSV")
    p_table.add_argument("--results", required=True)
    p_table.add_argument("--metric", default="f1_benign_avg")
    p_table.add_argument("--rows", default="aggregator")
    p_table.add_argument("--cols", default="pnr")
    p_table.add_argument("--out", help="write the pivot here instead of stdout")
    p_table.set_defaults(func=_cmd_table)

    p_exp = sub.add_parser("exposure", help="hypergeometric malicious-exposure PMF")
    p_exp.add_argument("--nodes", type=int, required=True)
    p_exp.add_argument("--malicious", type=int, required=True)
    p_exp.add_argument("--degree", type=int, required=True)
    p_exp.set_defaults(func=_cmd_exposure)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, FileExistsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
