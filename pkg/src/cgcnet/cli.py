"""
Command line entry point.

    cgcnet run      --config exp.yaml --out runs/c --jobs 2
    cgcnet generate --config exp.yaml --out runs/c
    cgcnet discover --config exp.yaml --out runs/c
    cgcnet discover --csv jobs.csv --runs 10 --out graphs/
    cgcnet train    --config exp.yaml --out runs/c
    cgcnet evaluate --config exp.yaml --out runs/c
    cgcnet report   --out runs/c

Exit codes: 0 success, 1 other errors, 2 configuration error,
3 every replication failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, experiment, graph

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgcnet", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def staged(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
        sp.add_argument("--seed", type=int, help="override the config's master seed")
        sp.add_argument("--jobs", type=int, default=1)
        return sp

    staged("run", "run every stage")
    staged("generate", "write train/val/test splits per replication")
    staged("train", "train every configured model")
    staged("evaluate", "compute metrics and the raw report")

    d = sub.add_parser("discover", help="discover graphs (pipeline or standalone)")
    d.add_argument("--config", type=Path)
    d.add_argument("--out", required=True, type=Path)
    d.add_argument("--seed", type=int)
    d.add_argument("--jobs", type=int, default=1)
    d.add_argument("--csv", type=Path, help="standalone: discover on this file")
    d.add_argument("--runs", type=int, default=10)
    d.add_argument("--treatment", default="t")
    d.add_argument("--outcome", default="y")
    d.add_argument("--exp-column", default=None, help="experimental-flag column to exclude from covariates")
    d.add_argument("--ratios", type=float, nargs=3, default=(0.62, 0.18, 0.20))
    d.add_argument("--prune-threshold", type=float, default=0.1)

    r = sub.add_parser("report", help="aggregate raw reports into tables")
    r.add_argument("--out", required=True, type=Path)
    return p


def _config(args) -> experiment.ExperimentConfig:
    cfg = experiment.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "report":
            print(experiment.stage_report(args.out))
            return EXIT_OK
        if args.command == "discover" and args.csv is not None:
            schema = bench.CsvSchema(t=args.treatment, y=args.outcome, exp=args.exp_column)
            ds = bench.load_csv(args.csv, schema)
            mode = experiment.discover_mode_graph(
                ds, args.runs, args.out, seed=args.seed or 0, ratios=args.ratios,
                treatment=args.treatment, outcome=args.outcome, prune_threshold=args.prune_threshold,
            )
            sys.stdout.write(graph.dumps(mode))
            return EXIT_OK
        if args.command == "discover" and args.config is None:
            print("cgcnet discover: pass --config or --csv", file=sys.stderr)
            return EXIT_CONFIG
        cfg = _config(args)
        stage = {
            "run": experiment.run_experiment,
            "generate": experiment.stage_generate,
            "discover": experiment.stage_discover,
            "train": experiment.stage_train,
            "evaluate": experiment.stage_evaluate,
        }[args.command]
        result = stage(cfg, args.out, args.jobs)
        if result is not None:
            print(result)
        return EXIT_OK
    except experiment.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except experiment.AllReplicationsFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except (experiment.MissingInputError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
