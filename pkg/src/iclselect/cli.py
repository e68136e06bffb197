"""Command-line entry point.

Subcommands:
    run      execute an experiment from a TOML config (plus flag overrides)
    replay   recompute a finished run's aggregates from its persisted records
    inspect  print the prompt, scores, ambiguous set, and selection trace for
             one test example of a finished run
    embed    build a binary embedding store for a dataset with the built-in
             hashing embedder (convenience for synthetic experiments)

Exit codes: 0 success, 1 configuration error, 2 backend failure, 3 data error.
"""

from __future__ import annotations

import argparse
import sys

from iclselect.config import apply_overrides, load_config
from iclselect.errors import BackendError, ConfigError, DataError, IclSelectError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iclselect", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", required=True, help="TOML experiment configuration")
    run.add_argument("--strategy", action="append", default=None, help="override strategies (repeatable)")
    run.add_argument("--shots", action="append", type=int, default=None, help="override shot counts (repeatable)")
    run.add_argument("--seeds", default=None, help="override seeds, comma-separated (e.g. 0,1,2)")
    run.add_argument("--budget", type=int, default=None, help="override the candidate budget")
    run.add_argument("--order", choices=["shuffled", "entropy"], default=None, help="demo ordering policy")
    run.add_argument("--out", default=None, help="override the output directory")
    run.add_argument("--fail-fast", action="store_true", default=None, help="abort on the first example error")

    rep = sub.add_parser("replay", help="recompute aggregates for a finished run")
    rep.add_argument("--run", required=True, help="run directory")

    ins = sub.add_parser("inspect", help="show the full trace for one test example")
    ins.add_argument("--run", required=True, help="run directory")
    ins.add_argument("--example", required=True, help="test example id")

    emb = sub.add_parser("embed", help="build an embedding store with the hashing embedder")
    emb.add_argument("--dataset", required=True, help="dataset directory")
    emb.add_argument("--out", required=True, help="output store file")
    emb.add_argument("--dim", type=int, default=64, help="embedding dimensionality")
    return parser


def _cmd_run(args) -> int:
    from iclselect.runner import run_experiment

    config = load_config(args.config)
    seeds = tuple(int(s) for s in args.seeds.split(",")) if args.seeds else None
    config = apply_overrides(
        config,
        strategies=args.strategy,
        shots=args.shots,
        seeds=seeds,
        budget=args.budget,
        order=args.order,
        out=args.out,
        fail_fast=args.fail_fast,
    )
    result = run_experiment(config)
    print(f"run complete: {len(result.reports)} report cells written to {result.out_dir}")
    for report in result.reports:
        mean_f1 = report.mean["f1_macro"]
        entropy = report.mean["mean_entropy_bits"]
        entropy_text = f", entropy={entropy:.3f}" if entropy is not None else ""
        print(f"  {report.strategy}" + (f"-{report.n_shots}" if report.n_shots else "") + f": f1_macro={mean_f1:.4f}{entropy_text}")
    return 0


def _cmd_replay(args) -> int:
    from iclselect.runner import replay

    reports = replay(args.run)
    print(f"replay verified: {len(reports)} report cells match the persisted records")
    return 0


def _cmd_inspect(args) -> int:
    from iclselect.runner import inspect_example

    print(inspect_example(args.run, args.example))
    return 0


def _cmd_embed(args) -> int:
    from iclselect.corpus import load_dataset
    from iclselect.embeddings import HashingEmbedder, build_store_for_dataset, save_store

    dataset = load_dataset(args.dataset)
    store = build_store_for_dataset(dataset, HashingEmbedder(dim=args.dim))
    save_store(store, args.out)
    print(f"wrote {len(store)} vectors of dim {store.dim} to {args.out}")
    return 0


_COMMANDS = {"run": _cmd_run, "replay": _cmd_replay, "inspect": _cmd_inspect, "embed": _cmd_embed}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 2
    except (DataError, IclSelectError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
