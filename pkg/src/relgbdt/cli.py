"""Command-line front end: ``relgbdt <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import boosting
from .attention import prop_block
from .data import read_instance_dir, read_schema, validate_instance, write_instance_dir, write_schema
from .evaluation import cross_validate
from .flatten import flatten
from .importance import importance_report, report_csv
from .schedule import DEFAULT_COVER_COUNT, build_schedule
from .synthetic import SynthConfig, generate
from .tree import TreeConfig

log = logging.getLogger("relgbdt")


class CLIError(Exception):
    pass


def _load(schema_path, data_dir):
    schema = read_schema(schema_path)
    instance = read_instance_dir(schema, data_dir)
    report = validate_instance(schema, instance)
    if not report.ok:
        raise CLIError(f"invalid instance in {data_dir}:\n{report}")
    return schema, instance


def _add_training_args(p):
    p.add_argument("--loss", choices=sorted(boosting.LOSS_ALIASES), default=None,
                   help="default: derived from the label's task")
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--sampling", type=float, default=0.2, help="feature sampling ratio per tree node")
    p.add_argument("--cover-count", type=int, default=DEFAULT_COVER_COUNT)
    p.add_argument("--seed", type=int, default=0)


def _training_kwargs(args) -> dict:
    return dict(
        loss=args.loss,
        shrinkage=args.shrinkage,
        iterations=args.iterations,
        tree_config=TreeConfig(args.max_depth, args.min_leaf, args.sampling, args.seed),
        cover_count=args.cover_count,
    )


def cmd_train(args) -> int:
    schema, instance = _load(args.schema, args.data)
    valid = None
    if args.valid:
        valid = read_instance_dir(schema, args.valid)
    model = boosting.train(schema, instance, seed=args.seed, valid=valid, **_training_kwargs(args))
    model.save(args.out)
    model.write_log(args.log or f"{args.out}.log.csv")
    print(f"wrote {args.out} ({model.iterations} iterations)")
    return 0


def cmd_evaluate(args) -> int:
    schema, instance = _load(args.schema, args.data)
    if args.folds:
        res = cross_validate(schema, instance, args.folds, args.seed, **_training_kwargs(args))
        print(f"{res['metric']} {res['mean']:.6f} +- {res['std']:.6f} ({args.folds} folds, n={res['n']})")
        return 0
    if not args.model:
        raise CLIError("--model is required unless --folds is given")
    model = boosting.StrongModel.load(args.model)
    res = boosting.evaluate(model, instance)
    name = next(iter(res))
    print(f"{name} {res[name]:.6f} (n={res['n']})")
    return 0


def cmd_synth_gen(args) -> int:
    instance = generate(SynthConfig(args.n_a, args.seed, args.regression))
    os.makedirs(args.out_dir, exist_ok=True)
    write_schema(instance.schema, os.path.join(args.out_dir, "schema.json"))
    write_instance_dir(instance, args.out_dir)
    return 0


def cmd_flatten(args) -> int:
    schema, instance = _load(args.schema, args.data)
    flat = flatten(instance, build_schedule(schema, args.cover_count))
    os.makedirs(args.out, exist_ok=True)
    write_schema(flat.schema, os.path.join(args.out, "schema.json"))
    write_instance_dir(flat, args.out)
    return 0


def cmd_importance(args) -> int:
    model = boosting.StrongModel.load(args.model)
    schema = read_schema(args.schema) if args.schema else None
    text = report_csv(importance_report(model, schema))
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_inspect(args) -> int:
    schema = read_schema(args.schema)
    if args.model:
        schedule = boosting.StrongModel.load(args.model).schedule
    else:
        schedule = build_schedule(schema, args.cover_count)
    if args.features:
        if not args.data:
            raise CLIError("--features needs --data")
        instance = read_instance_dir(schema, args.data)
        node = args.node or schedule.root
        if schedule.is_leaf(node):
            block = prop_block(schedule, node, instance)
        else:
            if not args.model:
                raise CLIError("--features on a non-leaf node needs --model for child predictions")
            model = boosting.StrongModel.load(args.model)
            if not 1 <= args.iteration <= model.iterations:
                raise CLIError(f"--iteration must be in 1..{model.iterations}")
            trees = {nid: pair[1] for nid, pair in model.trees[args.iteration - 1][args.klass].items()}
            cascade = boosting._Cascade(schedule, instance)
            preds, blocks = cascade.backward_inference(trees)
            block = blocks[node]
        _write_block_csv(block, instance.table(schedule.table_of(node)).ids, sys.stdout)
        return 0
    print(schedule.render())
    return 0


def _write_block_csv(block, ids, out):
    import csv

    w = csv.writer(out, lineterminator="\n")
    w.writerow(["id"] + block.names)
    cols = block.columns
    for i, rid in enumerate(ids):
        row = [rid]
        for c in cols:
            v = c.values[i]
            if c.kind == "numerical":
                row.append("" if np.isnan(v) else repr(float(v)))
            else:
                row.append("" if v is None else v)
        w.writerow(row)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relgbdt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True, help="directory with one <table>.csv per table")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.add_argument("--valid", help="validation data directory")
    _add_training_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model, or cross-validate with --folds")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--folds", type=int, default=0)
    _add_training_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth-gen", help="generate the synthetic benchmark")
    p.add_argument("--n-a", type=int, default=7168)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--regression", action="store_true", help="emit max grandchild p'' - p as a regression target")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("flatten", help="propositionalize into a single table")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cover-count", type=int, default=DEFAULT_COVER_COUNT)
    p.set_defaults(func=cmd_flatten)

    p = sub.add_parser("importance", help="minimal-depth variable importance per node")
    p.add_argument("--model", required=True)
    p.add_argument("--schema", help="list unused columns too (importance 0)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("inspect", help="print the schedule or dump a node's feature block")
    p.add_argument("--schema", required=True)
    p.add_argument("--schedule", action="store_true", help="print the schedule tree (default)")
    p.add_argument("--features", action="store_true", help="dump a node's input block as CSV")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--node")
    p.add_argument("--iteration", type=int, default=1)
    p.add_argument("--class", dest="klass", type=int, default=0)
    p.add_argument("--cover-count", type=int, default=DEFAULT_COVER_COUNT)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, ValueError, KeyError, OSError) as exc:
        print(f"relgbdt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
