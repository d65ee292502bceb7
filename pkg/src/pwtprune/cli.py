"""Command line: ``pwtprune train | compare | cost``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
"""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ConfigError, load_config
from .data import DataFormatError
from .experiment import CompareError, TrainingDivergedError, compare, cost_spec_from_doc, cost_tables, run

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser():
    p = _Parser(prog="pwtprune", description="Filter pruning while training: runs, comparisons and cost tables.")
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--threads", type=_positive, default=1, help="BLAS threads (default 1)")

    t = sub.add_parser("train", help="train one JSON run config")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--out", type=Path, help="run directory (overrides out_dir)")
    t.add_argument("--seed", type=_u64, help="overrides the config seed")
    common(t)

    c = sub.add_parser("compare", help="overlay several run directories")
    c.add_argument("runs", nargs="+", type=Path)
    c.add_argument("--out", type=Path, required=True)
    common(c)

    k = sub.add_parser("cost", help="analytic op counts, savings and latency")
    k.add_argument("--config", type=Path, help="cost description or run config (JSON)")
    k.add_argument("--out", type=Path, help="directory for cost.csv and projections.csv (default stdout)")
    k.add_argument("--n", type=int, help="nominal training epochs")
    k.add_argument("--m", type=int, help="retraining epochs")
    k.add_argument("--target-rate", type=float, help="final pruned fraction in [0, 1)")
    k.add_argument("--b", type=float, help="mini-batches per epoch")
    k.add_argument("--t-batch", type=float, help="seconds per mini-batch")
    k.add_argument("--t-l1norm", type=float, help="seconds per L1 scan")
    k.add_argument("--batch", type=int, help="images per op-count row (default from file, else 1)")
    common(k)
    return p


def _train(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    out = args.out or (Path(cfg.out_dir) if cfg.out_dir else None)
    if out is None:
        raise ConfigError("no output directory: pass --out or set out_dir")
    result = run(cfg, out)
    last = result.rows[-1]
    print(f"{out}: {len(result.rows)} epochs, test accuracy {last.test_accuracy:.2f}%, "
          f"pruned {last.pruned_filter_pct:.2f}%")


def _compare(args):
    summary = compare(args.runs, args.out)
    for s in summary:
        print(f"{s['run']}: final accuracy {s['final_test_accuracy']:.2f}%, "
              f"pruned {s['final_pruned_filter_pct']:.2f}%, MACs {s['total_executed_macs']}")


def _cost(args):
    if args.config is None:
        doc = {"input": {"channels": 1, "side": 1}, "architecture": []}
    else:
        try:
            doc = json.loads(args.config.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    spec = cost_spec_from_doc(doc)
    try:
        rows, proj, _ = cost_tables(spec, n=args.n, m=args.m, target_rate=args.target_rate, b=args.b,
                                    t_batch=args.t_batch, t_l1norm=args.t_l1norm, batch=args.batch)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        for name, table in (("cost.csv", rows), ("projections.csv", proj)):
            with open(args.out / name, "w", newline="") as f:
                csv.writer(f, lineterminator="\n").writerows(table)
        print(f"wrote {args.out / 'cost.csv'} and {args.out / 'projections.csv'}")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerows(rows)
        print()
        w.writerows(proj)


COMMANDS = {"train": _train, "compare": _compare, "cost": _cost}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, CompareError, DataFormatError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
