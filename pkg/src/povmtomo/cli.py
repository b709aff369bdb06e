"""Command-line entry point.

Subcommands:
    gen-data    sample a synthetic measurement dataset from an exact state
    train       fit a generative model to a dataset, checkpoint + metrics
    eval        score a checkpoint against the exact reference
    sweep       sample-complexity sweep N_s*(N) with a linear fit
    reconstruct invert a model or dataset into a dense density matrix

Every command takes --config (JSON, see povmtomo.config), --out, and an
optional --seed override; re-running with identical config and seed
reproduces outputs byte for byte.
"""

import argparse
import sys

from . import harness
from .config import ExperimentConfig
from .errors import PovmtomoError


def _add_common(p):
    p.add_argument("--config", required=True, help="path to the JSON experiment config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="povmtomo", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic measurement dataset")
    _add_common(p)

    p = sub.add_parser("train", help="train a model on a dataset")
    _add_common(p)
    p.add_argument("--data", required=True, help="path to the dataset file")

    p = sub.add_parser("eval", help="evaluate a checkpoint against the exact state")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="path to the model checkpoint")

    p = sub.add_parser("sweep", help="sample-complexity sweep over (N, N_s)")
    _add_common(p)
    p.add_argument("--threads", type=int, default=1, help="parallel workers over N values")

    p = sub.add_parser("reconstruct", help="dense density-matrix reconstruction")
    _add_common(p)
    p.add_argument("--source", required=True, help="checkpoint (.ckpt) or dataset file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.load(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.command == "gen-data":
            path = harness.cmd_gen_data(config, args.out)
            print(path)
        elif args.command == "train":
            ckpt, metrics = harness.cmd_train(config, args.data, args.out)
            print(ckpt)
            print(metrics)
        elif args.command == "eval":
            metrics, corr = harness.cmd_eval(config, args.checkpoint, args.out)
            print(metrics)
            if corr:
                print(corr)
        elif args.command == "sweep":
            cells, summary, _, fit = harness.cmd_sweep(config, args.out, threads=args.threads)
            print(cells)
            print(summary)
            print(f"fit: slope={fit[0]:.3f} intercept={fit[1]:.3f} r={fit[2]:.4f}")
        elif args.command == "reconstruct":
            blob, diag = harness.cmd_reconstruct(config, args.source, args.out)
            print(blob)
            print(
                f"diagnostics: trace_dev={diag.trace_deviation:.3e} "
                f"herm_dev={diag.hermiticity_deviation:.3e} "
                f"min_eig={diag.min_eigenvalue:.3e} negativity={diag.negativity:.3e}"
            )
    except (PovmtomoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
