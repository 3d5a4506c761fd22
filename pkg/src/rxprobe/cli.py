"""Command-line entry point.

Every command takes ``--config PATH`` (JSON, see :mod:`rxprobe.config`),
``--seed N`` (overrides the config seed) and ``--output DIR`` (overrides the
run directory). Failures print a single ``error ...`` line to stderr and
exit with status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import RunConfig, load_config
from .pipeline import STEPS, run_pipeline


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON run configuration (defaults if omitted)")
    p.add_argument("--seed", type=int, metavar="N", help="global seed, overrides the config")
    p.add_argument("--output", metavar="DIR", help="run directory, overrides the config")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="rxprobe", description="Probe-based interpretation of a learned receiver.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    helps = {
        "simulate": "generate the link dataset",
        "train-performer": "train the receiver on the dataset",
        "dump-activations": "capture activations of every configured unit",
        "train-probe": "train one probe per unit on all instances",
        "interpret": "k-fold global and local interpretations per unit",
        "seed-sweep": "retrain probes on a fixed fold with different seeds",
        "contributions": "contribution tiers and intra-instance statistics",
        "nmi-baseline": "PCA + KSG normalised mutual information per unit",
        "dim-sweep": "NMI versus reduced dimension",
        "report": "write report.json and CSV tables",
    }
    for name in STEPS:
        _common(sub.add_parser(name, help=helps[name]))
    _common(sub.add_parser("pipeline", help="run every step in order"))
    return parser


def _one_line(text):
    return " ".join(str(text).split())


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ValueError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        if args.output:
            cfg = dataclasses.replace(cfg, output_dir=args.output)
        steps = tuple(STEPS) if args.command == "pipeline" else (args.command,)
        for path in run_pipeline(cfg, steps):
            print(path)
    except Exception as exc:
        print(f"error command={args.command} type={type(exc).__name__} message={_one_line(exc)!r}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
