"""Command-line driver.

::

    dbcs run --config exp.json --out results/
    dbcs synth --config exp.json --out work/      # then acquire, fit, ...
    dbcs export-csv work/model/D1.mat D1.csv

Stage subcommands (synth, acquire, fit, encode, reconstruct, classify,
report) read and write the ``--out`` directory, so a pipeline can be
re-run from any stage.  ``--threads`` (default 1) caps BLAS threads; values
above 1 may change results in the last bits.
"""

from __future__ import annotations

import argparse
import logging
import sys

from threadpoolctl import threadpool_limits

from . import __version__
from .config import ExperimentConfig, load_config
from .exceptions import DbcsError
from .pipeline import STAGES, export_csv, run, run_stage

logger = logging.getLogger("dbcs")


def _common(p):
    p.add_argument("--config", help="experiment JSON (defaults used when omitted)")
    p.add_argument("--out", help="output / working directory (overrides output_dir)")
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS threads; >1 gives up bit-exact reproducibility")
    p.add_argument("--verbose", "-v", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dbcs", description="Deep blind compressed sensing experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run every stage and write report.json"))
    for name in STAGES:
        _common(sub.add_parser(name, help=f"run only the {name} stage"))
    p = sub.add_parser("export-csv", help="convert a DBCS1 matrix file to CSV")
    p.add_argument("matrix")
    p.add_argument("csv")
    p.add_argument("--verbose", "-v", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "export-csv":
            export_csv(args.matrix, args.csv)
            return 0
        if args.threads < 1:
            raise DbcsError("--threads must be >= 1")
        cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
        out = args.out or cfg.output_dir
        with threadpool_limits(limits=args.threads):
            if args.command == "run":
                print(run(cfg, out))
            else:
                run_stage(args.command, cfg, out)
    except (DbcsError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
