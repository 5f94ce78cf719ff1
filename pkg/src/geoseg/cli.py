"""Command line: ``geoseg <command> --config <path> [--seed n] [--stride n]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import GeosegError
from .pipeline import STAGE_FUNCS, load_config, run_all, run_sweep
from .pipeline.stages import run_infer

COMMANDS = tuple(STAGE_FUNCS) + ("run-all", "sweep")


def build_parser():
    p = argparse.ArgumentParser(prog="geoseg", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="pipeline config file")
    p.add_argument("--seed", type=int, help="override train.seed and svm.seed")
    p.add_argument("--stride", type=int, help="override infer.stride")
    p.add_argument("--patch-sizes", help="sweep: patch sizes, e.g. '34 70 100'")
    p.add_argument("--kernel-sizes", help="sweep: kernel sizes, e.g. '5 7 9'")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            if args.seed < 0:
                raise GeosegError("--seed must be >= 0")
            overrides.update({"train.seed": args.seed, "svm.seed": args.seed})
        if args.stride is not None:
            overrides["infer.stride"] = args.stride
        if overrides:
            cfg = cfg.with_overrides(**overrides)
        if args.command == "run-all":
            run_all(cfg)
            print((cfg.run_dir / "summary.txt").read_text(), end="")
        elif args.command == "sweep":
            ps = [int(v) for v in args.patch_sizes.split()] if args.patch_sizes else None
            ks = [int(v) for v in args.kernel_sizes.split()] if args.kernel_sizes else None
            run_sweep(cfg, ps, ks)
            print((cfg.run_dir / "sweep" / "sweep.txt").read_text(), end="")
        elif args.command == "infer":
            run_infer(cfg)
        elif args.command == "evaluate":
            STAGE_FUNCS["evaluate"](cfg)
            print((cfg.run_dir / "reports" / "report.txt").read_text(), end="")
        else:
            STAGE_FUNCS[args.command](cfg)
    except GeosegError as exc:
        print(f"geoseg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
