"""Command line: ``mhd eos-check|simulate|relent|dmv-audit|kp-check <cfg>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .config import RunConfig
from .errors import MHDError
from .io import _jsonable

log = logging.getLogger("dmvmhd")


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent jobs")
    common.add_argument("--out", default=None, help="output directory (default: config 'out')")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="mhd", description="MHD solver and measure-valued / relative-energy diagnostics")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("eos-check", parents=[common], help="thermodynamic consistency report")
    sub.add_parser("simulate", parents=[common], help="run the configured scenario, write CSV and snapshots")
    r = sub.add_parser("relent", parents=[common], help="relative energy against a reference, amplitude sweep")
    r.add_argument("--reference", choices=("equilibrium", "fine"), default="equilibrium")
    d = sub.add_parser("dmv-audit", parents=[common], help="audit an ensemble against the measure-valued formulation")
    d.add_argument("--ensemble", type=int, default=None, help="ensemble size (default: config 'ensemble')")
    k = sub.add_parser("kp-check", parents=[common], help="Korn-Poincare ratio sweep at two resolutions")
    k.add_argument("--sweep", type=int, default=100, help="number of random fields")
    return p


def _emit(report: dict):
    print(json.dumps(_jsonable(report), indent=2, sort_keys=True))


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.out is not None:
            changes["out"] = args.out
        if changes:
            cfg = cfg.replace(**changes)
        out, threads = cfg.out, max(1, args.threads)
        if args.command == "eos-check":
            report = ex.eos_check(cfg, out=out)
            ok = report["passed"]
        elif args.command == "simulate":
            report = ex.simulate(cfg, out=out, threads=threads).report
            ok = True
        elif args.command == "relent":
            report, _ = ex.relent(cfg, reference=args.reference, out=out, threads=threads)
            ok = True
        elif args.command == "dmv-audit":
            report = ex.dmv_audit(cfg, n=args.ensemble, out=out, threads=threads).summary
            ok = report["passed"]
        else:
            report = ex.kp_check(cfg, n=args.sweep, out=out, threads=threads)
            ok = report["passed"]
    except (MHDError, OSError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    _emit(report)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
