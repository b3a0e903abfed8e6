"""Command-line entry point: ``twoscale-ma solve|converge|check``."""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, NonConvergenceError, TwoScaleError
from .harness import load_config, run_checks, run_convergence, run_single

USAGE_ERROR = 2
FAILURE = 1


def _levels(text):
    try:
        levels = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not levels:
        raise argparse.ArgumentTypeError("at least one level is required")
    return levels


def build_parser():
    p = argparse.ArgumentParser(prog="twoscale-ma",
                                description="Two-scale solver for Monge-Ampere type equations.")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the sample points used by error norms and checks")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one configured problem")
    s.add_argument("config")
    s.add_argument("-o", "--output", required=True, metavar="DIR")

    c = sub.add_parser("converge", help="run a convergence study")
    c.add_argument("config")
    c.add_argument("--levels", required=True, type=_levels, metavar="L1,L2,...")
    c.add_argument("-o", "--output", required=True, metavar="DIR")

    k = sub.add_parser("check", help="run the invariant suite on one problem")
    k.add_argument("config")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        if args.command == "solve":
            _, report, paths = run_single(cfg, args.output)
            print(f"wrote {paths['solution']} and {paths['report']} "
                  f"({report.sweeps_used} sweeps, residual {report.residual_inf:.3e})")
        elif args.command == "converge":
            rows, path = run_convergence(cfg, args.levels, args.output, seed=args.seed)
            for r in rows:
                print(f"level {r['level']}: err_inf = {r['err_inf']:.4e}, "
                      f"sweeps = {r['sweeps']}")
            print(f"wrote {path}")
        else:
            results = run_checks(cfg, seed=args.seed)
            for r in results:
                print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
            if not all(r.passed for r in results):
                return FAILURE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except NonConvergenceError as exc:
        rep = exc.report
        print(f"error: {exc} after {rep.sweeps_used} sweeps", file=sys.stderr)
        return FAILURE
    except TwoScaleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
