"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .driver import OptimizationError, export_results, run_optimization
from .mesh import SolveError
from .verify import verify_gradients

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="jointopt",
                     description="Topology and fastener layout optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="run an optimization")
    opt.add_argument("--config", required=True, help="JSON problem definition")
    opt.add_argument("--out", required=True, help="output directory")
    opt.add_argument("--iterations", type=int, default=None,
                     help="override the configured iteration count")
    opt.add_argument("--failure-mode", type=int, default=None,
                     help="override the fail-safe failure mode")
    opt.add_argument("--formats", default="pgm,csv,png",
                     help="comma list of output formats (pgm,csv,png)")
    opt.add_argument("--quiet", action="store_true")

    chk = sub.add_parser("check-gradients",
                         help="finite-difference check of all gradients")
    chk.add_argument("--config", required=True)
    chk.add_argument("--samples", type=int, default=8,
                     help="number of density entries to sample")
    chk.add_argument("--step", type=float, default=None,
                     help="FD step for all families (default 1e-5 densities, "
                          "1e-6 positions)")
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--quiet", action="store_true")
    return parser


def _cmd_optimize(args) -> int:
    config = load_config(args.config)
    if args.iterations is not None:
        config.schedule.iterations = args.iterations
        config.resolved.setdefault("schedule", {})["iterations"] = args.iterations
    if args.failure_mode is not None:
        config.objective.kind = "failsafe"
        config.objective.failure_mode = args.failure_mode
        config.resolved.setdefault("objective", {}).update(
            {"kind": "failsafe", "failure_mode": args.failure_mode}
        )
    out = Path(args.out)
    try:
        result = run_optimization(config)
    except OptimizationError as exc:
        out.mkdir(parents=True, exist_ok=True)
        import json

        (out / "diagnostics.json").write_text(json.dumps(exc.diagnostics, indent=2))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except SolveError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    written = export_results(result, out, formats)
    print(f"final compliance {result.final_compliance:.6g}")
    for row in result.final_constraints:
        print(f"constraint {row.name}: {row.value:+.6g}")
    print(f"wrote {len(written)} files to {out}")
    return 0


def _cmd_check_gradients(args) -> int:
    config = load_config(args.config)
    rho_step = args.step if args.step is not None else 1e-5
    x_step = args.step if args.step is not None else 1e-6
    try:
        report = verify_gradients(
            config,
            samples=args.samples,
            rho_step=rho_step,
            x_step=x_step,
            seed=args.seed,
        )
    except SolveError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    print(report.summary())
    if not report.passed:
        print("gradient check FAILED", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "optimize":
            return _cmd_optimize(args)
        return _cmd_check_gradients(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
