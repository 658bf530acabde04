"""Command-line entry point ``oirs-sim``."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .errors import ConfigError
from .experiments import EXPERIMENTS, RunOptions, run_experiment, write_result
from .scenario import Scenario, load_scenario

log = logging.getLogger("oirssim")

U64_MAX = 2 ** 64 - 1


def _u64(text: str) -> int:
    try:
        val = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= val <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return val


def _positive_int(text: str) -> int:
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return val


def _positive_float(text: str) -> float:
    val = float(text)
    if not val > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return val


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("expected nonnegative values")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="oirs-sim",
        description="Simulate OIRS-assisted visible light channels: coherence, codebooks and estimation.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="scenario JSON; omitted fields come from its preset "
                                    "(default: the built-in paper-siso preset)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=_u64, default=0, help="base seed (unsigned 64-bit)")
    p.add_argument("--spacing", type=_positive_int, action="append",
                   help="subarray size s; repeat for several")
    p.add_argument("--sigma", type=_float_list,
                   help="comma-separated noise levels relative to the rms channel gain")
    p.add_argument("--radius", type=_positive_float, help="sweep radius in meters")
    p.add_argument("--seeds", type=_positive_int, help="Monte Carlo trials per point")
    p.add_argument("--grid-spacing", type=_positive_float,
                   help="floor grid spacing for codebook error norms (m)")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = load_scenario(args.config) if args.config else Scenario.preset("paper-siso")
        opts = RunOptions(seed=args.seed, spacing=tuple(args.spacing) if args.spacing else None,
                          sigma=args.sigma, radius=args.radius, seeds=args.seeds,
                          grid_spacing=args.grid_spacing)
        if args.radius is not None:
            sc = sc.with_overrides(radius=args.radius)
        t0 = time.perf_counter()
        result = run_experiment(args.experiment, sc, opts)
        elapsed = time.perf_counter() - t0
    except ConfigError as exc:
        print(f"oirs-sim: configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"oirs-sim: {exc}", file=sys.stderr)
        return 1
    figures = []
    if not args.no_plots:
        from .plotting import render

        figures = render(result, args.out)
    manifest = write_result(result, sc, args.out, args.seed, elapsed, figures)
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
