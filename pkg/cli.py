"""
Command-line driver for the localization engine.

    python cli.py print-config > run.json
    python cli.py simulate --config run.json --out out
    python cli.py run --config run.json --out out --threads 8
    python cli.py evaluate out/estimate.csv out/ground_truth.csv --out out
    python cli.py bench --config run.json --steps 200
    python cli.py sweep --config run.json --seeds 0 1 2 --occlusion 0 0.3 --out sweep

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 degenerate filter.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from core.config import settings
from core.exceptions import ConfigError, LocalizationError
from core.logging_config import configure_logging
from models.run_models import RunConfig
from services.run_service import LocalizationRunService, dump_run_config, load_run_config

logger = logging.getLogger("cli")


class _Parser(argparse.ArgumentParser):
    """Argument parser reporting usage errors with exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seeded(config: RunConfig, seed: int) -> RunConfig:
    try:
        return config.with_seed(seed)
    except ValidationError as e:
        raise ConfigError(f"--seed {seed}: {e.errors()[0]['msg']}") from e


def _resolve_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else RunConfig.default()
    if args.seed is not None:
        config = _seeded(config, args.seed)
    if getattr(args, "prediction_only", False):
        config = config.model_copy(update={"prediction_only": True})
    return config


def _service(args, config: Optional[RunConfig] = None) -> LocalizationRunService:
    out = args.out or (config.output_dir if config is not None else settings.output_dir)
    threads = args.threads if args.threads is not None else settings.threads
    return LocalizationRunService(out, threads=threads)


def cmd_print_config(args) -> int:
    config = RunConfig.default() if args.seed is None else _seeded(RunConfig.default(), args.seed)
    sys.stdout.write(dump_run_config(config))
    return 0


def cmd_simulate(args) -> int:
    config = _resolve_config(args)
    service = _service(args, config)
    service.simulate(config)
    print(f"wrote simulation artifacts to {service.output_dir}")
    return 0


def cmd_run(args) -> int:
    config = _resolve_config(args)
    service = _service(args, config)
    summary = service.run(config)
    print(f"ATE: {summary.ate:.3f} m (dead reckoning {summary.dead_reckoning_ate:.3f} m)")
    print(f"estimate: {summary.estimate_path}")
    return 0


def cmd_evaluate(args) -> int:
    service = _service(args)
    report = service.evaluate(args.estimate, args.ground_truth, n_bins=args.bins)
    print(f"ATE: {report.ate:.3f} m")
    print(f"heading error: {report.heading_error_mean:.4f} rad")
    return 0


def cmd_bench(args) -> int:
    config = _resolve_config(args)
    service = _service(args, config)
    rows = service.bench(config, steps=args.steps)
    for row in rows:
        line = f"{row.phase:>14}  median {row.median_ms:8.2f} ms  p95 {row.p95_ms:8.2f} ms"
        if row.budget_ms is not None:
            line += f"  budget {row.budget_ms:.0f} ms ({'ok' if row.within_budget else 'over'})"
        print(line)
    return 0


def cmd_sweep(args) -> int:
    config = _resolve_config(args)
    service = _service(args, config)
    table = service.sweep(config, args.seeds, args.occlusion)
    for row in table[table["run"] == "mean"].itertuples():
        print(f"{row.group}: ATE {row.ate:.3f} m, dead reckoning {row.baseline_ate:.3f} m")
    print(f"summary: {service.path('summary.csv')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration JSON")
    common.add_argument("--seed", type=int, help="override every RNG seed in the config")
    common.add_argument("--threads", type=int, help="per-particle worker threads (default: all cores)")
    common.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    common.add_argument("--log-level", default=None, help="logging level (default: BEVPF_LOG or INFO)")

    parser = _Parser(prog="cli.py", description="Cross-view particle filter localization")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("print-config", parents=[common], help="print the default configuration").set_defaults(
        handler=cmd_print_config
    )
    subparsers.add_parser("simulate", parents=[common], help="generate world, trajectory and odometry").set_defaults(
        handler=cmd_simulate
    )

    run = subparsers.add_parser("run", parents=[common], help="run the filter over simulated or supplied inputs")
    run.add_argument("--prediction-only", action="store_true", help="ignore observations (dead-reckoning ensemble)")
    run.set_defaults(handler=cmd_run)

    evaluate = subparsers.add_parser("evaluate", parents=[common], help="ATE and error CDF of an estimate")
    evaluate.add_argument("estimate", type=Path)
    evaluate.add_argument("ground_truth", type=Path)
    evaluate.add_argument("--bins", type=int, default=50, help="CDF thresholds")
    evaluate.set_defaults(handler=cmd_evaluate)

    bench = subparsers.add_parser("bench", parents=[common], help="per-phase latency report")
    bench.add_argument("--steps", type=int, help="override bench_steps")
    bench.set_defaults(handler=cmd_bench)

    sweep = subparsers.add_parser("sweep", parents=[common], help="simulate and run several seeds, write summary.csv")
    sweep.add_argument("--seeds", type=int, nargs="+", required=True, help="seeds to run")
    sweep.add_argument("--occlusion", type=float, nargs="+", default=[0.0], help="occlusion fractions (one group each)")
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except LocalizationError as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
