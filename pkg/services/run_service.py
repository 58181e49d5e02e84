"""
Run orchestration behind the CLI and the API: simulate artifacts, run the
filter over them, evaluate estimates and benchmark per-phase latency.

Artifact layout inside the output directory:
    config.json          resolved run configuration
    world.bpfm           aerial feature container
    ground_truth.csv     t,x,y,theta
    odometry.csv         t,x,y,theta; row k is the motion ending at frame k + 1
    estimate.csv         filter mean pose per frame
    dead_reckoning.csv   odometry chained from the initial pose
    diagnostics.csv      per-step ESS, resample flag and score statistics
    particles.csv        final particle set with log-weights
    cdf.csv / bench.csv  evaluate / bench outputs
    summary.csv          sweep output, next to one subdirectory per run
"""

import json
import logging
import os
import time
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core.exceptions import AssociationError, ConfigError, DataError
from models.filter_models import FilterState
from models.geometry_models import Pose2
from models.map_models import ConfidenceMap, FeatureMap
from models.run_models import BenchRow, EvaluationReport, RunConfig, RunSummary, TrajectoryRecord
from services import particle_filter as pf
from services.evaluation import (
    ate_rmse,
    error_cdf,
    error_series,
    heading_error_mean,
    improvement_ratio,
    read_trajectory_csv,
    summarize_runs,
    write_cdf_csv,
    write_csv,
    write_trajectory_csv,
)
from services.grid_maps import l2_normalize, load_confidence, load_container, save_container
from services.se2_geometry import compose, dead_reckon
from services.simulator import (
    ODOMETRY_STREAM,
    generate_odometry,
    generate_trajectory,
    generate_world,
    make_rng,
    observation_stream,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

WORLD_FILE = "world.bpfm"
GROUND_TRUTH_FILE = "ground_truth.csv"
ODOMETRY_FILE = "odometry.csv"
ESTIMATE_FILE = "estimate.csv"
DEAD_RECKONING_FILE = "dead_reckoning.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
CDF_FILE = "cdf.csv"
BENCH_FILE = "bench.csv"
CONFIG_FILE = "config.json"
SUMMARY_FILE = "summary.csv"
PARTICLES_FILE = "particles.csv"

# full filter step at the default configuration (10 Hz)
STEP_BUDGET_MS = 100.0


def _format_location(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    """Validate a JSON config document, naming the offending line or field on failure."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        problems = "; ".join(f"{_format_location(err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"{source}: {problems}") from e


def load_run_config(path: PathLike) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    return parse_run_config(path.read_text(encoding="utf-8"), str(path))


def dump_run_config(config: RunConfig) -> str:
    return config.model_dump_json(indent=2) + "\n"


class LocalizationRunService:
    """Service running simulations, filter runs, evaluations and benchmarks in one output directory"""

    def __init__(self, output_dir: PathLike, threads: int = 1):
        self.output_dir = Path(output_dir)
        self.threads = max(1, int(threads))
        self._ensure_output_directory()

    def _ensure_output_directory(self):
        """Ensure output directory exists"""
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    # Simulation

    def simulate(self, config: RunConfig) -> TrajectoryRecord:
        """Write world, ground truth and odometry; byte-identical for identical configs."""
        start_time = time.perf_counter()
        world = generate_world(config.world)
        save_container(world, self.path(WORLD_FILE))

        gt = generate_trajectory(world, config.trajectory)
        odometry = generate_odometry(
            gt.poses, config.odometry_noise, make_rng(config.trajectory.seed, ODOMETRY_STREAM)
        )
        write_trajectory_csv(gt, self.path(GROUND_TRUTH_FILE))
        write_trajectory_csv(TrajectoryRecord(timestamps=gt.timestamps[1:], poses=odometry), self.path(ODOMETRY_FILE))
        self.path(CONFIG_FILE).write_text(dump_run_config(config), encoding="utf-8")

        logger.info(
            "simulated %d poses into %s in %.3fs", len(gt), self.output_dir, time.perf_counter() - start_time
        )
        return gt

    # Filter run

    def _input_path(self, configured: Optional[str], default_name: str) -> Path:
        path = Path(configured) if configured else self.path(default_name)
        if not path.is_file():
            raise DataError(f"{path}: input not found (run `simulate` first or set inputs in the config)")
        return path

    def load_inputs(self, config: RunConfig) -> Tuple[FeatureMap, TrajectoryRecord, TrajectoryRecord]:
        """Normalized aerial map, ground truth and odometry, with timestamps cross-checked."""
        world_path = self._input_path(config.inputs.world, WORLD_FILE)
        world = load_container(world_path)
        if world.geo is None:
            raise DataError(f"{world_path}: aerial map has no geo-transform")
        if abs(world.geo.resolution - config.bev.resolution) > 1e-12:
            raise DataError(
                f"{world_path}: map resolution {world.geo.resolution} does not match bev.resolution {config.bev.resolution}"
            )

        gt = read_trajectory_csv(self._input_path(config.inputs.ground_truth, GROUND_TRUTH_FILE))
        odometry_path = self._input_path(config.inputs.odometry, ODOMETRY_FILE)
        odometry = read_trajectory_csv(odometry_path)
        if len(gt) < 2:
            raise DataError("ground truth needs at least two poses")
        if odometry.timestamps != gt.timestamps[1:]:
            raise AssociationError(f"{odometry_path}: odometry timestamps must equal ground-truth timestamps after the first")
        return l2_normalize(world), gt, odometry

    def _observations(
        self, config: RunConfig, world_hat: FeatureMap, gt: TrajectoryRecord
    ) -> Iterator[Tuple[FeatureMap, ConfidenceMap]]:
        directory = config.inputs.observations
        if directory is None:
            yield from observation_stream(world_hat, gt, config.bev, config.observation)
            return
        for k in range(1, len(gt)):
            g_path = Path(directory) / f"g_{k:06d}.bpfm"
            conf_path = Path(directory) / f"conf_{k:06d}.bpfm"
            for path in (g_path, conf_path):
                if not path.is_file():
                    raise DataError(f"{path}: observation not found")
            yield l2_normalize(load_container(g_path)), load_confidence(conf_path)

    def run(self, config: RunConfig) -> RunSummary:
        """Filter the configured inputs and write estimate, dead-reckoning and diagnostics CSVs."""
        start_time = time.perf_counter()
        world_hat, gt, odometry = self.load_inputs(config)
        pose0 = compose(gt.poses[0], config.init_offset)
        logger.info(
            "running %s over %d frames with %d particles",
            "prediction-only ensemble" if config.prediction_only else "filter",
            len(gt),
            config.filter.n_particles,
        )

        state = pf.initialize(pose0, config.filter)
        estimates: List[Pose2] = [pf.mean_pose(state)]
        diagnostics = []
        observations = None if config.prediction_only else self._observations(config, world_hat, gt)

        for k, u in enumerate(odometry.poses, start=1):
            if observations is None:
                state, estimate = pf.predict_only_step(state, u, config.filter)
            else:
                g_hat, conf = next(observations)
                state, estimate = pf.step(
                    state, u, g_hat, conf, world_hat, config.bev, config.filter, threads=self.threads
                )
            estimates.append(estimate)
            row = pf.diagnostics(state, gt.timestamps[k])
            diagnostics.append(row.model_dump())
            logger.debug("step %d: ESS %.1f, score mean %.4f", k, row.ess, row.score_mean)

        estimate = TrajectoryRecord(timestamps=gt.timestamps, poses=estimates)
        dead_reckoning = TrajectoryRecord(timestamps=gt.timestamps, poses=dead_reckon(pose0, odometry.poses))
        write_trajectory_csv(estimate, self.path(ESTIMATE_FILE))
        write_trajectory_csv(dead_reckoning, self.path(DEAD_RECKONING_FILE))
        write_csv(pd.DataFrame(diagnostics), self.path(DIAGNOSTICS_FILE))
        write_csv(
            pd.DataFrame([
                {"x": p.pose.x, "y": p.pose.y, "theta": p.pose.theta, "log_weight": p.log_weight}
                for p in state.particles
            ]),
            self.path(PARTICLES_FILE),
        )

        ate = ate_rmse(estimate, gt)
        baseline = ate_rmse(dead_reckoning, gt)
        summary = RunSummary(
            steps=len(odometry),
            ate=ate,
            dead_reckoning_ate=baseline,
            improvement=improvement_ratio(baseline, ate),
            heading_error_mean=heading_error_mean(estimate, gt),
            resample_count=sum(1 for row in diagnostics if row["resampled"]),
            prediction_only=config.prediction_only,
            estimate_path=str(self.path(ESTIMATE_FILE)),
            diagnostics_path=str(self.path(DIAGNOSTICS_FILE)),
            dead_reckoning_path=str(self.path(DEAD_RECKONING_FILE)),
        )
        logger.info(
            "ATE %.3f m, dead reckoning %.3f m (%.2fx lower), %d resamples in %.3fs",
            ate, baseline, summary.improvement, summary.resample_count, time.perf_counter() - start_time,
        )
        return summary

    # Evaluation

    def evaluate(
        self, estimate_path: PathLike, ground_truth_path: PathLike, n_bins: int = 50, write: bool = True
    ) -> EvaluationReport:
        estimate = read_trajectory_csv(estimate_path)
        gt = read_trajectory_csv(ground_truth_path)
        report = evaluate_records(estimate, gt, n_bins)
        if write:
            write_cdf_csv(report.cdf, self.path(CDF_FILE))
            logger.info("wrote error CDF to %s", self.path(CDF_FILE))
        return report

    # Sweep

    def sweep(
        self, config: RunConfig, seeds: Sequence[int], occlusions: Sequence[float] = (0.0,)
    ) -> pd.DataFrame:
        """
        Simulate and filter every (occlusion, seed) pair in its own subdirectory.

        Writes summary.csv: one ATE row per run and a mean row per occlusion group.
        """
        if not seeds or not occlusions:
            raise ConfigError("sweep needs at least one seed and one occlusion fraction")
        runs = []
        for occlusion in occlusions:
            group = f"occlusion={occlusion:g}"
            for seed in seeds:
                run_config = _sweep_variant(config, seed, occlusion)
                service = LocalizationRunService(self.path(f"occ{occlusion:g}_seed{seed}"), threads=self.threads)
                service.simulate(run_config)
                summary = service.run(run_config)
                runs.append({
                    "run": f"seed{seed}",
                    "group": group,
                    "ate": summary.ate,
                    "baseline_ate": summary.dead_reckoning_ate,
                })

        table = summarize_runs(runs)
        write_csv(table, self.path(SUMMARY_FILE))
        for row in table[table["run"] == "mean"].itertuples():
            logger.info("%s: mean ATE %.3f m, dead reckoning %.3f m", row.group, row.ate, row.baseline_ate)
        return table

    # Benchmark

    def bench(self, config: RunConfig, steps: Optional[int] = None) -> List[BenchRow]:
        """Median and p95 wall time per filter phase and per full step, in milliseconds."""
        steps = steps or config.bench_steps
        trajectory = config.trajectory.model_copy(update={"n_steps": steps + 1})
        world_hat = generate_world(config.world)
        gt = generate_trajectory(world_hat, trajectory)
        odometry = generate_odometry(gt.poses, config.odometry_noise, make_rng(trajectory.seed, ODOMETRY_STREAM))

        timer = pf.PhaseTimer()
        state: FilterState = pf.initialize(gt.poses[0], config.filter)
        samples = {phase: [] for phase in (*pf.PhaseTimer.PHASES, "total")}
        for u, (g_hat, conf) in zip(odometry, observation_stream(world_hat, gt, config.bev, config.observation)):
            timer.reset()
            start = time.perf_counter()
            state, _ = pf.step(
                state, u, g_hat, conf, world_hat, config.bev, config.filter, threads=self.threads, timer=timer
            )
            samples["total"].append(time.perf_counter() - start)
            for phase, seconds in timer.totals.items():
                samples[phase].append(seconds)

        rows = [
            BenchRow(
                phase=phase,
                median_ms=float(np.median(values) * 1e3),
                p95_ms=float(np.percentile(values, 95) * 1e3),
                budget_ms=STEP_BUDGET_MS if phase == "total" else None,
            )
            for phase, values in samples.items()
        ]
        write_csv(pd.DataFrame([row.model_dump() for row in rows]), self.path(BENCH_FILE))
        total = rows[-1]
        logger.info("bench over %d steps: median %.1f ms, p95 %.1f ms per step", steps, total.median_ms, total.p95_ms)
        if not total.within_budget:
            logger.warning("median step %.1f ms exceeds the %.0f ms budget", total.median_ms, STEP_BUDGET_MS)
        return rows


def evaluate_records(estimate: TrajectoryRecord, gt: TrajectoryRecord, n_bins: int = 50) -> EvaluationReport:
    errors = [e for _, e in error_series(estimate, gt)]
    return EvaluationReport(
        n=len(errors),
        ate=ate_rmse(estimate, gt),
        heading_error_mean=heading_error_mean(estimate, gt),
        errors=errors,
        cdf=error_cdf(errors, n_bins),
    )


def _sweep_variant(config: RunConfig, seed: int, occlusion: float) -> RunConfig:
    data = config.model_dump()
    for section in ("world", "trajectory", "observation", "filter"):
        data[section]["seed"] = seed
    data["observation"]["occlusion_fraction"] = occlusion
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(f"{_format_location(err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"sweep seed {seed}, occlusion {occlusion:g}: {problems}") from e
