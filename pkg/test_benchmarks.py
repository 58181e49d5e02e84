#!/usr/bin/env python3
"""
Simulator benchmarks: filter accuracy against dead reckoning, robustness to
occlusion and per-step latency at the deployed configuration.

These take a long time and are deselected by default; run them with
`pytest -m slow`. The accuracy suites use a 64 x 64 BEV grid and a 256-pixel
crop so twenty 500-step runs stay tractable; the latency test keeps the
deployed sizes and records the median step against its budget.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from models.map_models import BevSpec
from models.run_models import RunConfig
from services.evaluation import error_series, read_csv, read_trajectory_csv
from services.run_service import BENCH_FILE, STEP_BUDGET_MS, LocalizationRunService

SEEDS = range(20)
STEPS = 500
BENCH_BEV = 64
BENCH_CROP = 256

pytestmark = pytest.mark.slow


def benchmark_config(seed: int, occlusion: float = 0.0) -> RunConfig:
    config = RunConfig.default(seed=seed)
    return config.model_copy(update={
        "trajectory": config.trajectory.model_copy(update={"n_steps": STEPS + 1}),
        "observation": config.observation.model_copy(update={
            "feature_noise_sigma": 0.3,
            "occlusion_fraction": occlusion,
        }),
        "bev": BevSpec(height=BENCH_BEV, width=BENCH_BEV, resolution=config.world.resolution),
        "filter": config.filter.model_copy(update={"crop_h": BENCH_CROP, "crop_w": BENCH_CROP}),
    })


def run_seed(tmp_path, seed: int, occlusion: float = 0.0):
    service = LocalizationRunService(tmp_path / f"seed{seed}-occ{occlusion}", threads=os.cpu_count() or 1)
    config = benchmark_config(seed, occlusion)
    service.simulate(config)
    summary = service.run(config)
    errors = [e for _, e in error_series(read_trajectory_csv(summary.estimate_path),
                                         read_trajectory_csv(service.path("ground_truth.csv")))]
    return summary, max(errors)


@pytest.fixture(scope="module")
def clear_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("clear")
    return {seed: run_seed(base, seed) for seed in SEEDS}


def test_filter_beats_dead_reckoning(clear_runs):
    passed = sum(
        1 for summary, _ in clear_runs.values()
        if summary.ate < 1.0 and summary.ate < summary.dead_reckoning_ate / 3.0
    )
    assert passed >= 18


def test_occlusion_robustness(clear_runs, tmp_path_factory):
    base = tmp_path_factory.mktemp("occluded")
    passed = 0
    for seed in SEEDS:
        occluded, max_error = run_seed(base, seed, occlusion=0.3)
        assert max_error < 10.0
        if occluded.ate < 2.0 * clear_runs[seed][0].ate:
            passed += 1
    assert passed >= 18


def test_step_latency(tmp_path, record_property):
    service = LocalizationRunService(tmp_path, threads=os.cpu_count() or 1)
    rows = {row.phase: row for row in service.bench(RunConfig.default(seed=0), steps=50)}
    total = rows["total"]
    record_property("median_step_ms", round(total.median_ms, 1))
    record_property("p95_step_ms", round(total.p95_ms, 1))
    record_property("step_budget_ms", STEP_BUDGET_MS)
    record_property("within_budget", total.within_budget)
    print(f"\nfull step: median {total.median_ms:.1f} ms, p95 {total.p95_ms:.1f} ms, budget {STEP_BUDGET_MS:.0f} ms")

    assert total.budget_ms == STEP_BUDGET_MS
    assert np.isfinite(total.median_ms) and total.median_ms > 0.0
    assert total.median_ms >= max(rows[phase].median_ms for phase in rows if phase != "total")
    written = read_csv(service.path(BENCH_FILE))
    assert written["budget_ms"].iloc[-1] == STEP_BUDGET_MS
