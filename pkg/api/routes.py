"""
API routes for localization endpoints
"""

import logging
import math
import tempfile

from fastapi import APIRouter, HTTPException

from core.config import settings
from core.exceptions import LocalizationError
from models.run_models import ApiResponse, EvaluateRequest, InfoNceRequest, RunConfig, TrajectoryRecord
from services.run_service import LocalizationRunService, evaluate_records
from services.training_losses import effective_tau, info_nce

logger = logging.getLogger(__name__)

# Create router
localization_router = APIRouter(prefix="/localization", tags=["Localization"])


def _record(rows) -> TrajectoryRecord:
    try:
        return TrajectoryRecord.from_arrays([r.t for r in rows], [[r.x, r.y, r.theta] for r in rows])
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


@localization_router.get("/config/defaults")
async def get_default_config() -> ApiResponse:
    """Default run configuration (all seeds 0)"""
    return ApiResponse(
        success=True,
        data=RunConfig.default().model_dump(mode="json"),
        message="Default configuration",
    )


@localization_router.post("/evaluate")
async def evaluate_trajectory(request: EvaluateRequest) -> ApiResponse:
    """ATE, heading error and error CDF of an estimate against ground truth"""
    estimate = _record(request.estimate)
    ground_truth = _record(request.ground_truth)
    try:
        report = evaluate_records(estimate, ground_truth, request.n_bins)
    except LocalizationError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return ApiResponse(success=True, data=report.model_dump(), message=f"ATE {report.ate:.3f} m")


@localization_router.post("/losses/info-nce")
async def compute_info_nce(request: InfoNceRequest) -> ApiResponse:
    """Contrastive loss of one positive against negative scores"""
    try:
        loss = info_nce(request.s_pos, request.s_negs, request.tau)
    except LocalizationError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return ApiResponse(
        success=True,
        data={"loss": loss, "tau": effective_tau(request.tau), "n_negatives": len(request.s_negs)},
    )


@localization_router.post("/simulate")
def simulate_and_run(config: RunConfig) -> ApiResponse:
    """Simulate a world and trajectory, run the filter and compare against dead reckoning"""
    try:
        with tempfile.TemporaryDirectory(prefix="bevpf-") as output_dir:
            service = LocalizationRunService(output_dir, threads=settings.threads)
            service.simulate(config)
            summary = service.run(config)
    except LocalizationError as e:
        logger.warning("simulation request failed: %s", e)
        raise HTTPException(status_code=400, detail=str(e))

    return ApiResponse(
        success=True,
        data={
            "steps": summary.steps,
            "ate": summary.ate,
            "dead_reckoning_ate": summary.dead_reckoning_ate,
            "improvement": summary.improvement if math.isfinite(summary.improvement) else None,
            "heading_error_mean": summary.heading_error_mean,
            "resample_count": summary.resample_count,
        },
        message=f"ATE {summary.ate:.3f} m vs dead reckoning {summary.dead_reckoning_ate:.3f} m",
    )
