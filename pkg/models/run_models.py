"""
Pydantic models for simulated worlds, run configuration, training losses,
trajectories and the HTTP API
"""

import math
from typing import Any, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.filter_models import FilterConfig
from models.geometry_models import MotionNoiseParams, Pose2
from models.map_models import BevSpec


class SimWorldConfig(BaseModel):
    """Procedural aerial feature world"""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0)
    size: int = Field(1024, ge=16)
    dim: int = Field(32, ge=1)
    resolution: float = Field(0.3, gt=0.0)
    octaves: int = Field(4, ge=1)
    correlation_length: float = Field(3.0, gt=0.0)
    origin_east: float = 500000.0
    origin_north: float = 4500000.0

    @model_validator(mode="after")
    def _check_correlation(self) -> "SimWorldConfig":
        if self.correlation_length <= self.resolution:
            raise ValueError("correlation_length must exceed resolution")
        return self


class TrajectoryConfig(BaseModel):
    """Kinematic rollout: piecewise-constant speed and yaw rate"""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0)
    n_steps: int = Field(500, ge=2)
    dt: float = Field(0.5, gt=0.0)
    speed_min: float = Field(1.0, ge=0.0)
    speed_max: float = Field(1.0, ge=0.0)
    yaw_rate_min: float = -0.2
    yaw_rate_max: float = 0.2
    segment_duration: float = Field(2.0, gt=0.0)
    margin: float = Field(60.0, ge=0.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "TrajectoryConfig":
        if self.speed_max < self.speed_min:
            raise ValueError("speed_max must be >= speed_min")
        if self.yaw_rate_max < self.yaw_rate_min:
            raise ValueError("yaw_rate_max must be >= yaw_rate_min")
        return self


class ObservationNoiseConfig(BaseModel):
    """Degradation applied to synthesized BEV observations"""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(..., ge=0)
    feature_noise_sigma: float = Field(0.3, ge=0.0)
    occlusion_fraction: float = Field(0.0, ge=0.0, le=1.0)
    occlusion_patch_size: int = Field(16, ge=1)
    conf_mode: Literal["oracle-cosine", "constant"] = "oracle-cosine"
    conf_constant: float = Field(1.0, ge=0.0, le=1.0)
    # geo-fixed canopy hiding the ground from the aerial view; confidence drops beneath it
    canopy_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    canopy_scale: float = Field(10.0, gt=0.0)


class NegativeMiningConfig(BaseModel):
    """Offsets for mined negative poses"""
    model_config = ConfigDict(frozen=True)

    count: int = Field(31, ge=1)
    trans_min: float = Field(3.0, gt=0.0)
    trans_max: float = Field(50.0, gt=0.0)
    rot_min_deg: float = -60.0
    rot_max_deg: float = 60.0

    @model_validator(mode="after")
    def _check_ranges(self) -> "NegativeMiningConfig":
        if self.trans_min >= self.trans_max:
            raise ValueError("trans_min must be < trans_max")
        if self.rot_min_deg > self.rot_max_deg:
            raise ValueError("rot_min_deg must be <= rot_max_deg")
        return self


class LossConfig(BaseModel):
    """Training objective parameters"""
    model_config = ConfigDict(frozen=True)

    tau: float = Field(0.03, gt=0.0)
    tau_floor: float = Field(0.01, gt=0.0)
    bce_epsilon: float = Field(1e-7, gt=0.0, lt=0.5)
    mining: NegativeMiningConfig = Field(default_factory=NegativeMiningConfig)


class LossBreakdown(BaseModel):
    """Forward objective for one training sample"""
    s_pos: float
    s_negs: List[float]
    tau: float
    l_sim: float
    l_conf: float
    total: float


class TrajectoryRecord(BaseModel):
    """Timestamped poses; timestamps strictly increasing"""
    model_config = ConfigDict(frozen=True)

    timestamps: List[float] = Field(default_factory=list)
    poses: List[Pose2] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_timestamps(self) -> "TrajectoryRecord":
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamps and poses must have equal lengths")
        if not all(math.isfinite(t) for t in self.timestamps):
            raise ValueError("timestamps must be finite")
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("timestamps must be strictly increasing")
        return self

    def __len__(self) -> int:
        return len(self.poses)

    def pose_array(self) -> np.ndarray:
        """N x 3 array of (x, y, theta)."""
        if not self.poses:
            return np.zeros((0, 3), dtype=np.float64)
        return np.stack([pose.to_array() for pose in self.poses])

    @classmethod
    def from_arrays(cls, timestamps, poses) -> "TrajectoryRecord":
        return cls(
            timestamps=[float(t) for t in timestamps],
            poses=[Pose2.from_array(row) for row in np.asarray(poses, dtype=np.float64).reshape(-1, 3)],
        )


class InputPaths(BaseModel):
    """Externally supplied artifacts; unset entries fall back to the simulate outputs"""
    model_config = ConfigDict(frozen=True)

    world: Optional[str] = None
    ground_truth: Optional[str] = None
    odometry: Optional[str] = None
    # directory of per-frame g_XXXXXX.bpfm / conf_XXXXXX.bpfm containers
    observations: Optional[str] = None


class RunConfig(BaseModel):
    """Complete run configuration; every RNG seed is explicit"""
    model_config = ConfigDict(frozen=True)

    world: SimWorldConfig
    trajectory: TrajectoryConfig
    odometry_noise: MotionNoiseParams = Field(default_factory=MotionNoiseParams)
    observation: ObservationNoiseConfig
    filter: FilterConfig
    bev: BevSpec = Field(default_factory=BevSpec)
    output_dir: str = "out"
    bench_steps: int = Field(200, ge=1)
    prediction_only: bool = False
    init_offset: Pose2 = Field(default_factory=Pose2.identity)
    inputs: InputPaths = Field(default_factory=InputPaths)

    @model_validator(mode="after")
    def _check_resolution(self) -> "RunConfig":
        if abs(self.bev.resolution - self.world.resolution) > 1e-12:
            raise ValueError(
                f"bev.resolution {self.bev.resolution} must equal world.resolution {self.world.resolution}"
            )
        return self

    @classmethod
    def default(cls, seed: int = 0) -> "RunConfig":
        return cls(
            world=SimWorldConfig(seed=seed),
            trajectory=TrajectoryConfig(seed=seed),
            observation=ObservationNoiseConfig(seed=seed),
            filter=FilterConfig(seed=seed),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every sub-config seed replaced, validated like a loaded config."""
        data = self.model_dump()
        for section in ("world", "trajectory", "observation", "filter"):
            data[section]["seed"] = seed
        return RunConfig.model_validate(data)


class RunSummary(BaseModel):
    """Outcome of one filter run"""
    steps: int
    ate: float
    dead_reckoning_ate: float
    improvement: float
    heading_error_mean: float
    resample_count: int
    prediction_only: bool = False
    estimate_path: str
    diagnostics_path: str
    dead_reckoning_path: str


class EvaluationReport(BaseModel):
    """ATE, heading error and error CDF of one estimate"""
    n: int
    ate: float
    heading_error_mean: float
    errors: List[float]
    cdf: List[Tuple[float, float]]


class BenchRow(BaseModel):
    """Latency of one filter phase; the full-step row carries the regression budget"""
    phase: str
    median_ms: float
    p95_ms: float
    budget_ms: Optional[float] = None

    @property
    def within_budget(self) -> bool:
        return self.budget_ms is None or self.median_ms < self.budget_ms


# API models

class ApiResponse(BaseModel):
    """Standard API response"""
    success: bool
    data: Optional[Any] = None
    error: Optional[str] = None
    message: Optional[str] = None


class TrajectoryRow(BaseModel):
    t: float
    x: float
    y: float
    theta: float = 0.0


class EvaluateRequest(BaseModel):
    """Estimated and ground-truth trajectories to compare"""
    estimate: List[TrajectoryRow]
    ground_truth: List[TrajectoryRow]
    n_bins: int = Field(50, ge=2)

    @field_validator("estimate", "ground_truth")
    @classmethod
    def _nonempty(cls, rows: List[TrajectoryRow]) -> List[TrajectoryRow]:
        if not rows:
            raise ValueError("trajectory must not be empty")
        return rows


class InfoNceRequest(BaseModel):
    s_pos: float
    s_negs: List[float]
    tau: float = Field(0.03, gt=0.0)
