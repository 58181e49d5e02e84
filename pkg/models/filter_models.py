"""
Pydantic models for the particle filter: configuration, state and per-step diagnostics
"""

import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.geometry_models import MotionNoiseParams, Pose2
from models.map_models import GeoTransform


class ScoreParams(BaseModel):
    """Likelihood temperature"""
    model_config = ConfigDict(frozen=True)

    tau_s: float = Field(1.0, gt=0.0)


class Particle(BaseModel):
    """Weighted pose hypothesis"""
    pose: Pose2
    log_weight: float


class FilterConfig(BaseModel):
    """Particle filter hyperparameters; defaults follow the deployed configuration"""
    model_config = ConfigDict(frozen=True)

    n_particles: int = Field(128, ge=1)
    init_sigma_trans: float = Field(3.0, ge=0.0)
    init_sigma_rot: float = Field(math.radians(10.0), ge=0.0)
    motion_noise: MotionNoiseParams = Field(default_factory=MotionNoiseParams)
    tau_s: float = Field(1.0, gt=0.0)
    ess_fraction: float = Field(0.1, gt=0.0, le=1.0)
    crop_h: int = Field(768, ge=1)
    crop_w: int = Field(768, ge=1)
    seed: int = Field(..., ge=0)

    def score_params(self) -> ScoreParams:
        return ScoreParams(tau_s=self.tau_s)


class FilterState(BaseModel):
    """Particle set as arrays: poses N x 3 (x, y, theta) and normalized log-weights N"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    poses: np.ndarray
    log_weights: np.ndarray
    step: int = 0
    rng: np.random.Generator
    last_crop_geo: Optional[GeoTransform] = None
    last_scores: Optional[np.ndarray] = None
    last_out_of_crop: int = 0
    last_resampled: bool = False

    @property
    def n_particles(self) -> int:
        return int(self.poses.shape[0])

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def particles(self) -> List[Particle]:
        return [
            Particle(pose=Pose2.from_array(pose), log_weight=float(log_weight))
            for pose, log_weight in zip(self.poses, self.log_weights)
        ]


class StepDiagnostics(BaseModel):
    """Filter health for one step"""
    step: int
    t: float = 0.0
    ess: float
    resampled: bool
    score_min: float = 0.0
    score_mean: float = 0.0
    score_max: float = 0.0
    score_std: float = 0.0
    out_of_crop: int = 0
