"""
Pydantic models for SE(2) poses, motion noise and camera geometry
"""

import math
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _wrap(theta: float) -> float:
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.pi - (math.pi - theta) % (2.0 * math.pi)
    return math.pi if wrapped <= -math.pi else wrapped


class Pose2(BaseModel):
    """3-DoF pose: UTM east/north in meters, heading CCW from east in radians"""
    model_config = ConfigDict(frozen=True)

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    @field_validator("x", "y", "theta")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("pose components must be finite")
        return value

    @field_validator("theta")
    @classmethod
    def _wrap_theta(cls, value: float) -> float:
        return _wrap(value)

    @classmethod
    def identity(cls) -> "Pose2":
        return cls()

    @classmethod
    def from_array(cls, values) -> "Pose2":
        x, y, theta = (float(v) for v in np.asarray(values, dtype=np.float64).reshape(3))
        return cls(x=x, y=y, theta=theta)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=np.float64)


class Twist2(BaseModel):
    """Lie-algebra vector (dx, dy, dtheta) of se(2)"""
    model_config = ConfigDict(frozen=True)

    dx: float = 0.0
    dy: float = 0.0
    dtheta: float = 0.0

    @field_validator("dx", "dy", "dtheta")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("twist components must be finite")
        return value

    @classmethod
    def from_array(cls, values) -> "Twist2":
        dx, dy, dtheta = (float(v) for v in np.asarray(values, dtype=np.float64).reshape(3))
        return cls(dx=dx, dy=dy, dtheta=dtheta)

    def to_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta], dtype=np.float64)


class MotionNoiseParams(BaseModel):
    """Odometry noise: std = max(fraction * |motion|, floor)"""
    model_config = ConfigDict(frozen=True)

    frac_trans: float = Field(0.1, ge=0.0)
    frac_rot: float = Field(0.1, ge=0.0)
    floor_trans: float = Field(0.01, ge=0.0)
    floor_rot: float = Field(0.002, ge=0.0)

    @classmethod
    def zero(cls) -> "MotionNoiseParams":
        return cls(frac_trans=0.0, frac_rot=0.0, floor_trans=0.0, floor_rot=0.0)


class CameraIntrinsics(BaseModel):
    """Pinhole intrinsics in depth-image pixels"""
    model_config = ConfigDict(frozen=True)

    fx: float = Field(..., gt=0.0)
    fy: float = Field(..., gt=0.0)
    cx: float
    cy: float


class CameraExtrinsics(BaseModel):
    """Camera-to-vehicle rigid transform (camera: x right, y down, z forward)"""
    model_config = ConfigDict(frozen=True)

    rotation: List[List[float]] = Field(default_factory=lambda: np.eye(3).tolist())
    translation: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])

    @model_validator(mode="after")
    def _check_rotation(self) -> "CameraExtrinsics":
        rotation = np.asarray(self.rotation, dtype=np.float64)
        if rotation.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rotation.shape}")
        if len(self.translation) != 3:
            raise ValueError("translation must have 3 components")
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-9, rtol=0.0):
            raise ValueError("rotation must be orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        return self

    def rotation_matrix(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=np.float64)

    def translation_vector(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)
