"""
Pydantic models for geo-referenced feature grids and sampling grids
"""

import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class GeoTransform(BaseModel):
    """North-up pixel <-> UTM mapping; (0, 0) is the center of the top-left pixel"""
    model_config = ConfigDict(frozen=True)

    origin_east: float
    origin_north: float
    resolution: float = Field(..., gt=0.0)

    @field_validator("origin_east", "origin_north", "resolution")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("geo-transform values must be finite")
        return value


class FeatureMap(BaseModel):
    """H x W x D float32 feature grid, row-major [row][col][channel]"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: np.ndarray
    geo: Optional[GeoTransform] = None

    @field_validator("data", mode="before")
    @classmethod
    def _as_grid(cls, value) -> np.ndarray:
        data = np.array(value, dtype=np.float32, order="C")
        if data.ndim != 3:
            raise ValueError(f"feature data must be H x W x D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature data must be finite")
        data.flags.writeable = False
        return data

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def dim(self) -> int:
        return int(self.data.shape[2])

    def extent(self) -> Tuple[float, float, float, float]:
        """(min_east, max_east, min_north, max_north) of the pixel centers."""
        if self.geo is None:
            raise ValueError("feature map has no geo-transform")
        res = self.geo.resolution
        return (
            self.geo.origin_east,
            self.geo.origin_east + (self.width - 1) * res,
            self.geo.origin_north - (self.height - 1) * res,
            self.geo.origin_north,
        )


class ConfidenceMap(BaseModel):
    """H x W single-channel grid with entries in [0, 1]"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _as_grid(cls, value) -> np.ndarray:
        data = np.array(value, dtype=np.float32, order="C")
        if data.ndim != 2:
            raise ValueError(f"confidence data must be H x W, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0.0) or np.any(data > 1.0):
            raise ValueError("confidence values must lie in [0, 1]")
        data.flags.writeable = False
        return data

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


class BevSpec(BaseModel):
    """BEV grid size in cells and its ground resolution"""
    model_config = ConfigDict(frozen=True)

    height: int = Field(224, ge=1)
    width: int = Field(224, ge=1)
    resolution: float = Field(0.3, gt=0.0)


class PatchGrid(BaseModel):
    """Continuous (u, v) source-pixel coordinates for every BEV cell"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coords: np.ndarray

    @field_validator("coords", mode="before")
    @classmethod
    def _as_coords(cls, value) -> np.ndarray:
        coords = np.ascontiguousarray(value, dtype=np.float64)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ValueError(f"grid coords must be H x W x 2, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("grid coords must be finite")
        return coords

    @property
    def height(self) -> int:
        return int(self.coords.shape[0])

    @property
    def width(self) -> int:
        return int(self.coords.shape[1])


class FeaturePointCloud(BaseModel):
    """Vehicle-frame points (x forward, y left, z up) with features and splat weights"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray
    features: np.ndarray
    weights: np.ndarray

    @model_validator(mode="after")
    def _check_lengths(self) -> "FeaturePointCloud":
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must be K x 3, got shape {self.points.shape}")
        if self.features.ndim != 2:
            raise ValueError("features must be K x D")
        n = self.points.shape[0]
        if self.features.shape[0] != n or self.weights.shape != (n,):
            raise ValueError("points, features and weights must have equal lengths")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        return self

    def __len__(self) -> int:
        return int(self.points.shape[0])


class SplatResult(BaseModel):
    """Splatted BEV grid plus per-cell hit counts and the dropped-point tally"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    features: FeatureMap
    hit_count: np.ndarray
    n_dropped: int = 0
