"""
BEV mapper geometry: lift per-cell image features into vehicle-frame points
through a depth image, then splat them into a BEV grid by a height-invariant
weighted average over each vertical column.

Camera frame: x right, y down, z along the optical axis.
Vehicle frame: x forward, y left, z up.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np

from core.exceptions import InvalidArgumentError
from models.geometry_models import CameraExtrinsics, CameraIntrinsics
from models.map_models import BevSpec, FeatureMap, FeaturePointCloud, SplatResult

logger = logging.getLogger(__name__)

# rotation taking camera axes to vehicle axes for a forward-looking camera
CAMERA_TO_VEHICLE_ROTATION = (
    (0.0, 0.0, 1.0),
    (-1.0, 0.0, 0.0),
    (0.0, -1.0, 0.0),
)

GroundToBev = Callable[[np.ndarray, np.ndarray, BevSpec], Tuple[np.ndarray, np.ndarray]]


def forward_camera_extrinsics(height: float = 0.0, forward: float = 0.0) -> CameraExtrinsics:
    """Forward-looking camera mounted `height` m up and `forward` m ahead of the vehicle origin."""
    return CameraExtrinsics(
        rotation=[list(row) for row in CAMERA_TO_VEHICLE_ROTATION],
        translation=[forward, 0.0, height],
    )


def pool_depth(depth: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Average valid depths (finite, > 0) over each stride block; blocks without any become NaN."""
    stride_h = depth.shape[0] // out_h
    stride_w = depth.shape[1] // out_w
    valid = np.isfinite(depth) & (depth > 0)
    values = np.where(valid, depth, 0.0).reshape(out_h, stride_h, out_w, stride_w)
    counts = valid.reshape(out_h, stride_h, out_w, stride_w).sum(axis=(1, 3))
    sums = values.sum(axis=(1, 3))
    pooled = np.full((out_h, out_w), np.nan, dtype=np.float64)
    np.divide(sums, counts, out=pooled, where=counts > 0)
    return pooled


def unproject(
    depth: np.ndarray,
    feats: np.ndarray,
    intr: CameraIntrinsics,
    extr: CameraExtrinsics,
    weights: Optional[np.ndarray] = None,
) -> FeaturePointCloud:
    """
    Lift every feature cell with valid pooled depth to a vehicle-frame point.

    Intrinsics are in depth-image pixels; feature cell (r, c) is centered on
    depth pixel ((c + 0.5) * stride - 0.5, (r + 0.5) * stride - 0.5).
    Cells are emitted in row-major order.
    """
    depth = np.asarray(depth, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float32)
    if depth.ndim != 2 or feats.ndim != 3:
        raise InvalidArgumentError(
            f"depth must be H x W and features H x W x D, got {depth.shape} and {feats.shape}"
        )
    feat_h, feat_w, dim = feats.shape
    if feat_h == 0 or feat_w == 0 or depth.shape[0] % feat_h or depth.shape[1] % feat_w:
        raise InvalidArgumentError(
            f"depth shape {depth.shape} is not an integer multiple of feature shape {feats.shape[:2]}"
        )
    if weights is None:
        weights = np.ones((feat_h, feat_w), dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (feat_h, feat_w):
        raise InvalidArgumentError(f"weights shape {weights.shape} does not match features {(feat_h, feat_w)}")

    stride_h = depth.shape[0] // feat_h
    stride_w = depth.shape[1] // feat_w
    pooled = pool_depth(depth, feat_h, feat_w)

    rows, cols = np.nonzero(np.isfinite(pooled))
    d = pooled[rows, cols]
    u = (cols + 0.5) * stride_w - 0.5
    v = (rows + 0.5) * stride_h - 0.5
    camera = np.stack([d * (u - intr.cx) / intr.fx, d * (v - intr.cy) / intr.fy, d], axis=-1)
    points = camera @ extr.rotation_matrix().T + extr.translation_vector()

    return FeaturePointCloud(
        points=points,
        features=feats[rows, cols].reshape(-1, dim),
        weights=weights[rows, cols],
    )


def default_ground_to_bev(x_fwd: np.ndarray, y_left: np.ndarray, spec: BevSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest BEV cell; the bottom-center cell is centered on the vehicle origin."""
    rows = np.floor(spec.height - 1 - x_fwd / spec.resolution + 0.5).astype(np.int64)
    cols = np.floor((spec.width - 1) / 2.0 - y_left / spec.resolution + 0.5).astype(np.int64)
    return rows, cols


def splat(
    cloud: FeaturePointCloud,
    spec: BevSpec,
    ground_to_bev: Optional[GroundToBev] = None,
) -> SplatResult:
    """Per-cell weighted mean of point features; z is ignored."""
    if np.any(cloud.weights < 0):
        raise InvalidArgumentError("splat weights must be non-negative")
    mapper = ground_to_bev or default_ground_to_bev
    dim = cloud.features.shape[1] if cloud.features.ndim == 2 else 0

    rows, cols = mapper(cloud.points[:, 0], cloud.points[:, 1], spec)
    inside = (rows >= 0) & (rows < spec.height) & (cols >= 0) & (cols < spec.width)
    n_dropped = int(len(cloud) - np.count_nonzero(inside))
    if n_dropped:
        logger.warning("%d of %d points fell outside the BEV grid", n_dropped, len(cloud))

    n_cells = spec.height * spec.width
    index = rows[inside] * spec.width + cols[inside]
    weights = cloud.weights[inside]

    # np.add.at is unbuffered and visits points in array order
    numerator = np.zeros((n_cells, dim), dtype=np.float64)
    np.add.at(numerator, index, cloud.features[inside].astype(np.float64) * weights[:, None])
    weight_sum = np.bincount(index, weights=weights, minlength=n_cells)
    hits = np.bincount(index, minlength=n_cells)

    out = np.zeros((n_cells, dim), dtype=np.float64)
    np.divide(numerator, weight_sum[:, None], out=out, where=weight_sum[:, None] > 0)

    grid = out.astype(np.float32).reshape(spec.height, spec.width, dim)
    grid.flags.writeable = False
    return SplatResult.model_construct(
        features=FeatureMap.model_construct(data=grid, geo=None),
        hit_count=hits.reshape(spec.height, spec.width),
        n_dropped=n_dropped,
    )


def bev_extent(spec: BevSpec) -> Tuple[float, float]:
    """(forward, lateral) ground extent in meters covered by the grid."""
    return spec.height * spec.resolution, spec.width * spec.resolution

