"""
Per-particle sampling grids and zero-padded bilinear sampling of aerial
feature maps.

BEV cell (r, c) sits `(H_b - 1 - r) * res` meters forward and
`((W_b - 1) / 2 - c) * res` meters to the left of the vehicle, so the
bottom-center cell is anchored on the pose itself. Integer pixel
coordinates refer to pixel centers.
"""

from typing import Tuple

import numpy as np

from core.exceptions import InvalidArgumentError
from models.geometry_models import Pose2
from models.map_models import BevSpec, ConfidenceMap, FeatureMap, GeoTransform, PatchGrid

TAP_OFFSETS = ((0, 0), (0, 1), (1, 0), (1, 1))


def body_offsets(spec: BevSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Forward and left offsets in meters, each H_b x W_b."""
    rows = np.arange(spec.height, dtype=np.float64)[:, None]
    cols = np.arange(spec.width, dtype=np.float64)[None, :]
    forward = np.broadcast_to((spec.height - 1 - rows) * spec.resolution, (spec.height, spec.width))
    left = np.broadcast_to(((spec.width - 1) / 2.0 - cols) * spec.resolution, (spec.height, spec.width))
    return forward, left


def _check_resolution(geo: GeoTransform, spec: BevSpec) -> None:
    if abs(spec.resolution - geo.resolution) > 1e-12:
        raise InvalidArgumentError(
            f"BEV resolution {spec.resolution} does not match map resolution {geo.resolution}"
        )


def build_grid_array(poses, geo: GeoTransform, spec: BevSpec) -> np.ndarray:
    """Pixel coordinates for a batch of poses: (..., H_b, W_b, 2) as (u, v)."""
    _check_resolution(geo, spec)
    poses = np.asarray(poses, dtype=np.float64)
    forward, left = body_offsets(spec)

    c = np.cos(poses[..., 2])[..., None, None]
    s = np.sin(poses[..., 2])[..., None, None]
    # anchor in pixels first keeps UTM magnitudes out of the rotated offsets
    u0 = ((poses[..., 0] - geo.origin_east) / geo.resolution)[..., None, None]
    v0 = ((geo.origin_north - poses[..., 1]) / geo.resolution)[..., None, None]
    u = u0 + (c * forward - s * left) / geo.resolution
    v = v0 - (s * forward + c * left) / geo.resolution
    return np.stack([u, v], axis=-1)


def build_grid(pose: Pose2, geo: GeoTransform, spec: BevSpec) -> PatchGrid:
    return PatchGrid.model_construct(coords=build_grid_array(pose.to_array(), geo, spec))


def gather_taps(data: np.ndarray, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    The four bilinear taps of every sample point and their weights.

    `data` is H x W x D, `coords` is (..., 2) as (u, v). Returns float32 tap
    values (4, ..., D) and float64 weights (4, ...), taps ordered
    (v0, u0), (v0, u0 + 1), (v0 + 1, u0), (v0 + 1, u0 + 1). Taps off the map
    read zero.
    """
    height, width, dim = data.shape
    points = coords.shape[:-1]
    values = np.zeros((4,) + points + (dim,), dtype=np.float32)
    weights = np.zeros((4,) + points, dtype=np.float64)
    if values.size == 0:
        return values, weights

    u = coords[..., 0]
    v = coords[..., 1]
    fu = np.floor(u)
    fv = np.floor(v)
    du = u - fu
    dv = v - fv
    # far-outside points only need to stay off the map
    cols = np.clip(fu, -2, width + 1).astype(np.int64)
    rows = np.clip(fv, -2, height + 1).astype(np.int64)

    # zero-bordered copy of the touched region: off-map taps clip onto the border
    r_lo = int(np.clip(rows.min(), -1, height))
    r_hi = int(np.clip(rows.max() + 1, -1, height))
    c_lo = int(np.clip(cols.min(), -1, width))
    c_hi = int(np.clip(cols.max() + 1, -1, width))
    window = np.zeros((r_hi - r_lo + 1, c_hi - c_lo + 1, dim), dtype=np.float32)
    src_r0, src_r1 = max(r_lo, 0), min(r_hi, height - 1)
    src_c0, src_c1 = max(c_lo, 0), min(c_hi, width - 1)
    if src_r0 <= src_r1 and src_c0 <= src_c1:
        window[src_r0 - r_lo:src_r1 - r_lo + 1, src_c0 - c_lo:src_c1 - c_lo + 1] = \
            data[src_r0:src_r1 + 1, src_c0:src_c1 + 1]
    flat = window.reshape(-1, dim)
    window_w = window.shape[1]

    for tap, (row_off, col_off) in enumerate(TAP_OFFSETS):
        r = np.clip(rows + row_off, r_lo, r_hi) - r_lo
        c = np.clip(cols + col_off, c_lo, c_hi) - c_lo
        np.take(flat, r * window_w + c, axis=0, out=values[tap], mode="clip")
        weights[tap] = (dv if row_off else 1.0 - dv) * (du if col_off else 1.0 - du)
    return values, weights


def gather_patch_taps(fm: FeatureMap, poses, spec: BevSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Taps and weights for a batch of poses: (4, N, H_b, W_b, D) and (4, N, H_b, W_b)."""
    return gather_taps(fm.data, build_grid_array(np.asarray(poses, dtype=np.float64).reshape(-1, 3), fm.geo, spec))


def _sample(data: np.ndarray, coords: np.ndarray) -> np.ndarray:
    values, weights = gather_taps(data, coords)
    return np.einsum("t...d,t...->...d", values, weights).astype(np.float32)


def bilinear_sample(fm: FeatureMap, grid: PatchGrid) -> FeatureMap:
    """H_b x W_b x D patch without a geo-transform."""
    patch = _sample(fm.data, grid.coords)
    patch.flags.writeable = False
    return FeatureMap.model_construct(data=patch, geo=None)


def sample_confidence(cm: ConfidenceMap, grid: PatchGrid) -> ConfidenceMap:
    patch = np.clip(_sample(cm.data[..., None], grid.coords)[..., 0], 0.0, 1.0)
    patch.flags.writeable = False
    return ConfidenceMap.model_construct(data=patch)
