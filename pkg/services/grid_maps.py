"""
Feature-grid utilities: normalization, geo-referencing, cropping and the
binary feature-map container.

Container layout (little-endian):
    magic "BPFM" | version u32 | H u32 | W u32 | D u32 | flags u32 |
    origin_east f64 | origin_north f64 | resolution f64 | payload H*W*D f32
flags bit 0 marks a present geo-transform; absent geo is written as zeros.
"""

import logging
import math
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from pydantic import ValidationError

from core.exceptions import (
    ContainerMagicError,
    ContainerTruncatedError,
    ContainerValueError,
    ContainerVersionError,
    InvalidArgumentError,
)
from models.geometry_models import Pose2
from models.map_models import ConfidenceMap, FeatureMap, GeoTransform

logger = logging.getLogger(__name__)

NORMALIZE_EPSILON = 1e-8

CONTAINER_MAGIC = b"BPFM"
CONTAINER_VERSION = 1
_HEADER = struct.Struct("<4sIIIII3d")
_FLAG_GEO = 0x1

PathLike = Union[str, Path]


def l2_normalize(fm: FeatureMap, epsilon: float = NORMALIZE_EPSILON) -> FeatureMap:
    """Divide every cell vector by max(||v||, epsilon)."""
    if epsilon <= 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    normalized = normalize_cells(fm.data, epsilon)
    return FeatureMap.model_construct(data=_frozen(normalized), geo=fm.geo)


def normalize_cells(data: np.ndarray, epsilon: float = NORMALIZE_EPSILON) -> np.ndarray:
    """Float32 copy of an H x W x D array with unit cell vectors; norms accumulate in float64."""
    norms = np.sqrt(np.einsum("hwd,hwd->hw", data, data, dtype=np.float64))
    scale = (1.0 / np.maximum(norms, epsilon)).astype(np.float32)
    return data.astype(np.float32) * scale[..., None]


def world_to_pixel(geo: GeoTransform, x, y) -> Tuple:
    """UTM (x, y) to continuous pixel (u, v); v grows southward."""
    u = (np.asarray(x, dtype=np.float64) - geo.origin_east) / geo.resolution
    v = (geo.origin_north - np.asarray(y, dtype=np.float64)) / geo.resolution
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def pixel_to_world(geo: GeoTransform, u, v) -> Tuple:
    x = geo.origin_east + np.asarray(u, dtype=np.float64) * geo.resolution
    y = geo.origin_north - np.asarray(v, dtype=np.float64) * geo.resolution
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def crop_centered(fm: FeatureMap, center: Pose2, out_h: int, out_w: int) -> FeatureMap:
    """Axis-aligned crop around the pixel nearest `center`, zero-filled outside the source."""
    if fm.geo is None:
        raise InvalidArgumentError("crop_centered needs a geo-referenced map")
    if out_h <= 0 or out_w <= 0:
        raise InvalidArgumentError(f"crop size must be positive, got {out_h}x{out_w}")

    u, v = world_to_pixel(fm.geo, center.x, center.y)
    row0 = int(math.floor(v + 0.5)) - out_h // 2
    col0 = int(math.floor(u + 0.5)) - out_w // 2

    out = np.zeros((out_h, out_w, fm.dim), dtype=np.float32)
    src_r0, src_r1 = max(row0, 0), min(row0 + out_h, fm.height)
    src_c0, src_c1 = max(col0, 0), min(col0 + out_w, fm.width)
    if src_r0 < src_r1 and src_c0 < src_c1:
        out[src_r0 - row0:src_r1 - row0, src_c0 - col0:src_c1 - col0] = fm.data[src_r0:src_r1, src_c0:src_c1]

    res = fm.geo.resolution
    geo = GeoTransform(
        origin_east=fm.geo.origin_east + col0 * res,
        origin_north=fm.geo.origin_north - row0 * res,
        resolution=res,
    )
    return FeatureMap.model_construct(data=_frozen(out), geo=geo)


def save_container(fm: FeatureMap, path: PathLike) -> None:
    geo = fm.geo
    flags = _FLAG_GEO if geo is not None else 0
    header = _HEADER.pack(
        CONTAINER_MAGIC,
        CONTAINER_VERSION,
        fm.height,
        fm.width,
        fm.dim,
        flags,
        geo.origin_east if geo else 0.0,
        geo.origin_north if geo else 0.0,
        geo.resolution if geo else 0.0,
    )
    payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)
    logger.debug("wrote %dx%dx%d feature container to %s", fm.height, fm.width, fm.dim, path)


def load_container(path: PathLike) -> FeatureMap:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != CONTAINER_MAGIC:
        raise ContainerMagicError(f"{path}: bad magic {raw[:4]!r}, expected {CONTAINER_MAGIC!r}")
    if len(raw) < _HEADER.size:
        raise ContainerTruncatedError(f"{path}: header truncated ({len(raw)} bytes)")
    _, version, height, width, dim, flags, east, north, res = _HEADER.unpack_from(raw)
    if version != CONTAINER_VERSION:
        raise ContainerVersionError(f"{path}: unsupported container version {version}")

    expected = height * width * dim * 4
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise ContainerTruncatedError(f"{path}: payload has {len(payload)} bytes, expected {expected}")

    data = np.frombuffer(payload[:expected], dtype="<f4").astype(np.float32).reshape(height, width, dim)
    if not np.all(np.isfinite(data)):
        raise ContainerValueError(f"{path}: payload contains non-finite values")
    geo = None
    if flags & _FLAG_GEO:
        try:
            geo = GeoTransform(origin_east=east, origin_north=north, resolution=res)
        except ValidationError as e:
            raise ContainerValueError(
                f"{path}: invalid geo-transform (origin {east}, {north}, resolution {res})"
            ) from e
    return FeatureMap.model_construct(data=_frozen(data), geo=geo)


def save_confidence(cm: ConfidenceMap, path: PathLike) -> None:
    save_container(FeatureMap.model_construct(data=cm.data[..., None], geo=None), path)


def load_confidence(path: PathLike) -> ConfidenceMap:
    fm = load_container(path)
    if fm.dim != 1:
        raise ContainerValueError(f"{path}: confidence container must have D=1, got {fm.dim}")
    return ConfidenceMap(data=fm.data[..., 0])


def _frozen(data: np.ndarray) -> np.ndarray:
    data.flags.writeable = False
    return data
