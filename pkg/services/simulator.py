"""
Synthetic feature world standing in for the trained encoders.

Aerial features are fractal value noise per channel, L2-normalized per
cell. Trajectories are kinematic rollouts kept inside the map margins,
odometry is the ground-truth relative motion plus Lie-algebra noise, and
BEV observations are ground-truth patches degraded by feature noise,
square occlusions and an optional geo-fixed canopy that lowers confidence.

Every generator takes its own RNG stream derived from a seed with
`make_rng`, so outputs are bitwise reproducible and per-frame
observations can be produced in any order.
"""

import logging
import math
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import InvalidArgumentError
from models.geometry_models import MotionNoiseParams, Pose2
from models.map_models import BevSpec, ConfidenceMap, FeatureMap, GeoTransform
from models.run_models import ObservationNoiseConfig, SimWorldConfig, TrajectoryConfig, TrajectoryRecord
from services.grid_maps import normalize_cells
from services.patch_sampler import bilinear_sample, build_grid, sample_confidence
from services.se2_geometry import compose, compose_array, exp_map_array, relative_motion, sample_motion_noise
from services.training_losses import confidence_target

logger = logging.getLogger(__name__)

LACUNARITY = 2.0
PERSISTENCE = 0.5

TRAJECTORY_STREAM = 0
ODOMETRY_STREAM = 1
# observation streams are (seed, frame); the canopy takes (seed, 0, 1)
CANOPY_STREAM = (0, 1)
CANOPY_OCTAVES = 2


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream...)."""
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def _fade(t: np.ndarray) -> np.ndarray:
    """Perlin fade 6t^5 - 15t^4 + 10t^3."""
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def value_noise(height: int, width: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean lattice noise with cell size `scale` pixels, smoothly interpolated."""
    scale = max(scale, 1.0)
    lattice = rng.standard_normal((int(math.ceil(height / scale)) + 2, int(math.ceil(width / scale)) + 2))

    ys = np.arange(height, dtype=np.float64) / scale
    xs = np.arange(width, dtype=np.float64) / scale
    yi = np.floor(ys).astype(np.int64)
    xi = np.floor(xs).astype(np.int64)
    fy = _fade(ys - yi)[:, None]
    fx = _fade(xs - xi)[None, :]

    v00 = lattice[yi[:, None], xi[None, :]]
    v01 = lattice[yi[:, None], xi[None, :] + 1]
    v10 = lattice[yi[:, None] + 1, xi[None, :]]
    v11 = lattice[yi[:, None] + 1, xi[None, :] + 1]
    top = v00 + fx * (v01 - v00)
    bottom = v10 + fx * (v11 - v10)
    return top + fy * (bottom - top)


def fractal_noise(height: int, width: int, octaves: int, base_scale: float, rng: np.random.Generator) -> np.ndarray:
    result = np.zeros((height, width), dtype=np.float64)
    amplitude = 1.0
    scale = base_scale
    for _ in range(octaves):
        result += amplitude * value_noise(height, width, scale, rng)
        amplitude *= PERSISTENCE
        scale /= LACUNARITY
    return result


def generate_world(cfg: SimWorldConfig) -> FeatureMap:
    """Geo-referenced size x size x dim world, unit-norm cells."""
    rng = make_rng(cfg.seed)
    base_scale = cfg.correlation_length / cfg.resolution
    data = np.empty((cfg.size, cfg.size, cfg.dim), dtype=np.float32)
    for channel in range(cfg.dim):
        data[:, :, channel] = fractal_noise(cfg.size, cfg.size, cfg.octaves, base_scale, rng)

    data = normalize_cells(data)
    data.flags.writeable = False
    geo = GeoTransform(origin_east=cfg.origin_east, origin_north=cfg.origin_north, resolution=cfg.resolution)
    logger.info("generated %dx%dx%d world (seed %d)", cfg.size, cfg.size, cfg.dim, cfg.seed)
    return FeatureMap.model_construct(data=data, geo=geo)


def _inside(pose: np.ndarray, bounds: Tuple[float, float, float, float]) -> Tuple[bool, bool]:
    min_x, max_x, min_y, max_y = bounds
    return bool(min_x <= pose[0] <= max_x), bool(min_y <= pose[1] <= max_y)


def generate_trajectory(world: FeatureMap, cfg: TrajectoryConfig) -> TrajectoryRecord:
    """
    Rollout of cfg.n_steps poses at fixed dt starting at the map center.

    Speed and yaw rate are redrawn every segment_duration seconds; a stopped
    vehicle does not turn. A step that would leave the margin reflects the
    heading off the violated boundary, then turns around, then holds position.
    """
    min_x, max_x, min_y, max_y = world.extent()
    bounds = (min_x + cfg.margin, max_x - cfg.margin, min_y + cfg.margin, max_y - cfg.margin)
    if bounds[0] > bounds[1] or bounds[2] > bounds[3]:
        raise InvalidArgumentError(f"world extent is too small for a {cfg.margin} m margin")

    rng = make_rng(cfg.seed, TRAJECTORY_STREAM)
    pose = np.array([
        0.5 * (min_x + max_x),
        0.5 * (min_y + max_y),
        rng.uniform(-math.pi, math.pi),
    ])
    steps_per_segment = max(1, int(round(cfg.segment_duration / cfg.dt)))

    poses = [pose]
    speed = yaw_rate = 0.0
    for k in range(1, cfg.n_steps):
        if (k - 1) % steps_per_segment == 0:
            speed = rng.uniform(cfg.speed_min, cfg.speed_max)
            yaw_rate = rng.uniform(cfg.yaw_rate_min, cfg.yaw_rate_max) if speed > 0 else 0.0
        motion = exp_map_array([speed * cfg.dt, 0.0, yaw_rate * cfg.dt])

        candidate = compose_array(pose, motion)
        x_ok, y_ok = _inside(candidate, bounds)
        if not (x_ok and y_ok):
            heading = pose[2]
            if not x_ok:
                heading = math.pi - heading
            if not y_ok:
                heading = -heading
            candidate = compose_array(np.array([pose[0], pose[1], heading]), motion)
            if not all(_inside(candidate, bounds)):
                candidate = compose_array(np.array([pose[0], pose[1], pose[2] + math.pi]), motion)
            if not all(_inside(candidate, bounds)):
                candidate = pose.copy()
        pose = candidate
        poses.append(pose)

    timestamps = np.arange(cfg.n_steps, dtype=np.float64) * cfg.dt
    return TrajectoryRecord.from_arrays(timestamps, np.stack(poses))


def generate_odometry(gt: Sequence[Pose2], noise: MotionNoiseParams, rng: np.random.Generator) -> List[Pose2]:
    """u_t = relative_motion(gt[t-1], gt[t]) ⊕ noise, one per consecutive pair."""
    if len(gt) < 2:
        raise InvalidArgumentError("odometry needs at least two poses")
    odometry = []
    for previous, current in zip(gt, gt[1:]):
        motion = relative_motion(previous, current)
        odometry.append(compose(motion, sample_motion_noise(motion, noise, rng)))
    return odometry


def _occlusion_mask(height: int, width: int, cfg: ObservationNoiseConfig, rng: np.random.Generator) -> np.ndarray:
    """Random squares (possibly clipped at the border) until the target fraction is covered."""
    mask = np.zeros((height, width), dtype=bool)
    if cfg.occlusion_fraction <= 0.0:
        return mask
    if cfg.occlusion_fraction >= 1.0:
        mask[:] = True
        return mask

    size = cfg.occlusion_patch_size
    target = int(math.ceil(cfg.occlusion_fraction * height * width))
    while np.count_nonzero(mask) < target:
        row = int(rng.integers(1 - size, height))
        col = int(rng.integers(1 - size, width))
        mask[max(row, 0):row + size, max(col, 0):col + size] = True
    return mask


def generate_canopy(world_hat: FeatureMap, noise: ObservationNoiseConfig) -> ConfidenceMap:
    """
    Aerial visibility on the world grid: 0 under canopy, 1 in the open.

    The canopy is fixed in the world, so every frame crossing it loses
    confidence in the same place.
    """
    visibility = np.ones((world_hat.height, world_hat.width), dtype=np.float32)
    if noise.canopy_fraction > 0.0:
        field = fractal_noise(
            world_hat.height,
            world_hat.width,
            CANOPY_OCTAVES,
            noise.canopy_scale / world_hat.geo.resolution,
            make_rng(noise.seed, *CANOPY_STREAM),
        )
        visibility[field > np.quantile(field, 1.0 - noise.canopy_fraction)] = 0.0
    visibility.flags.writeable = False
    return ConfidenceMap.model_construct(data=visibility)


def synthesize_observation(
    world_hat: FeatureMap,
    pose_gt: Pose2,
    spec: BevSpec,
    noise: ObservationNoiseConfig,
    rng: np.random.Generator,
    visibility: Optional[ConfidenceMap] = None,
) -> Tuple[FeatureMap, ConfidenceMap]:
    """Noisy, occluded BEV features at pose_gt and their confidence map."""
    grid = build_grid(pose_gt, world_hat.geo, spec)
    clean = bilinear_sample(world_hat, grid)

    if noise.feature_noise_sigma > 0:
        perturbed = clean.data + (rng.standard_normal(clean.data.shape) * noise.feature_noise_sigma).astype(np.float32)
        features = normalize_cells(perturbed)
    else:
        features = clean.data.copy()

    mask = _occlusion_mask(spec.height, spec.width, noise, rng)
    features[mask] = 0.0
    features.flags.writeable = False
    g_hat = FeatureMap.model_construct(data=features, geo=None)

    if noise.conf_mode == "oracle-cosine":
        # cosine of the unit observation and the unit clean patch; g itself stays the raw sample
        observed_hat = FeatureMap.model_construct(data=normalize_cells(features), geo=None)
        clean_hat = FeatureMap.model_construct(data=normalize_cells(clean.data), geo=None)
        conf = confidence_target(observed_hat, clean_hat).data.copy()
    else:
        conf = np.full((spec.height, spec.width), noise.conf_constant, dtype=np.float32)
    if visibility is not None:
        conf *= sample_confidence(visibility, grid).data
    conf[mask] = 0.0
    conf.flags.writeable = False
    return g_hat, ConfidenceMap.model_construct(data=conf)


def observation_stream(
    world_hat: FeatureMap,
    gt: TrajectoryRecord,
    spec: BevSpec,
    noise: ObservationNoiseConfig,
    start: int = 1,
) -> Iterator[Tuple[FeatureMap, ConfidenceMap]]:
    """Observations for frames start.. of gt, frame k drawing from stream (noise.seed, k)."""
    visibility = generate_canopy(world_hat, noise) if noise.canopy_fraction > 0.0 else None
    for k in range(start, len(gt)):
        yield synthesize_observation(world_hat, gt.poses[k], spec, noise, make_rng(noise.seed, k), visibility)
