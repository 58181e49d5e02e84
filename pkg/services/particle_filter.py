"""
Particle filter over SE(2) poses with a patch-matching observation model.

One RNG stream per filter, owned by FilterState and consumed in a fixed
order: initialization, per-particle motion noise in index order, then the
single resampling draw. Particles are scored in fixed-size chunks that may
run on a thread pool; results are gathered in particle order so the output
does not depend on the thread count.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager, nullcontext
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from models.filter_models import FilterConfig, FilterState, StepDiagnostics
from models.geometry_models import Pose2
from models.map_models import BevSpec, ConfidenceMap, FeatureMap
from services.grid_maps import crop_centered, world_to_pixel
from services.likelihood import log_likelihood, score_batch, update_log_weights
from services.patch_sampler import gather_patch_taps
from services.se2_geometry import compose_array, sample_motion_noise_batch, wrap_angle

logger = logging.getLogger(__name__)

RESULTANT_EPSILON = 1e-12

# particles per gather; fixed so scores do not depend on the thread count
PARTICLE_CHUNK = 2


class PhaseTimer:
    """Accumulates wall time per filter phase across steps."""

    PHASES = ("predict", "crop", "grid_sample", "score", "weight_update", "resample")

    def __init__(self):
        self.totals: Dict[str, float] = dict.fromkeys(self.PHASES, 0.0)

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - start

    def reset(self) -> None:
        self.totals = dict.fromkeys(self.PHASES, 0.0)


def _phase(timer: Optional[PhaseTimer], name: str):
    return timer.phase(name) if timer is not None else nullcontext()


def initialize(pose0: Pose2, config: FilterConfig) -> FilterState:
    """Gaussian cloud around pose0 with uniform log-weights -ln N."""
    n = config.n_particles
    rng = np.random.default_rng(config.seed)
    draws = rng.standard_normal((n, 3))
    poses = np.empty((n, 3), dtype=np.float64)
    poses[:, 0] = pose0.x + draws[:, 0] * config.init_sigma_trans
    poses[:, 1] = pose0.y + draws[:, 1] * config.init_sigma_trans
    poses[:, 2] = wrap_angle(pose0.theta + draws[:, 2] * config.init_sigma_rot)
    log_weights = np.full(n, -np.log(n), dtype=np.float64)
    logger.debug("initialized %d particles around (%.3f, %.3f, %.4f)", n, pose0.x, pose0.y, pose0.theta)
    return FilterState(poses=poses, log_weights=log_weights, step=0, rng=rng)


def predict(state: FilterState, u: Pose2, config: FilterConfig) -> FilterState:
    """x_i <- x_i ⊕ u ⊕ Exp(delta_i); weights unchanged."""
    noise = sample_motion_noise_batch(u, config.motion_noise, state.rng, state.n_particles)
    poses = compose_array(compose_array(state.poses, u.to_array()), noise)
    return state.model_copy(update={"poses": poses, "step": state.step + 1})


def mean_pose(state: FilterState) -> Pose2:
    """
    Weighted mean position and circular-mean heading.

    Offsets are accumulated relative to the highest-weight particle, which is
    also the heading fallback when the resultant vector vanishes.
    """
    weights = state.weights
    total = np.sum(weights)
    ref = state.poses[int(np.argmax(weights))]

    x = ref[0] + np.sum(weights * (state.poses[:, 0] - ref[0])) / total
    y = ref[1] + np.sum(weights * (state.poses[:, 1] - ref[1])) / total

    dtheta = state.poses[:, 2] - ref[2]
    sin_sum = np.sum(weights * np.sin(dtheta))
    cos_sum = np.sum(weights * np.cos(dtheta))
    if math.hypot(sin_sum, cos_sum) < RESULTANT_EPSILON:
        theta = ref[2]
    else:
        theta = wrap_angle(ref[2] + math.atan2(sin_sum, cos_sum))
    return Pose2(x=float(x), y=float(y), theta=float(theta))


def _count_out_of_crop(state: FilterState, crop: FeatureMap) -> int:
    u, v = world_to_pixel(crop.geo, state.poses[:, 0], state.poses[:, 1])
    outside = (u < 0) | (u > crop.width - 1) | (v < 0) | (v > crop.height - 1)
    return int(np.count_nonzero(outside))


def update(
    state: FilterState,
    g_hat: FeatureMap,
    conf: ConfidenceMap,
    aerial_map_hat: FeatureMap,
    spec: BevSpec,
    config: FilterConfig,
    threads: int = 1,
    timer: Optional[PhaseTimer] = None,
) -> FilterState:
    """Reweight particles against one crop of the aerial map around the mean pose."""
    with _phase(timer, "crop"):
        center = mean_pose(state)
        crop = crop_centered(aerial_map_hat, center, config.crop_h, config.crop_w)
    out_of_crop = _count_out_of_crop(state, crop)
    if out_of_crop:
        logger.warning("step %d: %d particles outside the aerial crop", state.step, out_of_crop)

    n = state.n_particles
    starts = list(range(0, n, PARTICLE_CHUNK))

    def sample_chunk(start: int):
        return gather_patch_taps(crop, state.poses[start:start + PARTICLE_CHUNK], spec)

    def score_chunk(gathered) -> np.ndarray:
        return score_batch(g_hat, conf, *gathered)

    scores = np.empty(n, dtype=np.float64)
    workers = max(1, int(threads))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        run = pool.map if pool is not None else map
        for block in range(0, len(starts), workers):
            batch = starts[block:block + workers]
            with _phase(timer, "grid_sample"):
                gathered = list(run(sample_chunk, batch))
            with _phase(timer, "score"):
                chunk_scores = list(run(score_chunk, gathered))
            for start, values in zip(batch, chunk_scores):
                scores[start:start + values.shape[0]] = values
    finally:
        if pool is not None:
            pool.shutdown()

    with _phase(timer, "weight_update"):
        log_weights = update_log_weights(state.log_weights, log_likelihood(scores, config.score_params()))

    return state.model_copy(update={
        "log_weights": log_weights,
        "last_crop_geo": crop.geo,
        "last_scores": scores,
        "last_out_of_crop": out_of_crop,
    })


def effective_sample_size(state: FilterState) -> float:
    """1 / sum(w^2), clamped to [1, N]; exactly N for identical log-weights."""
    if np.all(state.log_weights == state.log_weights[0]):
        return float(state.n_particles)
    weights = state.weights
    ess = 1.0 / float(np.sum(weights * weights))
    return min(max(ess, 1.0), float(state.n_particles))


def systematic_resample_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Low-variance selector: one draw r in [0, 1/N), positions r + k/N."""
    n = weights.shape[0]
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    positions = rng.uniform(0.0, 1.0 / n) + np.arange(n) / n
    return np.minimum(np.searchsorted(cumulative, positions, side="right"), n - 1)


def resample_if_needed(state: FilterState, config: FilterConfig) -> FilterState:
    threshold = config.ess_fraction * state.n_particles
    ess = effective_sample_size(state)
    if ess >= threshold:
        return state.model_copy(update={"last_resampled": False})

    indices = systematic_resample_indices(state.weights, state.rng)
    n = state.n_particles
    logger.debug("step %d: ESS %.2f below %.2f, resampling", state.step, ess, threshold)
    return state.model_copy(update={
        "poses": state.poses[indices].copy(),
        "log_weights": np.full(n, -np.log(n), dtype=np.float64),
        "last_resampled": True,
    })


def step(
    state: FilterState,
    u: Pose2,
    g_hat: FeatureMap,
    conf: ConfidenceMap,
    aerial_map_hat: FeatureMap,
    spec: BevSpec,
    config: FilterConfig,
    threads: int = 1,
    timer: Optional[PhaseTimer] = None,
) -> Tuple[FilterState, Pose2]:
    """predict -> update -> resample_if_needed -> mean_pose."""
    with _phase(timer, "predict"):
        state = predict(state, u, config)
    state = update(state, g_hat, conf, aerial_map_hat, spec, config, threads=threads, timer=timer)
    with _phase(timer, "resample"):
        state = resample_if_needed(state, config)
    return state, mean_pose(state)


def predict_only_step(state: FilterState, u: Pose2, config: FilterConfig) -> Tuple[FilterState, Pose2]:
    """Dead-reckoning ensemble step: the filter loop without an observation."""
    state = predict(state, u, config)
    state = resample_if_needed(state, config)
    return state, mean_pose(state)


def diagnostics(state: FilterState, t: float = 0.0) -> StepDiagnostics:
    scores = state.last_scores
    if scores is None or scores.size == 0:
        scores = np.zeros(1)
    return StepDiagnostics(
        step=state.step,
        t=t,
        ess=effective_sample_size(state),
        resampled=state.last_resampled,
        score_min=float(np.min(scores)),
        score_mean=float(np.mean(scores)),
        score_max=float(np.max(scores)),
        score_std=float(np.std(scores)),
        out_of_crop=state.last_out_of_crop,
    )
