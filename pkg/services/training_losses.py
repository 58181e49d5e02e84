"""
Forward-only training objective: contrastive similarity loss over mined
negative poses, the self-supervised confidence target with its BCE loss,
and their sum.

There is no autodiff here. The confidence map enters every score as a
constant, which is what detaching it from the graph means for a forward
computation.
"""

import logging
import math
from typing import List, Sequence

import numpy as np
from scipy.special import logsumexp

from core.exceptions import InvalidArgumentError
from models.geometry_models import Pose2
from models.map_models import BevSpec, ConfidenceMap, FeatureMap
from models.run_models import LossBreakdown, LossConfig, NegativeMiningConfig
from services.likelihood import score
from services.patch_sampler import bilinear_sample, build_grid
from services.se2_geometry import compose_array

logger = logging.getLogger(__name__)

TAU_FLOOR = 0.01
BCE_EPSILON = 1e-7


def effective_tau(tau: float, floor: float = TAU_FLOOR) -> float:
    """Temperature after the lower clamp."""
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    return max(float(tau), floor)


def mine_negatives(pose_gt: Pose2, cfg: NegativeMiningConfig, rng: np.random.Generator) -> List[Pose2]:
    """
    `cfg.count` poses around pose_gt: direction uniform on the circle, distance
    uniform in [trans_min, trans_max], heading offset uniform in the rotation range.
    Offsets are applied in the world frame so the distance bound holds exactly.
    """
    n = cfg.count
    direction = rng.uniform(0.0, 2.0 * math.pi, n)
    distance = rng.uniform(cfg.trans_min, cfg.trans_max, n)
    dtheta = np.radians(rng.uniform(cfg.rot_min_deg, cfg.rot_max_deg, n))

    heading = np.zeros((n, 3), dtype=np.float64)
    heading[:, 2] = dtheta
    rotated = compose_array(pose_gt.to_array(), heading)
    rotated[:, 0] += distance * np.cos(direction)
    rotated[:, 1] += distance * np.sin(direction)
    return [Pose2.from_array(row) for row in rotated]


def info_nce(s_pos: float, s_negs: Sequence[float], tau: float, floor: float = TAU_FLOOR) -> float:
    """-log softmax of the positive among positive and negatives at temperature tau."""
    s_negs = np.asarray(s_negs, dtype=np.float64).reshape(-1)
    if s_negs.size == 0:
        raise InvalidArgumentError("info_nce needs at least one negative score")
    tau = effective_tau(tau, floor)

    l_pos = float(s_pos) / tau
    l_negs = s_negs / tau
    if l_pos >= np.max(l_negs):
        # every exponent is <= 0, so log1p keeps precision near zero loss
        return float(np.log1p(np.sum(np.exp(l_negs - l_pos))))
    return float(logsumexp(np.concatenate(([l_pos], l_negs))) - l_pos)


def confidence_target(g_hat: FeatureMap, f_pos_hat: FeatureMap) -> ConfidenceMap:
    """Per-cell max(0, <g, f>), clamped to [0, 1]."""
    if g_hat.data.shape != f_pos_hat.data.shape:
        raise InvalidArgumentError(
            f"feature shapes differ: {g_hat.data.shape} vs {f_pos_hat.data.shape}"
        )
    cosine = np.einsum("hwd,hwd->hw", g_hat.data, f_pos_hat.data, dtype=np.float64)
    target = np.clip(cosine, 0.0, 1.0).astype(np.float32)
    target.flags.writeable = False
    return ConfidenceMap.model_construct(data=target)


def bce_loss(c_pred: ConfidenceMap, c_gt: ConfidenceMap, epsilon: float = BCE_EPSILON) -> float:
    """Mean binary cross-entropy with predictions clamped to [epsilon, 1 - epsilon]."""
    if c_pred.data.shape != c_gt.data.shape:
        raise InvalidArgumentError(
            f"confidence shapes differ: {c_pred.data.shape} vs {c_gt.data.shape}"
        )
    if not 0.0 < epsilon < 0.5:
        raise InvalidArgumentError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    p = np.clip(c_pred.data.astype(np.float64), epsilon, 1.0 - epsilon)
    t = c_gt.data.astype(np.float64)
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))


def total_loss(l_sim: float, l_conf: float) -> float:
    return float(l_sim) + float(l_conf)


def training_objective(
    world_hat: FeatureMap,
    pose_gt: Pose2,
    g_hat: FeatureMap,
    c_pred: ConfidenceMap,
    spec: BevSpec,
    cfg: LossConfig,
    rng: np.random.Generator,
) -> LossBreakdown:
    """Full forward objective for one sample against a geo-referenced aerial map."""
    positive = bilinear_sample(world_hat, build_grid(pose_gt, world_hat.geo, spec))
    s_pos = score(g_hat, c_pred, positive)
    s_negs = [
        score(g_hat, c_pred, bilinear_sample(world_hat, build_grid(pose, world_hat.geo, spec)))
        for pose in mine_negatives(pose_gt, cfg.mining, rng)
    ]

    tau = effective_tau(cfg.tau, cfg.tau_floor)
    l_sim = info_nce(s_pos, s_negs, tau, cfg.tau_floor)
    l_conf = bce_loss(c_pred, confidence_target(g_hat, positive), cfg.bce_epsilon)
    logger.debug("objective: s_pos=%.4f l_sim=%.4f l_conf=%.4f", s_pos, l_sim, l_conf)
    return LossBreakdown(
        s_pos=s_pos,
        s_negs=s_negs,
        tau=tau,
        l_sim=l_sim,
        l_conf=l_conf,
        total=total_loss(l_sim, l_conf),
    )
