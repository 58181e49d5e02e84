"""
SE(2) group operations for the localization engine.

Poses are (x, y, theta) with theta wrapped to (-pi, pi]. Every operation
has an array form working on ``(..., 3)`` float64 arrays, used by the
particle filter on whole particle sets, and a Pose2/Twist2 form built on
top of it.
"""

import math
from typing import List, Sequence

import numpy as np

from core.exceptions import IllConditionedLogError
from models.geometry_models import MotionNoiseParams, Pose2, Twist2

# Below this |theta| the V(theta) entries switch to their Taylor expansions.
SMALL_ANGLE = 1e-6


def wrap_angle(theta):
    """Wrap angles to (-pi, pi]; values already in range are returned unchanged."""
    theta = np.asarray(theta, dtype=np.float64)
    in_range = (theta > -np.pi) & (theta <= np.pi)
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    wrapped = np.where(wrapped <= -np.pi, np.pi, wrapped)
    return np.where(in_range, theta, wrapped)


def _v_terms(theta: np.ndarray):
    """sin(t)/t and (1 - cos(t))/t, Taylor-expanded near zero."""
    small = np.abs(theta) < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    half_sin = np.sin(0.5 * safe)
    a = np.where(small, 1.0 - theta * theta / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 * theta, 2.0 * half_sin * half_sin / safe)
    return a, b


def compose_array(a, b) -> np.ndarray:
    """a ⊕ b for broadcastable (..., 3) arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.cos(a[..., 2])
    s = np.sin(a[..., 2])
    x = a[..., 0] + c * b[..., 0] - s * b[..., 1]
    y = a[..., 1] + s * b[..., 0] + c * b[..., 1]
    theta = wrap_angle(a[..., 2] + b[..., 2])
    return np.stack([x, y, theta], axis=-1)


def inverse_array(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    c = np.cos(a[..., 2])
    s = np.sin(a[..., 2])
    x = -(c * a[..., 0] + s * a[..., 1])
    y = -(-s * a[..., 0] + c * a[..., 1])
    return np.stack([x, y, wrap_angle(-a[..., 2])], axis=-1)


def exp_map_array(delta) -> np.ndarray:
    """Closed-form SE(2) exponential of (..., 3) twists."""
    delta = np.asarray(delta, dtype=np.float64)
    theta = delta[..., 2]
    a, b = _v_terms(theta)
    x = a * delta[..., 0] - b * delta[..., 1]
    y = b * delta[..., 0] + a * delta[..., 1]
    return np.stack([x, y, wrap_angle(theta)], axis=-1)


def log_map_array(p) -> np.ndarray:
    """SE(2) logarithm of (..., 3) poses; |theta| must be below pi."""
    p = np.asarray(p, dtype=np.float64)
    theta = p[..., 2]
    if np.any(np.abs(theta) >= np.pi):
        raise IllConditionedLogError("SE(2) logarithm is ill-conditioned at |theta| = pi")
    small = np.abs(theta) < SMALL_ANGLE
    half = 0.5 * np.where(small, 1.0, theta)
    # (theta/2) * cot(theta/2)
    k = np.where(small, 1.0 - theta * theta / 12.0, half * np.cos(half) / np.sin(half))
    h = 0.5 * theta
    dx = k * p[..., 0] + h * p[..., 1]
    dy = -h * p[..., 0] + k * p[..., 1]
    return np.stack([dx, dy, theta], axis=-1)


def compose(a: Pose2, b: Pose2) -> Pose2:
    return Pose2.from_array(compose_array(a.to_array(), b.to_array()))


def inverse(a: Pose2) -> Pose2:
    return Pose2.from_array(inverse_array(a.to_array()))


def exp_map(delta: Twist2) -> Pose2:
    return Pose2.from_array(exp_map_array(delta.to_array()))


def log_map(p: Pose2) -> Twist2:
    return Twist2.from_array(log_map_array(p.to_array()))


def relative_motion(a: Pose2, b: Pose2) -> Pose2:
    """Motion u with a ⊕ u = b."""
    # rotate the difference instead of composing with inverse(a): no cancellation at UTM magnitudes
    c = math.cos(a.theta)
    s = math.sin(a.theta)
    dx = b.x - a.x
    dy = b.y - a.y
    return Pose2.from_array([c * dx + s * dy, -s * dx + c * dy, float(wrap_angle(b.theta - a.theta))])


def noise_sigmas(u: Pose2, params: MotionNoiseParams) -> np.ndarray:
    """Per-axis std (sigma_x, sigma_y, sigma_theta) for motion u."""
    trans = max(params.frac_trans * math.hypot(u.x, u.y), params.floor_trans)
    rot = max(params.frac_rot * abs(u.theta), params.floor_rot)
    return np.array([trans, trans, rot], dtype=np.float64)


def sample_motion_noise_batch(
    u: Pose2, params: MotionNoiseParams, rng: np.random.Generator, n: int
) -> np.ndarray:
    """n noise poses Exp(delta), drawn row by row so index i consumes the i-th triple."""
    delta = rng.standard_normal((n, 3)) * noise_sigmas(u, params)
    return exp_map_array(delta)


def sample_motion_noise(u: Pose2, params: MotionNoiseParams, rng: np.random.Generator) -> Pose2:
    return Pose2.from_array(sample_motion_noise_batch(u, params, rng, 1)[0])


def dead_reckon(pose0: Pose2, odometry: Sequence[Pose2]) -> List[Pose2]:
    """Chain odometry increments from pose0; returns len(odometry) + 1 poses."""
    current = pose0.to_array()
    poses = [pose0]
    for u in odometry:
        current = compose_array(current, u.to_array())
        poses.append(Pose2.from_array(current))
    return poses
