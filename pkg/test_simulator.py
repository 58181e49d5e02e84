#!/usr/bin/env python3
"""Tests for the synthetic world, trajectory, odometry and observation generators."""

import math
import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from conftest import SMALL_WORLD
from core.exceptions import InvalidArgumentError
from models.geometry_models import MotionNoiseParams, Pose2
from models.map_models import BevSpec, ConfidenceMap
from models.run_models import ObservationNoiseConfig, SimWorldConfig, TrajectoryConfig
from services.grid_maps import pixel_to_world
from services.likelihood import score
from services.patch_sampler import bilinear_sample, build_grid
from services.se2_geometry import compose, dead_reckon
from services.simulator import (
    generate_canopy,
    generate_odometry,
    generate_trajectory,
    generate_world,
    make_rng,
    observation_stream,
    synthesize_observation,
)


def mean_offset_cosine(world, offset_px, pairs=10_000, seed=0):
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, world.height, pairs)
    cols = rng.integers(0, world.width - offset_px, pairs)
    a = world.data[rows, cols].astype(np.float64)
    b = world.data[rows, cols + offset_px].astype(np.float64)
    return float(np.mean(np.sum(a * b, axis=-1)))


def within_bounds(record, world, margin):
    min_x, max_x, min_y, max_y = world.extent()
    poses = record.pose_array()
    return bool(np.all(
        (poses[:, 0] >= min_x + margin) & (poses[:, 0] <= max_x - margin)
        & (poses[:, 1] >= min_y + margin) & (poses[:, 1] <= max_y - margin)
    ))


class TestWorld:

    def test_deterministic(self, small_world):
        again = generate_world(SMALL_WORLD)
        assert again.data.tobytes() == small_world.data.tobytes()
        assert again.geo == small_world.geo

    def test_unit_norm_cells(self, small_world):
        norms = np.linalg.norm(small_world.data.astype(np.float64), axis=-1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_shape_and_geo(self, small_world):
        assert small_world.data.shape == (SMALL_WORLD.size, SMALL_WORLD.size, SMALL_WORLD.dim)
        assert small_world.geo.resolution == SMALL_WORLD.resolution
        assert small_world.geo.origin_east == SMALL_WORLD.origin_east

    def test_distant_cells_decorrelate(self, small_world):
        corr_px = SMALL_WORLD.correlation_length / SMALL_WORLD.resolution
        assert mean_offset_cosine(small_world, int(round(10 * corr_px))) < 0.5
        assert mean_offset_cosine(small_world, int(round(2 * corr_px))) < 0.5

    def test_neighbours_correlate(self, small_world):
        assert mean_offset_cosine(small_world, 1) > 0.5

    def test_seed_changes_world(self, small_world):
        other = generate_world(SMALL_WORLD.model_copy(update={"seed": 8}))
        assert other.data.tobytes() != small_world.data.tobytes()


class TestTrajectory:

    def test_zero_speed_is_constant(self, small_world):
        cfg = TrajectoryConfig(seed=1, n_steps=30, speed_min=0.0, speed_max=0.0, margin=10.0)
        poses = generate_trajectory(small_world, cfg).pose_array()
        np.testing.assert_allclose(poses, np.repeat(poses[:1], 30, axis=0), atol=1e-12)

    def test_zero_yaw_rate_is_collinear(self, small_world):
        cfg = TrajectoryConfig(seed=2, n_steps=20, speed_min=1.0, speed_max=1.0,
                               yaw_rate_min=0.0, yaw_rate_max=0.0, margin=10.0)
        record = generate_trajectory(small_world, cfg)
        poses = record.pose_array()
        steps = np.diff(poses[:, :2], axis=0)
        np.testing.assert_allclose(np.hypot(steps[:, 0], steps[:, 1]), 0.5, atol=1e-9)
        np.testing.assert_allclose(poses[:, 2], poses[0, 2], atol=1e-12)
        heading = np.arctan2(steps[:, 1], steps[:, 0])
        np.testing.assert_allclose(np.cos(heading - poses[0, 2]), 1.0, atol=1e-9)

    def test_timestamps(self, small_world):
        record = generate_trajectory(small_world, TrajectoryConfig(seed=3, n_steps=5, dt=0.25, margin=10.0))
        assert record.timestamps == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_stays_inside_margin(self, small_world):
        cfg = TrajectoryConfig(seed=4, n_steps=2000, speed_min=0.5, speed_max=2.0,
                               yaw_rate_min=-0.5, yaw_rate_max=0.5, margin=10.0)
        record = generate_trajectory(small_world, cfg)
        assert len(record) == 2000
        assert within_bounds(record, small_world, 10.0)

    def test_deterministic(self, small_world):
        cfg = TrajectoryConfig(seed=5, n_steps=50, margin=10.0)
        assert generate_trajectory(small_world, cfg) == generate_trajectory(small_world, cfg)

    def test_margin_too_large(self, small_world):
        with pytest.raises(InvalidArgumentError):
            generate_trajectory(small_world, TrajectoryConfig(seed=0, margin=30.0))


class TestOdometry:

    def test_zero_noise_reproduces_ground_truth(self, small_world):
        # map-local coordinates; northings near 4.5e6 have a float64 spacing close to 1e-9
        origin = Pose2(x=SMALL_WORLD.origin_east, y=SMALL_WORLD.origin_north)
        gt = [Pose2(x=p.x - origin.x, y=p.y - origin.y, theta=p.theta) for p in
              generate_trajectory(small_world, TrajectoryConfig(seed=6, n_steps=100, margin=10.0)).poses]
        odometry = generate_odometry(gt, MotionNoiseParams.zero(), np.random.default_rng(0))
        assert len(odometry) == 99
        replay = dead_reckon(gt[0], odometry)
        np.testing.assert_allclose([p.to_array() for p in replay], [p.to_array() for p in gt], atol=1e-9)

    def test_deterministic(self, small_world):
        gt = generate_trajectory(small_world, TrajectoryConfig(seed=7, n_steps=20, margin=10.0)).poses
        first = generate_odometry(gt, MotionNoiseParams(), make_rng(7, 1))
        second = generate_odometry(gt, MotionNoiseParams(), make_rng(7, 1))
        assert first == second

    def test_needs_two_poses(self):
        with pytest.raises(InvalidArgumentError):
            generate_odometry([Pose2()], MotionNoiseParams(), np.random.default_rng(0))

    def test_dead_reckoning_drifts(self):
        gt = [Pose2(x=0.5 * k) for k in range(501)]
        noise = MotionNoiseParams(frac_trans=0.1, frac_rot=0.1, floor_trans=0.01, floor_rot=0.01)
        drifted = 0
        for seed in range(100):
            odometry = generate_odometry(gt, noise, make_rng(seed, 1))
            end = dead_reckon(gt[0], odometry)[-1]
            if math.hypot(end.x - gt[-1].x, end.y - gt[-1].y) > 1.0:
                drifted += 1
        assert drifted >= 95


class TestObservation:

    def test_noiseless_self_match(self, small_world, small_spec, center_pose):
        noise = ObservationNoiseConfig(seed=0, feature_noise_sigma=0.0)
        g_hat, conf = synthesize_observation(small_world, center_pose, small_spec, noise, np.random.default_rng(0))
        clean = bilinear_sample(small_world, build_grid(center_pose, small_world.geo, small_spec))
        assert np.array_equal(g_hat.data, clean.data)
        np.testing.assert_allclose(conf.data, 1.0, atol=1e-5)
        assert score(g_hat, conf, clean) == pytest.approx(1.0, abs=1e-5)

    def test_full_occlusion(self, small_world, small_spec, center_pose):
        noise = ObservationNoiseConfig(seed=0, occlusion_fraction=1.0)
        g_hat, conf = synthesize_observation(small_world, center_pose, small_spec, noise, np.random.default_rng(0))
        assert np.all(conf.data == 0.0)
        assert np.all(g_hat.data == 0.0)
        other = compose(center_pose, Pose2(x=5.0, theta=1.0))
        patch = bilinear_sample(small_world, build_grid(other, small_world.geo, small_spec))
        assert score(g_hat, conf, patch) == 0.0

    def test_partial_occlusion_fraction(self, small_world, center_pose):
        spec = BevSpec(height=64, width=64, resolution=0.3)
        noise = ObservationNoiseConfig(seed=0, feature_noise_sigma=0.0, occlusion_fraction=0.3,
                                       occlusion_patch_size=8)
        g_hat, conf = synthesize_observation(small_world, center_pose, spec, noise, np.random.default_rng(1))
        occluded = np.all(g_hat.data == 0.0, axis=-1)
        assert 0.3 <= occluded.mean() <= 0.3 + 64 / 4096
        assert np.all(conf.data[occluded] == 0.0)
        assert np.all(conf.data[~occluded] > 0.99)

    def test_constant_confidence(self, small_world, small_spec, center_pose):
        noise = ObservationNoiseConfig(seed=0, conf_mode="constant", conf_constant=0.25)
        _, conf = synthesize_observation(small_world, center_pose, small_spec, noise, np.random.default_rng(0))
        assert np.all(conf.data == np.float32(0.25))

    def test_noisy_features_stay_unit_norm(self, small_world, small_spec, center_pose):
        noise = ObservationNoiseConfig(seed=0, feature_noise_sigma=0.5)
        g_hat, conf = synthesize_observation(small_world, center_pose, small_spec, noise, np.random.default_rng(0))
        np.testing.assert_allclose(np.linalg.norm(g_hat.data.astype(np.float64), axis=-1), 1.0, atol=1e-5)
        assert np.all((conf.data >= 0.0) & (conf.data <= 1.0))

    def test_true_pose_outscores_distant_pose(self, small_world, small_spec, center_pose):
        noise = ObservationNoiseConfig(seed=3, feature_noise_sigma=0.5)
        far = compose(center_pose, Pose2(x=10.0))
        true_patch = bilinear_sample(small_world, build_grid(center_pose, small_world.geo, small_spec))
        far_patch = bilinear_sample(small_world, build_grid(far, small_world.geo, small_spec))
        at_truth, at_far = [], []
        for k in range(100):
            g_hat, conf = synthesize_observation(small_world, center_pose, small_spec, noise, make_rng(3, k))
            at_truth.append(score(g_hat, conf, true_patch))
            at_far.append(score(g_hat, conf, far_patch))
        assert np.mean(at_truth) - np.mean(at_far) > 0.1

    def test_self_match_dominates_offsets(self, small_world, small_spec, center_pose):
        noise = ObservationNoiseConfig(seed=4, feature_noise_sigma=0.5)
        rng = np.random.default_rng(9)
        min_offset = 3 * SMALL_WORLD.correlation_length
        true_patch = bilinear_sample(small_world, build_grid(center_pose, small_world.geo, small_spec))
        wins = 0
        frames = 200
        for k in range(frames):
            g_hat, conf = synthesize_observation(small_world, center_pose, small_spec, noise, make_rng(4, k))
            distance = rng.uniform(min_offset, 3 * min_offset)
            direction = rng.uniform(0, 2 * math.pi)
            offset = Pose2(x=distance * math.cos(direction), y=distance * math.sin(direction),
                           theta=rng.uniform(-0.5, 0.5))
            moved = bilinear_sample(small_world, build_grid(compose(center_pose, offset), small_world.geo, small_spec))
            wins += score(g_hat, conf, true_patch) > score(g_hat, conf, moved)
        assert wins >= 0.99 * frames

    def test_stream_matches_per_frame_rng(self, small_world, small_spec):
        record = generate_trajectory(small_world, TrajectoryConfig(seed=2, n_steps=4, margin=10.0))
        noise = ObservationNoiseConfig(seed=11, occlusion_fraction=0.2)
        frames = list(observation_stream(small_world, record, small_spec, noise))
        assert len(frames) == 3
        for k, (g_hat, conf) in enumerate(frames, start=1):
            expected_g, expected_conf = synthesize_observation(
                small_world, record.poses[k], small_spec, noise, make_rng(11, k)
            )
            assert np.array_equal(g_hat.data, expected_g.data)
            assert np.array_equal(conf.data, expected_conf.data)

    def test_default_grid_confidence_is_cosine(self):
        world = generate_world(SimWorldConfig(seed=11, size=480, dim=8, octaves=2, correlation_length=1.5))
        spec = BevSpec()
        x, y = pixel_to_world(world.geo, 240, 240)
        pose = Pose2(x=x, y=y, theta=0.0)
        noise = ObservationNoiseConfig(seed=0, feature_noise_sigma=0.0)
        g_hat, conf = synthesize_observation(world, pose, spec, noise, np.random.default_rng(0))
        clean = bilinear_sample(world, build_grid(pose, world.geo, spec))
        assert np.array_equal(g_hat.data, clean.data)
        # an even BEV width puts every cell between two map rows
        assert np.linalg.norm(clean.data.astype(np.float64), axis=-1).min() < 0.999
        np.testing.assert_allclose(conf.data, 1.0, atol=1e-5)


class TestCanopy:

    def test_covered_fraction(self, small_world):
        noise = ObservationNoiseConfig(seed=1, canopy_fraction=0.25, canopy_scale=3.0)
        visibility = generate_canopy(small_world, noise)
        assert visibility.data.shape == (small_world.height, small_world.width)
        assert set(np.unique(visibility.data)) <= {0.0, 1.0}
        assert np.mean(visibility.data == 0.0) == pytest.approx(0.25, abs=0.01)

    def test_no_canopy_is_fully_visible(self, small_world):
        visibility = generate_canopy(small_world, ObservationNoiseConfig(seed=1))
        assert np.all(visibility.data == 1.0)

    def test_visibility_scales_confidence(self, small_world, small_spec, center_pose):
        noise = ObservationNoiseConfig(seed=0, feature_noise_sigma=0.3)
        plain_g, plain_conf = synthesize_observation(small_world, center_pose, small_spec, noise,
                                                     np.random.default_rng(5))
        ones = ConfidenceMap(data=np.ones((small_world.height, small_world.width)))
        open_g, open_conf = synthesize_observation(small_world, center_pose, small_spec, noise,
                                                   np.random.default_rng(5), visibility=ones)
        assert np.array_equal(open_g.data, plain_g.data)
        np.testing.assert_allclose(open_conf.data, plain_conf.data, atol=1e-6)

        zeros = ConfidenceMap(data=np.zeros((small_world.height, small_world.width)))
        _, hidden = synthesize_observation(small_world, center_pose, small_spec, noise,
                                           np.random.default_rng(5), visibility=zeros)
        assert np.all(hidden.data == 0.0)

    def test_stream_applies_the_canopy(self, small_world, small_spec):
        record = generate_trajectory(small_world, TrajectoryConfig(seed=2, n_steps=4, margin=10.0))
        noise = ObservationNoiseConfig(seed=11, canopy_fraction=0.4, canopy_scale=3.0)
        visibility = generate_canopy(small_world, noise)
        frames = list(observation_stream(small_world, record, small_spec, noise))
        for k, (g_hat, conf) in enumerate(frames, start=1):
            expected_g, expected_conf = synthesize_observation(
                small_world, record.poses[k], small_spec, noise, make_rng(11, k), visibility
            )
            assert np.array_equal(g_hat.data, expected_g.data)
            assert np.array_equal(conf.data, expected_conf.data)
