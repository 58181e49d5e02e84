#!/usr/bin/env python3
"""Tests for per-particle sampling grids and zero-padded bilinear sampling."""

import math
import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from core.exceptions import InvalidArgumentError
from models.geometry_models import Pose2
from models.map_models import BevSpec, ConfidenceMap, FeatureMap, GeoTransform, PatchGrid
from services.grid_maps import pixel_to_world
from services.patch_sampler import (
    bilinear_sample,
    body_offsets,
    build_grid,
    build_grid_array,
    gather_patch_taps,
    gather_taps,
    sample_confidence,
)

GEO = GeoTransform(origin_east=500000.0, origin_north=4500000.0, resolution=0.5)


def naive_bilinear(data, u, v):
    """Four-tap reference with out-of-bounds taps contributing zero."""
    height, width, dim = data.shape
    x0, y0 = math.floor(u), math.floor(v)
    du, dv = u - x0, v - y0
    out = np.zeros(dim, dtype=np.float64)
    for x, y, w in ((x0, y0, (1 - du) * (1 - dv)), (x0 + 1, y0, du * (1 - dv)),
                    (x0, y0 + 1, (1 - du) * dv), (x0 + 1, y0 + 1, du * dv)):
        if 0 <= x < width and 0 <= y < height:
            out += w * data[y, x].astype(np.float64)
    return out


class TestBuildGrid:

    def test_anchor_is_pose_pixel(self):
        spec = BevSpec(height=8, width=9, resolution=0.5)
        rng = np.random.default_rng(0)
        for _ in range(50):
            u0, v0 = rng.uniform(0, 400, size=2)
            x, y = pixel_to_world(GEO, u0, v0)
            grid = build_grid(Pose2(x=x, y=y, theta=rng.uniform(-math.pi, math.pi)), GEO, spec)
            anchor = grid.coords[spec.height - 1, (spec.width - 1) // 2]
            assert abs(anchor[0] - u0) < 1e-9
            assert abs(anchor[1] - v0) < 1e-9

    def test_east_facing_layout(self):
        spec = BevSpec(height=4, width=3, resolution=0.5)
        x, y = pixel_to_world(GEO, 10.0, 20.0)
        grid = build_grid(Pose2(x=x, y=y, theta=0.0), GEO, spec)
        # top row is furthest ahead (east); left column is north (smaller v)
        np.testing.assert_allclose(grid.coords[0, 1], (13.0, 20.0), atol=1e-9)
        np.testing.assert_allclose(grid.coords[3, 0], (10.0, 19.0), atol=1e-9)
        np.testing.assert_allclose(grid.coords[3, 2], (10.0, 21.0), atol=1e-9)

    def test_north_facing_layout(self):
        spec = BevSpec(height=3, width=3, resolution=0.5)
        x, y = pixel_to_world(GEO, 10.0, 20.0)
        grid = build_grid(Pose2(x=x, y=y, theta=math.pi / 2), GEO, spec)
        # forward is north (decreasing v), left is west (decreasing u)
        np.testing.assert_allclose(grid.coords[0, 1], (10.0, 18.0), atol=1e-9)
        np.testing.assert_allclose(grid.coords[2, 0], (9.0, 20.0), atol=1e-9)

    def test_batch_matches_single(self):
        spec = BevSpec(height=5, width=6, resolution=0.5)
        rng = np.random.default_rng(1)
        poses = np.column_stack([
            GEO.origin_east + rng.uniform(0, 100, 7),
            GEO.origin_north - rng.uniform(0, 100, 7),
            rng.uniform(-math.pi, math.pi, 7),
        ])
        batch = build_grid_array(poses, GEO, spec)
        assert batch.shape == (7, 5, 6, 2)
        for pose, coords in zip(poses, batch):
            np.testing.assert_allclose(build_grid(Pose2.from_array(pose), GEO, spec).coords, coords, atol=1e-9)

    def test_resolution_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            build_grid(Pose2(x=GEO.origin_east, y=GEO.origin_north), GEO, BevSpec(height=4, width=4, resolution=0.3))

    def test_body_offsets(self):
        forward, left = body_offsets(BevSpec(height=3, width=5, resolution=0.5))
        assert forward[0, 0] == 1.0 and forward[2, 0] == 0.0
        assert left[0, 0] == 1.0 and left[0, 2] == 0.0 and left[0, 4] == -1.0


class TestBilinearSample:

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            h, w, d = rng.integers(2, 10, size=3)
            data = rng.normal(size=(h, w, d)).astype(np.float32)
            coords = np.stack([
                rng.uniform(-2.0, w + 1.0, size=(4, 5)),
                rng.uniform(-2.0, h + 1.0, size=(4, 5)),
            ], axis=-1)
            patch = bilinear_sample(FeatureMap(data=data), PatchGrid(coords=coords))
            assert patch.data.shape == (4, 5, d)
            for r in range(4):
                for c in range(5):
                    expected = naive_bilinear(data, coords[r, c, 0], coords[r, c, 1])
                    np.testing.assert_allclose(patch.data[r, c], expected, atol=1e-6)

    def test_integer_coordinates_copy_pixels(self):
        data = np.arange(24, dtype=np.float32).reshape(3, 4, 2)
        coords = np.array([[[0.0, 0.0], [3.0, 2.0], [1.0, 2.0]]])
        patch = bilinear_sample(FeatureMap(data=data), PatchGrid(coords=coords))
        assert np.array_equal(patch.data[0], data[[0, 2, 2], [0, 3, 1]])

    def test_zero_padding_far_outside(self):
        data = np.ones((3, 3, 2), dtype=np.float32)
        coords = np.array([[[-5.0, 1.0], [1.0, 10.0]]])
        patch = bilinear_sample(FeatureMap(data=data), PatchGrid(coords=coords))
        assert np.all(patch.data == 0.0)

    def test_half_pixel_off_edge_is_half_weighted(self):
        data = np.ones((3, 3, 1), dtype=np.float32)
        coords = np.array([[[-0.5, 1.0], [2.5, 1.0]]])
        patch = bilinear_sample(FeatureMap(data=data), PatchGrid(coords=coords))
        np.testing.assert_allclose(patch.data[0, :, 0], (0.5, 0.5), atol=1e-7)

    def test_output_has_no_geo(self):
        data = np.ones((3, 3, 1), dtype=np.float32)
        patch = bilinear_sample(FeatureMap(data=data, geo=GEO), PatchGrid(coords=np.zeros((1, 1, 2))))
        assert patch.geo is None


def test_sample_confidence_stays_in_unit_interval():
    rng = np.random.default_rng(3)
    conf = ConfidenceMap(data=rng.uniform(0.0, 1.0, size=(6, 6)))
    coords = np.stack([rng.uniform(-1, 7, size=(5, 5)), rng.uniform(-1, 7, size=(5, 5))], axis=-1)
    patch = sample_confidence(conf, PatchGrid(coords=coords))
    assert patch.data.shape == (5, 5)
    assert np.all(patch.data >= 0.0) and np.all(patch.data <= 1.0)


def test_sample_confidence_bleeds_at_the_border():
    conf = ConfidenceMap(data=np.ones((6, 6)))
    inside = sample_confidence(conf, PatchGrid(coords=np.stack(np.meshgrid([1.0, 2.5, 4.0], [0.5, 3.0]), axis=-1)))
    assert np.all(inside.data == 1.0)
    # left column half a pixel off the map, right column fully inside
    coords = np.stack(np.meshgrid([-0.5, 2.0], [1.0, 2.0, 3.0]), axis=-1)
    edge = sample_confidence(conf, PatchGrid(coords=coords))
    np.testing.assert_allclose(edge.data[:, 0], 0.5, atol=1e-7)
    assert np.all(edge.data[:, 0] < 1.0) and np.all(edge.data[:, 1] == 1.0)


class TestSamplingProperties:

    def test_linear_in_the_map(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(12, 15, 3)).astype(np.float32)
        b = rng.normal(size=(12, 15, 3)).astype(np.float32)
        alpha, beta = 0.7, -1.9
        coords = np.stack([rng.uniform(-2, 17, size=(6, 7)), rng.uniform(-2, 14, size=(6, 7))], axis=-1)
        grid = PatchGrid(coords=coords)
        combined = bilinear_sample(FeatureMap(data=alpha * a + beta * b), grid).data
        separate = alpha * bilinear_sample(FeatureMap(data=a), grid).data \
            + beta * bilinear_sample(FeatureMap(data=b), grid).data
        np.testing.assert_allclose(combined, separate, atol=1e-5)

    def test_quarter_turn_equivariance(self):
        geo = GeoTransform(origin_east=0.0, origin_north=0.0, resolution=1.0)
        spec = BevSpec(height=8, width=7, resolution=1.0)
        rng = np.random.default_rng(5)
        data = rng.normal(size=(40, 40, 3)).astype(np.float32)
        # np.rot90 turns the map a quarter counter-clockwise about its center
        turned = np.ascontiguousarray(np.rot90(data))
        c = 19.5
        for _ in range(10):
            dx, dy = rng.uniform(-3, 3, size=2)
            theta = rng.uniform(-math.pi, math.pi / 2)
            pose = Pose2(x=c + dx, y=-c + dy, theta=theta)
            turned_pose = Pose2(x=c - dy, y=-c + dx, theta=theta + math.pi / 2)
            original = bilinear_sample(FeatureMap(data=data, geo=geo), build_grid(pose, geo, spec))
            rotated = bilinear_sample(FeatureMap(data=turned, geo=geo), build_grid(turned_pose, geo, spec))
            np.testing.assert_allclose(rotated.data, original.data, atol=1e-6)

    def test_whole_pixel_shift_moves_source_columns(self):
        geo = GeoTransform(origin_east=0.0, origin_north=0.0, resolution=1.0)
        spec = BevSpec(height=6, width=5, resolution=1.0)
        rng = np.random.default_rng(6)
        data = rng.normal(size=(30, 40, 2)).astype(np.float32)
        pose = Pose2(x=12.3, y=-14.6, theta=0.7)
        for k in (1, 3, 5):
            moved = Pose2(x=pose.x + k, y=pose.y, theta=pose.theta)
            shifted = bilinear_sample(FeatureMap(data=data, geo=geo), build_grid(moved, geo, spec))
            trimmed = bilinear_sample(FeatureMap(data=data[:, k:], geo=geo), build_grid(pose, geo, spec))
            np.testing.assert_allclose(shifted.data, trimmed.data, atol=1e-6)


class TestGatherTaps:

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(7)
        coords = np.stack([rng.uniform(-3, 12, size=(4, 5)), rng.uniform(-3, 9, size=(4, 5))], axis=-1)
        _, weights = gather_taps(np.ones((6, 9, 2), dtype=np.float32), coords)
        assert weights.shape == (4, 4, 5)
        np.testing.assert_allclose(weights.sum(axis=0), 1.0, atol=1e-12)

    def test_taps_read_source_pixels_and_zero_outside(self):
        data = np.arange(12, dtype=np.float32).reshape(3, 4, 1) + 1.0
        values, weights = gather_taps(data, np.array([[[1.25, 0.5], [3.5, 2.5], [-1e9, 1e9]]]))
        # (u, v) = (1.25, 0.5): rows 0-1, columns 1-2
        assert list(values[:, 0, 0, 0]) == [2.0, 3.0, 6.0, 7.0]
        np.testing.assert_allclose(weights[:, 0, 0], [0.375, 0.125, 0.375, 0.125])
        # bottom-right corner: only the (row 2, column 3) tap is on the map
        assert list(values[:, 0, 1, 0]) == [12.0, 0.0, 0.0, 0.0]
        assert np.all(values[:, 0, 2] == 0.0)

    def test_batch_blend_matches_bilinear_sample(self):
        geo = GeoTransform(origin_east=0.0, origin_north=0.0, resolution=0.5)
        spec = BevSpec(height=5, width=4, resolution=0.5)
        rng = np.random.default_rng(8)
        fm = FeatureMap(data=rng.normal(size=(30, 30, 3)).astype(np.float32), geo=geo)
        poses = np.column_stack([rng.uniform(-2, 17, 6), rng.uniform(-17, 2, 6), rng.uniform(-math.pi, math.pi, 6)])
        values, weights = gather_patch_taps(fm, poses, spec)
        assert values.shape == (4, 6, 5, 4, 3) and weights.shape == (4, 6, 5, 4)
        blended = np.einsum("tnhwd,tnhw->nhwd", values.astype(np.float64), weights)
        for i, pose in enumerate(poses):
            expected = bilinear_sample(fm, build_grid(Pose2.from_array(pose), geo, spec))
            np.testing.assert_allclose(blended[i], expected.data, atol=1e-6)
