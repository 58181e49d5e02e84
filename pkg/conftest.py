"""Shared fixtures: a small procedural world and BEV grid that keep tests fast."""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import pytest

from models.geometry_models import Pose2
from models.map_models import BevSpec
from models.run_models import SimWorldConfig
from services.grid_maps import pixel_to_world
from services.simulator import generate_world


SMALL_WORLD = SimWorldConfig(seed=7, size=160, dim=8, resolution=0.3, octaves=3, correlation_length=1.5)


@pytest.fixture(scope="session")
def small_world():
    return generate_world(SMALL_WORLD)


@pytest.fixture
def small_spec():
    return BevSpec(height=16, width=17, resolution=0.3)


@pytest.fixture
def center_pose(small_world):
    """Pixel-aligned pose with heading 0 at the world center."""
    x, y = pixel_to_world(small_world.geo, small_world.width // 2, small_world.height // 2)
    return Pose2(x=x, y=y, theta=0.0)
