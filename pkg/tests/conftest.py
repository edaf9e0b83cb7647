import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridnav.worldmodel import GridMap


def make_grid(cells, resolution=1.0, origin=(0.0, 0.0), inflation=0):
    """Grid from a nested list / array of 0-1 values (row 0 at the bottom)."""
    return GridMap(
        cells=np.asarray(cells, dtype=np.uint8),
        resolution=resolution,
        origin=origin,
        inflation_radius_cells=inflation,
    )


@pytest.fixture
def free_grid_3x3():
    return make_grid(np.zeros((3, 3)))


@pytest.fixture
def living_room():
    from gridnav.worldmodel import load_bundled_scenario

    return load_bundled_scenario("living_room")
