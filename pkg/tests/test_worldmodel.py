import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_grid
from gridnav.worldmodel import (
    GridMap,
    MapError,
    Rect,
    ScenarioError,
    create_grid_map,
    extract_obstacles,
    grid_map_from_json,
    grid_map_to_json,
    grid_to_world,
    load_bundled_scenario,
    load_scenario,
    world_to_grid,
)
from oracles import rasterize_and_inflate


def scenario_doc(**overrides):
    doc = {
        "name": "test-scene",
        "bounds": {"x_min": 0.0, "y_min": 0.0, "x_max": 10.0, "y_max": 10.0},
        "objects": [],
        "robot": {"x": 1.0, "y": 1.0, "heading": 0.0, "id": 1},
    }
    doc.update(overrides)
    return doc


class TestLoadScenario:
    def test_degenerate_empty_scene(self):
        scenario = load_scenario(scenario_doc())
        assert scenario.name == "test-scene"
        assert scenario.objects == ()
        assert scenario.robot_spawn == (1.0, 1.0, 0.0)

    def test_spawn_inside_object_rejected(self):
        doc = scenario_doc(objects=[
            {"label": "table", "rect": {"x_min": 0.5, "y_min": 0.5, "x_max": 2.0, "y_max": 2.0}}
        ])
        with pytest.raises(ScenarioError, match="spawn collides with object"):
            load_scenario(doc)

    def test_bundled_living_room_object_count(self):
        scenario = load_bundled_scenario("living_room")
        assert len(scenario.objects) == 6
        labels = {o.label for o in scenario.objects}
        assert "sofa" in labels and "dining_table" in labels

    def test_zero_area_bounds_rejected(self):
        doc = scenario_doc(bounds={"x_min": 0, "y_min": 0, "x_max": 0, "y_max": 5})
        with pytest.raises(ScenarioError, match="bounds"):
            load_scenario(doc)

    def test_object_outside_bounds_rejected(self):
        doc = scenario_doc(objects=[
            {"label": "ghost", "rect": {"x_min": 20, "y_min": 20, "x_max": 21, "y_max": 21}}
        ])
        with pytest.raises(ScenarioError, match="outside scene bounds"):
            load_scenario(doc)

    def test_wrong_robot_id_rejected(self):
        doc = scenario_doc(robot={"x": 1, "y": 1, "heading": 0, "id": 7})
        with pytest.raises(ScenarioError, match="robot id"):
            load_scenario(doc)

    def test_json_text_round_trip(self):
        scenario = load_scenario(json.dumps(scenario_doc()))
        assert scenario.bounds == Rect(0.0, 0.0, 10.0, 10.0)


class TestCoordinateTransforms:
    def test_origin_cell(self):
        grid = make_grid(np.zeros((20, 20)), resolution=0.05)
        assert world_to_grid((0.0, 0.0), grid) == (0, 0)

    def test_direct_arithmetic(self):
        grid = make_grid(np.zeros((40, 40)), resolution=0.05)
        assert world_to_grid((1.0, 0.5), grid) == (10, 20)

    def test_out_of_bounds_raises(self):
        grid = make_grid(np.zeros((20, 20)), resolution=0.05)
        with pytest.raises(MapError):
            world_to_grid((-0.1, 0.0), grid)

    def test_cell_center(self):
        grid = make_grid(np.zeros((40, 40)), resolution=0.05)
        assert grid_to_world((0, 0), grid) == (0.025, 0.025)
        x, y = grid_to_world((10, 20), grid)
        assert (x, y) == pytest.approx((1.025, 0.525))

    def test_out_of_range_cell_raises(self):
        grid = make_grid(np.zeros((20, 20)))
        with pytest.raises(MapError):
            grid_to_world((20, 0), grid)

    def test_round_trip_all_cells(self):
        grid = make_grid(np.zeros((20, 20)), resolution=0.05)
        for r in range(20):
            for c in range(20):
                assert world_to_grid(grid_to_world((r, c), grid), grid) == (r, c)

    @given(
        x=st.floats(0, 0.999), y=st.floats(0, 0.999),
        resolution=st.sampled_from([0.05, 0.1, 0.25]),
    )
    def test_snap_moves_less_than_half_diagonal(self, x, y, resolution):
        n = math.ceil(1.0 / resolution)
        grid = make_grid(np.zeros((n, n)), resolution=resolution)
        sx, sy = grid_to_world(world_to_grid((x, y), grid), grid)
        assert math.hypot(sx - x, sy - y) < resolution * math.sqrt(2) / 2 + 1e-12


class TestCreateGridMap:
    def test_empty_scenario_all_free(self):
        scenario = load_scenario(scenario_doc())
        grid = create_grid_map(scenario, resolution=0.5, inflation_radius=0)
        assert grid.obstacle_count() == 0
        assert (grid.rows, grid.cols) == (20, 20)

    def test_single_cell_obstacle_inflates_to_3x3(self):
        doc = scenario_doc(objects=[
            {"label": "post",
             "rect": {"x_min": 5.1, "y_min": 5.1, "x_max": 5.4, "y_max": 5.4}}
        ])
        grid = create_grid_map(load_scenario(doc), resolution=0.5,
                               inflation_radius=1, inflate_boundary=False)
        block = grid.cells[9:12, 9:12]
        assert block.all()
        assert grid.obstacle_count() == 9

    def test_living_room_matches_brute_force_oracle(self):
        scenario = load_bundled_scenario("living_room")
        grid = create_grid_map(scenario, resolution=0.05, inflation_radius=4)
        expected = rasterize_and_inflate(scenario, 0.05, 4, inflate_boundary=True)
        assert np.array_equal(grid.cells, expected)

    def test_non_positive_resolution_rejected(self):
        scenario = load_scenario(scenario_doc())
        with pytest.raises(MapError):
            create_grid_map(scenario, resolution=0.0)

    def test_cell_budget_enforced(self):
        scenario = load_scenario(scenario_doc())
        with pytest.raises(MapError, match="budget"):
            create_grid_map(scenario, resolution=0.001)

    def test_inflation_monotonicity(self):
        scenario = load_bundled_scenario("bedroom")
        previous = None
        for radius in (0, 1, 2, 4):
            grid = create_grid_map(scenario, resolution=0.1, inflation_radius=radius)
            if previous is not None:
                assert np.all(grid.cells >= previous)
            previous = grid.cells

    def test_determinism(self):
        scenario = load_bundled_scenario("kitchen")
        a = create_grid_map(scenario, 0.05, 4)
        b = create_grid_map(scenario, 0.05, 4)
        assert np.array_equal(a.cells, b.cells)


@st.composite
def random_grids(draw):
    rows = draw(st.integers(2, 12))
    cols = draw(st.integers(2, 12))
    bits = draw(st.lists(st.integers(0, 1), min_size=rows * cols, max_size=rows * cols))
    return make_grid(np.array(bits, dtype=np.uint8).reshape(rows, cols))


class TestObstacleList:
    def test_all_zero_grid(self):
        assert extract_obstacles(make_grid(np.zeros((4, 4)))).coords == ()

    def test_single_obstacle(self):
        cells = np.zeros((4, 5), dtype=np.uint8)
        cells[2, 3] = 1
        assert extract_obstacles(make_grid(cells)).coords == ((2, 3),)

    @given(random_grids())
    def test_grid_list_duality(self, grid):
        coords = extract_obstacles(grid).coords
        rebuilt = np.zeros_like(grid.cells)
        for r, c in coords:
            rebuilt[r, c] = 1
        assert np.array_equal(rebuilt, grid.cells)
        assert list(coords) == sorted(coords)  # canonical row-major order

    @given(random_grids())
    def test_json_export_round_trip(self, grid):
        restored = grid_map_from_json(grid_map_to_json(grid))
        assert np.array_equal(restored.cells, grid.cells)
        assert restored.resolution == grid.resolution
        assert restored.origin == grid.origin
