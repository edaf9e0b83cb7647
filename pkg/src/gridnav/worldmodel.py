"""Scene ingestion, occupancy-grid construction, and world/grid coordinate transforms.

Grid convention: row indexes y, col indexes x, origin at the scene's minimum
corner, floor-based binning. Cell values are 0 (free) / 1 (obstacle).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation

DEFAULT_RESOLUTION = 0.05
DEFAULT_INFLATION_CELLS = 4
DEFAULT_ROBOT_ID = 1

# Hard ceiling so a bad resolution cannot allocate an absurd grid.
MAX_GRID_CELLS = 4_000_000


class ScenarioError(ValueError):
    """Raised when a scenario document is malformed or violates an invariant."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class MapError(ValueError):
    """Raised for out-of-range coordinates or impossible grid parameters."""


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in world meters."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def intersects(self, other: "Rect") -> bool:
        return (
            self.x_min <= other.x_max
            and other.x_min <= self.x_max
            and self.y_min <= other.y_max
            and other.y_min <= self.y_max
        )


@dataclass(frozen=True)
class SceneObject:
    label: str
    footprint: Rect


@dataclass(frozen=True)
class Scenario:
    name: str
    bounds: Rect
    objects: tuple[SceneObject, ...]
    robot_spawn: tuple[float, float, float]  # x, y, heading
    robot_id: int = DEFAULT_ROBOT_ID


@dataclass(frozen=True)
class GridMap:
    cells: np.ndarray  # uint8, shape (rows, cols), values in {0, 1}
    resolution: float
    origin: tuple[float, float]  # world coords of the (0, 0) cell corner
    inflation_radius_cells: int

    def __post_init__(self):
        self.cells.flags.writeable = False

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def cols(self) -> int:
        return self.cells.shape[1]

    def in_range(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols

    def is_free(self, cell: tuple[int, int]) -> bool:
        return self.cells[cell[0], cell[1]] == 0

    def obstacle_count(self) -> int:
        return int(self.cells.sum())


@dataclass(frozen=True)
class ObstacleList:
    """Compact list-of-coordinates view of a grid's obstacle cells (row-major)."""

    coords: tuple[tuple[int, int], ...]


def _parse_rect(doc: dict, field_name: str) -> Rect:
    try:
        rect = Rect(
            float(doc["x_min"]), float(doc["y_min"]),
            float(doc["x_max"]), float(doc["y_max"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(field_name, f"malformed rectangle: {exc}") from exc
    if rect.width <= 0 or rect.height <= 0:
        raise ScenarioError(field_name, "rectangle must have positive area")
    return rect


def load_scenario(source: str | Path | dict) -> Scenario:
    """Parse and validate a scenario document (path, JSON text, or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if isinstance(source, Path) or not str(source).lstrip().startswith("{") else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("document", f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("document", "top-level value must be an object")

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise ScenarioError("name", "missing or empty scenario name")
    bounds = _parse_rect(doc.get("bounds", {}), "bounds")

    objects = []
    for i, obj in enumerate(doc.get("objects", [])):
        label = obj.get("label")
        if not isinstance(label, str) or not label:
            raise ScenarioError(f"objects[{i}].label", "missing object label")
        rect = _parse_rect(obj.get("rect", {}), f"objects[{i}].rect")
        if not rect.intersects(bounds):
            raise ScenarioError(f"objects[{i}].rect", "footprint lies outside scene bounds")
        objects.append(SceneObject(label, rect))

    robot = doc.get("robot")
    if not isinstance(robot, dict):
        raise ScenarioError("robot", "missing robot block")
    try:
        spawn = (float(robot["x"]), float(robot["y"]), float(robot["heading"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError("robot", f"malformed spawn pose: {exc}") from exc
    robot_id = int(robot.get("id", DEFAULT_ROBOT_ID))
    if robot_id != DEFAULT_ROBOT_ID:
        raise ScenarioError("robot.id", f"robot id must be {DEFAULT_ROBOT_ID}, got {robot_id}")

    if not bounds.contains_point(spawn[0], spawn[1]):
        raise ScenarioError("robot", "spawn lies outside scene bounds")
    for i, obj in enumerate(objects):
        if obj.footprint.contains_point(spawn[0], spawn[1]):
            raise ScenarioError("robot", f"spawn collides with object '{obj.label}'")

    return Scenario(name, bounds, tuple(objects), spawn, robot_id)


def world_to_grid(pos: tuple[float, float], grid: GridMap) -> tuple[int, int]:
    """World meters -> (row, col) by floor binning against the grid origin."""
    ox, oy = grid.origin
    x, y = pos
    if not (ox <= x < ox + grid.cols * grid.resolution and oy <= y < oy + grid.rows * grid.resolution):
        raise MapError(f"position ({x}, {y}) outside the mapped area")
    row = math.floor((y - oy) / grid.resolution)
    col = math.floor((x - ox) / grid.resolution)
    # Float roundoff at the far edge can land one past the last cell.
    return min(row, grid.rows - 1), min(col, grid.cols - 1)


def grid_to_world(cell: tuple[int, int], grid: GridMap) -> tuple[float, float]:
    """(row, col) -> the cell center in world meters."""
    if not grid.in_range(cell):
        raise MapError(f"cell {cell} out of range for {grid.rows}x{grid.cols} grid")
    ox, oy = grid.origin
    r, c = cell
    return ox + (c + 0.5) * grid.resolution, oy + (r + 0.5) * grid.resolution


def _rasterize(scenario: Scenario, resolution: float, rows: int, cols: int) -> np.ndarray:
    """Mark a cell as obstacle when its closed square intersects a footprint."""
    ox, oy = scenario.bounds.x_min, scenario.bounds.y_min
    raw = np.zeros((rows, cols), dtype=np.uint8)
    for obj in scenario.objects:
        fp = obj.footprint
        c_lo = max(0, math.floor((fp.x_min - ox) / resolution) - 1)
        c_hi = min(cols - 1, math.floor((fp.x_max - ox) / resolution) + 1)
        r_lo = max(0, math.floor((fp.y_min - oy) / resolution) - 1)
        r_hi = min(rows - 1, math.floor((fp.y_max - oy) / resolution) + 1)
        for r in range(r_lo, r_hi + 1):
            cell_y0 = oy + r * resolution
            if cell_y0 > fp.y_max or cell_y0 + resolution < fp.y_min:
                continue
            for c in range(c_lo, c_hi + 1):
                cell_x0 = ox + c * resolution
                if cell_x0 <= fp.x_max and cell_x0 + resolution >= fp.x_min:
                    raw[r, c] = 1
    return raw


def create_grid_map(
    scenario: Scenario,
    resolution: float = DEFAULT_RESOLUTION,
    inflation_radius: int = DEFAULT_INFLATION_CELLS,
    inflate_boundary: bool = True,
) -> GridMap:
    """Rasterize the scenario and dilate obstacles by a Chebyshev radius.

    With inflate_boundary the scene walls are dilated inward as well, so a
    plan over the inflated grid keeps the robot body clear of the walls, not
    just the furniture.
    """
    if resolution <= 0:
        raise MapError(f"resolution must be positive, got {resolution}")
    if inflation_radius < 0:
        raise MapError(f"inflation radius must be non-negative, got {inflation_radius}")
    rows = math.ceil(scenario.bounds.height / resolution)
    cols = math.ceil(scenario.bounds.width / resolution)
    if rows * cols > MAX_GRID_CELLS:
        raise MapError(f"grid would need {rows * cols} cells (budget {MAX_GRID_CELLS})")

    raw = _rasterize(scenario, resolution, rows, cols)
    if inflation_radius > 0:
        structure = np.ones((2 * inflation_radius + 1,) * 2, dtype=bool)
        if inflate_boundary:
            padded = np.pad(raw, inflation_radius, constant_values=1)
            inflated = binary_dilation(padded.astype(bool), structure)
            cells = inflated[inflation_radius:-inflation_radius, inflation_radius:-inflation_radius]
        else:
            cells = binary_dilation(raw.astype(bool), structure)
        cells = cells.astype(np.uint8)
    else:
        cells = raw
    return GridMap(
        cells=cells,
        resolution=resolution,
        origin=(scenario.bounds.x_min, scenario.bounds.y_min),
        inflation_radius_cells=inflation_radius,
    )


def extract_obstacles(grid: GridMap) -> ObstacleList:
    """List the obstacle cells in canonical row-major ascending order."""
    coords = tuple((int(r), int(c)) for r, c in np.argwhere(grid.cells == 1))
    return ObstacleList(coords)


def grid_map_to_json(grid: GridMap) -> str:
    """Export the compact list-of-coordinates representation."""
    doc = {
        "resolution": grid.resolution,
        "origin": list(grid.origin),
        "rows": grid.rows,
        "cols": grid.cols,
        "inflation_radius_cells": grid.inflation_radius_cells,
        "obstacles": [list(c) for c in extract_obstacles(grid).coords],
    }
    return json.dumps(doc)


def grid_map_from_json(text: str) -> GridMap:
    doc = json.loads(text)
    cells = np.zeros((doc["rows"], doc["cols"]), dtype=np.uint8)
    for r, c in doc["obstacles"]:
        cells[r, c] = 1
    return GridMap(
        cells=cells,
        resolution=doc["resolution"],
        origin=tuple(doc["origin"]),
        inflation_radius_cells=doc.get("inflation_radius_cells", 0),
    )


def bundled_scenario_path(name: str) -> Path:
    path = Path(__file__).parent / "scenarios" / f"{name}.json"
    if not path.exists():
        available = sorted(p.stem for p in path.parent.glob("*.json"))
        raise ScenarioError("name", f"no bundled scenario '{name}' (available: {available})")
    return path


def load_bundled_scenario(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))
