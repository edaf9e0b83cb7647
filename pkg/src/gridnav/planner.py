"""8-directional A* over an occupancy grid, plus look-ahead path simplification.

Step costs are 1 (orthogonal) and sqrt(2) (diagonal). Diagonal moves are
rejected when either flanking cardinal cell is blocked, so paths never cut
corners. The heuristic is octile distance, which is admissible and consistent
for these costs.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

from .worldmodel import GridMap, MapError, grid_to_world, world_to_grid

SQRT2 = math.sqrt(2.0)
LOOKAHEAD_STEPS = 5

# Clockwise from north (+row). Diagonal entries carry their two flanking
# cardinal offsets for the corner-cut check.
_OFFSETS = (
    ((1, 0), None),
    ((1, 1), ((1, 0), (0, 1))),
    ((0, 1), None),
    ((-1, 1), ((-1, 0), (0, 1))),
    ((-1, 0), None),
    ((-1, -1), ((-1, 0), (0, -1))),
    ((0, -1), None),
    ((1, -1), ((1, 0), (0, -1))),
)


class PlannerInputError(ValueError):
    """Start cell invalid (out of range or inside an obstacle)."""


@dataclass(frozen=True)
class GridPath:
    cells: tuple[tuple[int, int], ...]
    total_cost: float

    @property
    def empty(self) -> bool:
        return not self.cells


EMPTY_PATH = GridPath(cells=(), total_cost=0.0)


@dataclass(frozen=True)
class WaypointPath:
    points: tuple[tuple[float, float], ...]
    cells: tuple[tuple[int, int], ...]  # grid indices of the retained waypoints


@dataclass(frozen=True)
class PlanResult:
    path: WaypointPath | None
    grid_path: GridPath | None
    reason: str | None  # set iff path is None

    @property
    def reachable(self) -> bool:
        return self.path is not None


def get_neighbors(cell: tuple[int, int], grid: GridMap) -> list[tuple[int, int]]:
    """Free 8-neighbors of a cell, in fixed clockwise order from north."""
    if not grid.in_range(cell):
        raise PlannerInputError(f"cell {cell} out of grid range")
    r, c = cell
    out = []
    for (dr, dc), flanks in _OFFSETS:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < grid.rows and 0 <= nc < grid.cols):
            continue
        if grid.cells[nr, nc] != 0:
            continue
        if flanks is not None:
            (fr1, fc1), (fr2, fc2) = flanks
            if grid.cells[r + fr1, c + fc1] != 0 or grid.cells[r + fr2, c + fc2] != 0:
                continue
        out.append((nr, nc))
    return out


def octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dr = abs(a[0] - b[0])
    dc = abs(a[1] - b[1])
    return max(dr, dc) + (SQRT2 - 1.0) * min(dr, dc)


def a_star(start: tuple[int, int], goal: tuple[int, int], grid: GridMap) -> GridPath:
    """Minimum-cost 8-connected path, or the empty path when unreachable."""
    if not grid.in_range(start) or not grid.in_range(goal):
        raise PlannerInputError(f"start {start} or goal {goal} out of grid range")
    if not grid.is_free(start):
        raise PlannerInputError(f"start cell {start} is inside an obstacle")
    if not grid.is_free(goal):
        return EMPTY_PATH

    counter = itertools.count()
    g_cost: dict[tuple[int, int], float] = {start: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    # Ties on f broken by larger g (deeper node), then insertion order.
    open_list: list[tuple[float, float, int, tuple[int, int]]] = []
    heapq.heappush(open_list, (octile(start, goal), 0.0, next(counter), start))

    while open_list:
        f, neg_g, _, u = heapq.heappop(open_list)
        if u == goal:
            cells = [u]
            while u in parent:
                u = parent[u]
                cells.append(u)
            cells.reverse()
            return GridPath(tuple(cells), g_cost[goal])
        if -neg_g > g_cost.get(u, math.inf):
            continue  # stale queue entry
        for v in get_neighbors(u, grid):
            step = SQRT2 if u[0] != v[0] and u[1] != v[1] else 1.0
            tentative = g_cost[u] + step
            if tentative < g_cost.get(v, math.inf):
                g_cost[v] = tentative
                parent[v] = u
                heapq.heappush(
                    open_list,
                    (tentative + octile(v, goal), -tentative, next(counter), v),
                )
    return EMPTY_PATH


def supercover_cells(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    """Every cell the segment between the two cell centers touches.

    When the segment passes exactly through a cell corner, both cells sharing
    that corner are included, which makes the segment test as strict as the
    planner's corner-cut rule.
    """
    (r0, c0), (r1, c1) = a, b
    dr, dc = r1 - r0, c1 - c0
    nr, nc = abs(dr), abs(dc)
    sr = 1 if dr > 0 else -1
    sc = 1 if dc > 0 else -1
    r, c = r0, c0
    cells = [(r, c)]
    ir = ic = 0
    while ir < nr or ic < nc:
        decision = (1 + 2 * ic) * nr - (1 + 2 * ir) * nc
        if decision == 0:
            cells.append((r, c + sc))
            cells.append((r + sr, c))
            r += sr
            c += sc
            ir += 1
            ic += 1
        elif decision < 0:
            c += sc
            ic += 1
        else:
            r += sr
            ir += 1
        cells.append((r, c))
    return cells


def segment_is_free(a: tuple[int, int], b: tuple[int, int], grid: GridMap) -> bool:
    return all(grid.cells[r, c] == 0 for r, c in supercover_cells(a, b))


def simplify_path(path: GridPath, grid: GridMap) -> WaypointPath:
    """Greedy jump connection with a bounded look-ahead window.

    From each retained cell, connect to the farthest of the next
    LOOKAHEAD_STEPS cells whose straight segment stays collision-free.
    """
    if path.empty:
        raise PlannerInputError("cannot simplify an empty path")
    cells = path.cells
    kept = [0]
    i = 0
    last = len(cells) - 1
    while i < last:
        best = i + 1
        for j in range(min(i + LOOKAHEAD_STEPS, last), i, -1):
            if segment_is_free(cells[i], cells[j], grid):
                best = j
                break
        kept.append(best)
        i = best
    kept_cells = tuple(cells[k] for k in kept)
    points = tuple(grid_to_world(c, grid) for c in kept_cells)
    return WaypointPath(points=points, cells=kept_cells)


def plan_global_path(
    start_world: tuple[float, float],
    goal_world: tuple[float, float],
    grid: GridMap,
) -> PlanResult:
    """world_to_grid -> a_star -> simplify_path -> grid_to_world."""
    try:
        start = world_to_grid(start_world, grid)
    except MapError as exc:
        raise PlannerInputError(f"start position out of bounds: {exc}") from exc
    try:
        goal = world_to_grid(goal_world, grid)
    except MapError as exc:
        return PlanResult(None, None, f"goal position out of bounds: {exc}")
    if not grid.is_free(start):
        raise PlannerInputError(f"start cell {start} is inside an obstacle")
    if not grid.is_free(goal):
        return PlanResult(None, None, "goal cell occupied")
    grid_path = a_star(start, goal, grid)
    if grid_path.empty:
        return PlanResult(None, None, "goal unreachable from start")
    return PlanResult(simplify_path(grid_path, grid), grid_path, None)


def waypoints_to_json(path: WaypointPath) -> str:
    import json

    return json.dumps(
        {
            "waypoints": [{"x": x, "y": y} for x, y in path.points],
            "cells": [list(c) for c in path.cells],
        }
    )
