"""Sanity-check the bundled scenes and desk suites.

Verifies that every authored start is collision-free and on a free inflated
cell, classifies each goal as reachable or blocked, and runs the baseline
pipeline over every suite to report success counts per scene.
"""

from __future__ import annotations

import sys
import time

from gridnav import evalharness as ev
from gridnav import planner, worldmodel as wm
from gridnav.simulator import RobotParams, Simulator

SCENES = ("living_room", "kitchen", "bedroom")


def check_suite(name: str, config: ev.RunConfig) -> bool:
    scenario = wm.load_bundled_scenario(name)
    grid = wm.create_grid_map(scenario, config.grid.resolution, config.grid.inflation_radius)
    specs = ev.load_suite(ev.bundled_suite_path(name))
    ok = True

    starts = {spec.start for spec in specs}
    for start in sorted(starts):
        cell = wm.world_to_grid(start[:2], grid)
        sim = Simulator(scenario, params=config.sim, start_pose=start)
        report = sim.check_collision()
        if not grid.is_free(cell):
            print(f"  BAD start {start}: inflated cell occupied")
            ok = False
        if report.colliding:
            print(f"  BAD start {start}: spawn collides with {report.object_label}")
            ok = False

    goals = sorted({spec.goal for spec in specs})
    blocked = []
    for goal in goals:
        cell = wm.world_to_grid(goal, grid)
        if not grid.is_free(cell):
            blocked.append(goal)
    print(f"  {len(goals)} goals, {len(blocked)} blocked: {blocked}")

    t0 = time.time()
    records = [ev.baseline_run(spec, config) for spec in specs]
    report = ev.aggregate(records)
    dt = time.time() - t0
    failures = [r for r in records if not r.success]
    print(f"  baseline: {ev.report_table(report, name)}  ({dt:.1f}s)")
    for r in failures:
        print(f"    fail {r.episode_id}: {r.status} ne={r.ne:.2f} collision={r.collision}")
    return ok


def main() -> int:
    config = ev.RunConfig()
    all_ok = True
    for name in SCENES:
        print(f"== {name}")
        all_ok &= check_suite(name, config)
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
