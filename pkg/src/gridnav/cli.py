"""Command-line entry point: run / plan / replay / report.

Exit codes: 0 success, 1 suite-level failure, 2 configuration error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import agent, evalharness, planner, toolproto, worldmodel
from .evalharness import RunConfig, load_run_config
from .simulator import Simulator


def _config(config_path: str | None) -> RunConfig:
    if config_path is None:
        return RunConfig()
    try:
        return load_run_config(config_path)
    except Exception as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Agent-driven 2D navigation stack with an SPL/SR evaluation harness."""


@main.command()
@click.argument("suite", type=click.Path(exists=True))
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--output", "output_dir", type=click.Path(), default="results")
@click.option("--seed", type=int, default=0, help="recorded in episode specs")
@click.option("-j", "--jobs", type=int, default=1)
@click.option("--baseline", is_flag=True, help="run the conventional pipeline without the agent loop")
@click.option("--plots", is_flag=True, help="emit an SVG trajectory plot")
def run(suite, config_path, output_dir, seed, jobs, baseline, plots):
    """Run every episode of a suite file and write report artifacts."""
    config = _config(config_path)
    try:
        report = evalharness.run_suite(
            suite, config, output_dir=output_dir, jobs=jobs,
            mode="baseline" if baseline else "agent", plots=plots,
        )
    except Exception as exc:
        click.echo(f"suite failure: {exc}", err=True)
        sys.exit(1)
    click.echo(evalharness.report_table(report, Path(suite).stem))


@main.command()
@click.option("--scenario", required=True, help="bundled scenario name or JSON path")
@click.option("--start", nargs=2, type=float, default=None)
@click.option("--goal", nargs=2, type=float, required=True)
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
def plan(scenario, start, goal, config_path):
    """One-shot map + plan debug: print the simplified waypoints as JSON."""
    config = _config(config_path)
    scene = evalharness._resolve_scenario(scenario)
    grid = worldmodel.create_grid_map(
        scene, config.grid.resolution, config.grid.inflation_radius
    )
    start = tuple(start) if start else scene.robot_spawn[:2]
    result = planner.plan_global_path(start, tuple(goal), grid)
    if not result.reachable:
        click.echo(f"unreachable: {result.reason}", err=True)
        sys.exit(1)
    click.echo(planner.waypoints_to_json(result.path))


@main.command()
@click.argument("transcript", type=click.Path(exists=True))
@click.option("--scenario", required=True)
@click.option("-c", "--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("-o", "--output", "output_path", type=click.Path(), default="replay_trajectory.csv")
def replay(transcript, scenario, config_path, output_path):
    """Re-simulate the tool calls recorded in a transcript JSONL file."""
    config = _config(config_path)
    scene = evalharness._resolve_scenario(scenario)
    registry = toolproto.load_registry()
    sim = Simulator(scene, params=config.sim)
    ctx = toolproto.ToolContext(
        scenario=scene, simulator=sim,
        gains=config.control.gains(), step_budget=config.control.step_budget,
    )
    history = agent.Transcript.from_jsonl(Path(transcript).read_text())
    replayed = 0
    for entry in history.entries:
        if entry.role != "assistant":
            continue
        try:
            call = toolproto.parse_tool_call(entry.content)
            bound = toolproto.validate_call(call, registry)
        except (toolproto.ToolCallParseError, toolproto.ToolValidationError):
            continue
        result = toolproto.execute(bound, ctx)
        replayed += 1
        click.echo(f"[{replayed}] {bound.tool}: {result.status}")
    sim.write_trajectory_csv(output_path)
    click.echo(f"replayed {replayed} tool calls; trajectory written to {output_path}")


@main.command()
@click.argument("episodes", type=click.Path(exists=True))
def report(episodes):
    """Recompute the aggregate table from a per-episode JSONL file."""
    records = []
    for line in Path(episodes).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        doc["ne"] = float(doc["ne"])
        records.append(evalharness.EpisodeRecord(**doc))
    summary = evalharness.aggregate(records)
    click.echo(evalharness.report_table(summary, Path(episodes).stem))


if __name__ == "__main__":
    main()
