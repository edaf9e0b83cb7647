"""Suite runner and navigation metrics: TL, NE, SR, PL, SPL, SU.

The theoretical shortest path for PL/SPL is the optimal 8-connected grid cost
times the resolution, computed on the same inflated map the stack plans on.
Continuous motion can slightly undercut the grid path, so PL is floored at 1.0
and the raw ratio is logged alongside.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

from . import agent, controller, planner, toolproto, worldmodel
from .agent import BackendConfig, ScriptStep
from .simulator import RobotParams, Simulator
from .worldmodel import Scenario

SUCCESS_MARGIN = 0.5  # m


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class EpisodeSpec:
    episode_id: str
    scenario: str  # bundled name or path
    start: tuple[float, float, float]
    goal: tuple[float, float]
    command: str
    expected_tools: tuple[str, ...]
    seed: int = 0


@dataclass(frozen=True)
class GridConfig:
    resolution: float = worldmodel.DEFAULT_RESOLUTION
    inflation_radius: int = worldmodel.DEFAULT_INFLATION_CELLS


@dataclass(frozen=True)
class ControllerConfig:
    k_p: float = 3.2
    k_i: float = 0.1
    k_d: float = 0.3
    v0: float = controller.DEFAULT_BASE_SPEED
    step_budget: int = controller.DEFAULT_STEP_BUDGET

    def gains(self) -> controller.PidGains:
        return controller.PidGains(self.k_p, self.k_i, self.k_d)


@dataclass(frozen=True)
class AgentConfig:
    backend: str = "scripted"  # "scripted" (canonical) | "http"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""
    turn_budget: int = agent.DEFAULT_TURN_BUDGET


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    control: ControllerConfig = field(default_factory=ControllerConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    sim: RobotParams = field(default_factory=RobotParams)


def load_run_config(path: str | Path) -> RunConfig:
    """Single TOML or JSON document with [grid] [controller] [agent] [sim] sections."""
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        doc = tomllib.loads(text)
    else:
        doc = json.loads(text)
    return RunConfig(
        grid=GridConfig(**doc.get("grid", {})),
        control=ControllerConfig(**doc.get("controller", {})),
        agent=AgentConfig(**doc.get("agent", {})),
        sim=RobotParams(**doc.get("sim", {})),
    )


@dataclass
class EpisodeRecord:
    episode_id: str
    scenario: str
    status: str
    collision: bool
    tl: float
    ne: float
    success: bool
    shortest: float | None
    pl_raw: float | None
    pl: float | None
    spl: float
    su: int
    turns: int
    tools: list[str]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class MetricsReport:
    episodes: list[EpisodeRecord]
    mean_tl: float
    mean_ne: float
    sr: float  # percent
    mean_pl: float
    spl: float
    su: float


def compute_metrics(
    trajectory: list[tuple],
    goal: tuple[float, float],
    shortest_cost: float | None,
    outcome_status: str,
    collision: bool,
) -> dict:
    """Per-episode TL / NE / success / PL / SPL from a raw trajectory."""
    if not trajectory:
        raise MetricsError("empty trajectory")
    tl = 0.0
    for (_, x0, y0, *_), (_, x1, y1, *_) in zip(trajectory, trajectory[1:]):
        tl += math.hypot(x1 - x0, y1 - y0)
    fx, fy = trajectory[-1][1], trajectory[-1][2]
    ne = math.hypot(fx - goal[0], fy - goal[1])
    success = ne < SUCCESS_MARGIN and not collision

    pl_raw = pl = None
    spl = 0.0
    if shortest_cost is not None:
        start_x, start_y = trajectory[0][1], trajectory[0][2]
        if shortest_cost == 0.0 and math.hypot(start_x - goal[0], start_y - goal[1]) >= SUCCESS_MARGIN:
            raise MetricsError("zero shortest-path cost for a distinct start/goal pair")
        if success:
            if shortest_cost > 0.0:
                pl_raw = tl / shortest_cost
                pl = max(pl_raw, 1.0)
                spl = shortest_cost / max(tl, shortest_cost)
            else:
                pl_raw = pl = 1.0
                spl = 1.0
    return {
        "tl": tl, "ne": ne, "success": success,
        "pl_raw": pl_raw, "pl": pl, "spl": spl,
    }


def sequence_matches(expected: tuple[str, ...], actual: list[str]) -> bool:
    """Ordered-subsequence containment of expected tool names in actual."""
    it = iter(actual)
    return all(name in it for name in expected)


def compute_su(records: list[EpisodeRecord]) -> float:
    if not records:
        return 0.0
    return sum(r.su for r in records) / len(records)


def canonical_script(spec: EpisodeSpec, config: RunConfig) -> tuple[ScriptStep, ...]:
    """The reference workflow rendered as a deterministic script for one episode."""
    g = config.grid
    gx, gy = spec.goal
    return (
        ScriptStep(
            respond="Mapping the scene before planning.\n"
            + toolproto.serialize_tool_call(
                "create_grid_map",
                {"resolution": g.resolution, "inflation_radius": g.inflation_radius},
            )
        ),
        ScriptStep(
            respond=toolproto.serialize_tool_call(
                "plan_global_path", {"goal_x": gx, "goal_y": gy}
            )
        ),
        ScriptStep(
            respond=toolproto.serialize_tool_call(
                "motion_control", {"velocity": config.control.v0}
            )
        ),
        ScriptStep(respond="<task_complete>Navigation command handled.</task_complete>"),
    )


def _resolve_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if path.suffix == ".json" and path.exists():
        return worldmodel.load_scenario(path)
    return worldmodel.load_bundled_scenario(ref)


def _shortest_cost(scenario: Scenario, spec: EpisodeSpec, config: RunConfig) -> float | None:
    grid = worldmodel.create_grid_map(
        scenario, config.grid.resolution, config.grid.inflation_radius
    )
    try:
        start = worldmodel.world_to_grid(spec.start[:2], grid)
        goal = worldmodel.world_to_grid(spec.goal, grid)
    except worldmodel.MapError:
        return None
    if not grid.is_free(start) or not grid.is_free(goal):
        return None
    path = planner.a_star(start, goal, grid)
    if path.empty:
        return None
    return path.total_cost * grid.resolution


def _backend_config(spec: EpisodeSpec, config: RunConfig) -> BackendConfig:
    a = config.agent
    if a.backend == "scripted":
        return BackendConfig(
            kind="scripted", script=canonical_script(spec, config), turn_budget=a.turn_budget
        )
    return BackendConfig(
        kind="http", endpoint=a.endpoint, model=a.model,
        api_key_env=a.api_key_env, turn_budget=a.turn_budget,
    )


def run_episode_spec(spec: EpisodeSpec, config: RunConfig) -> EpisodeRecord:
    """One agent-driven episode: fresh simulator, agent loop, metrics."""
    scenario = _resolve_scenario(spec.scenario)
    try:
        sim = Simulator(scenario, params=config.sim, start_pose=spec.start)
        ctx = toolproto.ToolContext(
            scenario=scenario, simulator=sim,
            gains=config.control.gains(), step_budget=config.control.step_budget,
        )
        outcome, transcript, ctx = agent.run_episode(
            spec.command, scenario, _backend_config(spec, config), ctx=ctx,
        )
        collision = ctx.last_control is not None and ctx.last_control.status == "collision"
        shortest = ctx.shortest_cost
        if shortest is None:
            shortest = _shortest_cost(scenario, spec, config)
        metrics = compute_metrics(
            ctx.simulator.trajectory, spec.goal, shortest, outcome.status, collision
        )
        su = 1 if sequence_matches(spec.expected_tools, outcome.validated_sequence) else 0
        return EpisodeRecord(
            episode_id=spec.episode_id, scenario=scenario.name,
            status=outcome.status, collision=collision,
            tl=metrics["tl"], ne=metrics["ne"], success=metrics["success"],
            shortest=shortest, pl_raw=metrics["pl_raw"], pl=metrics["pl"],
            spl=metrics["spl"], su=su,
            turns=outcome.turns_used, tools=list(outcome.validated_sequence),
        )
    except Exception as exc:  # an episode crash is a failed episode, never an abort
        return EpisodeRecord(
            episode_id=spec.episode_id, scenario=spec.scenario,
            status=f"crash: {type(exc).__name__}", collision=False,
            tl=0.0, ne=math.inf, success=False, shortest=None,
            pl_raw=None, pl=None, spl=0.0, su=0, turns=0, tools=[],
        )


def baseline_run(spec: EpisodeSpec, config: RunConfig) -> EpisodeRecord:
    """The conventional pipeline (map -> plan -> control) without the agent loop."""
    scenario = _resolve_scenario(spec.scenario)
    sim = Simulator(scenario, params=config.sim, start_pose=spec.start)
    grid = worldmodel.create_grid_map(
        scenario, config.grid.resolution, config.grid.inflation_radius
    )
    shortest = None
    collision = False
    status = "failed"
    tools: list[str] = []
    try:
        result = planner.plan_global_path(spec.start[:2], spec.goal, grid)
        if result.reachable:
            shortest = result.grid_path.total_cost * grid.resolution
            outcome = controller.motion_control(
                result.path, sim, gains=config.control.gains(),
                v0=config.control.v0, step_budget=config.control.step_budget,
            )
            collision = outcome.status == "collision"
            status = outcome.status
            tools = ["create_grid_map", "plan_global_path", "motion_control"]
    except planner.PlannerInputError:
        status = "failed"
    metrics = compute_metrics(sim.trajectory, spec.goal, shortest, status, collision)
    return EpisodeRecord(
        episode_id=spec.episode_id, scenario=scenario.name,
        status=status, collision=collision,
        tl=metrics["tl"], ne=metrics["ne"], success=metrics["success"],
        shortest=shortest, pl_raw=metrics["pl_raw"], pl=metrics["pl"],
        spl=metrics["spl"], su=0, turns=0, tools=tools,
    )


def aggregate(records: list[EpisodeRecord]) -> MetricsReport:
    successes = [r for r in records if r.success]
    n = len(records)
    return MetricsReport(
        episodes=records,
        mean_tl=sum(r.tl for r in successes) / len(successes) if successes else 0.0,
        mean_ne=sum(r.ne for r in successes) / len(successes) if successes else math.inf,
        sr=100.0 * len(successes) / n if n else 0.0,
        mean_pl=sum(r.pl for r in successes) / len(successes) if successes else 0.0,
        spl=sum(r.spl for r in records) / n if n else 0.0,
        su=compute_su(records),
    )


# --- suite files and artifacts ----------------------------------------------

def load_suite(path: str | Path) -> list[EpisodeSpec]:
    """Expand a suite file (starts x goals cross product) into episode specs."""
    doc = json.loads(Path(path).read_text())
    scenario = doc["scenario"]
    command = doc.get("command", "Navigate to position ({gx:.2f}, {gy:.2f}).")
    expected = tuple(doc.get("expected_tools",
                             ("create_grid_map", "plan_global_path", "motion_control")))
    seed = int(doc.get("seed", 0))
    specs = []
    for si, start in enumerate(doc["starts"]):
        for gi, goal in enumerate(doc["goals"]):
            specs.append(
                EpisodeSpec(
                    episode_id=f"{Path(str(scenario)).stem}-s{si:02d}-g{gi:02d}",
                    scenario=scenario,
                    start=tuple(float(v) for v in start),
                    goal=(float(goal[0]), float(goal[1])),
                    command=command.format(gx=float(goal[0]), gy=float(goal[1])),
                    expected_tools=expected,
                    seed=seed + si * 1000 + gi,
                )
            )
    return specs


def bundled_suite_path(name: str) -> Path:
    return Path(__file__).parent / "suites" / f"{name}.json"


_CSV_COLUMNS = [
    "episode_id", "scenario", "status", "collision", "tl", "ne", "success",
    "shortest", "pl_raw", "pl", "spl", "su", "turns", "tools",
]


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6f}"
    if isinstance(value, list):
        return "|".join(value)
    return str(value)


def records_to_csv(records: list[EpisodeRecord]) -> str:
    lines = [",".join(_CSV_COLUMNS)]
    for r in records:
        row = asdict(r)
        lines.append(",".join(_csv_cell(row[c]) for c in _CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def report_table(report: MetricsReport, label: str) -> str:
    return (
        f"{label}: n={len(report.episodes)}  TL={report.mean_tl:.2f}  "
        f"NE={report.mean_ne:.3f}  SR={report.sr:.1f}  PL={report.mean_pl:.2f}  "
        f"SPL={report.spl:.3f}  SU={report.su:.2f}"
    )


def trajectory_svg(record_trajectories, scenario: Scenario, scale: float = 80.0) -> str:
    """Deterministic SVG: scene rectangles plus one polyline per trajectory."""
    b = scenario.bounds
    width = b.width * scale
    height = b.height * scale

    def sx(x):
        return (x - b.x_min) * scale

    def sy(y):
        return height - (y - b.y_min) * scale  # SVG y grows downward

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" '
        'fill="white" stroke="black"/>',
    ]
    for obj in scenario.objects:
        fp = obj.footprint
        parts.append(
            f'<rect x="{sx(fp.x_min):.1f}" y="{sy(fp.y_max):.1f}" '
            f'width="{fp.width * scale:.1f}" height="{fp.height * scale:.1f}" '
            'fill="lightgray" stroke="gray"/>'
        )
    for traj in record_trajectories:
        points = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for _, x, y, *_ in traj)
        parts.append(f'<polyline points="{points}" fill="none" stroke="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def _run_one(args) -> EpisodeRecord:
    spec, config, mode = args
    if mode == "baseline":
        return baseline_run(spec, config)
    return run_episode_spec(spec, config)


def run_suite(
    suite_path: str | Path,
    config: RunConfig,
    output_dir: str | Path | None = None,
    jobs: int = 1,
    mode: str = "agent",
    plots: bool = False,
) -> MetricsReport:
    specs = load_suite(suite_path)
    work = [(spec, config, mode) for spec in specs]
    if jobs > 1:
        from multiprocessing import Pool

        with Pool(jobs) as pool:
            records = pool.map(_run_one, work)
    else:
        records = [_run_one(w) for w in work]
    report = aggregate(records)

    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(suite_path).stem
        (out / f"{stem}_episodes.jsonl").write_text(
            "\n".join(r.to_json() for r in records) + "\n"
        )
        (out / f"{stem}_report.csv").write_text(records_to_csv(records))
        (out / f"{stem}_report.txt").write_text(report_table(report, stem) + "\n")
        if plots:
            scenario = _resolve_scenario(specs[0].scenario)
            grid = worldmodel.create_grid_map(
                scenario, config.grid.resolution, config.grid.inflation_radius
            )
            trajectories = []
            for spec in specs[:20]:  # keep the plot readable
                sim = Simulator(scenario, params=config.sim, start_pose=spec.start)
                result = planner.plan_global_path(spec.start[:2], spec.goal, grid)
                if result.reachable:
                    controller.motion_control(
                        result.path, sim, gains=config.control.gains(),
                        v0=config.control.v0, step_budget=config.control.step_budget,
                    )
                    trajectories.append(sim.trajectory)
            (out / f"{stem}_trajectories.svg").write_text(
                trajectory_svg(trajectories, scenario)
            )
    return report
