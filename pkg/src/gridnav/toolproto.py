"""XML tool-invocation protocol: wire parsing, validating registry, dispatch,
and the system-prompt assembler.

Wire grammar (bit-exact):

    <tool_name><param>value</param>...</tool_name>

Tag names match [A-Za-z_][A-Za-z0-9_]*. Values are scalars; a value that looks
numeric parses as a number, anything else stays text. No attributes,
namespaces, nesting beyond one parameter level, or CDATA. At most one call is
dispatched per model turn; trailing calls are ignored with a warning.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import controller, planner, worldmodel
from .simulator import Simulator, SimulatorError
from .worldmodel import GridMap, Scenario

_TAG_RE = re.compile(r"<([A-Za-z_][A-Za-z0-9_]*)>")
_NUMERIC_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_INT_RE = re.compile(r"^[+-]?\d+$")


class ToolCallParseError(ValueError):
    """kind is one of: no_tool_call, malformed, duplicate_param."""

    def __init__(self, kind: str, message: str, hint: str):
        self.kind = kind
        self.hint = hint
        super().__init__(message)


class ToolValidationError(ValueError):
    def __init__(self, tool: str, message: str, hint: str):
        self.tool = tool
        self.hint = hint
        super().__init__(message)


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict[str, Any]
    raw: str
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # "float" | "int" | "str"
    required: bool = False
    default: Any = None
    minimum: float | None = None
    maximum: float | None = None
    equals: Any = None
    constraint_name: str | None = None
    description: str = ""

    def check(self, value: Any) -> str | None:
        """Return a violation description, or None if the value is admissible."""
        label = self.constraint_name or self.name
        if self.equals is not None and value != self.equals:
            return f"{label} must equal {self.equals}"
        if self.minimum is not None and value < self.minimum:
            return f"{label} must be >= {self.minimum}"
        if self.maximum is not None and value > self.maximum:
            return f"{label} must be <= {self.maximum}"
        return None


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[ParamSpec, ...]


@dataclass(frozen=True)
class BoundInvocation:
    tool: str
    args: dict[str, Any]


@dataclass(frozen=True)
class ToolResult:
    status: str  # "ok" | "error"
    payload: dict | None
    feedback_text: str

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def error_result(tool: str, cause: str, hint: str) -> ToolResult:
    return ToolResult("error", None, f"TOOL_ERROR({tool}): {cause}. Hint: {hint}")


def _parse_value(text: str) -> Any:
    text = text.strip()
    if _INT_RE.match(text):
        return int(text)
    if _NUMERIC_RE.match(text):
        return float(text)
    return text


def _try_parse_element(text: str, start: int, name: str) -> tuple[dict[str, Any], int] | str:
    """Parse one tool element starting at the opening tag; returns (args, end)
    or a failure kind string."""
    open_end = start + len(name) + 2
    close_tag = f"</{name}>"
    close_at = text.find(close_tag, open_end)
    if close_at < 0:
        return "malformed"
    inner = text[open_end:close_at]
    args: dict[str, Any] = {}
    pos = 0
    param_re = re.compile(r"\s*<([A-Za-z_][A-Za-z0-9_]*)>(.*?)</\1>\s*", re.DOTALL)
    while pos < len(inner):
        m = param_re.match(inner, pos)
        if m is None:
            if inner[pos:].strip() == "":
                break
            return "malformed"
        pname = m.group(1)
        if pname in args:
            return "duplicate_param"
        args[pname] = _parse_value(m.group(2))
        pos = m.end()
    return args, close_at + len(close_tag)


def parse_tool_call(text: str) -> ToolCall:
    """Extract the first well-formed tool-call element from arbitrary text.

    Free text around the call (the model's reasoning) is kept in `raw` but
    never interpreted. A second well-formed element in the same turn is
    ignored and recorded as a warning.
    """
    if not isinstance(text, str):
        raise ToolCallParseError("no_tool_call", "input is not text",
                                 "emit a single <tool_name>...</tool_name> element")
    first_failure: str | None = None
    for m in _TAG_RE.finditer(text):
        outcome = _try_parse_element(text, m.start(), m.group(1))
        if isinstance(outcome, str):
            if first_failure is None:
                first_failure = outcome
            continue
        args, end = outcome
        warnings = []
        for m2 in _TAG_RE.finditer(text, end):
            trailing = _try_parse_element(text, m2.start(), m2.group(1))
            if not isinstance(trailing, str):
                warnings.append(
                    f"ignored additional tool call <{m2.group(1)}> (one call per turn)"
                )
                break
        return ToolCall(tool=m.group(1), args=args, raw=text, warnings=tuple(warnings))
    if first_failure == "duplicate_param":
        raise ToolCallParseError(
            "duplicate_param", "duplicate parameter tag in tool call",
            "each parameter may appear at most once",
        )
    if first_failure == "malformed":
        raise ToolCallParseError(
            "malformed", "malformed tool-call element",
            "use <tool_name><param>value</param></tool_name> with matching closing tags",
        )
    raise ToolCallParseError(
        "no_tool_call", "no tool invocation found",
        "emit exactly one <tool_name>...</tool_name> element",
    )


def serialize_tool_call(tool: str, args: dict[str, Any]) -> str:
    parts = [f"<{tool}>"]
    for name, value in args.items():
        if isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        parts.append(f"<{name}>{rendered}</{name}>")
    parts.append(f"</{tool}>")
    return "".join(parts)


# --- registry ---------------------------------------------------------------

def load_registry(manifest: str | Path | None = None) -> dict[str, ToolSpec]:
    """Build the tool registry from a declarative manifest (default bundled)."""
    path = Path(manifest) if manifest else Path(__file__).parent / "assets" / "tools.json"
    doc = json.loads(path.read_text())
    registry: dict[str, ToolSpec] = {}
    for entry in doc["tools"]:
        params = tuple(
            ParamSpec(
                name=p["name"],
                kind=p.get("type", "str"),
                required=p.get("required", False),
                default=p.get("default"),
                minimum=p.get("min"),
                maximum=p.get("max"),
                equals=p.get("equals"),
                constraint_name=p.get("constraint_name"),
                description=p.get("description", ""),
            )
            for p in entry.get("params", [])
        )
        spec = ToolSpec(entry["name"], entry["description"], params)
        if spec.name in registry:
            raise ValueError(f"duplicate tool name in manifest: {spec.name}")
        registry[spec.name] = spec
    return registry


def validate_call(call: ToolCall, registry: dict[str, ToolSpec]) -> BoundInvocation:
    spec = registry.get(call.tool)
    if spec is None:
        raise ToolValidationError(
            call.tool, f"unknown tool '{call.tool}'",
            f"available tools: {', '.join(sorted(registry))}",
        )
    known = {p.name for p in spec.params}
    for name in call.args:
        if name not in known:
            raise ToolValidationError(
                call.tool, f"unexpected parameter '{name}'",
                f"accepted parameters: {', '.join(sorted(known)) or 'none'}",
            )
    bound: dict[str, Any] = {}
    for p in spec.params:
        if p.name in call.args:
            value = call.args[p.name]
            if p.kind == "float" and isinstance(value, int):
                value = float(value)
            expected = {"float": float, "int": int, "str": str}[p.kind]
            if not isinstance(value, expected):
                raise ToolValidationError(
                    call.tool, f"parameter '{p.name}' must be {p.kind}, got {value!r}",
                    f"pass a {p.kind} value for {p.name}",
                )
            violation = p.check(value)
            if violation is not None:
                raise ToolValidationError(
                    call.tool, f"constraint violation: {violation}",
                    f"adjust {p.name} to satisfy the constraint",
                )
            bound[p.name] = value
        elif p.required:
            raise ToolValidationError(
                call.tool, f"missing required parameter '{p.name}'",
                f"provide <{p.name}>...</{p.name}>",
            )
        else:
            bound[p.name] = p.default
    return BoundInvocation(call.tool, bound)


# --- execution --------------------------------------------------------------

@dataclass
class ToolContext:
    """Mutable world handles shared by the five tools within one episode."""

    scenario: Scenario
    simulator: Simulator
    grid: GridMap | None = None
    plan: planner.PlanResult | None = None
    shortest_cost: float | None = None
    gains: controller.PidGains = field(default_factory=controller.PidGains)
    step_budget: int = controller.DEFAULT_STEP_BUDGET
    last_control: controller.EpisodeResult | None = None


def _exec_create_grid_map(ctx: ToolContext, args: dict) -> ToolResult:
    grid = worldmodel.create_grid_map(
        ctx.scenario, resolution=args["resolution"], inflation_radius=args["inflation_radius"],
    )
    ctx.grid = grid
    payload = {
        "rows": grid.rows, "cols": grid.cols,
        "resolution": grid.resolution,
        "inflation_radius_cells": grid.inflation_radius_cells,
        "obstacle_cells": grid.obstacle_count(),
    }
    return ToolResult(
        "ok", payload,
        f"Grid map created: {grid.rows}x{grid.cols} cells at {grid.resolution} m/cell, "
        f"{payload['obstacle_cells']} obstacle cells after inflation.",
    )


def _exec_plan_global_path(ctx: ToolContext, args: dict) -> ToolResult:
    if ctx.grid is None:
        return error_result("plan_global_path", "no grid map available",
                            "call create_grid_map first")
    start = ctx.simulator.state.position
    goal = (args["goal_x"], args["goal_y"])
    try:
        result = planner.plan_global_path(start, goal, ctx.grid)
    except planner.PlannerInputError as exc:
        return error_result("plan_global_path", str(exc),
                            "check the robot pose and map parameters")
    if not result.reachable:
        ctx.plan = None
        return error_result("plan_global_path", result.reason,
                            "pick a free, reachable goal position")
    ctx.plan = result
    ctx.shortest_cost = result.grid_path.total_cost * ctx.grid.resolution
    n = len(result.path.points)
    return ToolResult(
        "ok",
        {
            "waypoints": [{"x": x, "y": y} for x, y in result.path.points],
            "waypoint_count": n,
            "grid_cells": len(result.grid_path.cells),
            "shortest_path_m": ctx.shortest_cost,
        },
        f"Path planned: {n} waypoints over {ctx.shortest_cost:.2f} m "
        f"(simplified from {len(result.grid_path.cells)} grid cells). "
        f"Final waypoint ({result.path.points[-1][0]:.2f}, {result.path.points[-1][1]:.2f}).",
    )


def _exec_motion_control(ctx: ToolContext, args: dict) -> ToolResult:
    if ctx.plan is None or ctx.plan.path is None:
        return error_result("motion_control", "no planned path available",
                            "call plan_global_path first")
    try:
        outcome = controller.motion_control(
            ctx.plan.path, ctx.simulator, gains=ctx.gains,
            v0=args["velocity"], step_budget=ctx.step_budget,
        )
    except controller.ControllerError as exc:
        return error_result("motion_control", str(exc), "re-plan and retry")
    ctx.last_control = outcome
    payload = {
        "status": outcome.status,
        "traveled_m": outcome.traveled,
        "final_distance_m": outcome.final_distance,
        "steps": outcome.steps,
    }
    if outcome.status == "success":
        return ToolResult("ok", payload,
                          f"Motion complete: reached the final waypoint, traveled "
                          f"{outcome.traveled:.2f} m in {outcome.steps} steps.")
    cause = (f"collided with {outcome.collided_with}" if outcome.status == "collision"
             else "step budget exhausted before arrival")
    return error_result("motion_control", cause, "re-plan from the current pose")


def _exec_get_husky_position(ctx: ToolContext, args: dict) -> ToolResult:
    try:
        position, heading, quaternion = ctx.simulator.get_robot_pose(args["robot_id"])
    except SimulatorError as exc:
        return error_result("get_husky_position", str(exc), "use robot id 1")
    payload = {
        "pos": [position[0], position[1]],
        "heading": heading,
        "orn": list(quaternion),
    }
    return ToolResult("ok", payload,
                      f"Robot at ({position[0]:.3f}, {position[1]:.3f}), heading {heading:.3f} rad.")


def _exec_get_living_room_info(ctx: ToolContext, args: dict) -> ToolResult:
    s = ctx.scenario
    objects = [
        {"label": o.label,
         "rect": {"x_min": o.footprint.x_min, "y_min": o.footprint.y_min,
                  "x_max": o.footprint.x_max, "y_max": o.footprint.y_max}}
        for o in s.objects
    ]
    payload = {
        "name": s.name,
        "bounds": {"x_min": s.bounds.x_min, "y_min": s.bounds.y_min,
                   "x_max": s.bounds.x_max, "y_max": s.bounds.y_max},
        "objects": objects,
        "robot_spawn": list(s.robot_spawn),
    }
    labels = ", ".join(o.label for o in s.objects) or "no furniture"
    return ToolResult("ok", payload,
                      f"Scene '{s.name}': bounds {s.bounds.width:.1f}x{s.bounds.height:.1f} m, "
                      f"objects: {labels}.")


_HANDLERS: dict[str, Callable[[ToolContext, dict], ToolResult]] = {
    "create_grid_map": _exec_create_grid_map,
    "plan_global_path": _exec_plan_global_path,
    "motion_control": _exec_motion_control,
    "get_husky_position": _exec_get_husky_position,
    "get_living_room_info": _exec_get_living_room_info,
}


def execute(invocation: BoundInvocation, ctx: ToolContext) -> ToolResult:
    """Dispatch a validated invocation; failures become error results, never raises."""
    handler = _HANDLERS.get(invocation.tool)
    if handler is None:
        return error_result(invocation.tool, "tool has no execution handler",
                            "register a handler for this tool")
    try:
        return handler(ctx, invocation.args)
    except Exception as exc:  # any downstream fault becomes LLM feedback
        return error_result(invocation.tool, f"internal failure: {exc}",
                            "adjust the parameters and retry")


# --- system prompt ----------------------------------------------------------

@dataclass(frozen=True)
class Constraints:
    resolution: float = worldmodel.DEFAULT_RESOLUTION
    max_velocity: float = 40.0
    robot_id: int = worldmodel.DEFAULT_ROBOT_ID


_EXAMPLE_ARGS: dict[str, dict[str, Any]] = {
    "create_grid_map": {"resolution": 0.05, "inflation_radius": 4},
    "plan_global_path": {"goal_x": 3.0, "goal_y": 1.5},
    "motion_control": {"velocity": 0.8},
    "get_husky_position": {"robot_id": 1},
    "get_living_room_info": {},
}


def _tool_docs(registry: dict[str, ToolSpec]) -> str:
    blocks = []
    for name in registry:
        spec = registry[name]
        lines = [f"### {spec.name}", spec.description]
        for p in spec.params:
            req = "required" if p.required else f"optional, default {p.default}"
            constraint = ""
            if p.equals is not None:
                constraint = f", must equal {p.equals}"
            elif p.minimum is not None or p.maximum is not None:
                lo = p.minimum if p.minimum is not None else "-inf"
                hi = p.maximum if p.maximum is not None else "inf"
                constraint = f", range [{lo}, {hi}]"
            lines.append(f"- {p.name} ({p.kind}, {req}{constraint}): {p.description}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def _tool_examples(registry: dict[str, ToolSpec]) -> str:
    lines = []
    for name in registry:
        args = _EXAMPLE_ARGS.get(name)
        if args is None:
            spec = registry[name]
            args = {p.name: (p.default if p.default is not None else 0) for p in spec.params}
        lines.append(serialize_tool_call(name, args))
    return "\n".join(lines)


def _load_sections() -> dict[str, str]:
    text = (Path(__file__).parent / "assets" / "system_prompt.tmpl").read_text()
    sections: dict[str, str] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("%% "):
            current = line[3:].strip()
            sections[current] = ""
        elif current is not None:
            sections[current] += line + "\n"
    return {k: v.strip() for k, v in sections.items()}


@dataclass(frozen=True)
class PromptTemplate:
    role_section: str
    tool_logic_section: str
    syntax_section: str
    protocol_section: str
    toolset_section: str
    framework_section: str
    constraints_section: str
    workflow_section: str

    def render(self) -> str:
        return "\n\n".join(
            [
                self.role_section, self.tool_logic_section, self.syntax_section,
                self.protocol_section, self.toolset_section, self.framework_section,
                self.constraints_section, self.workflow_section,
            ]
        )


def build_prompt_template(
    registry: dict[str, ToolSpec],
    constraints: Constraints | None = None,
    scenario_name: str = "living room",
) -> PromptTemplate:
    constraints = constraints or Constraints()
    sections = _load_sections()

    def fill(key: str) -> str:
        return (
            sections[key]
            .replace("{{tool_docs}}", _tool_docs(registry))
            .replace("{{tool_examples}}", _tool_examples(registry))
            .replace("{{resolution}}", str(constraints.resolution))
            .replace("{{max_velocity}}", str(constraints.max_velocity))
            .replace("{{robot_id}}", str(constraints.robot_id))
            .replace("{{scenario_name}}", scenario_name)
        )

    return PromptTemplate(
        role_section=fill("role"),
        tool_logic_section=fill("tool_logic"),
        syntax_section=fill("syntax"),
        protocol_section=fill("protocol"),
        toolset_section=fill("toolset"),
        framework_section=fill("framework"),
        constraints_section=fill("constraints"),
        workflow_section=fill("workflow"),
    )


def render_system_prompt(
    registry: dict[str, ToolSpec],
    constraints: Constraints | None = None,
    scenario_name: str = "living room",
) -> str:
    if not registry:
        raise ValueError("registry must not be empty")
    return build_prompt_template(registry, constraints, scenario_name).render()
