import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridnav.controller import DEFAULT_BASE_SPEED
from gridnav.toolproto import (
    Constraints,
    ToolCallParseError,
    ToolContext,
    ToolValidationError,
    build_prompt_template,
    execute,
    load_registry,
    parse_tool_call,
    render_system_prompt,
    serialize_tool_call,
    validate_call,
)
from gridnav.simulator import Simulator
from gridnav.worldmodel import load_bundled_scenario


@pytest.fixture(scope="module")
def registry():
    return load_registry()


class TestParse:
    def test_bare_call_no_params(self):
        call = parse_tool_call("<get_living_room_info></get_living_room_info>")
        assert call.tool == "get_living_room_info"
        assert call.args == {}

    def test_numeric_params_typed(self):
        call = parse_tool_call(
            "<plan_global_path><goal_x>3.0</goal_x><goal_y>2</goal_y></plan_global_path>"
        )
        assert call.args == {"goal_x": 3.0, "goal_y": 2}
        assert isinstance(call.args["goal_x"], float)
        assert isinstance(call.args["goal_y"], int)

    def test_surrounding_prose_ignored(self):
        text = ("I will first build the map.\n"
                "<create_grid_map><resolution>0.05</resolution></create_grid_map>\n"
                "Then I will plan.")
        call = parse_tool_call(text)
        assert call.tool == "create_grid_map"
        assert call.raw == text

    def test_second_call_warned_not_parsed(self):
        text = ("<get_husky_position><robot_id>1</robot_id></get_husky_position>"
                "<get_living_room_info></get_living_room_info>")
        call = parse_tool_call(text)
        assert call.tool == "get_husky_position"
        assert len(call.warnings) == 1
        assert "one call per turn" in call.warnings[0]

    def test_no_call_raises(self):
        with pytest.raises(ToolCallParseError) as exc:
            parse_tool_call("I think the goal is reachable.")
        assert exc.value.kind == "no_tool_call"

    def test_unclosed_tag_malformed(self):
        with pytest.raises(ToolCallParseError) as exc:
            parse_tool_call("<motion_control><velocity>0.8</velocity>")
        assert exc.value.kind == "malformed"
        assert exc.value.hint

    def test_mismatched_param_tag_malformed(self):
        with pytest.raises(ToolCallParseError) as exc:
            parse_tool_call("<motion_control><velocity>0.8</speed></motion_control>")
        assert exc.value.kind == "malformed"

    def test_duplicate_param(self):
        with pytest.raises(ToolCallParseError) as exc:
            parse_tool_call(
                "<motion_control><velocity>1</velocity><velocity>2</velocity></motion_control>"
            )
        assert exc.value.kind == "duplicate_param"

    def test_angle_brackets_in_prose_skipped(self):
        text = "note that x<y here <get_living_room_info></get_living_room_info>"
        assert parse_tool_call(text).tool == "get_living_room_info"

    @given(
        tool=st.sampled_from(["create_grid_map", "motion_control", "alpha_tool"]),
        args=st.dictionaries(
            st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True),
            st.one_of(
                st.integers(-10**6, 10**6),
                st.floats(-1e6, 1e6, allow_nan=False).map(lambda v: v + 0.5),
                st.from_regex(r"[a-zA-Z ,.]{0,20}", fullmatch=True).map(str.strip),
            ),
            max_size=5,
        ),
    )
    @settings(max_examples=200)
    def test_serialize_parse_round_trip(self, tool, args):
        call = parse_tool_call(serialize_tool_call(tool, args))
        assert call.tool == tool
        assert call.args == args

    @given(st.text(max_size=120))
    @settings(max_examples=300)
    def test_fuzz_never_uncontrolled(self, text):
        try:
            parse_tool_call(text)
        except ToolCallParseError:
            pass


class TestValidate:
    def test_defaults_filled(self, registry):
        call = parse_tool_call("<create_grid_map></create_grid_map>")
        bound = validate_call(call, registry)
        assert bound.args == {"resolution": 0.05, "inflation_radius": 4}

    def test_int_promoted_to_float(self, registry):
        call = parse_tool_call("<plan_global_path><goal_x>3</goal_x><goal_y>2</goal_y></plan_global_path>")
        bound = validate_call(call, registry)
        assert bound.args["goal_x"] == 3.0
        assert isinstance(bound.args["goal_x"], float)

    def test_unknown_tool_lists_registry(self, registry):
        call = parse_tool_call("<teleport><x>1</x></teleport>")
        with pytest.raises(ToolValidationError, match="unknown tool") as exc:
            validate_call(call, registry)
        assert "available tools" in exc.value.hint
        assert "motion_control" in exc.value.hint

    def test_unknown_param_rejected(self, registry):
        call = parse_tool_call("<motion_control><speed>1.0</speed></motion_control>")
        with pytest.raises(ToolValidationError, match="unexpected parameter"):
            validate_call(call, registry)

    def test_missing_required_param(self, registry):
        call = parse_tool_call("<plan_global_path><goal_x>1.0</goal_x></plan_global_path>")
        with pytest.raises(ToolValidationError, match="goal_y"):
            validate_call(call, registry)

    def test_velocity_ceiling(self, registry):
        call = parse_tool_call("<motion_control><velocity>41.0</velocity></motion_control>")
        with pytest.raises(ToolValidationError, match="maximum velocity"):
            validate_call(call, registry)

    def test_robot_id_pinned(self, registry):
        call = parse_tool_call("<get_husky_position><robot_id>2</robot_id></get_husky_position>")
        with pytest.raises(ToolValidationError, match="robot ID must equal 1"):
            validate_call(call, registry)

    def test_type_mismatch(self, registry):
        call = parse_tool_call("<motion_control><velocity>fast</velocity></motion_control>")
        with pytest.raises(ToolValidationError, match="must be float"):
            validate_call(call, registry)


def bind(text, registry):
    return validate_call(parse_tool_call(text), registry)


class TestExecute:
    @pytest.fixture
    def ctx(self):
        scenario = load_bundled_scenario("living_room")
        return ToolContext(scenario=scenario, simulator=Simulator(scenario))

    def test_scene_info(self, ctx, registry):
        result = execute(bind("<get_living_room_info></get_living_room_info>", registry), ctx)
        assert result.ok
        assert result.payload["bounds"]["x_max"] == 8.0
        assert len(result.payload["objects"]) == 6

    def test_position_query(self, ctx, registry):
        result = execute(bind("<get_husky_position><robot_id>1</robot_id></get_husky_position>", registry), ctx)
        assert result.ok
        assert result.payload["pos"] == [0.8, 0.7]
        assert result.payload["orn"] == [0.0, 0.0, 0.0, 1.0]

    def test_plan_before_map_is_tool_error(self, ctx, registry):
        result = execute(bind("<plan_global_path><goal_x>3</goal_x><goal_y>2</goal_y></plan_global_path>", registry), ctx)
        assert not result.ok
        assert result.feedback_text.startswith("TOOL_ERROR(plan_global_path):")
        assert "create_grid_map" in result.feedback_text

    def test_motion_before_plan_is_tool_error(self, ctx, registry):
        result = execute(bind("<motion_control></motion_control>", registry), ctx)
        assert not result.ok
        assert "plan_global_path" in result.feedback_text

    def test_full_tool_pipeline(self, ctx, registry):
        assert execute(bind("<create_grid_map></create_grid_map>", registry), ctx).ok
        plan = execute(bind(
            "<plan_global_path><goal_x>4.0</goal_x><goal_y>1.0</goal_y></plan_global_path>",
            registry), ctx)
        assert plan.ok
        assert plan.payload["waypoint_count"] >= 2
        assert ctx.shortest_cost == pytest.approx(plan.payload["shortest_path_m"])
        motion = execute(bind("<motion_control></motion_control>", registry), ctx)
        assert motion.ok
        assert motion.payload["status"] == "success"
        assert motion.payload["final_distance_m"] < 0.4

    def test_unreachable_goal_reported(self, ctx, registry):
        execute(bind("<create_grid_map></create_grid_map>", registry), ctx)
        # center of the dining table
        result = execute(bind(
            "<plan_global_path><goal_x>6.3</goal_x><goal_y>4.0</goal_y></plan_global_path>",
            registry), ctx)
        assert not result.ok
        assert "TOOL_ERROR(plan_global_path)" in result.feedback_text

    def test_internal_faults_become_feedback(self, ctx, registry):
        ctx.simulator = None  # provoke an attribute error inside the handler
        result = execute(bind(
            "<get_husky_position><robot_id>1</robot_id></get_husky_position>", registry), ctx)
        assert not result.ok
        assert "internal failure" in result.feedback_text


class TestPrompt:
    def test_each_tool_documented_once(self, registry):
        prompt = render_system_prompt(registry)
        for name in registry:
            assert prompt.count(f"### {name}") == 1
            assert f"<{name}>" in prompt  # usage example present

    def test_no_placeholders_survive(self, registry):
        prompt = render_system_prompt(registry)
        assert "{{" not in prompt and "}}" not in prompt

    def test_constraints_rendered(self, registry):
        prompt = render_system_prompt(registry, Constraints(max_velocity=12.5))
        assert "12.5" in prompt
        assert "0.05" in prompt

    def test_sixth_tool_appears_without_template_edits(self, registry, tmp_path):
        import json
        from pathlib import Path

        manifest = json.loads(
            (Path(__file__).parent.parent / "src" / "gridnav" / "assets" / "tools.json").read_text()
        )
        manifest["tools"].append({
            "name": "dock_robot",
            "description": "Drive onto the charging dock.",
            "params": [{"name": "dock_id", "type": "int", "required": True,
                        "description": "Identifier of the dock."}],
        })
        path = tmp_path / "tools.json"
        path.write_text(json.dumps(manifest))
        extended = load_registry(path)
        prompt = render_system_prompt(extended)
        assert "### dock_robot" in prompt
        assert "<dock_robot><dock_id>0</dock_id></dock_robot>" in prompt

    def test_template_sections_all_present(self, registry):
        template = build_prompt_template(registry)
        rendered = template.render()
        for section in (template.role_section, template.workflow_section,
                        template.constraints_section):
            assert section and section in rendered

    def test_empty_registry_rejected(self):
        with pytest.raises(ValueError):
            render_system_prompt({})
