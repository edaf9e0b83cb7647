"""The interaction loop: prompt + command + transcript -> backend -> tool call
-> execution feedback, repeated until the completion marker or the turn budget.

Backends are pluggable: a deterministic scripted backend for reproducible runs
and tests, and a chat-style HTTP backend for live models. Nothing below this
module ever observes which backend is in use.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from . import toolproto
from .simulator import RobotParams, Simulator
from .toolproto import Constraints, ToolContext, ToolResult, ToolSpec
from .worldmodel import Scenario

TASK_COMPLETE_RE = re.compile(r"<task_complete>(.*?)</task_complete>", re.DOTALL)
DEFAULT_TURN_BUDGET = 12
DEFAULT_WINDOW_PAIRS = 8
DEFAULT_CONTEXT_CHARS = 60_000


class BackendError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TranscriptEntry:
    role: str  # system | user | assistant | tool_feedback
    content: str
    turn: int


class Transcript:
    """Append-only interaction history with character-count accounting."""

    def __init__(self):
        self.entries: list[TranscriptEntry] = []

    def append(self, role: str, content: str, turn: int) -> None:
        self.entries.append(TranscriptEntry(role, content, turn))

    def char_count(self) -> int:
        return sum(len(e.content) for e in self.entries)

    def last_feedback(self) -> str:
        for entry in reversed(self.entries):
            if entry.role == "tool_feedback":
                return entry.content
        return ""

    def to_jsonl(self) -> str:
        return "\n".join(
            json.dumps({"role": e.role, "content": e.content, "turn": e.turn})
            for e in self.entries
        )

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        t = cls()
        for line in text.splitlines():
            if line.strip():
                doc = json.loads(line)
                t.append(doc["role"], doc["content"], doc["turn"])
        return t


@dataclass(frozen=True)
class ScriptStep:
    respond: str
    match: str | None = None  # optional regex on the latest tool feedback


@dataclass
class BackendConfig:
    kind: str = "scripted"  # "scripted" | "http"
    script: tuple[ScriptStep, ...] = ()
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""  # env var holding the key; never a literal key
    timeout: float = 30.0
    max_retries: int = 3
    turn_budget: int = DEFAULT_TURN_BUDGET

    def __post_init__(self):
        if self.turn_budget < 1:
            raise ConfigError("turn budget must be >= 1")


class ScriptedBackend:
    """Replays authored responses; steps may be gated on the last feedback."""

    def __init__(self, script: tuple[ScriptStep, ...]):
        self.script = list(script)
        self.consumed = [False] * len(self.script)

    def complete(self, messages: list[dict], last_feedback: str) -> str:
        for i, step in enumerate(self.script):
            if self.consumed[i]:
                continue
            if step.match is None or re.search(step.match, last_feedback):
                self.consumed[i] = True
                return step.respond
        raise BackendError("scripted backend exhausted: no response left for this turn")


class HttpBackend:
    """Chat-completion style HTTP backend with bounded retries and backoff."""

    def __init__(self, config: BackendConfig):
        self.config = config

    def complete(self, messages: list[dict], last_feedback: str) -> str:
        import os

        headers = {"Content-Type": "application/json"}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.config.model, "messages": messages}
        delay = 0.5
        last_error: Exception | None = None
        for _ in range(self.config.max_retries):
            try:
                response = requests.post(
                    self.config.endpoint, json=body, headers=headers,
                    timeout=self.config.timeout,
                )
                if response.status_code == 200:
                    doc = response.json()
                    return doc["choices"][0]["message"]["content"]
                last_error = BackendError(f"HTTP {response.status_code}: {response.text[:200]}")
            except requests.RequestException as exc:
                last_error = exc
            time.sleep(delay)
            delay *= 2
        raise BackendError(f"backend transport failure after retries: {last_error}")


def build_backend(config: BackendConfig):
    if config.kind == "scripted":
        return ScriptedBackend(config.script)
    if config.kind == "http":
        if not config.endpoint:
            raise ConfigError("http backend requires an endpoint")
        return HttpBackend(config)
    raise ConfigError(f"unknown backend kind '{config.kind}'")


def truncate_context(
    transcript: Transcript,
    max_chars: int = DEFAULT_CONTEXT_CHARS,
    window_pairs: int = DEFAULT_WINDOW_PAIRS,
) -> list[dict]:
    """Render the transcript as chat messages within a character budget.

    The system prompt and original user command are always kept. Recent
    assistant/feedback pairs are kept up to the window; anything older
    collapses into a one-line stub.
    """
    entries = transcript.entries
    if len(entries) < 2 or entries[0].role != "system" or entries[1].role != "user":
        raise ConfigError("transcript must start with system prompt and user command")
    pinned_chars = len(entries[0].content) + len(entries[1].content)
    if max_chars <= pinned_chars:
        raise ConfigError(
            f"context budget {max_chars} cannot fit the system prompt and command "
            f"({pinned_chars} chars)"
        )

    # Group the tail into (assistant[, tool_feedback]) pairs.
    pairs: list[list[TranscriptEntry]] = []
    for entry in entries[2:]:
        if entry.role == "assistant" or not pairs:
            pairs.append([entry])
        else:
            pairs[-1].append(entry)

    kept: list[list[TranscriptEntry]] = []
    used = pinned_chars
    for pair in reversed(pairs):
        if len(kept) >= window_pairs:
            break
        size = sum(len(e.content) for e in pair)
        if used + size > max_chars:
            break
        kept.append(pair)
        used += size
    kept.reverse()

    messages = [
        {"role": "system", "content": entries[0].content},
        {"role": "user", "content": entries[1].content},
    ]
    omitted = len(pairs) - len(kept)
    if omitted > 0:
        messages.append(
            {"role": "user", "content": f"[{omitted} earlier assistant/feedback exchanges omitted]"}
        )
    for pair in kept:
        for entry in pair:
            role = "assistant" if entry.role == "assistant" else "user"
            content = entry.content if entry.role == "assistant" else f"Tool result: {entry.content}"
            messages.append({"role": role, "content": content})
    return messages


@dataclass(frozen=True)
class CallRecord:
    tool: str
    status: str  # ok | error
    feedback: str


@dataclass
class EpisodeOutcome:
    status: str  # completed | failed | budget_exhausted
    turns_used: int
    calls: list[CallRecord]
    validated_sequence: list[str]  # tool names that passed validation, in order
    final_pose: tuple[float, float, float]
    completion_summary: str | None = None
    failure_cause: str | None = None


def run_episode(
    command: str,
    scenario: Scenario,
    backend_config: BackendConfig,
    registry: dict[str, ToolSpec] | None = None,
    *,
    sim_params: RobotParams | None = None,
    start_pose: tuple[float, float, float] | None = None,
    constraints: Constraints | None = None,
    context_chars: int = DEFAULT_CONTEXT_CHARS,
    window_pairs: int = DEFAULT_WINDOW_PAIRS,
    ctx: ToolContext | None = None,
) -> tuple[EpisodeOutcome, Transcript, ToolContext]:
    """Run one closed-loop episode; returns the outcome, the full transcript,
    and the tool context (which owns the simulator and its trajectory)."""
    registry = registry if registry is not None else toolproto.load_registry()
    if ctx is None:
        sim = Simulator(scenario, params=sim_params, start_pose=start_pose)
        ctx = ToolContext(scenario=scenario, simulator=sim)
    backend = build_backend(backend_config)

    transcript = Transcript()
    system_prompt = toolproto.render_system_prompt(registry, constraints, scenario.name)
    transcript.append("system", system_prompt, 0)
    transcript.append("user", command, 0)

    calls: list[CallRecord] = []
    validated: list[str] = []
    turns = 0

    for turn in range(1, backend_config.turn_budget + 1):
        turns = turn
        messages = truncate_context(transcript, context_chars, window_pairs)
        try:
            text = backend.complete(messages, transcript.last_feedback())
        except BackendError as exc:
            return (
                _outcome("failed", turns, calls, validated, ctx, cause=str(exc)),
                transcript, ctx,
            )
        transcript.append("assistant", text, turn)

        done = TASK_COMPLETE_RE.search(text)
        if done:
            summary = done.group(1).strip()
            control_ok = ctx.last_control is not None and ctx.last_control.status == "success"
            status = "completed" if control_ok else "failed"
            cause = None if control_ok else "completion claimed without a successful motion_control"
            out = _outcome(status, turns, calls, validated, ctx, cause=cause)
            out.completion_summary = summary
            return out, transcript, ctx

        try:
            call = toolproto.parse_tool_call(text)
        except toolproto.ToolCallParseError as exc:
            feedback = f"TOOL_ERROR(parser): {exc}. Hint: {exc.hint}"
            transcript.append("tool_feedback", feedback, turn)
            continue
        try:
            bound = toolproto.validate_call(call, registry)
        except toolproto.ToolValidationError as exc:
            feedback = f"TOOL_ERROR({exc.tool}): {exc}. Hint: {exc.hint}"
            calls.append(CallRecord(exc.tool, "error", feedback))
            transcript.append("tool_feedback", feedback, turn)
            continue

        result = toolproto.execute(bound, ctx)
        calls.append(CallRecord(bound.tool, result.status, result.feedback_text))
        validated.append(bound.tool)
        transcript.append("tool_feedback", result.feedback_text, turn)

    return _outcome("budget_exhausted", turns, calls, validated, ctx), transcript, ctx


def _outcome(status, turns, calls, validated, ctx, cause=None) -> EpisodeOutcome:
    state = ctx.simulator.state
    return EpisodeOutcome(
        status=status,
        turns_used=turns,
        calls=list(calls),
        validated_sequence=list(validated),
        final_pose=(state.position[0], state.position[1], state.heading),
        failure_cause=cause,
    )


def load_script_file(path: str | Path) -> tuple[ScriptStep, ...]:
    """Script file: JSON array of {respond, match?} objects."""
    doc = json.loads(Path(path).read_text())
    return tuple(ScriptStep(respond=e["respond"], match=e.get("match")) for e in doc)
