"""The reasoning loop: prompt a generator, parse the action, update memory.

The loop runs until a Conclusion passes the state-value gate or the action
budget is spent. A Conclusion whose value is not below sigma is reclassified
as a Thought and the loop continues; a Thought can never drop the carried
state below sigma on its own.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import httpx

from .memory import (
    ActionKind,
    BottomImmutableError,
    ComposedAction,
    MemoryStack,
    apply_composed_action,
    init_stack,
)
from .monitor import MonitorConfig, TokenProbSequence, evaluate_state
from .retrieval import ToolRegistry, invoke_tool

ENGINE_VERSION = "1"

DEFAULT_MAX_LOOP = 12
DEFAULT_MAX_TOKENS = 500
DEFAULT_TEMPERATURE = 0.6

#: Action labels a generator may emit.
EMITTABLE_KINDS = (
    ActionKind.THOUGHT,
    ActionKind.TOOL_USE,
    ActionKind.SUMMARY,
    ActionKind.BACKTRACK,
    ActionKind.CONCLUSION,
)

_LABEL_RE = re.compile(
    r"^\s*(Thought|Tool_Use|Summary|Backtrack|Conclusion)\s*:\s*(.*)$"
)
_TOOL_NAME_RE = re.compile(r"[A-Za-z0-9_\-]+")


class EngineError(RuntimeError):
    pass


class ActionParseError(EngineError):
    """The generator output carried no recognizable action label."""


class GeneratorTransportError(EngineError):
    """The generator boundary failed; the session aborts with a partial trace."""


@dataclass(frozen=True)
class ParsedAction:
    kind: ActionKind
    content: str
    tool_name: Optional[str] = None


def parse_action(raw: str) -> ParsedAction:
    """Recognize the first well-formed "Label: content" pair.

    Content continues until the next label line. Tool_Use content is stripped
    to the bare tool name.
    """
    lines = raw.splitlines()
    for i, line in enumerate(lines):
        m = _LABEL_RE.match(line)
        if not m:
            continue
        kind = ActionKind(m.group(1))
        parts = [m.group(2)]
        for nxt in lines[i + 1 :]:
            if _LABEL_RE.match(nxt):
                break
            parts.append(nxt)
        content = "\n".join(parts).strip()
        if kind is ActionKind.TOOL_USE:
            name_match = _TOOL_NAME_RE.search(content)
            if not name_match:
                raise ActionParseError("Tool_Use without a tool name")
            return ParsedAction(kind, name_match.group(0), tool_name=name_match.group(0))
        return ParsedAction(kind, content)
    raise ActionParseError("no recognizable action label")


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


class ActionGenerator:
    """Interface: generate(context, prompt) -> (raw_text, token probabilities)."""

    def generate(self, context: str, prompt: str) -> tuple[str, TokenProbSequence]:
        raise NotImplementedError


@dataclass(frozen=True)
class PlaybookEntry:
    text: str
    probs: tuple[float, ...]


class ScriptedGenerator(ActionGenerator):
    """Replays a fixed playbook of (text, probs) entries; fully deterministic."""

    def __init__(self, playbook: Sequence[PlaybookEntry]):
        self.playbook = list(playbook)
        self._index = 0

    def reset(self) -> None:
        self._index = 0

    def generate(self, context: str, prompt: str) -> tuple[str, TokenProbSequence]:
        if self._index >= len(self.playbook):
            raise GeneratorTransportError("scripted playbook exhausted")
        entry = self.playbook[self._index]
        self._index += 1
        return entry.text, TokenProbSequence.from_probs(entry.probs)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedGenerator":
        data = json.loads(Path(path).read_text())
        return cls([PlaybookEntry(e["text"], tuple(e["probs"])) for e in data])

    def to_file(self, path: str | Path) -> None:
        data = [{"text": e.text, "probs": list(e.probs)} for e in self.playbook]
        Path(path).write_text(json.dumps(data, indent=2))


class WireGenerator(ActionGenerator):
    """Remote generator over HTTP.

    POSTs ``{context, prompt, max_tokens, temperature}`` and expects
    ``{text, tokens: [{token, logprob}]}``; log-probabilities are mandatory.
    """

    def __init__(
        self,
        url: str,
        *,
        max_tokens: int = DEFAULT_MAX_TOKENS,
        temperature: float = DEFAULT_TEMPERATURE,
        timeout: float = 30.0,
        client: Optional[httpx.Client] = None,
    ):
        self.url = url
        self.max_tokens = max_tokens
        self.temperature = temperature
        self._client = client or httpx.Client(timeout=timeout)

    def generate(self, context: str, prompt: str) -> tuple[str, TokenProbSequence]:
        import math

        body = {
            "context": context,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        }
        try:
            resp = self._client.post(self.url, json=body)
            resp.raise_for_status()
            data = resp.json()
            tokens = data["tokens"]
            entries = tuple(
                (t["token"], math.exp(float(t["logprob"]))) for t in tokens
            )
            return data["text"], TokenProbSequence(entries)
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise GeneratorTransportError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Engine configuration and traces
# ---------------------------------------------------------------------------


def build_prompt(tool_names: Sequence[str]) -> str:
    tools = ", ".join(tool_names) if tool_names else "none"
    return (
        "Work on the user query step by step using labeled actions.\n"
        f"Available tools: [{tools}].\n"
        "Emit exactly one action per turn, in the form 'Label: content', where\n"
        "Label is one of Thought, Tool_Use, Summary, Backtrack, Conclusion.\n"
        "Tool_Use content must be only the tool name, with no extra characters.\n"
        "Finish with 'Conclusion: <final answer>'."
    )


@dataclass
class EngineConfig:
    monitor: MonitorConfig
    max_loop: int = DEFAULT_MAX_LOOP
    prompt_template: str = ""
    tools: Optional[ToolRegistry] = None
    allowed_kinds: frozenset = frozenset(EMITTABLE_KINDS)
    state_monitor_enabled: bool = True
    # Hook for the evaluation harness: rewrites tool observations.
    # Called as observation_filter(observation, tool_name, call_index).
    observation_filter: Optional[Callable[[str, str, int], str]] = None

    def __post_init__(self) -> None:
        if self.max_loop < 1:
            raise EngineError("max_loop must be at least 1")
        if not self.prompt_template:
            names = self.tools.names if self.tools else []
            self.prompt_template = build_prompt(names)


@dataclass(frozen=True)
class TraceRecord:
    step: int
    kind: str
    content_hash: str
    state_before: float
    state_after: float
    depth_after: int
    tool: Optional[str] = None
    restoration: Optional[float] = None
    note: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "kind": self.kind,
            "content_hash": self.content_hash,
            "state_before": self.state_before,
            "state_after": self.state_after,
            "depth_after": self.depth_after,
            "tool": self.tool,
            "restoration": self.restoration,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TraceRecord":
        return cls(**data)


@dataclass
class SessionTrace:
    query: str
    records: list[TraceRecord] = field(default_factory=list)
    outcome: str = "budget-exhausted"  # "conclusion" | "budget-exhausted" | "aborted"
    conclusion: str = ""
    engine_version: str = ENGINE_VERSION

    def to_jsonl(self) -> str:
        header = json.dumps(
            {
                "query": self.query,
                "outcome": self.outcome,
                "conclusion": self.conclusion,
                "engine_version": self.engine_version,
            },
            sort_keys=True,
        )
        lines = [header] + [
            json.dumps(r.to_dict(), sort_keys=True) for r in self.records
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "SessionTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = json.loads(lines[0])
        records = [TraceRecord.from_dict(json.loads(ln)) for ln in lines[1:]]
        return cls(
            query=header["query"],
            records=records,
            outcome=header["outcome"],
            conclusion=header["conclusion"],
            engine_version=header["engine_version"],
        )


def _hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


def reasoning_loop(
    query: str, gen: ActionGenerator, cfg: EngineConfig
) -> tuple[str, SessionTrace]:
    """Run one session and return (conclusion text, trace).

    On budget exhaustion the top of the stack is returned as a best-effort
    conclusion. Transport failures abort with the partial trace.
    """
    if not query:
        raise EngineError("query must be non-empty")
    mon = cfg.monitor
    stack = init_stack(query, mon.large_value)
    s = mon.large_value
    trace = SessionTrace(query=query)
    actions_taken = 0
    tool_calls = 0

    while actions_taken < cfg.max_loop and s >= mon.sigma:
        context = stack.render_context()
        try:
            raw, probs = gen.generate(context, cfg.prompt_template)
        except GeneratorTransportError:
            trace.outcome = "aborted"
            trace.conclusion = stack.top.content
            return trace.conclusion, trace
        actions_taken += 1
        try:
            action = parse_action(raw)
        except ActionParseError:
            trace.records.append(
                TraceRecord(
                    step=actions_taken,
                    kind="ParseError",
                    content_hash=_hash(raw),
                    state_before=s,
                    state_after=s,
                    depth_after=stack.depth,
                    note="unparseable output; re-prompting",
                )
            )
            continue
        if action.kind not in cfg.allowed_kinds:
            trace.records.append(
                TraceRecord(
                    step=actions_taken,
                    kind="ParseError",
                    content_hash=_hash(raw),
                    state_before=s,
                    state_after=s,
                    depth_after=stack.depth,
                    note=f"action {action.kind.value} not allowed; re-prompting",
                )
            )
            continue

        s_before = s
        if action.kind is ActionKind.CONCLUSION:
            if not cfg.state_monitor_enabled:
                stack, _ = apply_composed_action(
                    stack, ComposedAction(ActionKind.CONCLUSION, action.content), s
                )
                trace.records.append(
                    TraceRecord(
                        step=actions_taken,
                        kind=ActionKind.CONCLUSION.value,
                        content_hash=_hash(action.content),
                        state_before=s_before,
                        state_after=s,
                        depth_after=stack.depth,
                        note="accepted without state monitoring",
                    )
                )
                trace.outcome = "conclusion"
                trace.conclusion = action.content
                return action.content, trace
            f = evaluate_state(probs, mon, actions_taken).value
            if f < mon.sigma:
                stack, _ = apply_composed_action(
                    stack, ComposedAction(ActionKind.CONCLUSION, action.content), s
                )
                s = f
                trace.records.append(
                    TraceRecord(
                        step=actions_taken,
                        kind=ActionKind.CONCLUSION.value,
                        content_hash=_hash(action.content),
                        state_before=s_before,
                        state_after=s,
                        depth_after=stack.depth,
                    )
                )
                trace.outcome = "conclusion"
                trace.conclusion = action.content
                return action.content, trace
            # Not confident enough: reclassify as a Thought and continue.
            stack, _ = apply_composed_action(
                stack, ComposedAction(ActionKind.THOUGHT, action.content), s
            )
            s = f
            trace.records.append(
                TraceRecord(
                    step=actions_taken,
                    kind=ActionKind.THOUGHT.value,
                    content_hash=_hash(action.content),
                    state_before=s_before,
                    state_after=s,
                    depth_after=stack.depth,
                    note="conclusion reclassified as thought",
                )
            )
        elif action.kind is ActionKind.THOUGHT:
            value = evaluate_state(probs, mon, actions_taken).value
            if value < mon.sigma:
                value = mon.sigma
            stack, _ = apply_composed_action(
                stack, ComposedAction(ActionKind.THOUGHT, action.content), s
            )
            s = value
            trace.records.append(
                TraceRecord(
                    step=actions_taken,
                    kind=ActionKind.THOUGHT.value,
                    content_hash=_hash(action.content),
                    state_before=s_before,
                    state_after=s,
                    depth_after=stack.depth,
                )
            )
        elif action.kind is ActionKind.TOOL_USE:
            tool_calls += 1
            registry = cfg.tools or ToolRegistry()
            # Retrieval is driven by the immutable bottom query.
            observation = invoke_tool(registry, action.tool_name, stack.bottom.content)
            if cfg.observation_filter is not None:
                observation = cfg.observation_filter(
                    observation, action.tool_name, tool_calls
                )
            stack, _ = apply_composed_action(
                stack,
                ComposedAction(
                    ActionKind.TOOL_OBSERVATION, observation, tool_name=action.tool_name
                ),
                s,
            )
            trace.records.append(
                TraceRecord(
                    step=actions_taken,
                    kind=ActionKind.TOOL_OBSERVATION.value,
                    content_hash=_hash(observation),
                    state_before=s_before,
                    state_after=s,
                    depth_after=stack.depth,
                    tool=action.tool_name,
                )
            )
        elif action.kind is ActionKind.BACKTRACK:
            try:
                stack, restoration = apply_composed_action(
                    stack, ComposedAction(ActionKind.BACKTRACK, ""), s
                )
            except BottomImmutableError:
                trace.records.append(
                    TraceRecord(
                        step=actions_taken,
                        kind=ActionKind.BACKTRACK.value,
                        content_hash=_hash(""),
                        state_before=s_before,
                        state_after=s,
                        depth_after=stack.depth,
                        note="refused: bottom frame is immutable",
                    )
                )
                continue
            if restoration is not None:
                s = restoration
            trace.records.append(
                TraceRecord(
                    step=actions_taken,
                    kind=ActionKind.BACKTRACK.value,
                    content_hash=_hash(""),
                    state_before=s_before,
                    state_after=s,
                    depth_after=stack.depth,
                    restoration=restoration,
                )
            )
        elif action.kind is ActionKind.SUMMARY:
            try:
                stack, _ = apply_composed_action(
                    stack, ComposedAction(ActionKind.SUMMARY, action.content), s
                )
            except BottomImmutableError:
                trace.records.append(
                    TraceRecord(
                        step=actions_taken,
                        kind=ActionKind.SUMMARY.value,
                        content_hash=_hash(action.content),
                        state_before=s_before,
                        state_after=s,
                        depth_after=stack.depth,
                        note="refused: bottom frame is immutable",
                    )
                )
                continue
            trace.records.append(
                TraceRecord(
                    step=actions_taken,
                    kind=ActionKind.SUMMARY.value,
                    content_hash=_hash(action.content),
                    state_before=s_before,
                    state_after=s,
                    depth_after=stack.depth,
                )
            )

    trace.outcome = "budget-exhausted"
    trace.conclusion = stack.top.content
    return trace.conclusion, trace


def replay(trace: SessionTrace, gen: ActionGenerator, cfg: EngineConfig) -> bool:
    """True iff re-running the session reproduces the trace byte-for-byte."""
    if trace.engine_version != ENGINE_VERSION:
        raise EngineError(
            f"trace version {trace.engine_version!r} does not match {ENGINE_VERSION!r}"
        )
    if hasattr(gen, "reset"):
        gen.reset()
    _, fresh = reasoning_loop(trace.query, gen, cfg)
    return fresh.to_jsonl() == trace.to_jsonl()
