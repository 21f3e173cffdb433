"""Reasoning loop: action parsing, gating, trace replay, wire transport."""

import json
import math

import httpx
import pytest

from stackagent.engine import (
    ENGINE_VERSION,
    ActionParseError,
    EngineConfig,
    EngineError,
    GeneratorTransportError,
    PlaybookEntry,
    ScriptedGenerator,
    SessionTrace,
    WireGenerator,
    build_prompt,
    parse_action,
    reasoning_loop,
    replay,
)
from stackagent.memory import ActionKind
from stackagent.monitor import MonitorConfig
from stackagent.retrieval import ToolRegistry, make_stub_tool


def monitor(sigma=10.0):
    return MonitorConfig(metric="cppl", sigma=sigma, large_value=1e9)


def config(**kwargs):
    kwargs.setdefault("monitor", monitor())
    return EngineConfig(**kwargs)


def entry(text, probs):
    return PlaybookEntry(text, tuple(probs))


# cppl of a single-token sequence is 1/p, handy for pinning state values.
CONFIDENT = (0.125,)  # -> 8, below sigma 10
HESITANT = (1 / 15,)  # -> 15, above sigma 10


# -- parsing -----------------------------------------------------------------


def test_parse_simple_thought():
    a = parse_action("Thought: look closer")
    assert a.kind is ActionKind.THOUGHT
    assert a.content == "look closer"


def test_parse_tool_use_strips_to_bare_name():
    a = parse_action("Tool_Use: DOC_RAG")
    assert a.kind is ActionKind.TOOL_USE
    assert a.tool_name == "DOC_RAG"
    a = parse_action("Tool_Use: please call DOC_RAG now")
    assert a.tool_name == "please"  # first token wins; content is the name
    assert a.content == a.tool_name


def test_parse_multiline_content_stops_at_next_label():
    raw = "Thought: first line\nsecond line\nConclusion: nope"
    a = parse_action(raw)
    assert a.kind is ActionKind.THOUGHT
    assert a.content == "first line\nsecond line"


def test_parse_skips_leading_chatter():
    a = parse_action("some preamble\nConclusion: C")
    assert a.kind is ActionKind.CONCLUSION
    assert a.content == "C"


def test_parse_rejects_unlabeled_output():
    with pytest.raises(ActionParseError):
        parse_action("I think the answer is C")


def test_parse_rejects_empty_tool_use():
    with pytest.raises(ActionParseError):
        parse_action("Tool_Use: !!!")


def test_build_prompt_lists_tools():
    assert "DOC_RAG" in build_prompt(["DOC_RAG"])
    assert "none" in build_prompt([])


# -- loop behavior -----------------------------------------------------------


def test_confident_conclusion_ends_the_session():
    gen = ScriptedGenerator([entry("Conclusion: C", CONFIDENT)])
    conclusion, trace = reasoning_loop("q", gen, config())
    assert conclusion == "C"
    assert trace.outcome == "conclusion"
    assert trace.records[-1].kind == "Conclusion"
    assert trace.records[-1].state_after == pytest.approx(8.0)


def test_hesitant_conclusion_is_reclassified_then_accepted():
    gen = ScriptedGenerator(
        [entry("Conclusion: maybe C", HESITANT), entry("Conclusion: C", CONFIDENT)]
    )
    conclusion, trace = reasoning_loop("q", gen, config())
    assert conclusion == "C"
    kinds = [r.kind for r in trace.records]
    assert kinds == ["Thought", "Conclusion"]
    assert trace.records[0].note == "conclusion reclassified as thought"
    assert trace.records[0].state_after == pytest.approx(15.0)
    assert trace.records[1].state_after == pytest.approx(8.0)


def test_two_reclassified_conclusions_stack_as_thoughts():
    gen = ScriptedGenerator(
        [
            entry("Conclusion: guess one", HESITANT),
            entry("Conclusion: guess two", HESITANT),
            entry("Conclusion: C", CONFIDENT),
        ]
    )
    _, trace = reasoning_loop("q", gen, config())
    assert [r.kind for r in trace.records] == ["Thought", "Thought", "Conclusion"]
    assert trace.records[1].depth_after == 3
    assert trace.records[2].depth_after == 4


def test_confident_thought_is_floored_at_sigma():
    gen = ScriptedGenerator(
        [entry("Thought: obvious", (0.5,)), entry("Conclusion: C", CONFIDENT)]
    )
    _, trace = reasoning_loop("q", gen, config())
    assert trace.records[0].state_after == 10.0  # cppl 2 clamped up to sigma


def test_budget_exhaustion_returns_top_of_stack():
    gen = ScriptedGenerator([entry("Thought: hmm", HESITANT)] * 3)
    conclusion, trace = reasoning_loop("q", gen, config(max_loop=3))
    assert trace.outcome == "budget-exhausted"
    assert len(trace.records) == 3
    assert conclusion == "hmm"


def test_parse_errors_consume_loop_budget():
    gen = ScriptedGenerator(
        [entry("mumbling without a label", (0.5,))] * 2
        + [entry("Conclusion: C", CONFIDENT)]
    )
    conclusion, trace = reasoning_loop("q", gen, config(max_loop=3))
    assert conclusion == "C"
    assert [r.kind for r in trace.records] == ["ParseError", "ParseError", "Conclusion"]


def test_disallowed_action_is_refused_and_consumes_budget():
    gen = ScriptedGenerator(
        [entry("Backtrack: undo", (0.5,)), entry("Conclusion: C", CONFIDENT)]
    )
    cfg = config(
        allowed_kinds=frozenset(
            {ActionKind.THOUGHT, ActionKind.TOOL_USE, ActionKind.CONCLUSION}
        )
    )
    _, trace = reasoning_loop("q", gen, cfg)
    assert trace.records[0].kind == "ParseError"
    assert "not allowed" in trace.records[0].note


def test_backtrack_restores_the_saved_thought_state():
    gen = ScriptedGenerator(
        [
            entry("Thought: risky idea", HESITANT),
            entry("Backtrack: undo", (0.5,)),
            entry("Conclusion: C", CONFIDENT),
        ]
    )
    _, trace = reasoning_loop("q", gen, config())
    bt = trace.records[1]
    assert bt.kind == "Backtrack"
    assert bt.restoration == 1e9  # value in force before the Thought push
    assert bt.state_after == 1e9


def test_backtrack_on_bare_stack_is_refused():
    gen = ScriptedGenerator(
        [entry("Backtrack: undo", (0.5,)), entry("Conclusion: C", CONFIDENT)]
    )
    _, trace = reasoning_loop("q", gen, config())
    assert trace.records[0].note == "refused: bottom frame is immutable"
    assert trace.records[0].depth_after == 1


def test_summary_replaces_the_top_frame():
    gen = ScriptedGenerator(
        [
            entry("Thought: long rambling", HESITANT),
            entry("Summary: short version", (0.5,)),
            entry("Conclusion: C", CONFIDENT),
        ]
    )
    _, trace = reasoning_loop("q", gen, config())
    assert trace.records[1].kind == "Summary"
    assert trace.records[1].depth_after == trace.records[0].depth_after


def test_tool_use_dispatches_and_records_observation():
    registry = ToolRegistry()
    registry.register(make_stub_tool("KG_RAG", "kg_rag", "canned graph facts"))
    gen = ScriptedGenerator(
        [entry("Tool_Use: KG_RAG", (0.5,)), entry("Conclusion: C", CONFIDENT)]
    )
    _, trace = reasoning_loop("q", gen, config(tools=registry))
    obs = trace.records[0]
    assert obs.kind == "Tool_Observation"
    assert obs.tool == "KG_RAG"
    assert obs.state_after == obs.state_before  # tool use leaves s unchanged


def test_unknown_tool_yields_error_observation():
    gen = ScriptedGenerator(
        [entry("Tool_Use: NOPE", (0.5,)), entry("Conclusion: C", CONFIDENT)]
    )
    _, trace = reasoning_loop("q", gen, config())
    assert trace.records[0].kind == "Tool_Observation"


def test_observation_filter_rewrites_the_observation():
    registry = ToolRegistry()
    registry.register(make_stub_tool("KG_RAG", "kg_rag", "original"))
    seen = []

    def filt(obs, tool_name, call_index):
        seen.append((obs, tool_name, call_index))
        return "rewritten"

    gen = ScriptedGenerator(
        [entry("Tool_Use: KG_RAG", (0.5,)), entry("Conclusion: C", CONFIDENT)]
    )
    _, trace = reasoning_loop("q", gen, config(tools=registry, observation_filter=filt))
    assert seen == [("original", "KG_RAG", 1)]


def test_state_monitor_disabled_accepts_any_conclusion():
    gen = ScriptedGenerator([entry("Conclusion: wild guess", HESITANT)])
    conclusion, trace = reasoning_loop(
        "q", gen, config(state_monitor_enabled=False)
    )
    assert conclusion == "wild guess"
    assert trace.records[0].note == "accepted without state monitoring"


def test_playbook_exhaustion_aborts_with_partial_trace():
    gen = ScriptedGenerator([entry("Thought: only one", HESITANT)])
    _, trace = reasoning_loop("q", gen, config())
    assert trace.outcome == "aborted"
    assert len(trace.records) == 1


# -- traces and replay -------------------------------------------------------


def playbook_roundtrip(tmp_path):
    gen = ScriptedGenerator(
        [entry("Thought: t", HESITANT), entry("Conclusion: C", CONFIDENT)]
    )
    path = tmp_path / "playbook.json"
    gen.to_file(path)
    return ScriptedGenerator.from_file(path)


def test_scripted_generator_file_roundtrip(tmp_path):
    gen = playbook_roundtrip(tmp_path)
    assert gen.playbook == [
        entry("Thought: t", HESITANT),
        entry("Conclusion: C", CONFIDENT),
    ]


def test_trace_jsonl_roundtrip():
    gen = ScriptedGenerator(
        [entry("Thought: t", HESITANT), entry("Conclusion: C", CONFIDENT)]
    )
    _, trace = reasoning_loop("q", gen, config())
    restored = SessionTrace.from_jsonl(trace.to_jsonl())
    assert restored.to_jsonl() == trace.to_jsonl()


def test_replay_reproduces_the_trace():
    gen = ScriptedGenerator(
        [entry("Thought: t", HESITANT), entry("Conclusion: C", CONFIDENT)]
    )
    cfg = config()
    _, trace = reasoning_loop("q", gen, cfg)
    assert replay(trace, gen, cfg)


def test_replay_detects_a_tampered_trace():
    gen = ScriptedGenerator(
        [entry("Thought: t", HESITANT), entry("Conclusion: C", CONFIDENT)]
    )
    cfg = config()
    _, trace = reasoning_loop("q", gen, cfg)
    trace.conclusion = "tampered"
    assert not replay(trace, gen, cfg)


def test_replay_rejects_version_mismatch():
    gen = ScriptedGenerator([entry("Conclusion: C", CONFIDENT)])
    cfg = config()
    _, trace = reasoning_loop("q", gen, cfg)
    trace.engine_version = "999"
    with pytest.raises(EngineError):
        replay(trace, gen, cfg)
    assert ENGINE_VERSION != "999"


# -- wire transport ----------------------------------------------------------


def wire_client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_wire_generator_round_trip():
    captured = {}

    def handler(request):
        captured.update(json.loads(request.content))
        return httpx.Response(
            200,
            json={
                "text": "Conclusion: C",
                "tokens": [{"token": "C", "logprob": math.log(0.5)}],
            },
        )

    gen = WireGenerator("http://model.test/gen", client=wire_client(handler))
    conclusion, trace = reasoning_loop("q", gen, config())
    assert conclusion == "C"
    assert captured["max_tokens"] == 500
    assert captured["temperature"] == 0.6
    assert captured["context"].startswith("User_Query: q")


def test_wire_generator_http_error_aborts_session():
    def handler(request):
        return httpx.Response(500, text="boom")

    gen = WireGenerator("http://model.test/gen", client=wire_client(handler))
    _, trace = reasoning_loop("q", gen, config())
    assert trace.outcome == "aborted"


def test_wire_generator_missing_logprobs_is_a_transport_error():
    def handler(request):
        return httpx.Response(200, json={"text": "Conclusion: C"})

    gen = WireGenerator("http://model.test/gen", client=wire_client(handler))
    with pytest.raises(GeneratorTransportError):
        gen.generate("ctx", "prompt")
