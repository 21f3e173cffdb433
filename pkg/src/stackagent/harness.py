"""Evaluation harness: synthetic QA suite, noise-poisoning attacks, ablations,
and the sigma sweep.

The suite plants one answer document per case in a local corpus; a
deterministic context-driven generator retrieves it, recovers from injected
noise via Backtrack/Summary, and concludes with the planted answer letter.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from typing import Optional

from .engine import (
    ActionGenerator,
    EngineConfig,
    SessionTrace,
    reasoning_loop,
)
from .memory import ActionKind
from .metrics import compute_bleu, compute_em, compute_rouge_r
from .monitor import MonitorConfig, TokenProbSequence
from .retrieval import (
    Corpus,
    Document,
    ToolRegistry,
    chunk_corpus,
    make_doc_rag_tool,
)

DEFAULT_SIGMA_CPPL = 10.0
DEFAULT_SIGMA_UCT = 20.0
DEFAULT_LARGE_VALUE = 1e9
DEFAULT_CASES = 50
DEFAULT_NOISE_PIECES = 100

ATTACK_KINDS = ("partial", "structural")
NOISE_KINDS = ("irrelevant", "relevant", "mixed")

CHOICE_LETTERS = ("A", "B", "C", "D")

# Chunked text is lowercased by the retrieval tokenizer, so the answer
# pattern must match case-insensitively.
_ANSWER_RE = re.compile(r"correct option for question (\w+) is ([A-Da-d])\b", re.IGNORECASE)
_TOPIC_RE = re.compile(r"\b(topic\w+key)\b")


class HarnessError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Synthetic QA suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QaCase:
    case_id: str
    query: str
    gold: tuple[str, ...]
    topic: str
    doc_id: str

    def __post_init__(self) -> None:
        if not self.gold:
            raise HarnessError("gold answer set must be non-empty")


@dataclass(frozen=True)
class NoiseCorpus:
    irrelevant: tuple[str, ...]
    relevant: tuple[str, ...]

    def pick(self, kind: str, index: int) -> str:
        if kind == "irrelevant":
            return self.irrelevant[index % len(self.irrelevant)]
        if kind == "relevant":
            return self.relevant[index % len(self.relevant)]
        if kind == "mixed":
            pool = self.irrelevant if index % 2 == 0 else self.relevant
            return pool[index % len(pool)]
        raise HarnessError(f"unknown noise kind {kind!r}")


_FILLER_TOPICS = (
    "railway timetables",
    "regional weather patterns",
    "museum opening hours",
    "historic shipping routes",
    "library catalogue updates",
)


def generate_suite(
    n_cases: int = DEFAULT_CASES,
    seed: int = 7,
    noise_pieces: int = DEFAULT_NOISE_PIECES,
) -> tuple[list[QaCase], Corpus, NoiseCorpus]:
    """Seeded synthetic cases with planted answer documents and noise pools."""
    rng = random.Random(seed)
    cases = []
    docs = []
    for i in range(n_cases):
        topic = f"topic{i:03d}key"
        letter = rng.choice(CHOICE_LETTERS)
        doc_id = f"doc{i:03d}"
        body = (
            f"Reference entry for question {topic}. "
            f"The registry discusses schedules, dosages and units. "
            f"The correct option for question {topic} is {letter}. "
            f"This entry has been verified against the registry index."
        )
        docs.append(Document(doc_id, f"Entry {topic}", body))
        query = (
            f"Question {topic}: which option is correct? "
            f"Options: A, B, C, D. Answer with the letter only."
        )
        cases.append(QaCase(f"case{i:03d}", query, (letter,), topic, doc_id))
    for j in range(5):
        docs.append(
            Document(
                f"distractor{j}",
                f"Distractor {j}",
                f"General notes about {_FILLER_TOPICS[j]} with no question entries.",
            )
        )
    irrelevant = tuple(
        f"Unverified report {j}: miscellaneous notes about "
        f"{rng.choice(_FILLER_TOPICS)} and {rng.choice(_FILLER_TOPICS)}. "
        f"Nothing here addresses any question."
        for j in range(noise_pieces)
    )
    relevant = tuple(
        f"Unverified report {j}: some sources suggest that option "
        f"{rng.choice(CHOICE_LETTERS)} could apply to question topic{j % n_cases:03d}key, "
        f"but this claim lacks a registry citation."
        for j in range(noise_pieces)
    )
    return cases, Corpus(tuple(docs)), NoiseCorpus(irrelevant, relevant)


# ---------------------------------------------------------------------------
# Noise injection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttackSpec:
    attack: str  # "partial" appends, "structural" replaces
    noise: str  # "irrelevant" | "relevant" | "mixed"

    def __post_init__(self) -> None:
        if self.attack not in ATTACK_KINDS:
            raise HarnessError(f"unknown attack {self.attack!r}")
        if self.noise not in NOISE_KINDS:
            raise HarnessError(f"unknown noise kind {self.noise!r}")


def inject_noise(observation: str, spec: AttackSpec, noise: str) -> str:
    """Partial attacks concatenate the noise after the retrieved result;
    structural attacks replace the result entirely."""
    if spec.attack == "structural":
        return noise
    if not noise:
        return observation
    return observation + "\n" + noise


# ---------------------------------------------------------------------------
# Context-driven generator
# ---------------------------------------------------------------------------

_FRAME_RE = re.compile(
    r"^(User_Query|Thought|Tool_Use|Tool_Observation|Summary|Conclusion): ",
    re.MULTILINE,
)

CONFIDENT_PROBS = (0.9,) * 6
MID_PROBS = (0.5,) * 4
LOW_PROBS = (0.05,) * 4

_INITIAL_THOUGHT = "I need the reference entry for"
_GUESS_TEXT = "I cannot find the reference entry; guessing option Z."


def _parse_frames(context: str) -> list[tuple[str, str]]:
    frames = []
    matches = list(_FRAME_RE.finditer(context))
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(context)
        label = m.group(1)
        content = context[m.end() : end].strip()
        frames.append((label, content))
    return frames


class NoiseAwareGenerator(ActionGenerator):
    """Deterministic rule-based generator for the synthetic suite.

    Retrieves the planted document, distrusts observations that lack the
    exact answer pattern (it first hazards a low-confidence guess, then
    backtracks and retries), and condenses cluttered observations that mix
    the answer with unverified material.
    """

    def __init__(self, tool_name: str = "DOC_RAG"):
        self.tool_name = tool_name
        self.reset()

    def reset(self) -> None:
        self._premature_done = False
        self._last_context: Optional[str] = None
        self._last_emission: Optional[tuple[str, TokenProbSequence]] = None

    def generate(self, context: str, prompt: str) -> tuple[str, TokenProbSequence]:
        # If the engine refused the previous action the context is unchanged;
        # keep insisting (mirrors a model that sees no new information).
        if context == self._last_context and self._last_emission is not None:
            return self._last_emission
        emission = self._decide(context)
        self._last_context = context
        self._last_emission = emission
        return emission

    def _emit(self, text: str, probs: tuple[float, ...]) -> tuple[str, TokenProbSequence]:
        return text, TokenProbSequence.from_probs(probs)

    def _decide(self, context: str) -> tuple[str, TokenProbSequence]:
        frames = _parse_frames(context)
        query = frames[0][1] if frames else ""
        topic_match = _TOPIC_RE.search(query)
        topic = topic_match.group(1) if topic_match else ""
        label, content = frames[-1]

        if label == "User_Query":
            return self._emit(
                f"Thought: {_INITIAL_THOUGHT} {topic}.", MID_PROBS
            )
        if label == "Thought" and content.startswith(_INITIAL_THOUGHT):
            return self._emit(f"Tool_Use: {self.tool_name}", MID_PROBS)
        if label == "Tool_Observation":
            answer = self._extract_answer(content, topic)
            if answer and "unverified" not in content.lower():
                return self._emit(f"Conclusion: {answer}", CONFIDENT_PROBS)
            if answer:
                return self._emit(
                    f"Summary: The correct option for question {topic} is {answer}.",
                    MID_PROBS,
                )
            if not self._premature_done:
                self._premature_done = True
                return self._emit(f"Conclusion: {_GUESS_TEXT}", LOW_PROBS)
            return self._emit("Backtrack: discard the unhelpful observation", MID_PROBS)
        if label == "Summary":
            answer = self._extract_answer(content, topic)
            if answer:
                return self._emit(f"Conclusion: {answer}", CONFIDENT_PROBS)
            return self._emit("Backtrack: summary was not usable", MID_PROBS)
        if label == "Thought":
            # A reclassified guess ends up as a Thought on top; remove it.
            if _GUESS_TEXT in content or self._premature_done:
                return self._emit("Backtrack: drop the uncertain guess", MID_PROBS)
            return self._emit("Thought: continuing the analysis.", MID_PROBS)
        if label == "Conclusion":
            return self._emit("Thought: continuing the analysis.", MID_PROBS)
        return self._emit("Thought: continuing the analysis.", MID_PROBS)

    @staticmethod
    def _extract_answer(text: str, topic: str) -> Optional[str]:
        for m in _ANSWER_RE.finditer(text):
            if m.group(1).lower() == topic.lower():
                return m.group(2).upper()
        return None


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    label: str
    em: float
    bleu1: float
    bleu4: float
    rouge_r: float
    summary_prob: float
    backtrack_prob: float
    rows: list[dict] = field(default_factory=list)
    traces: list[SessionTrace] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "em": round(self.em, 2),
            "bleu1": round(self.bleu1, 2),
            "bleu4": round(self.bleu4, 2),
            "rouge_r": round(self.rouge_r, 2),
            "summary_prob": round(self.summary_prob, 2),
            "backtrack_prob": round(self.backtrack_prob, 2),
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


VARIANTS = ("full", "no_backtrack", "no_summary", "no_state_monitor")


def _engine_config(
    registry: ToolRegistry,
    metric: str,
    sigma: float,
    large_value: float,
    max_loop: int,
    variant: str,
    observation_filter,
) -> EngineConfig:
    allowed = set(
        (
            ActionKind.THOUGHT,
            ActionKind.TOOL_USE,
            ActionKind.SUMMARY,
            ActionKind.BACKTRACK,
            ActionKind.CONCLUSION,
        )
    )
    state_monitor = True
    if variant == "no_backtrack":
        allowed.discard(ActionKind.BACKTRACK)
    elif variant == "no_summary":
        allowed.discard(ActionKind.SUMMARY)
    elif variant == "no_state_monitor":
        state_monitor = False
    elif variant != "full":
        raise HarnessError(f"unknown variant {variant!r}")
    return EngineConfig(
        monitor=MonitorConfig(metric=metric, sigma=sigma, large_value=large_value),
        max_loop=max_loop,
        tools=registry,
        allowed_kinds=frozenset(allowed),
        state_monitor_enabled=state_monitor,
        observation_filter=observation_filter,
    )


def _run_suite(
    cases: list[QaCase],
    corpus: Corpus,
    *,
    attack: Optional[AttackSpec] = None,
    noise: Optional[NoiseCorpus] = None,
    variant: str = "full",
    metric: str = "cppl",
    sigma: float = DEFAULT_SIGMA_CPPL,
    large_value: Optional[float] = None,
    max_loop: int = 12,
    label: str = "",
    keep_traces: bool = False,
) -> MetricsReport:
    if attack is not None and noise is None:
        raise HarnessError("attack runs need a noise corpus")
    large = large_value if large_value is not None else max(DEFAULT_LARGE_VALUE, sigma)
    chunks = chunk_corpus(corpus)
    registry = ToolRegistry()
    registry.register(make_doc_rag_tool(chunks))
    rows = []
    traces = []
    em_sum = bleu1_sum = bleu4_sum = rouge_sum = 0.0
    summary_hits = backtrack_hits = 0
    for index, case in enumerate(sorted(cases, key=lambda c: c.case_id)):
        if attack is not None:
            noise_text = noise.pick(attack.noise, index)

            def observation_filter(obs, tool_name, call_index, _n=noise_text):
                # Poison exactly the first tool invocation of the session.
                if call_index == 1:
                    return inject_noise(obs, attack, _n)
                return obs

        else:
            observation_filter = None
        gen = NoiseAwareGenerator()
        cfg = _engine_config(
            registry, metric, sigma, large, max_loop, variant, observation_filter
        )
        conclusion, trace = reasoning_loop(case.query, gen, cfg)
        em = compute_em(conclusion, list(case.gold))
        reference = " ".join(case.gold)
        bleu1 = compute_bleu(conclusion, reference, 1)
        bleu4 = compute_bleu(conclusion, reference, 4)
        rouge = compute_rouge_r(conclusion, reference)
        used_summary = any(r.kind == ActionKind.SUMMARY.value for r in trace.records)
        used_backtrack = any(
            r.kind == ActionKind.BACKTRACK.value for r in trace.records
        )
        em_sum += em
        bleu1_sum += bleu1
        bleu4_sum += bleu4
        rouge_sum += rouge
        summary_hits += used_summary
        backtrack_hits += used_backtrack
        rows.append(
            {
                "case_id": case.case_id,
                "em": em,
                "bleu1": round(bleu1, 2),
                "bleu4": round(bleu4, 2),
                "rouge_r": round(rouge, 2),
                "summary": used_summary,
                "backtrack": used_backtrack,
                "outcome": trace.outcome,
                "actions": len(trace.records),
            }
        )
        if keep_traces:
            traces.append(trace)
    n = len(cases)
    return MetricsReport(
        label=label,
        em=100.0 * em_sum / n,
        bleu1=bleu1_sum / n,
        bleu4=bleu4_sum / n,
        rouge_r=rouge_sum / n,
        summary_prob=100.0 * summary_hits / n,
        backtrack_prob=100.0 * backtrack_hits / n,
        rows=rows,
        traces=traces,
    )


def run_attack_suite(
    cases: list[QaCase],
    corpus: Corpus,
    spec: AttackSpec,
    noise: NoiseCorpus,
    *,
    metric: str = "cppl",
    sigma: float = DEFAULT_SIGMA_CPPL,
    max_loop: int = 12,
    variant: str = "full",
    keep_traces: bool = False,
) -> MetricsReport:
    """Run every case with noise injected at the first tool call."""
    return _run_suite(
        cases,
        corpus,
        attack=spec,
        noise=noise,
        variant=variant,
        metric=metric,
        sigma=sigma,
        max_loop=max_loop,
        label=f"{spec.attack}/{spec.noise}",
        keep_traces=keep_traces,
    )


def run_ablation(
    cases: list[QaCase],
    corpus: Corpus,
    variant: str,
    *,
    attack: Optional[AttackSpec] = None,
    noise: Optional[NoiseCorpus] = None,
    metric: str = "cppl",
    sigma: float = DEFAULT_SIGMA_CPPL,
    max_loop: int = 12,
) -> MetricsReport:
    if variant not in VARIANTS:
        raise HarnessError(f"unknown variant {variant!r}")
    return _run_suite(
        cases,
        corpus,
        attack=attack,
        noise=noise,
        variant=variant,
        metric=metric,
        sigma=sigma,
        max_loop=max_loop,
        label=f"ablation/{variant}",
    )


@dataclass
class SweepRow:
    sigma: float
    em: float
    mean_actions: float
    budget_exhausted_rate: float
    first_conclusion_accept_rate: float

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "em": round(self.em, 2),
            "mean_actions": round(self.mean_actions, 3),
            "budget_exhausted_rate": round(self.budget_exhausted_rate, 2),
            "first_conclusion_accept_rate": round(self.first_conclusion_accept_rate, 2),
        }


DEFAULT_SWEEP_GRIDS = {
    "cppl": (5.0, 8.0, 10.0, 12.0, 15.0),
    "uct": (10.0, 15.0, 20.0, 25.0, 30.0),
}


def sweep_sigma(
    cases: list[QaCase],
    corpus: Corpus,
    sigmas: list[float],
    *,
    metric: str = "cppl",
    max_loop: int = 12,
) -> list[SweepRow]:
    """Run the clean suite per sigma; emits a plot-ready table."""
    if not sigmas:
        raise HarnessError("sigma grid must be non-empty")
    rows = []
    for sigma in sigmas:
        report = _run_suite(
            cases,
            corpus,
            metric=metric,
            sigma=sigma,
            max_loop=max_loop,
            label=f"sweep/{metric}/{sigma}",
            keep_traces=True,
        )
        total = len(report.rows)
        budget = sum(r["outcome"] == "budget-exhausted" for r in report.rows)
        actions = sum(r["actions"] for r in report.rows)
        first_accept = 0
        for trace in report.traces:
            if trace.outcome != "conclusion":
                continue
            reclassified = any(
                r.note == "conclusion reclassified as thought" for r in trace.records
            )
            if not reclassified:
                first_accept += 1
        rows.append(
            SweepRow(
                sigma=sigma,
                em=report.em,
                mean_actions=actions / total,
                budget_exhausted_rate=100.0 * budget / total,
                first_conclusion_accept_rate=100.0 * first_accept / total,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Attack result table
# ---------------------------------------------------------------------------

ATTACK_TABLE_COLUMNS = ("Noise Type", "Summary Prob.", "Backtrack Prob.", "EM")

_NOISE_TITLES = {
    "irrelevant": "Irrelevant Retrieval Noise",
    "relevant": "Relevant Retrieval Noise",
    "mixed": "Mixed Retrieval Noise",
}


def run_attack_table(
    cases: list[QaCase],
    corpus: Corpus,
    noise: NoiseCorpus,
    *,
    metric: str = "cppl",
    sigma: float = DEFAULT_SIGMA_CPPL,
    max_loop: int = 12,
) -> dict[tuple[str, str], MetricsReport]:
    """One report per (attack, noise) combination, in table order."""
    out = {}
    for attack in ATTACK_KINDS:
        for noise_kind in NOISE_KINDS:
            spec = AttackSpec(attack, noise_kind)
            out[(attack, noise_kind)] = run_attack_suite(
                cases, corpus, spec, noise, metric=metric, sigma=sigma, max_loop=max_loop
            )
    return out


def render_attack_table(reports: dict[tuple[str, str], MetricsReport]) -> str:
    """Text table with the attack-results schema: per-noise-type rows of
    Summary probability, Backtrack probability, and EM, grouped by attack."""
    lines = [" | ".join(ATTACK_TABLE_COLUMNS)]
    for attack in ("structural", "partial"):
        lines.append(f"{attack.capitalize()} Attack")
        for noise_kind in NOISE_KINDS:
            r = reports[(attack, noise_kind)]
            lines.append(
                f"{_NOISE_TITLES[noise_kind]} | "
                f"{r.summary_prob:05.2f}% | {r.backtrack_prob:05.2f}% | {r.em:05.2f}"
            )
    return "\n".join(lines)
