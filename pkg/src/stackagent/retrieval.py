"""Local knowledge base: deterministic chunking, lexical retrieval, and tools.

Documents are tokenized with a documented lowercase word tokenizer, chunked
with a sliding window (default 128 tokens, 50 overlap, stride 78), and scored
by term-frequency overlap with the query. The document tool returns the
top-k chunks as a single observation; the other tool families ship as
deterministic fixture-backed stubs.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

CHUNK_SIZE = 128
CHUNK_OVERLAP = 50
DEFAULT_TOP_K = 3

_TOKEN_RE = re.compile(r"[0-9a-z]+")


class RetrievalError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase; split on whitespace and punctuation. Offsets are stable."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]

    def __post_init__(self) -> None:
        ids = [d.doc_id for d in self.documents]
        if len(ids) != len(set(ids)):
            raise RetrievalError("document ids must be unique")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "Corpus":
        docs = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            docs.append(Document(rec["doc_id"], rec.get("title", ""), rec["body"]))
        return cls(tuple(docs))

    @classmethod
    def from_directory(cls, path: str | Path) -> "Corpus":
        docs = []
        for p in sorted(Path(path).glob("*.txt")):
            docs.append(Document(p.stem, p.stem, p.read_text()))
        return cls(tuple(docs))

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for d in self.documents:
                fh.write(
                    json.dumps(
                        {"doc_id": d.doc_id, "title": d.title, "body": d.body},
                        sort_keys=True,
                    )
                    + "\n"
                )


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    chunk_index: int
    token_start: int
    token_end: int
    text: str


def chunk_document(
    doc: Document, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP
) -> list[Chunk]:
    if size <= overlap or overlap < 0:
        raise RetrievalError("chunk size must exceed the overlap")
    tokens = tokenize(doc.body)
    stride = size - overlap
    chunks = []
    start = 0
    index = 0
    while start < len(tokens):
        end = min(start + size, len(tokens))
        chunks.append(
            Chunk(
                doc_id=doc.doc_id,
                chunk_index=index,
                token_start=start,
                token_end=end,
                text=" ".join(tokens[start:end]),
            )
        )
        if end == len(tokens):
            break
        start += stride
        index += 1
    return chunks


def chunk_corpus(
    corpus: Corpus, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP
) -> list[Chunk]:
    out: list[Chunk] = []
    for doc in corpus.documents:
        out.extend(chunk_document(doc, size, overlap))
    return out


@dataclass(frozen=True)
class RetrievalResult:
    hits: tuple[tuple[Chunk, float], ...]
    k: int


def score_chunk(chunk_counts: Counter, query_terms: Iterable[str]) -> float:
    """Term-frequency overlap: sum of in-chunk counts of distinct query terms."""
    return float(sum(chunk_counts[t] for t in set(query_terms)))


def search_documents(chunks: list[Chunk], query: str, k: int = DEFAULT_TOP_K) -> RetrievalResult:
    if k < 1:
        raise RetrievalError("k must be at least 1")
    terms = tokenize(query)
    scored = []
    for chunk in chunks:
        counts = Counter(chunk.text.split())
        scored.append((chunk, score_chunk(counts, terms)))
    scored.sort(key=lambda cs: (-cs[1], cs[0].doc_id, cs[0].chunk_index))
    return RetrievalResult(tuple(scored[:k]), k)


def format_observation(result: RetrievalResult) -> str:
    """Fixed "[doc_id#chunk] text" layout, one retrieved chunk per line."""
    return "\n".join(f"[{c.doc_id}#{c.chunk_index}] {c.text}" for c, _ in result.hits)


# ---------------------------------------------------------------------------
# Tools
# ---------------------------------------------------------------------------

TOOL_KINDS = ("doc_rag", "kg_rag", "web_rag", "emr_rag")


@dataclass(frozen=True)
class Tool:
    name: str
    kind: str
    invoke: Callable[[str], str]

    def __post_init__(self) -> None:
        if self.kind not in TOOL_KINDS:
            raise RetrievalError(f"unknown tool kind {self.kind!r}")


@dataclass
class ToolRegistry:
    tools: dict[str, Tool] = field(default_factory=dict)

    def register(self, tool: Tool) -> None:
        if tool.name in self.tools:
            raise RetrievalError(f"duplicate tool name {tool.name!r}")
        self.tools[tool.name] = tool

    def get(self, name: str) -> Optional[Tool]:
        return self.tools.get(name)

    @property
    def names(self) -> list[str]:
        return sorted(self.tools)


def make_doc_rag_tool(
    chunks: list[Chunk], name: str = "DOC_RAG", k: int = DEFAULT_TOP_K
) -> Tool:
    def invoke(query: str) -> str:
        result = search_documents(chunks, query, k)
        return format_observation(result)

    return Tool(name=name, kind="doc_rag", invoke=invoke)


def make_stub_tool(name: str, kind: str, fixture_text: str) -> Tool:
    return Tool(name=name, kind=kind, invoke=lambda query: fixture_text)


def invoke_tool(registry: ToolRegistry, name: str, query: str) -> str:
    """Dispatch to the named tool; unknown names yield an error observation."""
    tool = registry.get(name)
    if tool is None:
        return f"unknown tool: {name}"
    return tool.invoke(query)


def registry_from_config(
    config: dict, corpus: Optional[Corpus] = None
) -> ToolRegistry:
    """Build a registry from a JSON mapping of tool names to kinds/fixtures.

    ``{"DOC_RAG": {"kind": "doc_rag", "k": 3},
       "KG_RAG": {"kind": "kg_rag", "fixture": "canned text"}}``
    """
    registry = ToolRegistry()
    chunks = chunk_corpus(corpus) if corpus is not None else []
    for name, spec in sorted(config.items()):
        kind = spec["kind"]
        if kind == "doc_rag":
            registry.register(make_doc_rag_tool(chunks, name, spec.get("k", DEFAULT_TOP_K)))
        else:
            fixture = spec.get("fixture", "")
            if "fixture_file" in spec:
                fixture = Path(spec["fixture_file"]).read_text()
            registry.register(make_stub_tool(name, kind, fixture))
    return registry
