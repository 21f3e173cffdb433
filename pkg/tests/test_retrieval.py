"""Chunking exactness, lexical search vs a brute-force oracle, and tools."""

import random

import pytest

from stackagent.retrieval import (
    CHUNK_OVERLAP,
    CHUNK_SIZE,
    Corpus,
    Document,
    RetrievalError,
    ToolRegistry,
    chunk_corpus,
    chunk_document,
    format_observation,
    invoke_tool,
    make_doc_rag_tool,
    make_stub_tool,
    registry_from_config,
    search_documents,
    tokenize,
)


def doc_of_n_tokens(n, doc_id="d"):
    return Document(doc_id, doc_id, " ".join(f"w{i}" for i in range(n)))


# -- tokenizer ---------------------------------------------------------------


def test_tokenizer_lowercases_and_splits_on_punctuation():
    assert tokenize("Hello, World! x2") == ["hello", "world", "x2"]


def test_tokenizer_is_stable_on_empty_text():
    assert tokenize("") == []


# -- chunking ----------------------------------------------------------------


def test_three_hundred_token_fixture_starts():
    chunks = chunk_document(doc_of_n_tokens(300))
    assert [c.token_start for c in chunks] == [0, 78, 156, 234]
    assert chunks[-1].token_end == 300


def test_short_document_is_a_single_chunk():
    chunks = chunk_document(doc_of_n_tokens(100))
    assert len(chunks) == 1
    assert (chunks[0].token_start, chunks[0].token_end) == (0, 100)


def test_chunk_text_matches_token_slice():
    doc = doc_of_n_tokens(200)
    tokens = tokenize(doc.body)
    for c in chunk_document(doc):
        assert c.text.split() == tokens[c.token_start : c.token_end]


def test_chunker_covers_every_token_with_stride_and_overlap():
    rng = random.Random(3)
    stride = CHUNK_SIZE - CHUNK_OVERLAP
    for _ in range(25):
        n = rng.randint(1, 700)
        chunks = chunk_document(doc_of_n_tokens(n))
        assert chunks[0].token_start == 0
        assert chunks[-1].token_end == n
        for i, c in enumerate(chunks):
            assert c.token_start == i * stride
            assert c.chunk_index == i
        for prev, nxt in zip(chunks, chunks[1:]):
            assert prev.token_end - nxt.token_start in range(
                CHUNK_OVERLAP, CHUNK_SIZE
            )
            if prev.token_end - prev.token_start == CHUNK_SIZE:
                assert prev.token_end - nxt.token_start == CHUNK_OVERLAP


def test_invalid_chunk_parameters_are_rejected():
    with pytest.raises(RetrievalError):
        chunk_document(doc_of_n_tokens(10), size=50, overlap=50)


def test_empty_document_yields_no_chunks():
    assert chunk_document(Document("d", "d", "")) == []


# -- search ------------------------------------------------------------------


def sample_corpus():
    return Corpus(
        (
            Document("alpha", "alpha", "the cat sat on the mat near the cat flap"),
            Document("beta", "beta", "a dog chased the cat across the yard"),
            Document("gamma", "gamma", "weather report with no animals at all"),
        )
    )


def test_planted_query_ranks_first_against_brute_force():
    chunks = chunk_corpus(sample_corpus())
    query = "cat mat"
    result = search_documents(chunks, query, k=3)

    def brute_score(chunk):
        terms = set(tokenize(query))
        toks = chunk.text.split()
        return sum(toks.count(t) for t in terms)

    best = max(chunks, key=lambda c: (brute_score(c), ))
    assert result.hits[0][0].doc_id == best.doc_id == "alpha"
    assert result.hits[0][1] == brute_score(best)
    # Full ordering agrees with the brute-force sort.
    expected = sorted(chunks, key=lambda c: (-brute_score(c), c.doc_id, c.chunk_index))
    assert [c.doc_id for c, _ in result.hits] == [c.doc_id for c in expected[:3]]


def test_search_is_deterministic_and_breaks_ties_by_doc_id():
    corpus = Corpus(
        (Document("b", "b", "same words here"), Document("a", "a", "same words here"))
    )
    chunks = chunk_corpus(corpus)
    first = search_documents(chunks, "same words", k=2)
    second = search_documents(chunks, "same words", k=2)
    assert first == second
    assert [c.doc_id for c, _ in first.hits] == ["a", "b"]


def test_duplicate_query_terms_do_not_double_count():
    chunks = chunk_corpus(sample_corpus())
    once = search_documents(chunks, "cat", k=1).hits[0][1]
    twice = search_documents(chunks, "cat cat", k=1).hits[0][1]
    assert once == twice


def test_format_observation_layout():
    chunks = chunk_corpus(sample_corpus())
    result = search_documents(chunks, "cat", k=2)
    lines = format_observation(result).splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("[alpha#0] ")


def test_k_must_be_positive():
    with pytest.raises(RetrievalError):
        search_documents([], "q", k=0)


# -- corpus serialization ----------------------------------------------------


def test_corpus_jsonl_roundtrip(tmp_path):
    corpus = sample_corpus()
    path = tmp_path / "corpus.jsonl"
    corpus.to_jsonl(path)
    assert Corpus.from_jsonl(path) == corpus


def test_corpus_from_directory(tmp_path):
    (tmp_path / "one.txt").write_text("first document")
    (tmp_path / "two.txt").write_text("second document")
    corpus = Corpus.from_directory(tmp_path)
    assert [d.doc_id for d in corpus.documents] == ["one", "two"]


def test_duplicate_doc_ids_are_rejected():
    with pytest.raises(RetrievalError):
        Corpus((Document("d", "", "x"), Document("d", "", "y")))


# -- tools -------------------------------------------------------------------


def test_doc_rag_tool_returns_formatted_observation():
    tool = make_doc_rag_tool(chunk_corpus(sample_corpus()), k=1)
    assert tool.invoke("dog yard").startswith("[beta#0] ")


def test_unknown_tool_dispatch():
    registry = ToolRegistry()
    assert invoke_tool(registry, "MISSING", "q") == "unknown tool: MISSING"


def test_duplicate_tool_registration_is_rejected():
    registry = ToolRegistry()
    registry.register(make_stub_tool("X", "kg_rag", "t"))
    with pytest.raises(RetrievalError):
        registry.register(make_stub_tool("X", "web_rag", "t"))


def test_registry_from_config_builds_all_kinds(tmp_path):
    fixture_file = tmp_path / "web.txt"
    fixture_file.write_text("web fixture")
    registry = registry_from_config(
        {
            "DOC_RAG": {"kind": "doc_rag", "k": 2},
            "KG_RAG": {"kind": "kg_rag", "fixture": "graph facts"},
            "WEB_RAG": {"kind": "web_rag", "fixture_file": str(fixture_file)},
        },
        sample_corpus(),
    )
    assert registry.names == ["DOC_RAG", "KG_RAG", "WEB_RAG"]
    assert invoke_tool(registry, "KG_RAG", "q") == "graph facts"
    assert invoke_tool(registry, "WEB_RAG", "q") == "web fixture"
    assert invoke_tool(registry, "DOC_RAG", "cat").startswith("[alpha#0] ")
