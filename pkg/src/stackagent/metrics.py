"""Answer-quality metrics: exact match, BLEU-1/BLEU-4, and unigram recall."""

from __future__ import annotations

import math
from collections import Counter

from .retrieval import tokenize


class MetricError(ValueError):
    pass


def normalize_choice(text: str) -> frozenset[str]:
    """Case-insensitive set of answer tokens; separators are ignored."""
    return frozenset(t.upper() for t in tokenize(text))


def compute_em(prediction: str, gold: list[str]) -> int:
    """1 iff the prediction covers the full gold answer set, order-insensitive."""
    if not gold:
        raise MetricError("gold answer set must be non-empty")
    gold_set = frozenset(t for g in gold for t in normalize_choice(g))
    return int(normalize_choice(prediction) == gold_set)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def compute_bleu(prediction: str, reference: str, n: int = 4) -> float:
    """Cumulative modified n-gram precision with brevity penalty, as a
    percentage. Orders above 1 use add-one smoothing so short answers do not
    zero out the geometric mean."""
    if n not in (1, 4):
        raise MetricError("only BLEU-1 and BLEU-4 are supported")
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        raise MetricError("reference must be non-empty")
    pred_tokens = tokenize(prediction)
    if not pred_tokens:
        return 0.0
    log_precisions = []
    for order in range(1, n + 1):
        pred_counts = _ngrams(pred_tokens, order)
        ref_counts = _ngrams(ref_tokens, order)
        total = sum(pred_counts.values())
        matches = sum(min(c, ref_counts[g]) for g, c in pred_counts.items())
        if order == 1:
            if matches == 0 or total == 0:
                return 0.0
            p = matches / total
        else:
            p = (matches + 1) / (total + 1) if total > 0 else 1.0
        log_precisions.append(math.log(p))
    bp = 1.0
    if len(pred_tokens) < len(ref_tokens):
        bp = math.exp(1 - len(ref_tokens) / len(pred_tokens))
    return 100.0 * bp * math.exp(sum(log_precisions) / n)


def compute_rouge_r(prediction: str, reference: str) -> float:
    """Recall of distinct reference unigrams covered by the prediction (%)."""
    ref_tokens = set(tokenize(reference))
    if not ref_tokens:
        raise MetricError("reference must be non-empty")
    pred_tokens = set(tokenize(prediction))
    return 100.0 * len(ref_tokens & pred_tokens) / len(ref_tokens)
