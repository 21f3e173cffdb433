"""Shared test oracles.

The dict-tape simulator below is written directly from the 7-tuple semantics
and shares no code with the package's execution engine; fixture traces and
randomized runs are cross-checked against it.
"""

from __future__ import annotations


def oracle_run(tm, input_symbols, budget):
    """Independent reference simulation on a sparse dict tape.

    Returns (outcome, steps, tape, pos) where tape maps absolute cell index
    to symbol and pos is the final head position.
    """
    tape = {i: s for i, s in enumerate(input_symbols)}
    pos = 0
    state = tm.start
    for step in range(1, budget + 1):
        sym = tape.get(pos, tm.blank)
        state, wsym, move = tm.transitions[(state, sym)]
        tape[pos] = wsym
        pos += 1 if move == "R" else -1
        if state == tm.accept:
            return "accept", step, tape, pos
        if state == tm.reject:
            return "reject", step, tape, pos
    return "budget-exhausted", budget, tape, pos


def canonical_tape(left, head, right, blank):
    """Blank-insensitive canonical form of a (left, head, right) snapshot.

    Returns (symbols, head_index) where symbols is the tape content with
    blank runs stripped from both ends but the head cell always kept, and
    head_index locates the head within it.
    """
    cells = list(left) + [head] + list(right)
    head_i = len(left)
    lo, hi = 0, len(cells)
    while lo < head_i and cells[lo] == blank:
        lo += 1
    while hi - 1 > head_i and cells[hi - 1] == blank:
        hi -= 1
    return tuple(cells[lo:hi]), head_i - lo


def oracle_canonical(tm, tape, pos):
    """Canonical snapshot of the oracle's dict tape."""
    if tape:
        lo = min(min(tape), pos)
        hi = max(max(tape), pos)
    else:
        lo = hi = pos
    cells = [tape.get(i, tm.blank) for i in range(lo, hi + 1)]
    head_i = pos - lo
    return canonical_tape(cells[:head_i], cells[head_i], cells[head_i + 1 :], tm.blank)
