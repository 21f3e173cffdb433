"""Fixture Turing machines used by the equivalence suite and the CLI demos."""

from __future__ import annotations

from .turing import LEFT, RIGHT, TuringMachine

BLANK = "_"


def all_ones_machine() -> TuringMachine:
    """Accepts strings of 1s (including the empty string), rejects on any 0."""
    transitions = {
        ("q0", "1"): ("q0", "1", RIGHT),
        ("q0", "0"): ("qr", "0", RIGHT),
        ("q0", BLANK): ("qa", BLANK, RIGHT),
    }
    return TuringMachine(
        states=frozenset({"q0", "qa", "qr"}),
        input_alphabet=frozenset({"0", "1"}),
        tape_alphabet=frozenset({"0", "1", BLANK}),
        blank=BLANK,
        transitions=transitions,
        start="q0",
        accept="qa",
        reject="qr",
    )


def palindrome_machine() -> TuringMachine:
    """Accepts palindromes over {a, b} by erasing matching end symbols."""
    t = {}
    # Read and erase the first symbol, remembering it.
    t[("q0", "a")] = ("scan_a", BLANK, RIGHT)
    t[("q0", "b")] = ("scan_b", BLANK, RIGHT)
    t[("q0", BLANK)] = ("qa", BLANK, RIGHT)
    # Scan right to the end.
    for mem in ("a", "b"):
        t[(f"scan_{mem}", "a")] = (f"scan_{mem}", "a", RIGHT)
        t[(f"scan_{mem}", "b")] = (f"scan_{mem}", "b", RIGHT)
        t[(f"scan_{mem}", BLANK)] = (f"check_{mem}", BLANK, LEFT)
    # Compare the last symbol with the remembered one.
    t[("check_a", "a")] = ("rewind", BLANK, LEFT)
    t[("check_a", "b")] = ("qr", "b", LEFT)
    t[("check_a", BLANK)] = ("qa", BLANK, RIGHT)  # odd-length middle symbol
    t[("check_b", "b")] = ("rewind", BLANK, LEFT)
    t[("check_b", "a")] = ("qr", "a", LEFT)
    t[("check_b", BLANK)] = ("qa", BLANK, RIGHT)
    # Return to the left end.
    t[("rewind", "a")] = ("rewind", "a", LEFT)
    t[("rewind", "b")] = ("rewind", "b", LEFT)
    t[("rewind", BLANK)] = ("q0", BLANK, RIGHT)
    states = {"q0", "scan_a", "scan_b", "check_a", "check_b", "rewind", "qa", "qr"}
    return TuringMachine(
        states=frozenset(states),
        input_alphabet=frozenset({"a", "b"}),
        tape_alphabet=frozenset({"a", "b", BLANK}),
        blank=BLANK,
        transitions=t,
        start="q0",
        accept="qa",
        reject="qr",
    )


def unary_increment_machine() -> TuringMachine:
    """Appends one 1 to a unary number and accepts."""
    transitions = {
        ("q0", "1"): ("q0", "1", RIGHT),
        ("q0", BLANK): ("qa", "1", RIGHT),
    }
    return TuringMachine(
        states=frozenset({"q0", "qa", "qr"}),
        input_alphabet=frozenset({"1"}),
        tape_alphabet=frozenset({"1", BLANK}),
        blank=BLANK,
        transitions=transitions,
        start="q0",
        accept="qa",
        reject="qr",
    )


def paren_match_machine() -> TuringMachine:
    """Accepts balanced parenthesis strings; matched pairs are crossed out."""
    t = {}
    # Scan right for the first ')'.
    t[("q0", "(")] = ("q0", "(", RIGHT)
    t[("q0", "X")] = ("q0", "X", RIGHT)
    t[("q0", ")")] = ("back", "X", LEFT)
    t[("q0", BLANK)] = ("verify", BLANK, LEFT)
    # Walk left to the matching '('.
    t[("back", "X")] = ("back", "X", LEFT)
    t[("back", "(")] = ("q0", "X", RIGHT)
    t[("back", ")")] = ("qr", ")", LEFT)  # unreachable; keeps delta total
    t[("back", BLANK)] = ("qr", BLANK, RIGHT)  # ')' with no opener
    # All input consumed: any surviving '(' is unmatched.
    t[("verify", "X")] = ("verify", "X", LEFT)
    t[("verify", "(")] = ("qr", "(", LEFT)
    t[("verify", ")")] = ("qr", ")", LEFT)  # unreachable; keeps delta total
    t[("verify", BLANK)] = ("qa", BLANK, RIGHT)
    states = {"q0", "back", "verify", "qa", "qr"}
    return TuringMachine(
        states=frozenset(states),
        input_alphabet=frozenset({"(", ")"}),
        tape_alphabet=frozenset({"(", ")", "X", BLANK}),
        blank=BLANK,
        transitions=t,
        start="q0",
        accept="qa",
        reject="qr",
    )


def looping_machine() -> TuringMachine:
    """Never halts: walks right forever."""
    transitions = {
        ("q0", "1"): ("q0", "1", RIGHT),
        ("q0", BLANK): ("q0", BLANK, RIGHT),
    }
    return TuringMachine(
        states=frozenset({"q0", "qa", "qr"}),
        input_alphabet=frozenset({"1"}),
        tape_alphabet=frozenset({"1", BLANK}),
        blank=BLANK,
        transitions=transitions,
        start="q0",
        accept="qa",
        reject="qr",
    )


FIXTURES = {
    "all_ones": all_ones_machine,
    "palindrome": palindrome_machine,
    "unary_increment": unary_increment_machine,
    "paren_match": paren_match_machine,
    "looper": looping_machine,
}
