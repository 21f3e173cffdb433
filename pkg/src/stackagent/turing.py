"""Turing machines, the stack-machine construction, and executable equivalence checkers.

Two machine models live here:

* ``TuringMachine`` -- a standard single-tape machine used as the reference
  (oracle) semantics.
* ``TcMachine`` -- a two-storage stack machine derived from a Turing machine.
  A right head move becomes a push-class stack operation, a left move a
  pop-class operation, and entering accept/reject drops the numeric state
  value below the halting threshold ``sigma``.

``check_lemma1`` verifies step-by-step commutation of the two executions
through the configuration mapping ``map_config``; ``check_lemma2`` verifies
that accept/reject/budget classification agrees.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

LEFT = "L"
RIGHT = "R"

#: Numeric value assigned to a halted configuration when none is given.
#: Any value strictly below sigma works; sigma/2 is used for readability.
DEFAULT_LARGE_VALUE = 1e9


class MachineError(ValueError):
    """Raised for ill-formed machines or contract violations while stepping."""


# ---------------------------------------------------------------------------
# Reference Turing machine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuringMachine:
    """A standard 7-tuple Turing machine with distinguished accept/reject states."""

    states: frozenset[str]
    input_alphabet: frozenset[str]
    tape_alphabet: frozenset[str]
    blank: str
    transitions: Mapping[tuple[str, str], tuple[str, str, str]]
    start: str
    accept: str
    reject: str

    def __post_init__(self) -> None:
        if self.blank not in self.tape_alphabet:
            raise MachineError("blank symbol must be in the tape alphabet")
        if self.blank in self.input_alphabet:
            raise MachineError("blank symbol must not be in the input alphabet")
        if not self.input_alphabet <= self.tape_alphabet:
            raise MachineError("input alphabet must be a subset of the tape alphabet")
        if self.accept == self.reject:
            raise MachineError("accept and reject states must differ")
        for st in (self.start, self.accept, self.reject):
            if st not in self.states:
                raise MachineError(f"state {st!r} not in state set")
        working = self.states - {self.accept, self.reject}
        for st in working:
            for sym in self.tape_alphabet:
                if (st, sym) not in self.transitions:
                    raise MachineError(f"transition missing for ({st!r}, {sym!r})")
        for (st, sym), (nst, wsym, move) in self.transitions.items():
            if st in (self.accept, self.reject):
                raise MachineError("no transitions may leave accept/reject")
            if st not in self.states or nst not in self.states:
                raise MachineError("transition references unknown state")
            if sym not in self.tape_alphabet or wsym not in self.tape_alphabet:
                raise MachineError("transition references unknown symbol")
            if move not in (LEFT, RIGHT):
                raise MachineError(f"invalid move {move!r}")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "states": sorted(self.states),
            "input_alphabet": sorted(self.input_alphabet),
            "tape_alphabet": sorted(self.tape_alphabet),
            "blank": self.blank,
            "transitions": [
                [st, sym, nst, wsym, move]
                for (st, sym), (nst, wsym, move) in sorted(self.transitions.items())
            ],
            "start": self.start,
            "accept": self.accept,
            "reject": self.reject,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TuringMachine":
        transitions = {
            (st, sym): (nst, wsym, move)
            for st, sym, nst, wsym, move in data["transitions"]
        }
        return cls(
            states=frozenset(data["states"]),
            input_alphabet=frozenset(data["input_alphabet"]),
            tape_alphabet=frozenset(data["tape_alphabet"]),
            blank=data["blank"],
            transitions=transitions,
            start=data["start"],
            accept=data["accept"],
            reject=data["reject"],
        )

    @classmethod
    def from_json(cls, text: str) -> "TuringMachine":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class TmConfiguration:
    """Tape snapshot: symbols left of the head, the scanned symbol, and the rest."""

    state: str
    left: tuple[str, ...]
    head: str
    right: tuple[str, ...]


def initial_configuration(tm: TuringMachine, input_symbols: Sequence[str]) -> TmConfiguration:
    for sym in input_symbols:
        if sym not in tm.input_alphabet:
            raise MachineError(f"input symbol {sym!r} not in the input alphabet")
    head = input_symbols[0] if input_symbols else tm.blank
    return TmConfiguration(tm.start, (), head, tuple(input_symbols[1:]))


def tm_step(tm: TuringMachine, c: TmConfiguration) -> TmConfiguration:
    """Apply one transition. The tape is blank-extended at either end."""
    if c.state in (tm.accept, tm.reject):
        raise MachineError("cannot step from accept/reject state")
    nst, wsym, move = tm.transitions[(c.state, c.head)]
    if move == RIGHT:
        new_left = c.left + (wsym,)
        new_head = c.right[0] if c.right else tm.blank
        new_right = c.right[1:]
    else:
        new_right = (wsym,) + c.right
        new_head = c.left[-1] if c.left else tm.blank
        new_left = c.left[:-1]
    return TmConfiguration(nst, new_left, new_head, new_right)


@dataclass(frozen=True)
class TmRunResult:
    outcome: str  # "accept" | "reject" | "budget-exhausted"
    config: TmConfiguration
    steps: int


def run_tm(tm: TuringMachine, input_symbols: Sequence[str], budget: int) -> TmRunResult:
    """Run from the initial configuration until accept/reject or the budget."""
    if budget < 1:
        raise MachineError("budget must be at least 1")
    c = initial_configuration(tm, input_symbols)
    for step in range(1, budget + 1):
        c = tm_step(tm, c)
        if c.state == tm.accept:
            return TmRunResult("accept", c, step)
        if c.state == tm.reject:
            return TmRunResult("reject", c, step)
    return TmRunResult("budget-exhausted", c, budget)


# ---------------------------------------------------------------------------
# Stack machine construction
# ---------------------------------------------------------------------------

FINAL_LABEL = "__final__"


@dataclass(frozen=True)
class TcMachine:
    """Stack machine derived from a Turing machine.

    Working controls carry the numeric value ``run_value`` (>= sigma); the
    fresh final control carries ``halt_value`` (< sigma), so the halt flag is
    always derived from the state value alone.
    """

    source: TuringMachine
    sigma: float
    run_value: float
    halt_value: float
    final_label: str = FINAL_LABEL

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise MachineError("sigma must be positive")
        if self.run_value < self.sigma:
            raise MachineError("running state value must be >= sigma")
        if not self.halt_value < self.sigma:
            raise MachineError("halt state value must be < sigma")
        if self.final_label in self.source.states:
            raise MachineError("final label collides with a source state")

    @property
    def state_values(self) -> frozenset[str]:
        return self.source.states | {self.final_label}

    @property
    def stack_alphabet(self) -> frozenset[str]:
        return self.source.tape_alphabet | self.source.input_alphabet


def construct_tc(
    tm: TuringMachine,
    sigma: float,
    *,
    sama: bool = False,
    initial_state_value: float | None = None,
) -> TcMachine:
    """Derive the stack machine. ``sama=True`` selects the binary-flag variant
    (sigma = 1, running value 1, halted value 0)."""
    if sama:
        return TcMachine(source=tm, sigma=1.0, run_value=1.0, halt_value=0.0)
    if sigma <= 0:
        raise MachineError("sigma must be positive")
    run_value = initial_state_value if initial_state_value is not None else max(
        sigma, DEFAULT_LARGE_VALUE
    )
    return TcMachine(source=tm, sigma=sigma, run_value=run_value, halt_value=sigma / 2.0)


@dataclass(frozen=True)
class TcConfiguration:
    """Two-storage snapshot: remaining input consumed from the front, and a
    stack holding the left tape with the scanned symbol on top."""

    control: str
    state_value: float
    remaining: tuple[str, ...]
    stack: tuple[str, ...]
    halted: bool

    def __post_init__(self) -> None:
        # The flag is derived data; constructors must keep it consistent.
        if self.halted and not self.stack and self.remaining:
            raise MachineError("halted configuration cannot have pending input mutations")


def map_config(c: TmConfiguration, state_value: float, sigma: float) -> TcConfiguration:
    """The configuration mapping h. The stack stores the left tape in order
    with the scanned symbol on top, so popping exposes the left neighbor."""
    return TcConfiguration(
        control=c.state,
        state_value=state_value,
        remaining=c.right,
        stack=c.left + (c.head,),
        halted=state_value < sigma,
    )


def tc_initial_configuration(tcm: TcMachine, input_symbols: Sequence[str]) -> TcConfiguration:
    return map_config(
        initial_configuration(tcm.source, input_symbols), tcm.run_value, tcm.sigma
    )


def tc_step(tcm: TcMachine, c: TcConfiguration) -> tuple[TcConfiguration, tuple[str, ...]]:
    """Advance one native-step equivalent; returns (config, meta-operations).

    A right move is one push-class derivation; a left move is a pop followed
    by a push; accept/reject controls take a single no_op into the final
    control with the state value dropped below sigma.
    """
    if c.halted:
        raise MachineError("cannot step a halted configuration")
    tm = tcm.source
    if c.control in (tm.accept, tm.reject):
        halted = TcConfiguration(
            control=tcm.final_label,
            state_value=tcm.halt_value,
            remaining=c.remaining,
            stack=c.stack,
            halted=True,
        )
        return halted, ("no_op",)
    head = c.stack[-1]
    nst, wsym, move = tm.transitions[(c.control, head)]
    if move == RIGHT:
        nxt = c.remaining[0] if c.remaining else tm.blank
        new_stack = c.stack[:-1] + (wsym, nxt)
        new_remaining = c.remaining[1:]
        ops: tuple[str, ...] = ("push",)
    else:
        new_remaining = (wsym,) + c.remaining
        new_stack = c.stack[:-1] if len(c.stack) > 1 else (tm.blank,)
        ops = ("pop", "push")
    return (
        TcConfiguration(
            control=nst,
            state_value=tcm.run_value,
            remaining=new_remaining,
            stack=new_stack,
            halted=tcm.run_value < tcm.sigma,
        ),
        ops,
    )


@dataclass(frozen=True)
class TcRunResult:
    outcome: str  # "accept" | "reject" | "budget-exhausted"
    config: TcConfiguration
    steps: int


def run_tc(tcm: TcMachine, input_symbols: Sequence[str], budget: int) -> TcRunResult:
    """Run the stack machine. A native budget of N allows N+1 stack-machine
    steps because the terminal no_op into the final control is an extra step."""
    if budget < 1:
        raise MachineError("budget must be at least 1")
    tm = tcm.source
    c = tc_initial_configuration(tcm, input_symbols)
    verdict = None
    for step in range(1, budget + 2):
        prior_control = c.control
        c, _ = tc_step(tcm, c)
        if c.halted:
            verdict = "accept" if prior_control == tm.accept else "reject"
            return TcRunResult(verdict, c, step)
        if c.control not in (tm.accept, tm.reject) and step >= budget:
            break
    return TcRunResult("budget-exhausted", c, budget)


# ---------------------------------------------------------------------------
# Lemma checkers
# ---------------------------------------------------------------------------


@dataclass
class EquivalenceReport:
    machine_id: str
    input: str
    native_outcome: str
    tc_outcome: str
    steps_native: int
    steps_tc: int
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.native_outcome == self.tc_outcome and not self.failures

    def to_dict(self) -> dict:
        return {
            "machine_id": self.machine_id,
            "input": self.input,
            "native_outcome": self.native_outcome,
            "tc_outcome": self.tc_outcome,
            "steps_native": self.steps_native,
            "steps_tc": self.steps_tc,
            "failures": list(self.failures),
            "notes": list(self.notes),
            "success": self.success,
        }


def check_lemma1(
    tm: TuringMachine,
    input_symbols: Sequence[str],
    budget: int,
    *,
    sigma: float = 10.0,
    sama: bool = False,
    machine_id: str = "machine",
    _tc_step_override=None,
) -> EquivalenceReport:
    """Run the native machine and the stack machine in lockstep and verify
    that the configuration mapping commutes after every native step.

    The inner loop keeps both executions in mutable structures for speed;
    the functional ``tm_step``/``tc_step`` define the same semantics and are
    cross-checked against this loop in the test suite. Deep structural
    comparison runs on every step while the tape is short and periodically on
    long tapes; cheap per-step spot checks (stack top vs head, storage
    lengths, front of the remaining input) run unconditionally, so a
    commutation failure is detected at the step where it occurs.
    """
    if budget < 1:
        raise MachineError("budget must be at least 1")
    tcm = construct_tc(tm, sigma, sama=sama)
    failures: list[str] = []
    blank = tm.blank
    trans: dict[str, dict[str, tuple[str, str, str]]] = {}
    for (st, sym), rhs in tm.transitions.items():
        trans.setdefault(st, {})[sym] = rhs

    # Native execution state.
    n_state = tm.start
    n_left: list[str] = []
    n_head = input_symbols[0] if input_symbols else blank
    n_right = deque(input_symbols[1:])
    # Stack-machine execution state.
    t_control = tm.start
    t_stack: list[str] = [n_head]
    t_remaining = deque(input_symbols[1:])

    input_str = "".join(input_symbols)
    native_outcome = "budget-exhausted"
    notes: list[str] = []
    steps = 0
    tc_steps = 0
    accept, reject = tm.accept, tm.reject

    # Nonhalting proof bookkeeping. ``pos`` is the conceptual head index on
    # the doubly infinite tape (the list representation normalizes blank
    # prefixes away, so the index is tracked separately). If the machine is
    # at the blank fringe on one side in the same state it was in at an
    # earlier fringe visit, at or beyond the old spot, and it never crossed
    # back past that spot in between, then the stretch of behavior since that
    # visit only ever read blanks at or beyond the old fringe; the same
    # stretch repeats forever, shifted outward each time, so the run can be
    # classified budget-exhausted without executing the rest. Records that
    # the head crossed back over are pruned and so never fire.
    pos = 0
    re_rec: dict[str, int] = {}
    re_high = 0
    le_rec: dict[str, int] = {}
    le_low = 0
    seen_small: set | None = None

    for step in range(1, budget + 1):
        steps = step
        # Native step.
        nst, wsym, move = trans[n_state][n_head]
        if move == RIGHT:
            n_left.append(wsym)
            n_head = n_right.popleft() if n_right else blank
            pos += 1
            if le_rec and pos > le_low:
                le_rec = {s: p for s, p in le_rec.items() if p >= pos}
                le_low = min(le_rec.values()) if le_rec else pos
        else:
            n_right.appendleft(wsym)
            n_head = n_left.pop() if n_left else blank
            pos -= 1
            if re_rec and pos < re_high:
                re_rec = {s: p for s, p in re_rec.items() if p <= pos}
                re_high = max(re_rec.values()) if re_rec else pos
        n_state = nst
        # Stack-machine step, from its own lookup.
        t_nst, t_wsym, t_move = trans[t_control][t_stack[-1]]
        if _tc_step_override is not None:
            t_nst, t_wsym, t_move = _tc_step_override(t_control, t_stack[-1], (t_nst, t_wsym, t_move))
        if t_move == RIGHT:
            t_stack[-1] = t_wsym
            t_stack.append(t_remaining.popleft() if t_remaining else blank)
        else:
            t_remaining.appendleft(t_wsym)
            t_stack.pop()
            if not t_stack:
                t_stack.append(blank)
        t_control = t_nst
        tc_steps += 1
        if (move == RIGHT) != (t_move == RIGHT):
            failures.append(f"step {step}: move class mismatch ({move} vs {t_move})")
        # Per-step spot checks of the mapping.
        if t_control != n_state:
            failures.append(f"step {step}: control {t_control!r} != state {n_state!r}")
            break
        if t_stack[-1] != n_head:
            failures.append(f"step {step}: stack top {t_stack[-1]!r} != head {n_head!r}")
            break
        if len(t_stack) != len(n_left) + 1 or len(t_remaining) != len(n_right):
            failures.append(f"step {step}: storage length mismatch")
            break
        if t_remaining and t_remaining[0] != n_right[0]:
            failures.append(f"step {step}: remaining front {t_remaining[0]!r} != right front")
            break
        if len(t_stack) <= 64:
            if t_stack[:-1] != n_left or list(t_remaining) != list(n_right):
                failures.append(f"step {step}: deep configuration mismatch")
                break
        if n_state == accept:
            native_outcome = "accept"
            break
        if n_state == reject:
            native_outcome = "reject"
            break
        # Fringe recurrence (nonhalting proof, see above).
        if n_head == blank:
            if not n_right:
                p0 = re_rec.get(n_state)
                if p0 is not None and pos >= p0:
                    notes.append(f"nonhalting proven at step {step} (rightward sweep)")
                    break
                re_rec[n_state] = pos
                if pos > re_high or len(re_rec) == 1:
                    re_high = pos
            if not n_left:
                p0 = le_rec.get(n_state)
                if p0 is not None and pos <= p0:
                    notes.append(f"nonhalting proven at step {step} (leftward sweep)")
                    break
                le_rec[n_state] = pos
                if pos < le_low or len(le_rec) == 1:
                    le_low = pos
        # Bounded-tape cycle detection: a repeated full configuration can
        # never halt. Only tracked once the run is clearly not finishing
        # quickly and the tape is small enough for snapshots to be cheap.
        if step >= 256 and len(n_left) + len(n_right) < 64:
            snap = (n_state, pos, tuple(n_left), n_head, tuple(n_right))
            if seen_small is None:
                seen_small = {snap}
            elif snap in seen_small:
                notes.append(f"nonhalting proven at step {step} (configuration cycle)")
                break
            else:
                seen_small.add(snap)

    if not failures:
        if t_stack[:-1] != n_left or list(t_remaining) != list(n_right):
            failures.append("final deep configuration mismatch")
    if not failures and native_outcome != "budget-exhausted":
        # Terminal no_op step into the halted configuration.
        final = TcConfiguration(
            control=t_control,
            state_value=tcm.run_value,
            remaining=tuple(t_remaining),
            stack=tuple(t_stack),
            halted=False,
        )
        halted, ops = tc_step(tcm, final)
        tc_steps += 1
        if not halted.halted or ops != ("no_op",):
            failures.append("terminal configuration did not halt via no_op")
        tc_outcome = "accept" if t_control == tm.accept else "reject"
    else:
        tc_outcome = "budget-exhausted"
    return EquivalenceReport(
        machine_id=machine_id,
        input=input_str,
        native_outcome=native_outcome,
        tc_outcome=tc_outcome,
        steps_native=steps,
        steps_tc=tc_steps,
        failures=failures,
        notes=notes,
    )


@dataclass
class Lemma2Summary:
    machine_id: str
    total: int
    agreements: int
    disagreements: list[dict] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.agreements == self.total

    def to_dict(self) -> dict:
        return {
            "machine_id": self.machine_id,
            "total": self.total,
            "agreements": self.agreements,
            "disagreements": self.disagreements,
            "success": self.success,
        }


def check_lemma2(
    tm: TuringMachine,
    inputs: Iterable[Sequence[str]],
    budget: int,
    *,
    sigma: float = 10.0,
    sama: bool = False,
    machine_id: str = "machine",
) -> Lemma2Summary:
    """Accept/reject/budget classification must agree for every input."""
    total = 0
    agreements = 0
    disagreements: list[dict] = []
    for inp in inputs:
        total += 1
        report = check_lemma1(
            tm, inp, budget, sigma=sigma, sama=sama, machine_id=machine_id
        )
        if report.success:
            agreements += 1
        else:
            disagreements.append(report.to_dict())
    return Lemma2Summary(machine_id, total, agreements, disagreements)


# ---------------------------------------------------------------------------
# Generators for randomized checks
# ---------------------------------------------------------------------------


def random_machine(
    rng: random.Random,
    *,
    max_working_states: int = 3,
    max_symbols: int = 3,
    machine_id: str = "random",
) -> TuringMachine:
    """Uniformly random transitions; reaching accept/reject is not guaranteed."""
    n_working = rng.randint(1, max_working_states)
    n_input = rng.randint(1, max_symbols - 1)
    working = [f"q{i}" for i in range(n_working)]
    states = frozenset(working) | {"qa", "qr"}
    input_alphabet = frozenset(str(i) for i in range(n_input))
    tape_alphabet = input_alphabet | {"_"}
    all_states = sorted(states)
    all_syms = sorted(tape_alphabet)
    transitions = {}
    for st in working:
        for sym in all_syms:
            transitions[(st, sym)] = (
                rng.choice(all_states),
                rng.choice(all_syms),
                rng.choice((LEFT, RIGHT)),
            )
    return TuringMachine(
        states=states,
        input_alphabet=input_alphabet,
        tape_alphabet=tape_alphabet,
        blank="_",
        transitions=transitions,
        start="q0",
        accept="qa",
        reject="qr",
    )


def random_inputs(
    rng: random.Random, alphabet: Sequence[str], count: int, max_length: int
) -> list[tuple[str, ...]]:
    out = []
    for _ in range(count):
        n = rng.randint(0, max_length)
        out.append(tuple(rng.choice(alphabet) for _ in range(n)))
    return out


def all_inputs(alphabet: Sequence[str], max_length: int) -> list[tuple[str, ...]]:
    """Every input over the alphabet up to the given length, shortest first."""
    out: list[tuple[str, ...]] = [()]
    frontier: list[tuple[str, ...]] = [()]
    for _ in range(max_length):
        frontier = [prev + (sym,) for prev in frontier for sym in alphabet]
        out.extend(frontier)
    return out
