"""LIFO agent memory: frames with saved state values and an immutable bottom.

The stack is advanced functionally -- every mutation returns a new
``MemoryStack``. Backtrack and Summary are commands that transform the stack;
they are never stored as frames themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

MAX_CONTENT_BYTES = 16 * 1024
TRUNCATION_MARKER = " ...[truncated]"


class ActionKind(str, Enum):
    USER_QUERY = "User_Query"
    THOUGHT = "Thought"
    TOOL_USE = "Tool_Use"
    TOOL_OBSERVATION = "Tool_Observation"
    BACKTRACK = "Backtrack"
    SUMMARY = "Summary"
    CONCLUSION = "Conclusion"


#: Kinds that are stored on the stack as frames.
FRAME_KINDS = frozenset(
    {
        ActionKind.USER_QUERY,
        ActionKind.THOUGHT,
        ActionKind.TOOL_OBSERVATION,
        ActionKind.SUMMARY,
        ActionKind.CONCLUSION,
    }
)


class StackError(ValueError):
    pass


class BottomImmutableError(StackError):
    """The bottom query frame can never be popped."""


def clip_content(text: str) -> str:
    if len(text) <= MAX_CONTENT_BYTES:
        return text
    return text[: MAX_CONTENT_BYTES - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER


@dataclass(frozen=True)
class StackFrame:
    kind: ActionKind
    content: str
    saved_state_value: float
    sequence_no: int
    tool_name: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in FRAME_KINDS:
            raise StackError(f"{self.kind.value} is a command, not a frame kind")
        if self.saved_state_value <= 0:
            raise StackError("saved state value must be positive")
        if (self.tool_name is not None) != (self.kind is ActionKind.TOOL_OBSERVATION):
            raise StackError("tool_name is set exactly on Tool_Observation frames")
        object.__setattr__(self, "content", clip_content(self.content))


@dataclass(frozen=True)
class MemoryStack:
    frames: tuple[StackFrame, ...]

    def __post_init__(self) -> None:
        if not self.frames:
            raise StackError("stack must hold at least the query frame")
        if self.frames[0].kind is not ActionKind.USER_QUERY:
            raise StackError("bottom frame must be the user query")
        for i in range(1, len(self.frames)):
            if self.frames[i].kind is ActionKind.USER_QUERY:
                raise StackError("only the bottom frame may be a user query")
            if self.frames[i].sequence_no <= self.frames[i - 1].sequence_no:
                raise StackError("sequence numbers must strictly increase")

    @property
    def depth(self) -> int:
        return len(self.frames)

    @property
    def top(self) -> StackFrame:
        return self.frames[-1]

    @property
    def bottom(self) -> StackFrame:
        return self.frames[0]

    def next_sequence_no(self) -> int:
        return self.frames[-1].sequence_no + 1

    def push(self, frame: StackFrame) -> "MemoryStack":
        return MemoryStack(self.frames + (frame,))

    def pop(self) -> tuple["MemoryStack", StackFrame]:
        if len(self.frames) == 1:
            raise BottomImmutableError("the user query frame cannot be popped")
        return MemoryStack(self.frames[:-1]), self.frames[-1]

    def render_context(self) -> str:
        """Deterministic bottom-to-top serialization with prompt labels."""
        return "\n".join(f"{f.kind.value}: {f.content}" for f in self.frames)


def init_stack(user_query: str, initial_state: float) -> MemoryStack:
    if not user_query:
        raise StackError("user query must be non-empty")
    frame = StackFrame(
        kind=ActionKind.USER_QUERY,
        content=user_query,
        saved_state_value=initial_state,
        sequence_no=0,
    )
    return MemoryStack((frame,))


def push_frame(m: MemoryStack, frame: StackFrame) -> MemoryStack:
    return m.push(frame)


def pop_frame(m: MemoryStack) -> tuple[MemoryStack, StackFrame]:
    return m.pop()


@dataclass(frozen=True)
class ComposedAction:
    kind: ActionKind
    content: str
    tool_name: Optional[str] = None


def apply_composed_action(
    m: MemoryStack, action: ComposedAction, state: float
) -> tuple[MemoryStack, Optional[float]]:
    """Execute one composed action.

    Thought / Tool_Observation / Conclusion push a frame recording the state
    value in force before the push. Backtrack pops once and returns the
    popped Thought's saved state value (None for other kinds). Summary pops
    once and pushes the summary content, leaving the depth unchanged.
    """
    kind = action.kind
    if kind in (ActionKind.THOUGHT, ActionKind.TOOL_OBSERVATION, ActionKind.CONCLUSION):
        frame = StackFrame(
            kind=kind,
            content=action.content,
            saved_state_value=state,
            sequence_no=m.next_sequence_no(),
            tool_name=action.tool_name if kind is ActionKind.TOOL_OBSERVATION else None,
        )
        return m.push(frame), None
    if kind is ActionKind.BACKTRACK:
        shrunk, popped = m.pop()
        restoration = (
            popped.saved_state_value if popped.kind is ActionKind.THOUGHT else None
        )
        return shrunk, restoration
    if kind is ActionKind.SUMMARY:
        shrunk, _ = m.pop()
        frame = StackFrame(
            kind=ActionKind.SUMMARY,
            content=action.content,
            saved_state_value=state,
            sequence_no=m.next_sequence_no(),
        )
        return shrunk.push(frame), None
    raise StackError(f"{kind.value} is not a composed action")


def render_context(m: MemoryStack) -> str:
    return m.render_context()
