"""System state values from token-probability streams.

Two metrics are supported: conditional perplexity (exp of the negative mean
token log-probability, natural log) and uncertainty (summed -p*log p over the
realized token probabilities). Lower values mean a more desirable state; a
Conclusion is final only when its value drops below the threshold sigma.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class MonitorError(ValueError):
    pass


@dataclass(frozen=True)
class TokenProbSequence:
    entries: tuple[tuple[str, float], ...]
    context_id: str = ""

    @classmethod
    def from_probs(cls, probs: Sequence[float], context_id: str = "") -> "TokenProbSequence":
        return cls(tuple(("", p) for p in probs), context_id)

    def probs(self) -> list[float]:
        return [p for _, p in self.entries]


def clamp_probs(probs: Sequence[float]) -> list[float]:
    """Clamp into [1e-12, 1]; the math requires probabilities in (0, 1]."""
    out = []
    for p in probs:
        if not (PROB_FLOOR <= p <= 1.0):
            logger.warning("clamping out-of-range token probability %r", p)
            p = min(max(p, PROB_FLOOR), 1.0)
        out.append(p)
    return out


@dataclass(frozen=True)
class MonitorConfig:
    metric: str  # "cppl" | "uct"
    sigma: float
    large_value: float

    def __post_init__(self) -> None:
        if self.metric not in ("cppl", "uct"):
            raise MonitorError(f"unknown metric {self.metric!r}")
        if self.sigma <= 0:
            raise MonitorError("sigma must be positive")
        if self.large_value < self.sigma:
            raise MonitorError("initial large value must be >= sigma")


@dataclass(frozen=True)
class StateValue:
    value: float
    metric: str
    step: int = 0

    def __post_init__(self) -> None:
        if self.value <= 0 and self.metric == "cppl":
            raise MonitorError("cppl state value must be positive")


def compute_cppl(seq: TokenProbSequence) -> float:
    """exp(-(1/N) * sum log p_i); >= 1 whenever all probabilities are <= 1."""
    probs = seq.probs()
    if not probs:
        raise MonitorError("cannot score an empty token sequence")
    for p in probs:
        if p <= 0:
            raise MonitorError(f"non-positive probability {p!r}")
    probs = clamp_probs(probs)
    mean_log = sum(math.log(p) for p in probs) / len(probs)
    return math.exp(-mean_log)


def compute_uct(seq: TokenProbSequence) -> float:
    """sum of -p*log p over the realized token probabilities; 0 iff all p = 1."""
    probs = seq.probs()
    if not probs:
        raise MonitorError("cannot score an empty token sequence")
    for p in probs:
        if p <= 0:
            raise MonitorError(f"non-positive probability {p!r}")
    probs = clamp_probs(probs)
    return -sum(p * math.log(p) for p in probs)


def evaluate_state(seq: TokenProbSequence, cfg: MonitorConfig, step: int = 0) -> StateValue:
    if cfg.metric == "cppl":
        value = compute_cppl(seq)
    else:
        value = compute_uct(seq)
    return StateValue(value=value, metric=cfg.metric, step=step)


def is_final(state: StateValue, kind, cfg: MonitorConfig) -> bool:
    """Final iff the action is a Conclusion and the value is below sigma."""
    from .memory import ActionKind

    return kind is ActionKind.CONCLUSION and state.value < cfg.sigma


def clamp_thought_state(state: StateValue, cfg: MonitorConfig) -> StateValue:
    """A confident Thought cannot halt the loop: floor the value at sigma."""
    if state.value < cfg.sigma:
        return replace(state, value=cfg.sigma)
    return state
