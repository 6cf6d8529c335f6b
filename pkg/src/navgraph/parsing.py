"""Parse Thought/Action replies and enforce the candidate-only action rule."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Collection, Union

from .errors import EmptyActionToken, HallucinatedViewpoint, MissingAction


@dataclass(frozen=True)
class MoveTo:
    viewpoint_id: str

    def __post_init__(self) -> None:
        if not self.viewpoint_id:
            raise EmptyActionToken("move target must be nonempty")


@dataclass(frozen=True)
class Stop:
    answer: str = ""


Action = Union[MoveTo, Stop]


@dataclass(frozen=True)
class ParsedDecision:
    thought: str
    action: Action

    @property
    def is_stop(self) -> bool:
        return isinstance(self.action, Stop)


# "Thought:", "Action 3:" at the start of a line (optional markdown bullets/bold);
# "Final Answer:" anywhere
_MARKER_RE = re.compile(
    r"(?:^[ \t>*_#-]*(thought|action)(?:[ \t]+\d+)?|(final[ \t]+answer))[ \t]*\**[ \t]*:\**",
    re.I | re.M,
)
_TOKEN_STRIP = "\"'`.,;:!?()[]{}<>*"


def parse_response(raw: str) -> ParsedDecision:
    """Extract the last thought and the action that follows it.

    A "Final Answer" marker after the last thought means stop. Otherwise the
    last "Action:" wins and its first whitespace-delimited token is the id.
    """
    if not isinstance(raw, str):
        raise MissingAction(f"expected text, got {type(raw).__name__}")
    markers = [((m.group(1) or m.group(2)).lower().split()[0], m.start(), m.end()) for m in _MARKER_RE.finditer(raw)]

    def segment(i: int) -> str:
        end = markers[i + 1][1] if i + 1 < len(markers) else len(raw)
        return raw[markers[i][2]:end].strip()

    thought_idx = [i for i, (kind, _, _) in enumerate(markers) if kind == "thought"]
    last_thought = thought_idx[-1] if thought_idx else -1
    thought = segment(last_thought) if last_thought >= 0 else ""

    after = [i for i in range(last_thought + 1, len(markers)) if markers[i][0] != "thought"]
    finals = [i for i in after if markers[i][0] == "final"]
    if finals:
        return ParsedDecision(thought, Stop(segment(finals[-1])))
    actions = [i for i in after if markers[i][0] == "action"]
    if not actions:
        actions = [i for i, (kind, _, _) in enumerate(markers) if kind == "action"]
    if not actions:
        raise MissingAction("reply has no 'Action:' or 'Final Answer' line")
    body = segment(actions[-1])
    token = body.split()[0].strip(_TOKEN_STRIP) if body.split() else ""
    if not token:
        raise EmptyActionToken("'Action:' is not followed by a viewpoint id")
    return ParsedDecision(thought, MoveTo(token))


def validate_action(decision: ParsedDecision, candidates: Collection[str]) -> ParsedDecision:
    """Stop is always legal; a move must name one of ``candidates`` exactly (after trimming)."""
    if isinstance(decision.action, Stop):
        return decision
    token = decision.action.viewpoint_id.strip()
    legal = {c.strip() for c in candidates}
    if token not in legal:
        raise HallucinatedViewpoint(token, legal)
    return ParsedDecision(decision.thought, MoveTo(token))
