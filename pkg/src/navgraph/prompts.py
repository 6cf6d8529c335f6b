"""Prompt manager: templates and the builders that fill them.

Templates ship as text files under ``navgraph/templates``. Filling is a single
regex pass, so braces inside substituted values are never expanded.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from .errors import ArityError, EmptyHistory, TemplateError
from .history import HistoryEntry

TEMPLATE_VERSION = "1"

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    required_placeholders: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "required_placeholders", frozenset(self.required_placeholders))
        for ph in self.required_placeholders:
            n = self.body.count("{" + ph + "}")
            if n != 1:
                raise TemplateError(f"template {self.name!r}: placeholder {{{ph}}} occurs {n} times")

    def fill(self, **values: str) -> str:
        missing = self.required_placeholders - values.keys()
        if missing:
            raise TemplateError(f"template {self.name!r}: unbound placeholders {sorted(missing)}")

        def sub(m: re.Match) -> str:
            key = m.group(1)
            return str(values[key]) if key in self.required_placeholders else m.group(0)

        return _PLACEHOLDER_RE.sub(sub, self.body)


_REQUIRED = {
    "direction_summary": {"description"},
    "viewpoint_summary": {"description"},
    "system_principle": {"instruction", "init_observation"},
    "instruction_generation": {"history"},
    "map_drawing": {"history"},
}


def load_template(name: str) -> PromptTemplate:
    body = resources.files("navgraph").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate(name, body, frozenset(_REQUIRED[name]))


TEMPLATES: Mapping[str, PromptTemplate] = {name: load_template(name) for name in _REQUIRED}

DIRECTION_SUMMARY_TEMPLATE = TEMPLATES["direction_summary"].body
VIEWPOINT_SUMMARY_TEMPLATE = TEMPLATES["viewpoint_summary"].body

HISTORY_HEADER = "Navigation history:"
CURRENT_HEADER = "Current observation (step {step}):"
STEP_CUE = (
    "Based on the instruction, the navigation history and the current observation, decide your next move. "
    "Reply with a 'Thought:' line followed by an 'Action:' line naming one navigable viewpoint ID, "
    "or with 'Final Answer:' if the instruction is complete."
)


def one_line(text: str) -> str:
    return " ".join(text.split())


def estimate_tokens(text: str) -> int:
    # ~4 characters per token; only used for budget warnings
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class StepPrompt:
    full_text: str
    token_estimate: int


def build_system_principle(instruction: str, init_observation: str) -> str:
    if not instruction or not instruction.strip():
        raise TemplateError("instruction must be nonempty")
    if not init_observation or not init_observation.strip():
        raise TemplateError("initial observation must be nonempty")
    return TEMPLATES["system_principle"].fill(instruction=instruction, init_observation=init_observation)


def format_history(history: Sequence[HistoryEntry]) -> str:
    lines = []
    for e in history:
        lines.append(f"Observation {e.step}: {one_line(e.observation_summary)}")
        lines.append(f"Thought {e.step}: {one_line(e.thought)}")
        lines.append(f"Action {e.step}: {one_line(e.action)}")
    return "\n".join(lines)


def build_step_prompt(principle: str, history: Sequence[HistoryEntry], current_obs: str) -> StepPrompt:
    """Principle, then numbered history triples, then the full current observation and a cue."""
    parts = [principle.rstrip("\n")]
    if len(history):
        parts.append(f"{HISTORY_HEADER}\n{format_history(history)}")
    parts.append(f"{CURRENT_HEADER.format(step=len(history))}\n{current_obs.rstrip(chr(10))}")
    parts.append(STEP_CUE)
    text = "\n\n".join(parts)
    return StepPrompt(text, estimate_tokens(text))


_HISTORY_LINE_RE = re.compile(r"^(Observation|Thought|Action) (\d+): ?(.*)$")


def parse_history_blocks(prompt: str) -> list[tuple[int, str, str, str]]:
    """Recover (step, observation, thought, action) triples from a step prompt."""
    start = prompt.find("\n" + HISTORY_HEADER + "\n")
    if start < 0:
        return []
    end = prompt.find("\n\nCurrent observation (step ", start)
    section = prompt[start + len(HISTORY_HEADER) + 2: end if end >= 0 else None]
    triples: dict[int, dict[str, str]] = {}
    for line in section.split("\n"):
        m = _HISTORY_LINE_RE.match(line)
        if m:
            triples.setdefault(int(m.group(2)), {})[m.group(1)] = m.group(3)
    return [
        (k, t.get("Observation", ""), t.get("Thought", ""), t.get("Action", ""))
        for k, t in sorted(triples.items())
    ]


def build_viewpoint_summary_prompt(full_observation: str) -> str:
    if not full_observation or not full_observation.strip():
        raise TemplateError("observation to summarize must be nonempty")
    return TEMPLATES["viewpoint_summary"].fill(description=full_observation)


def build_direction_summary_prompt(captions: Sequence[str]) -> str:
    """Captions in top, down, middle order, one per line."""
    if len(captions) != 3:
        raise ArityError(f"direction summary needs exactly 3 captions, got {len(captions)}")
    return TEMPLATES["direction_summary"].fill(description="\n".join(captions))


def build_instruction_generation_prompt(history: Sequence[HistoryEntry]) -> str:
    # thoughts are left out on purpose: they would leak the original instruction
    if not len(history):
        raise EmptyHistory("instruction generation needs at least one step")
    blocks = [
        f"Step {e.step}:\nObservation: {one_line(e.observation_summary)}\nAction: {one_line(e.action)}"
        for e in history
    ]
    return TEMPLATES["instruction_generation"].fill(history="\n\n".join(blocks))


def build_map_drawing_prompt(history: Sequence[HistoryEntry]) -> str:
    if not len(history):
        raise EmptyHistory("map drawing needs at least one step")
    blocks = [
        f"Step {e.step}:\nObservation: {one_line(e.observation_summary)}\n"
        f"Thought: {one_line(e.thought)}\nAction: {one_line(e.action)}"
        for e in history
    ]
    return TEMPLATES["map_drawing"].fill(history="\n\n".join(blocks))
