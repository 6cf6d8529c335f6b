"""The navigation control loop: observe, prompt, parse, move, summarize, repeat."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

from .completion import Backend, CompletionRequest
from .env import Environment, Episode
from .errors import BackendError, DegenerateDirection, NavGraphError, ResponseParseError
from .geometry import bearing_between, euclidean_distance, signed_turn
from .history import HistoryBuffer, HistoryEntry
from .observation import (
    AgentState, DirectionSummaryCache, ObservationOptions, compose_observation, render_observation,
)
from .parsing import ParsedDecision, Stop, parse_response, validate_action
from .prompts import build_step_prompt, build_system_principle, build_viewpoint_summary_prompt, one_line

__all__ = [
    "AgentConfig", "AgentState", "EpisodeResult", "HistoryBuffer", "HistoryEntry",
    "StopSignal", "run_batch", "run_episode", "step",
]

log = logging.getLogger(__name__)

STOP_REASONS = ("final_answer", "max_steps", "parse_failure", "backend_failure")


@dataclass(frozen=True)
class AgentConfig:
    max_steps: int = 15
    max_parse_retries: int = 2
    temperature: float = 0.0
    observation: ObservationOptions = ObservationOptions()

    def __post_init__(self) -> None:
        if self.max_steps < 0 or self.max_parse_retries < 0:
            raise ValueError("max_steps and max_parse_retries must be >= 0")


@dataclass(frozen=True)
class StopSignal:
    thought: str
    answer: str


@dataclass
class EpisodeResult:
    episode: Episode
    trajectory: list[tuple[str, float]]
    stop_reason: str
    history: HistoryBuffer
    transcript: list[dict] = field(default_factory=list)
    error: str | None = None

    @property
    def path(self) -> list[str]:
        return [vid for vid, _ in self.trajectory]

    def transcript_jsonl(self) -> str:
        return "".join(json.dumps(rec, ensure_ascii=False) + "\n" for rec in self.transcript)


def move_description(turn_deg: float, distance_m: float, target: str) -> str:
    return f"Turn {turn_deg:.2f}° and move {distance_m:.2f} m to viewpoint {target}"


def _correction(error: ResponseParseError, candidates: Sequence[str]) -> str:
    legal = ", ".join(sorted(candidates)) or "none"
    return (f"\n\nYour previous reply could not be used ({error}). "
            f"Reply again with a 'Thought:' line and an 'Action:' line naming exactly one of: {legal}; "
            f"or give a 'Final Answer:' if the instruction is complete.")


def _call(backend: Backend, prompt: str, temperature: float) -> str:
    try:
        return backend.complete(CompletionRequest(prompt, temperature=temperature))
    except BackendError:
        raise
    except Exception as exc:
        raise BackendError(f"backend raised {type(exc).__name__}: {exc}") from exc


def decide(
    backend: Backend,
    prompt: str,
    candidates: Sequence[str],
    config: AgentConfig,
    transcript: list | None = None,
    step_index: int = 0,
) -> ParsedDecision:
    """Query the backend, re-prompting with the legal ids after an unusable reply."""
    attempt_prompt = prompt
    for attempt in range(config.max_parse_retries + 1):
        raw = _call(backend, attempt_prompt, config.temperature)
        try:
            decision = validate_action(parse_response(raw), candidates)
        except ResponseParseError as exc:
            if transcript is not None:
                transcript.append({"step": step_index, "attempt": attempt, "prompt": attempt_prompt,
                                   "response": raw, "action": None, "error": str(exc), "state_after": None})
            if attempt == config.max_parse_retries:
                raise
            attempt_prompt = prompt + _correction(exc, candidates)
            continue
        if transcript is not None:
            transcript.append({"step": step_index, "attempt": attempt, "prompt": attempt_prompt,
                               "response": raw, "action": None, "error": None, "state_after": None})
        return decision
    raise AssertionError("unreachable")


def step(
    env: Environment,
    state: AgentState,
    history: Sequence[HistoryEntry],
    instruction: str,
    backend: Backend,
    summarizer: Backend | None,
    config: AgentConfig = AgentConfig(),
    principle: str | None = None,
    transcript: list | None = None,
    summary_cache: DirectionSummaryCache | None = None,
) -> tuple[AgentState, HistoryEntry] | StopSignal:
    """One decision. Returns the new state and completed history entry, or a StopSignal.

    ``principle`` defaults to one built from the current observation, which is
    only right at the episode's first step; run_episode passes it explicitly.
    """
    obs = compose_observation(env, state, summarizer, config.observation, summary_cache)
    obs_text = render_observation(obs)
    if principle is None:
        principle = build_system_principle(instruction, obs_text)
    prompt = build_step_prompt(principle, history, obs_text).full_text

    decision = decide(backend, prompt, obs.candidate_ids, config, transcript, len(history))
    if isinstance(decision.action, Stop):
        if transcript is not None:
            transcript[-1]["action"] = "stop"
            transcript[-1]["state_after"] = _state_record(state)
        return StopSignal(decision.thought, decision.action.answer)

    target = decision.action.viewpoint_id
    here, there = env.position(state.viewpoint_id), env.position(target)
    try:
        bearing = bearing_between(here, there)
    except DegenerateDirection:
        bearing = state.heading_deg
    turn = signed_turn(state.heading_deg, bearing)
    distance = euclidean_distance(here, there)
    new_state = AgentState(target, bearing, 0.0)

    if summarizer is None:
        summary = obs.blocks[0].summary
    else:
        summary = one_line(_call(summarizer, build_viewpoint_summary_prompt(obs_text), 0.0))
        if not summary:
            raise BackendError("viewpoint summarizer returned blank text")
    entry = HistoryEntry(
        step=len(history),
        observation_summary=summary,
        thought=one_line(decision.thought) or "(no thought given)",
        action=move_description(turn, distance, target),
        from_viewpoint=state.viewpoint_id,
        to_viewpoint=target,
        turn_deg=turn,
        distance_m=distance,
    )
    if transcript is not None:
        transcript[-1]["action"] = target
        transcript[-1]["state_after"] = _state_record(new_state)
    return new_state, entry


def _state_record(state: AgentState) -> dict:
    return {"viewpoint_id": state.viewpoint_id, "heading_deg": state.heading_deg,
            "elevation_deg": state.elevation_deg}


def run_episode(
    env: Environment,
    episode: Episode,
    backend: Backend,
    summarizer: Backend | None = None,
    config: AgentConfig = AgentConfig(),
    summary_cache: DirectionSummaryCache | None = None,
) -> EpisodeResult:
    """Run until a stop, the step budget, or a failure; failures land in ``stop_reason``."""
    state = AgentState(episode.start, episode.start_heading_deg, 0.0)
    history = HistoryBuffer()
    result = EpisodeResult(episode, [(state.viewpoint_id, state.heading_deg)], "max_steps", history)
    try:
        init_obs = render_observation(
            compose_observation(env, state, summarizer, config.observation, summary_cache))
        principle = build_system_principle(episode.instruction, init_obs)
        for _ in range(config.max_steps):
            outcome = step(env, state, history, episode.instruction, backend, summarizer,
                           config, principle, result.transcript, summary_cache)
            if isinstance(outcome, StopSignal):
                result.stop_reason = "final_answer"
                break
            state, entry = outcome
            history.append(entry)
            result.trajectory.append((state.viewpoint_id, state.heading_deg))
    except ResponseParseError as exc:
        result.stop_reason, result.error = "parse_failure", str(exc)
    except NavGraphError as exc:
        result.stop_reason, result.error = "backend_failure", f"{type(exc).__name__}: {exc}"
    return result


BackendFactory = Callable[[Episode], Backend]


def run_batch(
    envs: Union[Environment, Mapping[str, Environment]],
    episodes: Sequence[Episode],
    backend_factory: BackendFactory,
    summarizer: Backend | None = None,
    config: AgentConfig = AgentConfig(),
    workers: int = 1,
) -> list[EpisodeResult]:
    """Run episodes on a thread pool; results come back in input order."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    catalog = {envs.scan_id: envs} if isinstance(envs, Environment) else envs
    cache = DirectionSummaryCache()

    def one(ep: Episode) -> EpisodeResult:
        try:
            backend = backend_factory(ep)
        except Exception as exc:
            return EpisodeResult(ep, [(ep.start, ep.start_heading_deg)], "backend_failure",
                                 HistoryBuffer(), error=f"backend factory failed: {exc}")
        return run_episode(catalog[ep.scan_id], ep, backend, summarizer, config, cache)

    if workers == 1:
        return [one(ep) for ep in episodes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, episodes))
