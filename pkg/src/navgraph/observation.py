"""Turn an agent pose into the clockwise, direction-by-direction observation text."""

from __future__ import annotations

import re
import threading
import weakref
from dataclasses import dataclass
from typing import Sequence

from ._singleflight import SingleFlightCache
from .completion import Backend, CompletionRequest
from .env import Environment, ObjectAnnotation, ViewAnnotation, normalize_deg
from .errors import DegenerateDirection, EmptySummary, MissingSummaries, ValidationError
from .geometry import DirectionSector, bearing_between, euclidean_distance, relative_angle, sector_of
from .prompts import build_direction_summary_prompt

OBJECT_RADIUS_M = 3.0
NOTHING = "nothing notable"
CANDIDATE_LIST_PREFIX = "Candidate viewpoint IDs: "


@dataclass(frozen=True)
class AgentState:
    viewpoint_id: str
    heading_deg: float = 0.0
    elevation_deg: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading_deg", normalize_deg(float(self.heading_deg)))


@dataclass(frozen=True)
class ObservationOptions:
    object_radius_m: float = OBJECT_RADIUS_M
    include_objects: bool = True
    include_depth: bool = True


@dataclass(frozen=True)
class DirectionSummary:
    heading_deg: float
    summary: str


@dataclass(frozen=True)
class CandidateView:
    viewpoint_id: str
    relative_deg: float
    sector: DirectionSector
    distance_m: float


@dataclass(frozen=True)
class ObjectMention:
    class_name: str
    depth_m: float
    relative_deg: float


@dataclass(frozen=True)
class SectorBlock:
    sector: DirectionSector
    summary: str
    objects: tuple[ObjectMention, ...]
    candidates: tuple[CandidateView, ...]


@dataclass(frozen=True)
class ObservationText:
    viewpoint_id: str
    front_heading_deg: float
    blocks: tuple[SectorBlock, ...]
    candidate_ids: tuple[str, ...]
    include_objects: bool = True
    include_depth: bool = True

    @property
    def candidates(self) -> tuple[CandidateView, ...]:
        return tuple(c for b in self.blocks for c in b.candidates)


def filter_objects(objects: Sequence[ObjectAnnotation], radius_m: float = OBJECT_RADIUS_M) -> list[ObjectAnnotation]:
    """Keep objects at most ``radius_m`` away (inclusive), preserving order."""
    if not radius_m > 0:
        raise ValueError(f"radius must be positive, got {radius_m}")
    return [o for o in objects if o.depth_m <= radius_m]


def _caption_order(views: Sequence[ViewAnnotation]) -> list[ViewAnnotation]:
    # the summary template reads "top, down and middle"
    by_elev = sorted(views, key=lambda v: v.elevation_deg)
    if len(by_elev) == 3:
        return [by_elev[2], by_elev[0], by_elev[1]]
    return by_elev[::-1]


def summarize_direction(
    views: Sequence[ViewAnnotation],
    summarizer: Backend,
    expected_elevations: int = 3,
) -> DirectionSummary:
    """Ask ``summarizer`` to merge the stacked captions of one heading into one sentence."""
    if len(views) != expected_elevations or len({v.heading_deg for v in views}) != 1:
        raise ValidationError(
            f"expected {expected_elevations} views sharing one heading, got {len(views)}", len(views))
    ordered = _caption_order(views)
    if len(ordered) == 1:
        return DirectionSummary(ordered[0].heading_deg, ordered[0].caption.strip())
    prompt = build_direction_summary_prompt([v.caption for v in ordered])
    text = summarizer.complete(CompletionRequest(prompt)).strip()
    if not text:
        raise EmptySummary(f"summarizer returned blank text for heading {views[0].heading_deg}")
    return DirectionSummary(views[0].heading_deg, text)


class DirectionSummaryCache:
    """Per-(scan, viewpoint, heading) summaries, computed at most once even under threads."""

    def __init__(self) -> None:
        self._cache: SingleFlightCache[str] = SingleFlightCache()
        self.misses = 0

    def get(self, env: Environment, viewpoint_id: str, heading: float, summarizer: Backend | None) -> str:
        vp = env.viewpoint(viewpoint_id)
        stored = vp.stored_summary(heading)
        if stored is not None:
            return stored
        if summarizer is None:
            raise MissingSummaries(f"no summary for {viewpoint_id!r} heading {heading:g} and no summarizer")

        def compute() -> str:
            self.misses += 1
            views = [v for v in vp.views if abs(v.heading_deg - heading) <= 1e-6]
            return summarize_direction(views, summarizer, len(env.granularity.elevations)).summary

        return self._cache.get((env.scan_id, viewpoint_id, heading), compute)


_default_caches: "weakref.WeakKeyDictionary[Environment, DirectionSummaryCache]" = weakref.WeakKeyDictionary()
_default_lock = threading.Lock()


def _cache_for(env: Environment) -> DirectionSummaryCache:
    with _default_lock:
        cache = _default_caches.get(env)
        if cache is None:
            cache = _default_caches[env] = DirectionSummaryCache()
        return cache


def compose_observation(
    env: Environment,
    state: AgentState,
    summarizer: Backend | None = None,
    options: ObservationOptions = ObservationOptions(),
    cache: DirectionSummaryCache | None = None,
) -> ObservationText:
    """Assign directions, nearby objects and candidates to sectors, clockwise from front.

    The agent heading is snapped to the nearest grid heading, which then
    anchors sector 0 for every angle computed here.
    """
    cache = cache or _cache_for(env)
    vp = env.viewpoint(state.viewpoint_id)
    gran = env.granularity
    n = gran.headings
    front = sector_of(state.heading_deg, n).index * gran.heading_step

    summaries: dict[int, str] = {}
    for h in gran.heading_grid:
        idx = sector_of(relative_angle(front, h), n).index
        summaries[idx] = cache.get(env, vp.id, h, summarizer)

    objects: dict[int, list[ObjectMention]] = {i: [] for i in range(n)}
    if options.include_objects:
        for o in filter_objects(vp.objects, options.object_radius_m):
            rel = relative_angle(front, o.heading_deg)
            objects[sector_of(rel, n).index].append(ObjectMention(o.class_name, o.depth_m, rel))

    candidates: dict[int, list[CandidateView]] = {i: [] for i in range(n)}
    for nid in vp.neighbors:
        target = env.position(nid)
        try:
            rel = relative_angle(front, bearing_between(vp.position, target))
        except DegenerateDirection:
            # directly above/below: no horizontal bearing, report as front
            rel = 0.0
        sector = sector_of(rel, n)
        candidates[sector.index].append(
            CandidateView(nid, rel, sector, euclidean_distance(vp.position, target)))

    blocks = []
    for i in range(n):
        center = i * gran.heading_step
        # signed offset from the sector centre, so ordering survives the 0/360 wrap
        cands = sorted(candidates[i], key=lambda c: ((c.relative_deg - center + 180.0) % 360.0, c.viewpoint_id))
        sector = sector_of(i * gran.heading_step, n)
        blocks.append(SectorBlock(sector, summaries[i], tuple(objects[i]), tuple(cands)))
    return ObservationText(
        viewpoint_id=vp.id,
        front_heading_deg=front,
        blocks=tuple(blocks),
        candidate_ids=tuple(sorted(vp.neighbors)),
        include_objects=options.include_objects,
        include_depth=options.include_depth,
    )


def _render_object(o: ObjectMention, with_depth: bool) -> str:
    return f"{o.class_name}, {o.depth_m:.2f} meters away" if with_depth else o.class_name


def render_block(block: SectorBlock, include_objects: bool = True, include_depth: bool = True) -> str:
    lines = [f"{block.sector.label}:", f"  scene: {block.summary}"]
    if include_objects:
        objs = "; ".join(_render_object(o, include_depth) for o in block.objects) or NOTHING
        lines.append(f"  objects: {objs}")
    cands = "; ".join(
        f"navigable viewpoint {c.viewpoint_id}, range {c.distance_m:.2f} m" for c in block.candidates
    ) or NOTHING
    lines.append(f"  candidates: {cands}")
    return "\n".join(lines)


def render_observation(obs: ObservationText) -> str:
    """Deterministic text layout: one paragraph per sector, then the flat candidate list."""
    paragraphs = [render_block(b, obs.include_objects, obs.include_depth) for b in obs.blocks]
    paragraphs.append(CANDIDATE_LIST_PREFIX + "[" + ", ".join(obs.candidate_ids) + "]")
    return "\n\n".join(paragraphs) + "\n"


def split_blocks(text: str) -> list[tuple[str, str]]:
    """Split rendered text into (header, body) per sector, dropping the candidate list."""
    out = []
    for para in text.rstrip("\n").split("\n\n"):
        if para.startswith(CANDIDATE_LIST_PREFIX):
            continue
        header, _, body = para.partition("\n")
        out.append((header.rstrip(":"), body))
    return out


_CANDIDATE_LIST_RE = re.compile("^" + re.escape(CANDIDATE_LIST_PREFIX) + r"\[(.*)\]\s*$", re.M)


def extract_candidate_ids(text: str) -> list[str]:
    """Candidate ids from the last flat candidate list in ``text``."""
    matches = _CANDIDATE_LIST_RE.findall(text)
    if not matches:
        return []
    return [c.strip() for c in matches[-1].split(",") if c.strip()]
