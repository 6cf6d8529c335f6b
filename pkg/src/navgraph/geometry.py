"""Angles, direction sectors, distances and graph geodesics."""

from __future__ import annotations

import heapq
import math
import threading
import weakref
from dataclasses import dataclass
from typing import Mapping, Sequence

from .env import Environment, Position, normalize_deg
from .errors import DegenerateDirection, UnknownViewpoint

SECTOR_LABELS = (
    "front", "front right", "right", "rear right",
    "rear", "rear left", "left", "front left",
)


@dataclass(frozen=True)
class DirectionSector:
    index: int
    label: str


def sector_label(index: int, count: int = 8) -> str:
    if count == 8:
        return SECTOR_LABELS[index]
    if index == 0:
        return "front"
    offset = index * 360.0 / count
    return f"{offset:g} degrees clockwise"


def bearing_between(origin: Position, target: Position) -> float:
    """Clockwise-from-north bearing of the x-y projection, in [0, 360)."""
    dx = target.x - origin.x
    dy = target.y - origin.y
    if dx == 0 and dy == 0:
        raise DegenerateDirection(f"no horizontal direction from {origin} to {target}")
    return normalize_deg(math.degrees(math.atan2(dx, dy)))


def relative_angle(agent_heading_deg: float, target_bearing_deg: float) -> float:
    """Clockwise angle from the agent's heading to the target, in [0, 360)."""
    return normalize_deg(target_bearing_deg - agent_heading_deg)


def signed_turn(agent_heading_deg: float, target_bearing_deg: float) -> float:
    """Same as relative_angle but in (-180, 180]; positive turns right."""
    rel = relative_angle(agent_heading_deg, target_bearing_deg)
    return rel - 360.0 if rel > 180.0 else rel


def sector_of(relative_deg: float, count: int = 8) -> DirectionSector:
    """Bin a relative angle into one of ``count`` sectors centred on multiples of 360/count.

    Ties on a boundary go to the clockwise sector. The quotient is rounded to
    9 decimals first so float noise from atan2 cannot flip a boundary.
    """
    step = 360.0 / count
    q = round(normalize_deg(relative_deg) / step, 9)
    index = math.floor(q + 0.5) % count
    return DirectionSector(index, sector_label(index, count))


def euclidean_distance(a: Position, b: Position) -> float:
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


@dataclass(frozen=True)
class GeodesicTable:
    """Single-source shortest distances; unreachable nodes hold ``math.inf``."""

    source: str
    distances: Mapping[str, float]
    predecessors: Mapping[str, str | None]

    def distance(self, target: str) -> float:
        try:
            return self.distances[target]
        except KeyError:
            raise UnknownViewpoint(target) from None

    def reachable(self, target: str) -> bool:
        return math.isfinite(self.distance(target))

    def path_to(self, target: str) -> list[str] | None:
        if not self.reachable(target):
            return None
        path = [target]
        while path[-1] != self.source:
            path.append(self.predecessors[path[-1]])
        return path[::-1]


def _dijkstra(env: Environment, source: str) -> GeodesicTable:
    env.viewpoint(source)
    dist = {vid: math.inf for vid in env.viewpoints}
    pred: dict[str, str | None] = {vid: None for vid in env.viewpoints}
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        pu = env.viewpoints[u].position
        for v in env.viewpoints[u].neighbors:
            nd = d + euclidean_distance(pu, env.viewpoints[v].position)
            # tie-break on id keeps predecessor choice independent of heap order
            if nd < dist[v] or (nd == dist[v] and pred[v] is not None and u < pred[v]):
                if nd < dist[v]:
                    heapq.heappush(heap, (nd, v))
                dist[v] = nd
                pred[v] = u
    return GeodesicTable(source, dist, pred)


_cache: "weakref.WeakKeyDictionary[Environment, dict[str, GeodesicTable]]" = weakref.WeakKeyDictionary()
_cache_lock = threading.Lock()


def shortest_paths(env: Environment, source: str) -> GeodesicTable:
    """Dijkstra over Euclidean edge weights, memoized per (environment, source)."""
    with _cache_lock:
        per_env = _cache.setdefault(env, {})
        table = per_env.get(source)
    if table is None:
        table = _dijkstra(env, source)
        with _cache_lock:
            table = per_env.setdefault(source, table)
    return table


def geodesic_distance(env: Environment, source: str, target: str) -> float:
    return shortest_paths(env, source).distance(target)


def shortest_path(env: Environment, source: str, target: str) -> list[str] | None:
    return shortest_paths(env, source).path_to(target)


def path_length(env: Environment, path: Sequence[str]) -> float:
    """Length of the traversed polyline; adjacency is not required."""
    positions = [env.position(vid) for vid in path]
    return sum(euclidean_distance(a, b) for a, b in zip(positions, positions[1:]))
