"""Deterministic synthetic grid worlds and episodes for tests and benchmarks."""

from __future__ import annotations

import random

from .env import (
    Environment, Episode, GranularityConfig, ObjectAnnotation, Position,
    ViewAnnotation, Viewpoint,
)
from .errors import ValidationError
from .geometry import bearing_between, shortest_path

ROOMS = ("bedroom", "kitchen", "hallway", "living room", "bathroom", "office", "dining room", "laundry room")
STYLES = ("bright", "dim", "narrow", "spacious", "carpeted", "wood-floored", "tiled", "cozy")
OBJECTS = ("chair", "table", "lamp", "sofa", "plant", "door", "cabinet", "bed", "painting", "rug")


def grid_id(r: int, c: int) -> str:
    return f"vp_{r}_{c}"


def _level(elevation: float, elevations) -> str:
    if len(elevations) == 1:
        return "level"
    if elevation == max(elevations):
        return "up"
    if elevation == min(elevations):
        return "down"
    return "level"


def generate_synthetic_grid(
    rows: int,
    cols: int,
    spacing_m: float,
    seed: int,
    granularity: GranularityConfig | None = None,
    with_summaries: bool = True,
) -> Environment:
    """A rows x cols 4-connected grid. Row index grows north, column index east.

    Every caption embeds the cell's unique ``landmark_<r>_<c>`` token. One
    object sits at each neighbor's cell centre, plus one seeded "clutter"
    object per cell whose depth straddles the 3 m filter radius.
    """
    if rows < 1 or cols < 1:
        raise ValidationError(f"grid needs rows, cols >= 1, got {rows}x{cols}", (rows, cols))
    if not spacing_m > 0:
        raise ValidationError(f"spacing must be positive, got {spacing_m}", spacing_m)
    gran = granularity or GranularityConfig()
    rng = random.Random(seed)
    scan_id = f"synth_{rows}x{cols}_s{seed}"

    positions = {
        grid_id(r, c): Position(c * spacing_m, r * spacing_m, 0.0)
        for r in range(rows) for c in range(cols)
    }
    viewpoints = {}
    for r in range(rows):
        for c in range(cols):
            vid = grid_id(r, c)
            landmark = f"landmark_{r}_{c}"
            room = rng.choice(ROOMS)
            neighbors = tuple(
                grid_id(rr, cc)
                for rr, cc in ((r + 1, c), (r, c + 1), (r - 1, c), (r, c - 1))
                if 0 <= rr < rows and 0 <= cc < cols
            )
            views = []
            summaries = {}
            for h in gran.heading_grid:
                style = rng.choice(STYLES)
                captions = []
                for e in gran.elevations:
                    caption = f"a {style} {room} with {landmark}, looking {_level(e, gran.elevations)} at {h:g} degrees"
                    views.append(ViewAnnotation(h, e, caption))
                    captions.append(caption)
                summaries[h] = f"A {style} {room} with {landmark} seen at {h:g} degrees."
            objects = [
                ObjectAnnotation(rng.choice(OBJECTS), bearing_between(positions[vid], positions[n]), 0.0, spacing_m)
                for n in neighbors
            ]
            objects.append(ObjectAnnotation(
                rng.choice(OBJECTS),
                round(rng.uniform(0.0, 360.0), 3) % 360.0,
                round(rng.uniform(-30.0, 30.0), 3),
                round(rng.uniform(0.5, 5.0), 3),
            ))
            viewpoints[vid] = Viewpoint(
                id=vid,
                position=positions[vid],
                neighbors=neighbors,
                views=tuple(views),
                objects=tuple(objects),
                direction_summaries=summaries if with_summaries else None,
            )
    return Environment(scan_id=scan_id, viewpoints=viewpoints, granularity=gran)


def generate_synthetic_episodes(
    env: Environment,
    count: int,
    seed: int,
    min_hops: int = 1,
    instructions_per_path: int = 1,
) -> list[Episode]:
    """Episodes whose ground-truth paths are geodesic shortest paths."""
    rng = random.Random(seed)
    ids = sorted(env.viewpoints)
    episodes: list[Episode] = []
    attempts = 0
    while len(episodes) < count * instructions_per_path:
        attempts += 1
        if attempts > 1000 * max(count, 1):
            raise ValidationError(f"cannot find {count} paths with >= {min_hops} hops in {env.scan_id}", min_hops)
        start, goal = rng.choice(ids), rng.choice(ids)
        path = shortest_path(env, start, goal)
        if path is None or len(path) - 1 < min_hops:
            continue
        path_id = len(episodes) // instructions_per_path
        heading = rng.choice(env.granularity.heading_grid)
        goal_mark = goal.replace("vp_", "landmark_")
        for k in range(instructions_per_path):
            episodes.append(Episode(
                path_id=path_id,
                scan_id=env.scan_id,
                instruction=f"Walk from the start to the room with {goal_mark} and stop there. (variant {k})",
                gt_path=tuple(path),
                start_heading_deg=heading,
                instruction_index=k,
            ))
    return episodes
