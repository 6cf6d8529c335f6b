"""Navigation environments and episode definitions.

An :class:`Environment` is an immutable viewpoint graph: each node carries a
3D pose, its outgoing edges, one caption per (heading, elevation) view and a
list of detected objects. Episodes reference an environment by ``scan_id``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import ParseError, UnknownViewpoint, ValidationError

log = logging.getLogger(__name__)

# Angles closer than this are treated as the same grid value.
ANGLE_TOL = 1e-6


def normalize_deg(angle: float) -> float:
    """Wrap an angle into [0, 360)."""
    wrapped = angle % 360.0
    # -1e-17 % 360.0 == 360.0 in floating point
    if wrapped >= 360.0:
        wrapped = 0.0
    return wrapped + 0.0


def _finite(value, what: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} must be a number, got {value!r}", value) from None
    if not math.isfinite(value):
        raise ValidationError(f"{what} must be finite, got {value!r}", value)
    return value


@dataclass(frozen=True)
class Position:
    """Metric position: x east, y north, z up."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, _finite(getattr(self, name), f"position.{name}"))

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z]


@dataclass(frozen=True)
class ObjectAnnotation:
    class_name: str
    heading_deg: float
    elevation_deg: float
    depth_m: float

    def __post_init__(self) -> None:
        if not self.class_name:
            raise ValidationError("object class must be nonempty", self.class_name)
        object.__setattr__(self, "heading_deg", normalize_deg(_finite(self.heading_deg, "object heading")))
        elevation = _finite(self.elevation_deg, "object elevation")
        if not -90.0 <= elevation <= 90.0:
            raise ValidationError(f"object elevation {elevation} outside [-90, 90]", elevation)
        object.__setattr__(self, "elevation_deg", elevation)
        depth = _finite(self.depth_m, "object depth")
        if depth <= 0:
            raise ValidationError(f"object depth must be positive, got {depth}", depth)
        object.__setattr__(self, "depth_m", depth)


@dataclass(frozen=True)
class ViewAnnotation:
    heading_deg: float
    elevation_deg: float
    caption: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "heading_deg", normalize_deg(_finite(self.heading_deg, "view heading")))
        object.__setattr__(self, "elevation_deg", _finite(self.elevation_deg, "view elevation"))
        if not isinstance(self.caption, str) or not self.caption.strip():
            raise ValidationError("view caption must be nonempty text", self.caption)


@dataclass(frozen=True)
class GranularityConfig:
    """How many egocentric views make up one viewpoint observation."""

    fov_deg: float = 45.0
    headings: int = 8
    elevations: tuple[float, ...] = (-30.0, 0.0, 30.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "elevations", tuple(float(e) for e in self.elevations))
        if self.headings < 1:
            raise ValidationError("granularity needs at least one heading", self.headings)
        if not self.elevations:
            raise ValidationError("granularity needs at least one elevation", self.elevations)
        if len(set(self.elevations)) != len(self.elevations):
            raise ValidationError("duplicate elevation in granularity", self.elevations)
        if not 0 < self.fov_deg <= 360:
            raise ValidationError(f"fov {self.fov_deg} outside (0, 360]", self.fov_deg)

    @property
    def heading_step(self) -> float:
        return 360.0 / self.headings

    @property
    def heading_grid(self) -> tuple[float, ...]:
        return tuple(i * self.heading_step for i in range(self.headings))

    @property
    def views_per_viewpoint(self) -> int:
        return self.headings * len(self.elevations)

    def grid_heading(self, heading_deg: float) -> float | None:
        """Return the grid heading equal to ``heading_deg`` or None if off-grid."""
        h = normalize_deg(heading_deg)
        k = round(h / self.heading_step) % self.headings
        g = self.heading_grid[k]
        if abs((h - g + 180.0) % 360.0 - 180.0) <= ANGLE_TOL:
            return g
        return None

    def grid_elevation(self, elevation_deg: float) -> float | None:
        for e in self.elevations:
            if abs(e - elevation_deg) <= ANGLE_TOL:
                return e
        return None

    def to_dict(self) -> dict:
        return {"fov_deg": self.fov_deg, "headings": self.headings, "elevations": list(self.elevations)}


GRANULARITY_PRESETS: Mapping[str, GranularityConfig] = MappingProxyType({
    "fov45x24": GranularityConfig(45.0, 8, (-30.0, 0.0, 30.0)),
    "fov60x12": GranularityConfig(60.0, 12, (0.0,)),
    "fov30x36": GranularityConfig(30.0, 12, (-30.0, 0.0, 30.0)),
})


@dataclass(frozen=True, eq=False)
class Viewpoint:
    id: str
    position: Position
    neighbors: tuple[str, ...]
    views: tuple[ViewAnnotation, ...]
    objects: tuple[ObjectAnnotation, ...] = ()
    direction_summaries: Mapping[float, str] | None = None

    def view(self, heading_deg: float, elevation_deg: float) -> ViewAnnotation | None:
        for v in self.views:
            if abs(v.heading_deg - heading_deg) <= ANGLE_TOL and abs(v.elevation_deg - elevation_deg) <= ANGLE_TOL:
                return v
        return None

    def stored_summary(self, heading_deg: float) -> str | None:
        if not self.direction_summaries:
            return None
        for h, text in self.direction_summaries.items():
            if abs(h - heading_deg) <= ANGLE_TOL:
                return text
        return None

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "position": self.position.as_list(),
            "neighbors": list(self.neighbors),
            "views": [
                {"heading_deg": v.heading_deg, "elevation_deg": v.elevation_deg, "caption": v.caption}
                for v in self.views
            ],
            "objects": [
                {"class": o.class_name, "heading_deg": o.heading_deg,
                 "elevation_deg": o.elevation_deg, "depth_m": o.depth_m}
                for o in self.objects
            ],
        }
        if self.direction_summaries is not None:
            d["direction_summaries"] = {_fmt_angle(h): s for h, s in self.direction_summaries.items()}
        return d


def _fmt_angle(h: float) -> str:
    return str(int(h)) if float(h).is_integer() else repr(float(h))


@dataclass(frozen=True, eq=False)
class Environment:
    """Immutable viewpoint graph. Equality is identity; compare ``dumps()`` instead."""

    scan_id: str
    viewpoints: Mapping[str, Viewpoint]
    granularity: GranularityConfig = field(default_factory=GranularityConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "viewpoints", MappingProxyType(dict(self.viewpoints)))
        self.validate()

    def __contains__(self, viewpoint_id: str) -> bool:
        return viewpoint_id in self.viewpoints

    def __len__(self) -> int:
        return len(self.viewpoints)

    def viewpoint(self, viewpoint_id: str) -> Viewpoint:
        try:
            return self.viewpoints[viewpoint_id]
        except (KeyError, TypeError):
            raise UnknownViewpoint(viewpoint_id) from None

    def neighbors(self, viewpoint_id: str) -> tuple[str, ...]:
        return self.viewpoint(viewpoint_id).neighbors

    def position(self, viewpoint_id: str) -> Position:
        return self.viewpoint(viewpoint_id).position

    def edges(self) -> list[tuple[str, str]]:
        return [(vp.id, n) for vp in self.viewpoints.values() for n in vp.neighbors]

    def validate(self) -> None:
        """Full invariant scan. Raises ValidationError naming the offending id."""
        if not self.scan_id:
            raise ValidationError("scan_id must be nonempty", self.scan_id)
        if not self.viewpoints:
            raise ValidationError(f"environment {self.scan_id!r} has no viewpoints", self.scan_id)
        gran = self.granularity
        expected = {(h, e) for h in gran.heading_grid for e in gran.elevations}
        for vid, vp in self.viewpoints.items():
            if not vid or vid != vp.id:
                raise ValidationError(f"viewpoint key {vid!r} does not match id {vp.id!r}", vid)
            if len(set(vp.neighbors)) != len(vp.neighbors):
                raise ValidationError(f"viewpoint {vid!r} lists a neighbor twice", vid)
            for n in vp.neighbors:
                if n == vid:
                    raise ValidationError(f"viewpoint {vid!r} lists itself as a neighbor", vid)
                if n not in self.viewpoints:
                    raise ValidationError(f"viewpoint {vid!r} has dangling neighbor {n!r}", n)
            if len(vp.views) != gran.views_per_viewpoint:
                raise ValidationError(
                    f"viewpoint {vid!r} has {len(vp.views)} views, expected "
                    f"{gran.views_per_viewpoint} ({gran.headings}x{len(gran.elevations)})", vid)
            seen = set()
            for v in vp.views:
                h, e = gran.grid_heading(v.heading_deg), gran.grid_elevation(v.elevation_deg)
                if h is None or e is None:
                    raise ValidationError(
                        f"viewpoint {vid!r} has off-grid view ({v.heading_deg}, {v.elevation_deg})", vid)
                if (h, e) in seen:
                    raise ValidationError(f"viewpoint {vid!r} repeats view ({h}, {e})", vid)
                seen.add((h, e))
            if seen != expected:
                raise ValidationError(f"viewpoint {vid!r} does not cover the view grid", vid)
            if vp.direction_summaries:
                for h in vp.direction_summaries:
                    if gran.grid_heading(h) is None:
                        raise ValidationError(f"viewpoint {vid!r} has summary for off-grid heading {h}", vid)
        for vid, vp in self.viewpoints.items():
            for n in vp.neighbors:
                if vid not in self.viewpoints[n].neighbors:
                    log.warning("asymmetric edge %s -> %s in scan %s", vid, n, self.scan_id)

    def to_dict(self) -> dict:
        return {
            "scan_id": self.scan_id,
            "granularity": self.granularity.to_dict(),
            "viewpoints": [vp.to_dict() for vp in self.viewpoints.values()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class Episode:
    path_id: int
    scan_id: str
    instruction: str
    gt_path: tuple[str, ...]
    start_heading_deg: float = 0.0
    instruction_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "gt_path", tuple(self.gt_path))
        object.__setattr__(self, "start_heading_deg", normalize_deg(_finite(self.start_heading_deg, "heading")))
        if not self.gt_path:
            raise ValidationError(f"episode {self.path_id} has an empty path", self.path_id)

    @property
    def start(self) -> str:
        return self.gt_path[0]

    @property
    def goal(self) -> str:
        return self.gt_path[-1]

    @property
    def key(self) -> tuple[int, int]:
        return (self.path_id, self.instruction_index)


# -- loading ---------------------------------------------------------------

def _read_json(path) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 ({exc})") from exc


def _require(record: Mapping, key: str, where: str):
    if not isinstance(record, Mapping) or key not in record:
        raise ParseError(f"{where}: missing field {key!r}")
    return record[key]


def environment_from_dict(data: Mapping, source: str = "<dict>") -> Environment:
    if not isinstance(data, Mapping):
        raise ParseError(f"{source}: top level must be an object")
    scan_id = _require(data, "scan_id", source)
    g = data.get("granularity") or {}
    try:
        gran = GranularityConfig(
            fov_deg=float(g.get("fov_deg", 45.0)),
            headings=int(g.get("headings", 8)),
            elevations=tuple(g.get("elevations", (-30.0, 0.0, 30.0))),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(f"{source}: bad granularity block ({exc})") from exc

    raw_vps = _require(data, "viewpoints", source)
    if not isinstance(raw_vps, list):
        raise ParseError(f"{source}: 'viewpoints' must be a list")
    viewpoints: dict[str, Viewpoint] = {}
    for i, rec in enumerate(raw_vps):
        where = f"{source}: viewpoints[{i}]"
        vid = _require(rec, "id", where)
        if not isinstance(vid, str) or not vid:
            raise ValidationError(f"{where}: id must be a nonempty string", vid)
        if vid in viewpoints:
            raise ValidationError(f"duplicate viewpoint id {vid!r}", vid)
        pos = _require(rec, "position", where)
        if not isinstance(pos, list) or len(pos) != 3:
            raise ParseError(f"{where}: position must be [x, y, z]")
        try:
            views = tuple(
                ViewAnnotation(v["heading_deg"], v["elevation_deg"], v["caption"])
                for v in _require(rec, "views", where)
            )
            objects = tuple(
                ObjectAnnotation(o["class"], o["heading_deg"], o["elevation_deg"], o["depth_m"])
                for o in rec.get("objects", [])
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{where}: malformed view/object record ({exc})") from exc
        summaries = rec.get("direction_summaries")
        if summaries is not None:
            if not isinstance(summaries, Mapping):
                raise ParseError(f"{where}: direction_summaries must be an object")
            try:
                summaries = MappingProxyType({normalize_deg(float(k)): str(s) for k, s in summaries.items()})
            except ValueError as exc:
                raise ParseError(f"{where}: bad direction_summaries key ({exc})") from exc
        neighbors = _require(rec, "neighbors", where)
        if not isinstance(neighbors, list) or not all(isinstance(n, str) for n in neighbors):
            raise ParseError(f"{where}: neighbors must be a list of strings")
        viewpoints[vid] = Viewpoint(
            id=vid,
            position=Position(*pos),
            neighbors=tuple(neighbors),
            views=views,
            objects=objects,
            direction_summaries=summaries,
        )
    return Environment(scan_id=str(scan_id), viewpoints=viewpoints, granularity=gran)


def load_environment(path) -> Environment:
    return environment_from_dict(_read_json(path), source=str(path))


def save_environment(env: Environment, path) -> None:
    Path(path).write_text(env.dumps(), encoding="utf-8")


def _catalog(envs) -> Mapping[str, Environment]:
    if isinstance(envs, Environment):
        return {envs.scan_id: envs}
    if isinstance(envs, Mapping):
        return envs
    return {e.scan_id: e for e in envs}


def check_episode(episode: Episode, env: Environment) -> None:
    for vid in episode.gt_path:
        if vid not in env:
            raise ValidationError(f"episode {episode.path_id}: path node {vid!r} not in scan {env.scan_id!r}", vid)
    for a, b in zip(episode.gt_path, episode.gt_path[1:]):
        if b not in env.neighbors(a):
            raise ValidationError(f"episode {episode.path_id}: {b!r} is not a neighbor of {a!r}", b)


def episodes_from_records(records: Sequence, envs, source: str = "<records>") -> list[Episode]:
    """Expand R2R-style records (one path, several instructions) into episodes."""
    catalog = _catalog(envs)
    if not isinstance(records, list):
        raise ParseError(f"{source}: episode file must be a JSON array")
    episodes = []
    for i, rec in enumerate(records):
        where = f"{source}: record {i}"
        path_id = _require(rec, "path_id", where)
        scan = _require(rec, "scan", where)
        path = _require(rec, "path", where)
        instructions = _require(rec, "instructions", where)
        heading = rec.get("heading", 0.0)
        unit = rec.get("heading_unit", "rad")
        if unit == "rad":
            heading = math.degrees(float(heading))
        elif unit != "deg":
            raise ParseError(f"{where}: heading_unit must be 'rad' or 'deg', got {unit!r}")
        if not isinstance(path, list) or not isinstance(instructions, list):
            raise ParseError(f"{where}: 'path' and 'instructions' must be lists")
        if scan not in catalog:
            raise ValidationError(f"{where}: scan {scan!r} not loaded", scan)
        for j, text in enumerate(instructions):
            ep = Episode(
                path_id=int(path_id), scan_id=scan, instruction=str(text),
                gt_path=tuple(path), start_heading_deg=heading, instruction_index=j,
            )
            check_episode(ep, catalog[scan])
            episodes.append(ep)
    return episodes


def load_episodes(path, envs) -> list[Episode]:
    """Load an R2R-style episode file; ``envs`` is one Environment or a catalog."""
    return episodes_from_records(_read_json(path), envs, source=str(path))


def episodes_to_records(episodes: Iterable[Episode]) -> list[dict]:
    """Group episodes sharing a path back into records (headings in degrees)."""
    records: dict[int, dict] = {}
    for ep in episodes:
        rec = records.setdefault(ep.path_id, {
            "path_id": ep.path_id, "scan": ep.scan_id, "path": list(ep.gt_path),
            "heading": ep.start_heading_deg, "heading_unit": "deg", "instructions": [],
        })
        rec["instructions"].append(ep.instruction)
    return list(records.values())


def save_episodes(episodes: Iterable[Episode], path) -> None:
    text = json.dumps(episodes_to_records(episodes), indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")
