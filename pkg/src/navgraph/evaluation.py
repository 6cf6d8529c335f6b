"""Episode metrics (TL, NE, SR, OSR, SPL), aggregation and result files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .agent import EpisodeResult
from .env import Environment, Episode
from .errors import EmptyInput, Unreachable
from .geometry import euclidean_distance, geodesic_distance, path_length

SUCCESS_THRESHOLD_M = 3.0


@dataclass(frozen=True)
class EpisodeMetrics:
    tl: float
    ne: float
    sr: int
    osr: int
    spl: float


@dataclass(frozen=True)
class AggregateMetrics:
    count: int
    tl: float
    ne: float
    osr: float
    sr: float
    spl: float


def navigation_error(env: Environment, final: str, goal: str, mode: str = "geodesic") -> float:
    if mode == "euclidean":
        return euclidean_distance(env.position(final), env.position(goal))
    if mode != "geodesic":
        raise ValueError(f"unknown distance mode {mode!r}")
    d = geodesic_distance(env, final, goal)
    if math.isinf(d):
        raise Unreachable(final, goal)
    return d


def success(ne: float, threshold: float = SUCCESS_THRESHOLD_M) -> int:
    """1 iff the error is strictly below the threshold."""
    if ne < 0:
        raise ValueError(f"navigation error must be >= 0, got {ne}")
    return int(ne < threshold)


def oracle_success(
    env: Environment,
    trajectory: Sequence[str],
    goal: str,
    threshold: float = SUCCESS_THRESHOLD_M,
    mode: str = "geodesic",
) -> int:
    """1 iff any visited viewpoint is within ``threshold`` of the goal."""
    if not trajectory:
        raise EmptyInput("trajectory must be nonempty")
    best = math.inf
    for vid in trajectory:
        try:
            best = min(best, navigation_error(env, vid, goal, mode))
        except Unreachable:
            continue
    return int(best < threshold)


def spl(sr: int, optimal: float, traveled: float) -> float:
    if optimal < 0 or traveled < 0:
        raise ValueError("path lengths must be >= 0")
    if not sr:
        return 0.0
    longest = max(optimal, traveled)
    if longest == 0:
        return 1.0
    return sr * optimal / longest


def score_episode(
    env: Environment,
    episode: Episode,
    trajectory: Sequence[str] | EpisodeResult,
    threshold: float = SUCCESS_THRESHOLD_M,
    mode: str = "geodesic",
) -> EpisodeMetrics:
    path = trajectory.path if isinstance(trajectory, EpisodeResult) else list(trajectory)
    if not path:
        raise EmptyInput("trajectory must be nonempty")
    goal = episode.goal
    optimal = geodesic_distance(env, episode.start, goal)
    if math.isinf(optimal):
        raise Unreachable(episode.start, goal)
    tl = path_length(env, path)
    ne = navigation_error(env, path[-1], goal, mode)
    sr = success(ne, threshold)
    osr = oracle_success(env, path, goal, threshold, mode)
    return EpisodeMetrics(tl=tl, ne=ne, sr=sr, osr=osr, spl=spl(sr, optimal, tl))


def aggregate(metrics: Sequence[EpisodeMetrics]) -> AggregateMetrics:
    """Means over episodes; rates as percentages; everything rounded to 2 decimals."""
    if not metrics:
        raise EmptyInput("nothing to aggregate")
    n = len(metrics)

    def mean(attr: str) -> float:
        return math.fsum(getattr(m, attr) for m in metrics) / n

    return AggregateMetrics(
        count=n,
        tl=round(mean("tl"), 2),
        ne=round(mean("ne"), 2),
        osr=round(100 * mean("osr"), 2),
        sr=round(100 * mean("sr"), 2),
        spl=round(100 * mean("spl"), 2),
    )


def format_table(agg: AggregateMetrics, label: str = "run") -> str:
    """Plain-text table in TL, NE, OSR, SR, SPL column order."""
    w = max(16, len(label) + 2)
    header = f"{'Method':<{w}}{'TL':>8}{'NE':>8}{'OSR':>8}{'SR':>8}{'SPL':>8}{'N':>6}"
    row = f"{label:<{w}}{agg.tl:>8.2f}{agg.ne:>8.2f}{agg.osr:>8.2f}{agg.sr:>8.2f}{agg.spl:>8.2f}{agg.count:>6}"
    return header + "\n" + row


# -- results files ---------------------------------------------------------

def result_record(result: EpisodeResult, metrics: EpisodeMetrics) -> dict:
    ep = result.episode
    return {
        "path_id": ep.path_id,
        "instruction_index": ep.instruction_index,
        "scan": ep.scan_id,
        "gt_path": list(ep.gt_path),
        "stop_reason": result.stop_reason,
        "metrics": asdict(metrics),
        "trajectory": result.path,
        "headings": [h for _, h in result.trajectory],
        "error": result.error,
    }


def write_results(
    path,
    results: Sequence[EpisodeResult],
    catalog: Mapping[str, Environment],
    mode: str = "geodesic",
) -> AggregateMetrics:
    """Score every result, write one JSON line each plus a trailing aggregate line."""
    lines = []
    scored = []
    for res in results:
        m = score_episode(catalog[res.episode.scan_id], res.episode, res, mode=mode)
        scored.append(m)
        lines.append(result_record(res, m))
    agg = aggregate(scored)
    lines.append({"type": "aggregate", **asdict(agg)})
    with open(path, "w", encoding="utf-8") as fh:
        for rec in lines:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return agg


def read_results(path) -> tuple[list[dict], dict | None]:
    episodes, summary = [], None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("type") == "aggregate":
                summary = rec
            else:
                episodes.append(rec)
    return episodes, summary


def rescore_records(records: Iterable[dict], catalog: Mapping[str, Environment], mode: str = "geodesic") -> list[EpisodeMetrics]:
    """Recompute metrics from stored trajectories, ignoring any stored metric values."""
    out = []
    for rec in records:
        env = catalog[rec["scan"]]
        ep = Episode(rec["path_id"], rec["scan"], "", tuple(rec["gt_path"]), 0.0, rec.get("instruction_index", 0))
        out.append(score_episode(env, ep, rec["trajectory"], mode=mode))
    return out


def export_topdown(env: Environment, result: EpisodeResult | Sequence[tuple[str, float]], path) -> Path:
    """CSV of visited states (x-y projection), one row per state including the start."""
    trajectory = result.trajectory if isinstance(result, EpisodeResult) else list(result)
    if not trajectory:
        raise EmptyInput("trajectory must be nonempty")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "viewpoint_id", "x", "y", "heading_deg"])
        for i, (vid, heading) in enumerate(trajectory):
            pos = env.position(vid)
            writer.writerow([i, vid, repr(pos.x), repr(pos.y), repr(float(heading))])
    return path
