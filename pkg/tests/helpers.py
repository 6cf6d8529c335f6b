"""Test-only builders and brute-force reference implementations.

The references here deliberately share no code with navgraph.geometry or
navgraph.evaluation: shortest paths come from enumerating every simple path.
"""

from __future__ import annotations

import math

from hypothesis import strategies as st

from navgraph.env import Environment, GranularityConfig, Position, ViewAnnotation, Viewpoint


def full_views(gran: GranularityConfig, label: str = "a room") -> tuple[ViewAnnotation, ...]:
    return tuple(
        ViewAnnotation(h, e, f"{label} at {h:g}/{e:g}")
        for h in gran.heading_grid for e in gran.elevations
    )


def make_env(positions: dict, edges, scan_id: str = "test", directed: bool = False,
             gran: GranularityConfig | None = None, objects=None) -> Environment:
    """Environment from {id: (x, y, z)} and an edge list."""
    gran = gran or GranularityConfig()
    nbrs = {vid: [] for vid in positions}
    for a, b in edges:
        if b not in nbrs[a]:
            nbrs[a].append(b)
        if not directed and a not in nbrs[b]:
            nbrs[b].append(a)
    vps = {
        vid: Viewpoint(
            id=vid,
            position=Position(*xyz),
            neighbors=tuple(nbrs[vid]),
            views=full_views(gran, f"room {vid}"),
            objects=tuple((objects or {}).get(vid, ())),
            direction_summaries={h: f"summary of {vid} at {h:g}" for h in gran.heading_grid},
        )
        for vid, xyz in positions.items()
    }
    return Environment(scan_id, vps, gran)


def line_env() -> Environment:
    """A-B-C on the x axis with |AB| = 2 and |BC| = 3."""
    return make_env({"A": (0, 0, 0), "B": (2, 0, 0), "C": (5, 0, 0)}, [("A", "B"), ("B", "C")], "line")


def env_dict(n_views: int = 24, neighbors_a=("B",)) -> dict:
    gran = GranularityConfig()
    views = [
        {"heading_deg": h, "elevation_deg": e, "caption": f"view {h}/{e}"}
        for h in gran.heading_grid for e in gran.elevations
    ][:n_views]
    return {
        "scan_id": "two",
        "granularity": {"fov_deg": 45, "headings": 8, "elevations": [-30, 0, 30]},
        "viewpoints": [
            {"id": "A", "position": [0, 0, 0], "neighbors": list(neighbors_a), "views": views,
             "objects": [{"class": "chair", "heading_deg": 10, "elevation_deg": 0, "depth_m": 1.5}]},
            {"id": "B", "position": [0, 2, 0], "neighbors": ["A"], "views": views, "objects": []},
        ],
    }


# -- brute-force references ------------------------------------------------

def _edge_len(env: Environment, a: str, b: str) -> float:
    pa, pb = env.position(a), env.position(b)
    return math.sqrt((pa.x - pb.x) ** 2 + (pa.y - pb.y) ** 2 + (pa.z - pb.z) ** 2)


def all_simple_paths(env: Environment, source: str, target: str):
    stack = [(source, [source])]
    while stack:
        node, path = stack.pop()
        if node == target:
            yield path
            continue
        for n in env.neighbors(node):
            if n not in path:
                stack.append((n, path + [n]))


def brute_distance(env: Environment, source: str, target: str) -> float:
    best = math.inf
    for path in all_simple_paths(env, source, target):
        best = min(best, sum(_edge_len(env, a, b) for a, b in zip(path, path[1:])))
    return best


def brute_metrics(env: Environment, gt_path, trajectory, threshold: float = 3.0) -> dict:
    goal = gt_path[-1]
    tl = sum(_edge_len(env, a, b) for a, b in zip(trajectory, trajectory[1:]))
    ne = brute_distance(env, trajectory[-1], goal)
    sr = 1 if ne < threshold else 0
    osr = 1 if any(brute_distance(env, v, goal) < threshold for v in trajectory) else 0
    optimal = brute_distance(env, gt_path[0], goal)
    if sr == 0:
        spl = 0.0
    elif optimal == 0 and tl == 0:
        spl = 1.0
    else:
        spl = optimal / max(optimal, tl)
    return {"tl": tl, "ne": ne, "sr": sr, "osr": osr, "spl": spl}


# -- hypothesis strategies -------------------------------------------------

@st.composite
def random_graphs(draw, max_nodes: int = 8, directed: bool | None = None, connected: bool = False):
    n = draw(st.integers(1, max_nodes))
    ids = [f"n{i}" for i in range(n)]
    coords = st.integers(-10, 10).map(float)
    positions = {}
    for vid in ids:
        while True:
            xyz = (draw(coords), draw(coords), draw(st.sampled_from([0.0, 0.0, 3.0])))
            if xyz not in positions.values():
                break
        positions[vid] = xyz
    pairs = [(a, b) for a in ids for b in ids if a < b]
    edges = [p for p in pairs if draw(st.booleans())]
    if connected:
        edges += [(ids[i], ids[i + 1]) for i in range(n - 1)]
    is_directed = draw(st.booleans()) if directed is None else directed
    if is_directed:
        edges = [(b, a) if draw(st.booleans()) else (a, b) for a, b in edges]
    return make_env(positions, edges, "rand", directed=is_directed)
