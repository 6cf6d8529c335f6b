import threading
import time
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from helpers import make_env
from navgraph.backends import EchoBackend
from navgraph.completion import CompletionRequest
from navgraph.env import GRANULARITY_PRESETS, Environment, ObjectAnnotation, ViewAnnotation
from navgraph.errors import EmptySummary, MissingSummaries, UnknownViewpoint, ValidationError
from navgraph.observation import (
    OBJECT_RADIUS_M, AgentState, DirectionSummaryCache, ObservationOptions, compose_observation,
    extract_candidate_ids, filter_objects, render_observation, split_blocks, summarize_direction,
)
from navgraph.prompts import DIRECTION_SUMMARY_TEMPLATE
from navgraph.synthetic import generate_synthetic_grid

GOLDEN = Path(__file__).parent / "golden"


class Counting:
    def __init__(self, reply="a quiet room.", delay=0.0):
        self.reply, self.delay = reply, delay
        self.prompts = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        time.sleep(self.delay)
        with self._lock:
            self.prompts.append(request.prompt)
        return self.reply


def strip_summaries(env: Environment) -> Environment:
    from dataclasses import replace
    vps = {k: replace(v, direction_summaries={}) for k, v in env.viewpoints.items()}
    return Environment(env.scan_id, vps, env.granularity)


def render(env, vid, heading, **kw):
    return render_observation(compose_observation(env, AgentState(vid, heading), **kw))


# -- filter_objects --------------------------------------------------------

@pytest.mark.parametrize("depth,kept", [(2.5, True), (3.5, False), (3.0, True), (3.0000001, False)])
def test_filter_radius(depth, kept):
    o = ObjectAnnotation("box", 0, 0, depth)
    assert (filter_objects([o]) == [o]) is kept


def test_filter_stable_order_and_precondition():
    objs = [ObjectAnnotation(c, 0, 0, d) for c, d in [("a", 1), ("b", 9), ("c", 2), ("d", 3)]]
    assert [o.class_name for o in filter_objects(objs)] == ["a", "c", "d"]
    with pytest.raises(ValueError):
        filter_objects(objs, 0)


def test_default_radius_is_three_meters():
    assert OBJECT_RADIUS_M == 3.0
    assert ObservationOptions().object_radius_m == 3.0


# -- summarize_direction ---------------------------------------------------

def stack(captions=("up", "down", "mid"), heading=90.0):
    return [ViewAnnotation(heading, e, c) for e, c in zip((30, -30, 0), captions)]


def test_summarize_identical_captions_single_call():
    be = Counting()
    out = summarize_direction(stack(("a bedroom",) * 3), be)
    assert len(be.prompts) == 1
    assert be.prompts[0].count("a bedroom") == 3
    assert out.summary == "a quiet room." and out.heading_deg == 90


def test_summarize_orders_top_down_middle():
    be = Counting()
    summarize_direction(stack(("TOP", "DOWN", "MID")), be)
    assert "TOP\nDOWN\nMID" in be.prompts[0]


def test_summarize_echo_is_verbatim_template():
    out = summarize_direction(stack(("t", "d", "m")), EchoBackend())
    assert out.summary == DIRECTION_SUMMARY_TEMPLATE.replace("{description}", "t\nd\nm")


def test_summarize_blank_and_arity():
    with pytest.raises(EmptySummary):
        summarize_direction(stack(), Counting("  \n"))
    with pytest.raises(ValidationError):
        summarize_direction(stack()[:2], Counting())


def test_stored_summaries_bypass_backend(grid3):
    be = Counting()
    compose_observation(grid3, AgentState("vp_1_1", 0), summarizer=be, cache=DirectionSummaryCache())
    assert be.prompts == []


def test_missing_summaries_without_summarizer(grid3):
    env = strip_summaries(grid3)
    with pytest.raises(MissingSummaries):
        compose_observation(env, AgentState("vp_1_1", 0))


def test_cache_single_flight_under_threads(grid3):
    env = strip_summaries(grid3)
    be = Counting(delay=0.01)
    cache = DirectionSummaryCache()
    threads = [threading.Thread(target=compose_observation, args=(env, AgentState("vp_0_0", 0), be),
                                kwargs={"cache": cache}) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(be.prompts) == 8  # one per heading, not per thread
    assert cache.misses == 8


# -- compose / render ------------------------------------------------------

def test_center_front_block(grid3):
    obs = compose_observation(grid3, AgentState("vp_1_1", 0))
    front = obs.blocks[0]
    assert front.sector.label == "front"
    assert front.summary == grid3.viewpoint("vp_1_1").stored_summary(0)
    assert [c.viewpoint_id for c in front.candidates] == ["vp_2_1"]
    assert front.candidates[0].distance_m == pytest.approx(2.0)
    assert [b.sector.label for b in obs.blocks] == [
        "front", "front right", "right", "rear right", "rear", "rear left", "left", "front left"]


def test_heading_90_rotates_two_sectors(grid3):
    a = compose_observation(grid3, AgentState("vp_1_1", 0)).blocks
    b = compose_observation(grid3, AgentState("vp_1_1", 90)).blocks
    for i in range(8):
        assert b[i].summary == a[(i + 2) % 8].summary
        assert [c.viewpoint_id for c in b[i].candidates] == [c.viewpoint_id for c in a[(i + 2) % 8].candidates]


def test_off_grid_heading_snaps(grid3):
    assert render(grid3, "vp_1_1", 20) == render(grid3, "vp_1_1", 0)
    assert compose_observation(grid3, AgentState("vp_1_1", 23)).front_heading_deg == 45


def test_isolated_viewpoint():
    env = generate_synthetic_grid(1, 1, 2.0, 0)
    obs = compose_observation(env, AgentState("vp_0_0", 0))
    assert len(obs.blocks) == 8
    assert obs.candidate_ids == ()
    assert all(not b.candidates for b in obs.blocks)
    text = render_observation(obs)
    assert text.count("candidates: nothing notable") == 8
    assert text.endswith("Candidate viewpoint IDs: []\n")


def test_unknown_viewpoint(grid3):
    with pytest.raises(UnknownViewpoint):
        compose_observation(grid3, AgentState("nope", 0))


def test_range_formatting():
    env = make_env({"a": (0, 0, 0), "b": (0, 2.25, 0)}, [("a", "b")])
    assert "navigable viewpoint b, range 2.25 m" in render(env, "a", 0)


def test_objects_rendered_with_and_without_depth():
    objs = {"a": [ObjectAnnotation("lamp", 90, 0, 1.5), ObjectAnnotation("piano", 90, 0, 4.0)]}
    env = make_env({"a": (0, 0, 0)}, [], objects=objs)
    text = render(env, "a", 0)
    assert "objects: lamp, 1.50 meters away" in text
    assert "piano" not in text
    plain = render(env, "a", 0, options=ObservationOptions(include_depth=False))
    assert "objects: lamp\n" in plain
    hidden = render(env, "a", 0, options=ObservationOptions(include_objects=False))
    assert "objects:" not in hidden


def test_different_candidates_different_text():
    e1 = make_env({"a": (0, 0, 0), "b": (0, 1, 0), "c": (1, 0, 0)}, [("a", "b")])
    e2 = make_env({"a": (0, 0, 0), "b": (0, 1, 0), "c": (1, 0, 0)}, [("a", "c")])
    assert render(e1, "a", 0) != render(e2, "a", 0)


def test_split_and_extract(grid3):
    text = render(grid3, "vp_0_0", 0)
    blocks = split_blocks(text)
    assert [h for h, _ in blocks][:2] == ["front", "front right"]
    assert len(blocks) == 8
    assert extract_candidate_ids(text) == ["vp_0_1", "vp_1_0"]


def test_render_is_deterministic(grid3):
    assert render(grid3, "vp_1_2", 135) == render(grid3, "vp_1_2", 135)


def test_golden_center_observation(grid3):
    golden = (GOLDEN / "observation_grid3_center.txt").read_text(encoding="utf-8")
    assert render(grid3, "vp_1_1", 0) == golden


@pytest.mark.parametrize("preset", ["fov60x12", "fov30x36"])
def test_other_granularities_give_heading_count_blocks(preset):
    gran = GRANULARITY_PRESETS[preset]
    env = generate_synthetic_grid(3, 3, 2.0, 0, gran)
    obs = compose_observation(env, AgentState("vp_1_1", 0))
    assert len(obs.blocks) == gran.headings
    assert obs.blocks[0].candidates[0].viewpoint_id == "vp_2_1"


# -- properties ------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.integers(2, 5), st.integers(2, 5), st.floats(0, 359.99))
def test_every_neighbor_exactly_once(seed, rows, cols, heading):
    env = generate_synthetic_grid(rows, cols, 1.5, seed)
    for vid in env.viewpoints:
        obs = compose_observation(env, AgentState(vid, heading))
        ids = [c.viewpoint_id for c in obs.candidates]
        assert sorted(ids) == sorted(env.neighbors(vid))
        assert all(c.distance_m > 0 for c in obs.candidates)
        for b in obs.blocks:
            assert all(o.depth_m <= 3.0 for o in b.objects)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 50))
def test_no_far_object_is_rendered(seed):
    env = generate_synthetic_grid(3, 3, 2.0, seed)
    for vid, vp in env.viewpoints.items():
        text = render(env, vid, 0)
        for o in vp.objects:
            if o.depth_m > 3.0:
                assert f"{o.class_name}, {o.depth_m:.2f} meters away" not in text
