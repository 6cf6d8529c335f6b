import json
import logging
import threading
import time
from collections import Counter

import httpx
import pytest

from navgraph.backends import (
    BackendConfig, ChatCompletionClient, EchoBackend, ExtractiveSummarizer, OracleBackend,
    RandomWalkerBackend, ReplayBackend, ResponseCache, oracle_follower_respond, random_walker_respond,
)
from navgraph.completion import Backend, CompletionRequest
from navgraph.env import Episode
from navgraph.errors import (
    AuthError, BackendError, BackendTimeoutError, MalformedResponse, NoCandidates,
    RateLimitExhausted, ReplayExhausted,
)
from navgraph.parsing import MoveTo, Stop, parse_response, validate_action
from navgraph.prompts import build_direction_summary_prompt, build_viewpoint_summary_prompt

SECRET = "sk-test-SECRET-0123456789"


def ok(text="Thought: t\nAction: B"):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def client(handler, tmp_path=None, **kw):
    cfg = BackendConfig(endpoint_url="https://llm.invalid/v1/chat/completions", api_key=SECRET,
                        cache_dir=str(tmp_path) if tmp_path else None, backoff_s=0.0, **kw)
    sleeps = []
    c = ChatCompletionClient(cfg, transport=httpx.MockTransport(handler), sleep=sleeps.append)
    return c, sleeps


REQ = CompletionRequest("hello")


# -- request validation ----------------------------------------------------

@pytest.mark.parametrize("kw", [{"prompt": ""}, {"prompt": "x", "temperature": float("nan")},
                                {"prompt": "x", "temperature": -1}, {"prompt": "x", "max_output_tokens": 0}])
def test_bad_requests(kw):
    with pytest.raises(ValueError):
        CompletionRequest(**kw)


def test_config_invariants(tmp_path):
    with pytest.raises(ValueError):
        BackendConfig(max_retries=-1)
    with pytest.raises(ValueError):
        BackendConfig(max_in_flight=0)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"model_name": "m", "max_in_flight": 2}))
    assert BackendConfig.from_file(p).max_in_flight == 2
    p.write_text(json.dumps({"api_key": "x"}))
    with pytest.raises(ValueError):
        BackendConfig.from_file(p)


def test_env_key(monkeypatch):
    monkeypatch.setenv("NAVGRAPH_API_KEY", SECRET)
    assert BackendConfig().with_env_key().api_key == SECRET


# -- live client with a fake transport -------------------------------------

def test_request_shape():
    seen = {}

    def handler(req):
        seen["auth"] = req.headers["authorization"]
        seen["body"] = json.loads(req.content)
        return ok("hi")

    c, _ = client(handler)
    assert c.complete(CompletionRequest("hello", 0.5, 64, ("\n\n",))) == "hi"
    assert seen["auth"] == f"Bearer {SECRET}"
    assert seen["body"] == {"model": "gpt-4", "messages": [{"role": "user", "content": "hello"}],
                            "temperature": 0.5, "max_tokens": 64, "stop": ["\n\n"]}


def test_missing_key():
    with pytest.raises(AuthError):
        ChatCompletionClient(BackendConfig(api_key=None))


def test_auth_error_not_retried():
    calls = []

    def handler(req):
        calls.append(1)
        return httpx.Response(401, json={"error": "bad key"})

    c, sleeps = client(handler)
    with pytest.raises(AuthError):
        c.complete(REQ)
    assert len(calls) == 1 and sleeps == []


def test_transient_then_success_with_backoff():
    replies = iter([httpx.Response(503), httpx.Response(500), ok("done")])
    cfg_client, sleeps = client(lambda req: next(replies), max_retries=3)
    cfg_client.config = BackendConfig(**{**cfg_client.config.__dict__, "backoff_s": 1.0})
    assert cfg_client.complete(REQ) == "done"
    assert sleeps == [1.0, 2.0]
    assert cfg_client.network_calls == 3


def test_server_error_exhausts():
    c, sleeps = client(lambda req: httpx.Response(502), max_retries=2)
    with pytest.raises(BackendError):
        c.complete(REQ)
    assert c.network_calls == 3 and len(sleeps) == 2


def test_rate_limit_exhausted():
    c, _ = client(lambda req: httpx.Response(429), max_retries=1)
    with pytest.raises(RateLimitExhausted):
        c.complete(REQ)
    assert c.network_calls == 2


def test_timeout():
    def handler(req):
        raise httpx.ReadTimeout("slow", request=req)

    c, _ = client(handler, max_retries=1)
    with pytest.raises(BackendTimeoutError) as exc:
        c.complete(REQ)
    assert isinstance(exc.value, TimeoutError)


def test_transport_error_retried():
    replies = iter([None, ok("back")])

    def handler(req):
        r = next(replies)
        if r is None:
            raise httpx.ConnectError("refused", request=req)
        return r

    c, _ = client(handler)
    assert c.complete(REQ) == "back"


@pytest.mark.parametrize("body", [b"not json", b"{}", b'{"choices": []}', b'{"choices": [{"message": {"content": 5}}]}'])
def test_malformed(body):
    c, _ = client(lambda req: httpx.Response(200, content=body))
    with pytest.raises(MalformedResponse):
        c.complete(REQ)


def test_credential_never_logged_or_serialized(tmp_path, caplog):
    replies = iter([httpx.Response(500), httpx.Response(401)])
    c, _ = client(lambda req: next(replies), tmp_path)
    with caplog.at_level(logging.DEBUG):
        with pytest.raises(AuthError) as exc:
            c.complete(REQ)
    assert SECRET not in caplog.text
    assert SECRET not in str(exc.value)
    assert SECRET not in repr(c) and SECRET not in repr(c.config)
    c2, _ = client(lambda req: ok(), tmp_path)
    c2.complete(REQ)
    for f in tmp_path.iterdir():
        assert SECRET not in f.read_text()


def test_cache_second_call_offline(tmp_path):
    c, _ = client(lambda req: ok("cached answer"), tmp_path)
    assert c.complete(REQ) == "cached answer"
    assert c.network_calls == 1
    assert c.complete(REQ) == "cached answer"
    assert c.network_calls == 1
    # a fresh client reads the disk entry
    c2, _ = client(lambda req: pytest.fail("network used"), tmp_path)
    assert c2.complete(REQ) == "cached answer"
    assert c2.network_calls == 0
    key = ResponseCache.key(REQ, "gpt-4")
    assert (tmp_path / f"{key}.txt").exists()
    meta = json.loads((tmp_path / f"{key}.meta").read_text())
    assert meta["model"] == "gpt-4" and meta["temperature"] == 0.0


def test_cache_key_depends_on_temperature_and_model():
    a = ResponseCache.key(CompletionRequest("p", 0.0), "m")
    assert a != ResponseCache.key(CompletionRequest("p", 0.7), "m")
    assert a != ResponseCache.key(CompletionRequest("p", 0.0), "n")


def test_failures_not_cached(tmp_path):
    replies = iter([httpx.Response(400), ok("second")])
    c, _ = client(lambda req: next(replies), tmp_path)
    with pytest.raises(BackendError):
        c.complete(REQ)
    assert c.complete(REQ) == "second"


def test_max_in_flight_respected():
    lock = threading.Lock()
    state = {"now": 0, "peak": 0}

    def handler(req):
        with lock:
            state["now"] += 1
            state["peak"] = max(state["peak"], state["now"])
        time.sleep(0.02)
        with lock:
            state["now"] -= 1
        return ok()

    c, _ = client(handler, max_in_flight=3)
    threads = [threading.Thread(target=c.complete, args=(CompletionRequest(f"p{i}"),)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert c.network_calls == 16
    assert 1 <= state["peak"] <= 3


def test_cache_single_flight(tmp_path):
    def handler(req):
        time.sleep(0.05)
        return ok("same")

    c, _ = client(handler, tmp_path, max_in_flight=8)
    out = []
    threads = [threading.Thread(target=lambda: out.append(c.complete(REQ))) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert out == ["same"] * 8
    assert c.network_calls == 1


# -- scripted backends -----------------------------------------------------

def test_backends_satisfy_protocol():
    ep = Episode(1, "s", "go", ("A", "B"))
    for b in (EchoBackend(), ReplayBackend([]), OracleBackend(ep), RandomWalkerBackend(0), ExtractiveSummarizer()):
        assert isinstance(b, Backend)


def test_echo():
    assert EchoBackend().complete(CompletionRequest("abc {x}")) == "abc {x}"


def test_replay_in_order_then_exhausted(tmp_path):
    r = ReplayBackend(["one", "two"])
    assert [r.complete(REQ), r.complete(REQ)] == ["one", "two"]
    with pytest.raises(ReplayExhausted):
        r.complete(REQ)
    p = tmp_path / "t.jsonl"
    p.write_text("".join(json.dumps({"response": s}) + "\n" for s in ["x", "y"]))
    r = ReplayBackend.from_transcript(p)
    assert r.complete(REQ) == "x" and r.complete(REQ) == "y"


def test_oracle_follower():
    ep = Episode(1, "s", "go", ("A", "B", "C"))
    first = oracle_follower_respond("p", ep, 0)
    assert parse_response(first).action == MoveTo("B")
    assert "Final Answer" in oracle_follower_respond("p", ep, 2)
    for step in range(3):
        d = validate_action(parse_response(oracle_follower_respond("p", ep, step)), ["A", "B", "C"])
        assert isinstance(d.action, MoveTo if step < 2 else Stop)


def cand_prompt(ids):
    return "front:\n  scene: x\n\nCandidate viewpoint IDs: [" + ", ".join(ids) + "]\n"


def test_random_walker_forced_and_deterministic():
    assert parse_response(random_walker_respond(cand_prompt(["only"]), 3)).action == MoveTo("only")
    p = cand_prompt(["a", "b", "c"])
    assert random_walker_respond(p, 9, 0.3) == random_walker_respond(p, 9, 0.3)
    with pytest.raises(NoCandidates):
        random_walker_respond("no list here", 0)
    with pytest.raises(ValueError):
        RandomWalkerBackend(0, p_stop=1.5)


def test_random_walker_uniform():
    ids = ["w", "x", "y", "z"]
    p = cand_prompt(ids)
    counts = Counter(parse_response(random_walker_respond(p, seed)).action.viewpoint_id for seed in range(10_000))
    for vid in ids:
        assert abs(counts[vid] / 10_000 - 0.25) <= 0.02


def test_random_walker_stop_rate():
    p = cand_prompt(["a", "b"])
    stops = sum(parse_response(random_walker_respond(p, s, 0.2)).is_stop for s in range(5000))
    assert abs(stops / 5000 - 0.2) < 0.03


def test_extractive_summarizer():
    s = ExtractiveSummarizer(max_words=4)
    vp = build_viewpoint_summary_prompt("front:\n  scene: a long corridor with many doors\n  objects: x")
    assert s.complete(CompletionRequest(vp)) == "a long corridor with"
    d = build_direction_summary_prompt(["top caption", "down caption", "mid caption"])
    assert s.complete(CompletionRequest(d)) == "top caption"
