"""Completion backends: a live chat-completion client and scripted stand-ins.

Scripted backends are pure functions of the prompt they receive (plus their
constructor arguments), so whole episodes replay byte-for-byte offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

from ._singleflight import SingleFlightCache
from .completion import Backend, CompletionRequest
from .env import Episode
from .errors import (
    AuthError, BackendError, BackendTimeoutError, MalformedResponse,
    NoCandidates, RateLimitExhausted, ReplayExhausted,
)
from .observation import extract_candidate_ids
from .prompts import DIRECTION_SUMMARY_TEMPLATE, parse_history_blocks

__all__ = [
    "Backend", "CompletionRequest", "BackendConfig", "ChatCompletionClient", "ResponseCache",
    "EchoBackend", "ReplayBackend", "OracleBackend", "RandomWalkerBackend",
    "ExtractiveSummarizer", "oracle_follower_respond", "random_walker_respond",
]

log = logging.getLogger(__name__)

API_KEY_ENV = "NAVGRAPH_API_KEY"


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = "https://api.openai.com/v1/chat/completions"
    model_name: str = "gpt-4"
    api_key: str | None = field(default=None, repr=False)
    timeout_s: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    cache_dir: str | None = None
    backoff_s: float = 1.0

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_file(cls, path, **overrides) -> "BackendConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        known = {"endpoint_url", "model_name", "timeout_s", "max_retries", "max_in_flight", "cache_dir", "backoff_s"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown backend config keys: {sorted(unknown)}")
        data.update(overrides)
        return cls(**data)

    def with_env_key(self) -> "BackendConfig":
        return BackendConfig(**{**self.__dict__, "api_key": os.environ.get(API_KEY_ENV)})


class ResponseCache:
    """Content-addressed on-disk cache: ``<sha256>.txt`` plus ``<sha256>.meta``."""

    def __init__(self, directory) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(request: CompletionRequest, model: str) -> str:
        blob = json.dumps(
            {"prompt": request.prompt, "temperature": request.temperature, "model": model},
            sort_keys=True, ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def get(self, key: str) -> str | None:
        path = self.directory / f"{key}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
        return None

    def put(self, key: str, text: str, request: CompletionRequest, model: str) -> None:
        meta = {
            "model": model,
            "temperature": request.temperature,
            "max_output_tokens": request.max_output_tokens,
            "stop_sequences": list(request.stop_sequences),
            "prompt_sha256": hashlib.sha256(request.prompt.encode("utf-8")).hexdigest(),
        }
        tmp = self.directory / f"{key}.txt.tmp"
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(self.directory / f"{key}.txt")
        (self.directory / f"{key}.meta").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


class ChatCompletionClient:
    """HTTP chat-completion client with retries, a concurrency cap and a disk cache.

    ``transport`` is passed straight to :class:`httpx.Client`; tests inject an
    ``httpx.MockTransport``. The API key only ever appears in the request header.
    """

    def __init__(
        self,
        config: BackendConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not config.api_key:
            raise AuthError(f"no API key: set {API_KEY_ENV}")
        self.config = config
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self._http = httpx.Client(transport=transport, timeout=config.timeout_s)
        self._cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self._flights: SingleFlightCache[str] = SingleFlightCache()
        self.network_calls = 0
        self._count_lock = threading.Lock()

    def __repr__(self) -> str:
        return f"ChatCompletionClient(endpoint={self.config.endpoint_url!r}, model={self.config.model_name!r})"

    def close(self) -> None:
        self._http.close()

    def complete(self, request: CompletionRequest) -> str:
        if self._cache is None:
            return self._call_with_retries(request)
        key = ResponseCache.key(request, self.config.model_name)
        # single-flight: identical concurrent requests share one network call
        return self._flights.get(key, lambda: self._cached_call(key, request))

    def _cached_call(self, key: str, request: CompletionRequest) -> str:
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        text = self._call_with_retries(request)
        self._cache.put(key, text, request, self.config.model_name)
        return text

    def _payload(self, request: CompletionRequest) -> dict:
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.stop_sequences:
            body["stop"] = list(request.stop_sequences)
        return body

    def _call_with_retries(self, request: CompletionRequest) -> str:
        last: BackendError | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self.config.backoff_s * 2 ** (attempt - 1))
            try:
                return self._call_once(request)
            except (BackendTimeoutError, RateLimitExhausted) as exc:
                last = exc
            except _Transient as exc:
                last = BackendError(str(exc))
            log.info("completion attempt %d failed: %s", attempt + 1, last)
        raise last

    def _call_once(self, request: CompletionRequest) -> str:
        headers = {"Authorization": f"Bearer {self.config.api_key}"}
        with self._semaphore:
            with self._count_lock:
                self.network_calls += 1
            try:
                resp = self._http.post(self.config.endpoint_url, json=self._payload(request), headers=headers)
            except httpx.TimeoutException as exc:
                raise BackendTimeoutError(f"request timed out after {self.config.timeout_s}s") from exc
            except httpx.TransportError as exc:
                raise _Transient(f"transport error: {type(exc).__name__}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429:
            raise RateLimitExhausted("rate limited (HTTP 429)")
        if resp.status_code >= 500:
            raise _Transient(f"server error (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise BackendError(f"request failed (HTTP {resp.status_code}): {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response body: {resp.text[:200]!r}") from exc
        if not isinstance(content, str):
            raise MalformedResponse(f"message content is {type(content).__name__}, not text")
        return content


class _Transient(Exception):
    pass


# -- scripted backends -----------------------------------------------------

class EchoBackend:
    def complete(self, request: CompletionRequest) -> str:
        return request.prompt


class ReplayBackend:
    """Replays recorded responses in order. Not shareable across episodes."""

    def __init__(self, responses: Sequence[str]) -> None:
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_transcript(cls, path) -> "ReplayBackend":
        responses = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    responses.append(json.loads(line)["response"])
        return cls(responses)

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise ReplayExhausted(f"transcript exhausted after {len(self._responses)} responses")
            text = self._responses[self._cursor]
            self._cursor += 1
        return text


def oracle_follower_respond(prompt: str, episode: Episode, step: int) -> str:
    path = episode.gt_path
    if step >= len(path) - 1:
        return ("Thought: I have reached the end of the described route, so the instruction is complete.\n"
                "Final Answer: Finished!")
    nxt = path[step + 1]
    return f"Thought: The instruction leads on to viewpoint {nxt}, so I will move there.\nAction: {nxt}"


class OracleBackend:
    """Follows the ground-truth path; the step index is read from the prompt's history."""

    def __init__(self, episode: Episode) -> None:
        self.episode = episode

    def complete(self, request: CompletionRequest) -> str:
        step = len(parse_history_blocks(request.prompt))
        return oracle_follower_respond(request.prompt, self.episode, step)


def random_walker_respond(prompt: str, seed: int, p_stop: float = 0.0) -> str:
    candidates = extract_candidate_ids(prompt)
    if not candidates:
        raise NoCandidates("prompt lists no candidate viewpoints")
    digest = hashlib.sha256(f"{seed}\x00{prompt}".encode("utf-8")).digest()
    rng = random.Random(int.from_bytes(digest[:16], "big"))
    if rng.random() < p_stop:
        return "Thought: I will stop here.\nFinal Answer: Stopped by random walker."
    choice = rng.choice(candidates)
    return f"Thought: Picking a random direction.\nAction: {choice}"


class RandomWalkerBackend:
    def __init__(self, seed: int, p_stop: float = 0.1) -> None:
        if not 0.0 <= p_stop <= 1.0:
            raise ValueError("p_stop must be in [0, 1]")
        self.seed = seed
        self.p_stop = p_stop

    def complete(self, request: CompletionRequest) -> str:
        return random_walker_respond(request.prompt, self.seed, self.p_stop)


_DESCRIPTION_RE = re.compile(r"Description:\n(.*)\n Summarization:", re.S)
_VIEWS_RE = re.compile(re.escape(DIRECTION_SUMMARY_TEMPLATE.split("{description}")[0]) + r"(.*)"
                       + re.escape(DIRECTION_SUMMARY_TEMPLATE.split("{description}")[1]), re.S)
_SCENE_RE = re.compile(r"^\s*scene:\s*(.+)$", re.M)


class ExtractiveSummarizer:
    """Offline summarizer: answers both summary templates from the prompt text alone.

    Viewpoint summaries return the front scene sentence; direction summaries
    return the first caption. Output is trimmed to ``max_words`` words.
    """

    def __init__(self, max_words: int = 24) -> None:
        self.max_words = max_words

    def complete(self, request: CompletionRequest) -> str:
        prompt = request.prompt
        text = None
        m = _DESCRIPTION_RE.search(prompt)
        if m:
            scene = _SCENE_RE.search(m.group(1))
            text = scene.group(1) if scene else m.group(1)
        else:
            m = _VIEWS_RE.search(prompt)
            if m:
                text = m.group(1).splitlines()[0]
        if text is None:
            text = prompt
        words = text.split()
        return " ".join(words[: self.max_words])

