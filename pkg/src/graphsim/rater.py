"""Perceived-similarity raters: an OpenAI-compatible vision endpoint or an offline mock."""

from __future__ import annotations

import base64
import json
import logging
import math
import os
import random
import re
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import httpx

from .features import FeatureProfile
from .graph import Graph
from .similarity import similarity_vector

log = logging.getLogger(__name__)

PROMPT_VERSION = "v1"
DEFAULT_MODEL = "gpt-4o-2024-08-06"
API_KEY_ENV = "GRAPHSIM_API_KEY"

CRITERIA = {
    "overall_structure": "overall structure",
    "substructures": "specific substructures or repeating patterns",
    "node_degrees": "node degrees",
    "edge_density": "edge density",
    "community_distribution": "community distribution",
}

PROMPT_TEMPLATE = """You are shown two node-link diagrams of undirected, unweighted graphs, drawn with a force-directed layout.
Rate how visually similar the two graphs are as a single number between 0 and 1, where 0 means completely different and 1 means identical.
Explain the basis for your rating using these five criteria:
(1) overall structure
(2) specific substructures or repeating patterns
(3) node degrees
(4) edge density
(5) community distribution
If any other features informed your judgement, describe them under "other".
Reply with a single JSON object and nothing else:
{"similarity": <number between 0 and 1>, "rationale": {"overall_structure": "...", "substructures": "...", "node_degrees": "...", "edge_density": "...", "community_distribution": "...", "other": "..."}}"""


class RaterError(Exception):
    pass


class UnparseableResponse(RaterError):
    pass


class OutOfRangeScore(RaterError):
    pass


class ConfigurationError(RaterError):
    pass


class TransportError(RaterError):
    """Retryable HTTP failure (connection errors, 429, 5xx)."""


class RatingFailed(RaterError):
    def __init__(self, pair_id: str, attempts: int, last_error: str):
        super().__init__(f"{pair_id}: gave up after {attempts} attempts ({last_error})")
        self.pair_id = pair_id
        self.attempts = attempts
        self.last_error = last_error


@dataclass(frozen=True)
class RatingRequest:
    pair_id: str
    image_a: Path
    image_b: Path
    prompt: str = PROMPT_TEMPLATE
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_retries: int = 5
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if Path(self.image_a) == Path(self.image_b):
            raise ValueError("a rating request needs two distinct images")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")


@dataclass(frozen=True)
class Rating:
    pair_id: str
    similarity: float
    rationale: dict[str, str]
    raw_response: str = ""
    latency: float = 0.0
    attempts: int = 1

    def __post_init__(self) -> None:
        if not 0.0 <= self.similarity <= 1.0:
            raise OutOfRangeScore(f"similarity {self.similarity} outside [0, 1]")


# -- prompt / parsing ----------------------------------------------------------


def _data_url(path: Path) -> str:
    return "data:image/png;base64," + base64.b64encode(Path(path).read_bytes()).decode("ascii")


def build_prompt(request: RatingRequest) -> dict:
    return {
        "model": request.model,
        "temperature": request.temperature,
        "response_format": {"type": "json_object"},
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt},
                    {"type": "image_url", "image_url": {"url": _data_url(request.image_a)}},
                    {"type": "image_url", "image_url": {"url": _data_url(request.image_b)}},
                ],
            }
        ],
    }


def payload_bytes(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


_FALLBACK = re.compile(r"similarity[^0-9\-]*?(-?\d+(?:\.\d+)?|\.\d+)", re.IGNORECASE)


def _scan_objects(text: str) -> Iterable[dict]:
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            yield obj


def parse_response(text: str) -> tuple[float, dict[str, str]]:
    """Extract ``(similarity, rationale)`` from a model reply.

    A JSON object carrying a ``similarity`` key wins (also when fenced or
    surrounded by prose); otherwise the first number after the word
    "similarity" is taken and the rationale is left empty.
    """
    if not text or not text.strip():
        raise UnparseableResponse("empty response")
    for obj in _scan_objects(text):
        if "similarity" not in obj:
            continue
        value = obj["similarity"]
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise UnparseableResponse(f"similarity has type {type(value).__name__}")
        try:
            score = float(value)
        except ValueError as exc:
            raise UnparseableResponse(f"similarity {value!r} is not a number") from exc
        rationale = obj.get("rationale") or {}
        if not isinstance(rationale, dict):
            rationale = {"other": str(rationale)}
        return _in_range(score), {str(k): str(v) for k, v in rationale.items()}
    match = _FALLBACK.search(text)
    if not match:
        raise UnparseableResponse("no similarity score found")
    return _in_range(float(match.group(1))), {}


def _in_range(score: float) -> float:
    if not math.isfinite(score) or not 0.0 <= score <= 1.0:
        raise OutOfRangeScore(f"similarity {score} outside [0, 1]")
    return score


# -- raters ----------------------------------------------------------------------


@dataclass(frozen=True)
class RatingItem:
    """Everything either rater may need for one pair."""

    pair_id: str
    graph_a: Graph
    graph_b: Graph
    image_a: Optional[Path] = None
    image_b: Optional[Path] = None
    profile_a: Optional[FeatureProfile] = None
    profile_b: Optional[FeatureProfile] = None


class Rater(ABC):
    name: str = "rater"
    prompt_version: str = PROMPT_VERSION

    @abstractmethod
    def rate(self, item: RatingItem) -> Rating:
        ...

    def rate_many(
        self,
        items: list[RatingItem],
        on_result: Callable[[RatingItem, Optional[Rating], Optional[Exception]], None],
    ) -> None:
        """Rate ``items`` in order; ``on_result`` is always called from this thread."""
        for item in items:
            try:
                rating = self.rate(item)
            except RaterError as exc:
                on_result(item, None, exc)
            else:
                on_result(item, rating, None)


def rate_pair_mock(
    g1: Graph,
    g2: Graph,
    pair_id: str = "",
    p1: Optional[FeatureProfile] = None,
    p2: Optional[FeatureProfile] = None,
) -> Rating:
    vec = similarity_vector(g1, g2, p1, p2)
    score = min(1.0, max(0.0, vec.mean()))
    rationale = {key: "mock" for key in CRITERIA}
    rationale["other"] = "mock"
    return Rating(pair_id, score, rationale, raw_response="", latency=0.0, attempts=1)


class MockRater(Rater):
    """Scores a pair with the arithmetic mean of its six measures."""

    name = "mock"
    prompt_version = "mock"

    def rate(self, item: RatingItem) -> Rating:
        return rate_pair_mock(item.graph_a, item.graph_b, item.pair_id, item.profile_a, item.profile_b)


@dataclass
class EndpointConfig:
    url: str = "https://api.openai.com/v1/chat/completions"
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    api_key_env: str = API_KEY_ENV
    rpm: float = 60.0
    concurrency: int = 4
    max_retries: int = 5
    timeout: float = 60.0
    backoff_base: float = 2.0
    cost_per_request_usd: float = 0.01

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise ConfigurationError(f"environment variable {self.api_key_env} is not set")
        return key


class RateLimiter:
    """Spaces request starts at least ``60/rpm`` seconds apart (thread safe)."""

    def __init__(self, rpm: float, clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        if rpm <= 0:
            raise ValueError("rpm must be positive")
        self.interval = 60.0 / rpm
        self._clock = clock
        self._sleep = sleep
        self._next = None
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            slot = now if self._next is None else max(now, self._next)
            self._next = slot + self.interval
        wait = slot - now
        if wait > 0:
            self._sleep(wait)


def _backoff(base: float, attempt: int, rng: random.Random) -> float:
    return base * 2 ** (attempt - 1) + rng.uniform(0, base / 2)


def rate_pair_live(
    request: RatingRequest,
    endpoint: EndpointConfig,
    client: httpx.Client,
    limiter: Optional[RateLimiter] = None,
    sleep: Callable[[float], None] = time.sleep,
    jitter: Optional[random.Random] = None,
) -> Rating:
    """Send one chat-completion request per attempt until a valid score parses."""
    key = endpoint.api_key()
    body = payload_bytes(build_prompt(request))
    headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
    jitter = jitter or random.Random(request.pair_id)
    last = "no attempt made"
    started = time.monotonic()
    for attempt in range(1, request.max_retries + 2):
        if attempt > 1:
            sleep(_backoff(endpoint.backoff_base, attempt - 1, jitter))
        if limiter is not None:
            limiter.acquire()
        try:
            resp = client.post(endpoint.url, content=body, headers=headers, timeout=request.timeout)
        except httpx.HTTPError as exc:
            last = f"transport: {exc}"
            log.warning("pair=%s attempt=%d transport error: %s", request.pair_id, attempt, exc)
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last = f"HTTP {resp.status_code}"
            log.warning("pair=%s attempt=%d status=%d", request.pair_id, attempt, resp.status_code)
            continue
        if resp.status_code >= 400:
            raise RatingFailed(request.pair_id, attempt, f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            text = resp.json()["choices"][0]["message"]["content"]
            score, rationale = parse_response(text)
        except (KeyError, IndexError, TypeError, ValueError, UnparseableResponse, OutOfRangeScore) as exc:
            last = f"parse: {exc}"
            log.warning("pair=%s attempt=%d unusable reply: %s", request.pair_id, attempt, exc)
            continue
        return Rating(request.pair_id, score, rationale, text, time.monotonic() - started, attempt)
    raise RatingFailed(request.pair_id, request.max_retries + 1, last)


class LiveRater(Rater):
    name = "live"

    def __init__(
        self,
        endpoint: EndpointConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        prompt: str = PROMPT_TEMPLATE,
        limiter: Optional[RateLimiter] = None,
    ):
        endpoint.api_key()  # fail before any request is built
        self.endpoint = endpoint
        self.prompt = prompt
        self._sleep = sleep
        self._client = httpx.Client(transport=transport)
        self._limiter = limiter or RateLimiter(endpoint.rpm)

    def close(self) -> None:
        self._client.close()

    def request_for(self, item: RatingItem) -> RatingRequest:
        if item.image_a is None or item.image_b is None:
            raise ConfigurationError(f"{item.pair_id}: live rating needs rendered PNG images")
        e = self.endpoint
        return RatingRequest(item.pair_id, item.image_a, item.image_b, self.prompt, e.model, e.temperature, e.max_retries, e.timeout)

    def rate(self, item: RatingItem) -> Rating:
        return rate_pair_live(self.request_for(item), self.endpoint, self._client, self._limiter, self._sleep)

    def rate_many(self, items, on_result) -> None:
        with ThreadPoolExecutor(max_workers=max(1, self.endpoint.concurrency)) as pool:
            futures = {pool.submit(self.rate, item): item for item in items}
            for fut in as_completed(futures):
                item = futures[fut]
                exc = fut.exception()
                if exc is None:
                    on_result(item, fut.result(), None)
                elif isinstance(exc, RaterError):
                    on_result(item, None, exc)
                else:
                    raise exc
