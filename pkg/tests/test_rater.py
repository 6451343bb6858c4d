import base64
import json
import random
import threading
import time

import httpx
import pytest

from graphsim.layout import RenderStyle, fr_layout, render_png
from graphsim.rater import (
    CRITERIA,
    PROMPT_TEMPLATE,
    ConfigurationError,
    EndpointConfig,
    LiveRater,
    MockRater,
    OutOfRangeScore,
    RateLimiter,
    Rating,
    RatingFailed,
    RatingItem,
    RatingRequest,
    UnparseableResponse,
    build_prompt,
    parse_response,
    payload_bytes,
    rate_pair_live,
    rate_pair_mock,
)
from graphsim.similarity import similarity_vector
from helpers import FIXTURES, path_graph, star_graph, triangle

KEY_ENV = "GRAPHSIM_TEST_KEY"


def fixture_body(name):
    return json.loads((FIXTURES / name).read_text())


def fixture_content(name):
    return fixture_body(name)["choices"][0]["message"]["content"]


@pytest.fixture
def images(tmp_path):
    style = RenderStyle(canvas=64)
    out = []
    for name, g in (("a", triangle()), ("b", path_graph(4))):
        p = tmp_path / f"{name}.png"
        p.write_bytes(render_png(g, fr_layout(g, 20, 0), style))
        out.append(p)
    return out


@pytest.fixture
def endpoint(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    return EndpointConfig(url="https://rater.invalid/v1/chat/completions", api_key_env=KEY_ENV,
                          rpm=60_000, max_retries=3, backoff_base=2.0)


class Recorder:
    """Instrumented fake transport replaying a scripted list of responses."""

    def __init__(self, script, delay=0.0):
        self.script = list(script)
        self.delay = delay
        self.requests = []
        self.starts = []
        self.inflight = 0
        self.max_inflight = 0
        self._lock = threading.Lock()

    def __call__(self, request: httpx.Request) -> httpx.Response:
        with self._lock:
            self.requests.append(request)
            self.starts.append(time.monotonic())
            self.inflight += 1
            self.max_inflight = max(self.max_inflight, self.inflight)
            step = self.script.pop(0) if len(self.script) > 1 else self.script[0]
        try:
            if self.delay:
                time.sleep(self.delay)
            if isinstance(step, Exception):
                raise step
            status, body = step
            return httpx.Response(status, json=body)
        finally:
            with self._lock:
                self.inflight -= 1

    def transport(self):
        return httpx.MockTransport(self)


# -- prompt --------------------------------------------------------------------


def test_prompt_names_every_criterion(images):
    for phrase in CRITERIA.values():
        assert phrase in PROMPT_TEMPLATE
    for phrase in ("overall structure", "specific substructures or repeating patterns", "node degrees",
                   "edge density", "community distribution"):
        assert phrase in PROMPT_TEMPLATE
    assert "between 0 and 1" in PROMPT_TEMPLATE
    assert "any other features" in PROMPT_TEMPLATE
    payload = build_prompt(RatingRequest("a|b", *images))
    assert payload["messages"][0]["content"][0]["text"] == PROMPT_TEMPLATE


def test_prompt_payload_shape_and_stability(images):
    req = RatingRequest("a|b", *images, temperature=0.0)
    payload = build_prompt(req)
    assert payload["model"] == req.model and payload["temperature"] == 0.0
    (msg,) = payload["messages"]
    assert msg["role"] == "user"
    parts = msg["content"]
    assert [p["type"] for p in parts] == ["text", "image_url", "image_url"]
    for part, path in zip(parts[1:], images):
        url = part["image_url"]["url"]
        assert url.startswith("data:image/png;base64,")
        assert base64.b64decode(url.split(",", 1)[1]) == path.read_bytes()
    assert payload_bytes(build_prompt(req)) == payload_bytes(payload)


def test_request_validation(images):
    with pytest.raises(ValueError):
        RatingRequest("a|a", images[0], images[0])
    with pytest.raises(ValueError):
        RatingRequest("a|b", *images, temperature=2.5)


# -- parsing -------------------------------------------------------------------


def test_parse_examples():
    score, rationale = parse_response('{"similarity": 0.75, "rationale": {"overall_structure": "x"}}')
    assert score == 0.75 and rationale == {"overall_structure": "x"}
    assert parse_response("I rate the similarity: 0.6 because...") == (0.6, {})
    assert parse_response("SIMILARITY = 1") == (1.0, {})
    with pytest.raises(OutOfRangeScore):
        parse_response('{"similarity": 1.5}')
    with pytest.raises(OutOfRangeScore):
        parse_response("similarity: -0.2")
    with pytest.raises(UnparseableResponse):
        parse_response("These look alike.")
    with pytest.raises(UnparseableResponse):
        parse_response('{"similarity": "high"}')
    with pytest.raises(UnparseableResponse):
        parse_response("   ")


@pytest.mark.parametrize(
    "name, score, has_rationale",
    [("chat_json.json", 0.75, True), ("chat_fenced.json", 0.42, True), ("chat_prose.json", 0.6, False)],
)
def test_parse_recorded_shapes(name, score, has_rationale):
    got, rationale = parse_response(fixture_content(name))
    assert got == score
    if has_rationale:
        assert set(CRITERIA) <= set(rationale)


def test_rating_rejects_out_of_range():
    with pytest.raises(OutOfRangeScore):
        Rating("p", 1.01, {})


# -- live protocol ---------------------------------------------------------------


@pytest.mark.parametrize("name, score", [("chat_json.json", 0.75), ("chat_fenced.json", 0.42), ("chat_prose.json", 0.6)])
def test_live_replay_of_recorded_bodies(images, endpoint, name, score):
    rec = Recorder([(200, fixture_body(name))])
    with httpx.Client(transport=rec.transport()) as client:
        rating = rate_pair_live(RatingRequest("a|b", *images), endpoint, client, sleep=lambda s: None)
    assert rating.similarity == score and rating.attempts == 1
    (req,) = rec.requests
    assert req.headers["authorization"] == "Bearer sk-test"
    body = json.loads(req.content)
    assert len(body["messages"][0]["content"]) == 3


def test_retry_on_429_then_success(images, endpoint):
    rec = Recorder([(429, {"error": "slow down"}), (429, {"error": "slow down"}), (200, fixture_body("chat_json.json"))])
    sleeps = []
    with httpx.Client(transport=rec.transport()) as client:
        rating = rate_pair_live(RatingRequest("a|b", *images), endpoint, client, sleep=sleeps.append,
                                jitter=random.Random(0))
    assert rating.attempts == 3 and len(rec.requests) == 3
    assert len(sleeps) == 2
    assert 2.0 <= sleeps[0] <= 3.0 and 4.0 <= sleeps[1] <= 5.0


def test_retry_on_server_error_and_transport_error(images, endpoint):
    rec = Recorder([(503, {}), httpx.ConnectError("boom"), (200, fixture_body("chat_prose.json"))])
    with httpx.Client(transport=rec.transport()) as client:
        rating = rate_pair_live(RatingRequest("a|b", *images), endpoint, client, sleep=lambda s: None)
    assert rating.attempts == 3 and rating.similarity == 0.6


def test_unparseable_replies_exhaust_retries(images, endpoint):
    rec = Recorder([(200, fixture_body("chat_out_of_range.json"))])
    req = RatingRequest("a|b", *images, max_retries=2)
    with httpx.Client(transport=rec.transport()) as client:
        with pytest.raises(RatingFailed) as info:
            rate_pair_live(req, endpoint, client, sleep=lambda s: None)
    assert len(rec.requests) == 3 and info.value.attempts == 3


def test_client_error_is_not_retried(images, endpoint):
    rec = Recorder([(401, {"error": "bad key"})])
    with httpx.Client(transport=rec.transport()) as client:
        with pytest.raises(RatingFailed):
            rate_pair_live(RatingRequest("a|b", *images), endpoint, client, sleep=lambda s: None)
    assert len(rec.requests) == 1


def test_missing_credential_sends_nothing(images, monkeypatch):
    monkeypatch.delenv(KEY_ENV, raising=False)
    rec = Recorder([(200, fixture_body("chat_json.json"))])
    ep = EndpointConfig(api_key_env=KEY_ENV)
    with pytest.raises(ConfigurationError):
        LiveRater(ep, transport=rec.transport())
    with httpx.Client(transport=rec.transport()) as client:
        with pytest.raises(ConfigurationError):
            rate_pair_live(RatingRequest("a|b", *images), ep, client)
    assert rec.requests == []


def test_rate_limiter_spacing_with_fake_clock():
    now = [100.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    lim = RateLimiter(rpm=120, clock=lambda: now[0], sleep=sleep)
    for _ in range(4):
        lim.acquire()
    assert waits == pytest.approx([0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        RateLimiter(0)


def _items(images, count):
    g1, g2 = triangle(), star_graph(3)
    return [RatingItem(f"p{i:02d}", g1, g2, images[0], images[1]) for i in range(count)]


def test_live_rater_respects_concurrency_and_rpm(images, endpoint):
    endpoint.concurrency = 3
    endpoint.rpm = 1200  # one request start every 50 ms
    rec = Recorder([(200, fixture_body("chat_json.json"))], delay=0.08)
    rater = LiveRater(endpoint, transport=rec.transport(), sleep=lambda s: None)
    results = []
    rater.rate_many(_items(images, 12), lambda item, rating, exc: results.append((item.pair_id, rating, exc)))
    rater.close()
    assert len(results) == 12 and all(r is not None for _, r, _ in results)
    assert rec.max_inflight <= 3
    assert rec.max_inflight >= 2  # the pool actually overlapped requests
    starts = sorted(rec.starts)
    gaps = [b - a for a, b in zip(starts, starts[1:])]
    assert min(gaps) >= 0.05 - 0.005
    # never more than rpm/60 * window requests in any one-second window
    for i, t in enumerate(starts):
        assert sum(1 for s in starts[i:] if s - t < 1.0) <= 20


def test_live_rater_reports_failures_per_pair(images, endpoint):
    endpoint.max_retries = 0
    rec = Recorder([(404, {})])
    rater = LiveRater(endpoint, transport=rec.transport(), sleep=lambda s: None)
    seen = []
    rater.rate_many(_items(images, 3), lambda item, rating, exc: seen.append((rating, exc)))
    assert len(seen) == 3 and all(r is None and isinstance(e, RatingFailed) for r, e in seen)


def test_live_rater_needs_images(endpoint):
    rater = LiveRater(endpoint, transport=Recorder([(200, {})]).transport())
    with pytest.raises(ConfigurationError):
        rater.rate(RatingItem("x|y", triangle(), triangle()))


# -- mock ----------------------------------------------------------------------


def test_mock_rater():
    g = star_graph(5)
    assert rate_pair_mock(g, g).similarity == 1.0
    a, b = triangle(), star_graph(3)
    r1, r2 = rate_pair_mock(a, b), rate_pair_mock(b, a)
    assert r1.similarity == r2.similarity
    vec = similarity_vector(a, b)
    parts = [vec.S, vec.D, vec.Nd, vec.Cc, vec.Bc, vec.Cm]
    assert r1.similarity == pytest.approx(sum(parts) / 6, abs=1e-15)
    assert set(r1.rationale.values()) == {"mock"}
    assert set(CRITERIA) | {"other"} == set(r1.rationale)
    assert MockRater().rate(RatingItem("t|s", a, b)) == rate_pair_mock(a, b, "t|s")
