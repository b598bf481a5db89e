"""Gateway: the scripted mock, the fixture embedder, and the HTTP backends
exercised against a throwaway local server."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from mledit.errors import ConfigurationError, TransportError, ValidationError
from mledit.gateway import (
    MOCK_LATENCY_PER_CHAR_S,
    FixtureEmbedder,
    GenerationRequest,
    GenerationResponse,
    MockGenerationBackend,
    MockScript,
    RemoteClassifier,
    RemoteEmbedder,
    RemoteGenerationBackend,
    embed_texts,
    generate,
)
from mledit.kb import LanguageCode


def script_with(entries, **kwargs):
    answers = {(lang, q): a for lang, q, a in entries}
    return MockScript(base_answers=answers, **kwargs)


LOHLEIN_ZERO = (
    "New Fact: ¿Qué ciudad fue el lugar de nacimiento de Henning Löhlein? Munich\n"
    "Q: Which city was the birthplace of Henning Löhlein?\n"
    "A:"
)


class TestGenerationRequest:
    def test_rejects_bad_limits(self):
        with pytest.raises(ValidationError):
            GenerationRequest(prompt="x", max_new_tokens=0)
        with pytest.raises(ValidationError):
            GenerationRequest(prompt="x", temperature=-0.5)


class TestMockScript:
    def test_keys_are_normalized(self):
        script = script_with([(LanguageCode.EN, "  Who IS it? ", "Ed Roland")])
        assert script.lookup("who is it") == "Ed Roland"

    def test_first_entry_wins_on_shared_question_text(self):
        script = MockScript(
            base_answers={
                (LanguageCode.EN, "same?"): "first",
                (LanguageCode.ES, "same?"): "second",
            }
        )
        assert script.lookup("same?") == "first"

    def test_file_round_trip(self, tmp_path):
        script = script_with(
            [(LanguageCode.ZH, "慕尼黑在哪里。", "德国")],
            overlap_floor=0.2,
            default_answer="不知道",
        )
        path = tmp_path / "script.json"
        script.to_file(path)
        loaded = MockScript.from_file(path)
        assert loaded.lookup("慕尼黑在哪里") == "德国"
        assert loaded.overlap_floor == 0.2 and loaded.default_answer == "不知道"

    def test_overlap_floor_validated(self):
        with pytest.raises(ConfigurationError):
            MockScript(overlap_floor=1.5)


class TestMockGeneration:
    def test_fact_overlap_answers_the_fact(self):
        backend = MockGenerationBackend(MockScript(overlap_floor=0.2))
        out = backend.generate(GenerationRequest(prompt=LOHLEIN_ZERO))
        assert out.text == "Munich"

    def test_passthrough_uses_base_answers(self):
        script = script_with(
            [(LanguageCode.EN, "Who is the lead singer of collective soul?", "Ed Roland")]
        )
        out = MockGenerationBackend(script).generate(
            GenerationRequest(prompt="Who is the lead singer of collective soul?")
        )
        assert out.text == "Ed Roland"

    def test_unknown_query_gets_default(self):
        backend = MockGenerationBackend(MockScript(default_answer="no idea"))
        assert backend.generate(GenerationRequest(prompt="what?")).text == "no idea"

    def test_below_floor_falls_back(self):
        prompt = "New Fact: completely unrelated words here? yes\nQ: what is the answer\nA:"
        backend = MockGenerationBackend(MockScript(overlap_floor=0.9, default_answer="dunno"))
        assert backend.generate(GenerationRequest(prompt=prompt)).text == "dunno"

    def test_floor_boundary_is_inclusive(self):
        # query tokens {a, b}; fact shares exactly one -> overlap 0.5
        prompt = "New Fact: a x? yes\nQ: a b\nA:"
        backend = MockGenerationBackend(MockScript(overlap_floor=0.5))
        assert backend.generate(GenerationRequest(prompt=prompt)).text == "yes"

    def test_tie_breaks_to_first_fact(self):
        prompt = (
            "New Fact: a b? first\n"
            "New Fact: a b? second\n"
            "Q: a b\n"
            "A:"
        )
        backend = MockGenerationBackend(MockScript(overlap_floor=0.5))
        assert backend.generate(GenerationRequest(prompt=prompt)).text == "first"

    def test_unparseable_prompt_treated_as_bare_query(self):
        # grammar markers without the closing tail: not renderable output,
        # so the whole text is looked up as a query
        broken = "New Fact: q? a\nnot a tail"
        script = script_with([(LanguageCode.EN, broken, "recovered")])
        backend = MockGenerationBackend(script)
        assert backend.generate(GenerationRequest(prompt=broken)).text == "recovered"

    def test_stop_sequences_and_token_cap(self):
        script = script_with([(LanguageCode.EN, "q", "one two three STOP four")])
        backend = MockGenerationBackend(script)
        out = backend.generate(GenerationRequest(prompt="q", stop_sequences=("STOP",)))
        assert out.text == "one two three "
        capped = backend.generate(GenerationRequest(prompt="q", max_new_tokens=2))
        assert capped.text == "one two"

    def test_latency_is_synthetic_and_monotone(self):
        backend = MockGenerationBackend(MockScript())
        short = backend.generate(GenerationRequest(prompt="ab"))
        long = backend.generate(GenerationRequest(prompt="ab" * 500))
        assert short.latency_s == pytest.approx(2 * MOCK_LATENCY_PER_CHAR_S)
        assert long.latency_s > short.latency_s
        assert short.backend == "mock"

    def test_determinism_across_threads(self):
        backend = MockGenerationBackend(MockScript(overlap_floor=0.2))
        req = GenerationRequest(prompt=LOHLEIN_ZERO)
        results: list[str] = []

        def worker():
            for _ in range(20):
                results.append(backend.generate(req).text)

        threads = [threading.Thread(target=worker) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert set(results) == {"Munich"}


class TestFixtureEmbedder:
    def test_fixture_lookup_is_normalized(self):
        emb = FixtureEmbedder(fixture={"Who IS it?": [1.0, 0.0]})
        (vec,) = emb.embed(["who is it"])
        assert list(vec) == [1.0, 0.0]

    def test_unseen_text_is_deterministic_unit_vector(self):
        a = FixtureEmbedder(dim=16, seed=3)
        b = FixtureEmbedder(dim=16, seed=3)
        (va,) = a.embed(["never seen"])
        (vb,) = b.embed(["never seen"])
        assert np.array_equal(va, vb)
        assert np.linalg.norm(va) == pytest.approx(1.0)

    def test_seed_changes_fallback(self):
        (va,) = FixtureEmbedder(dim=16, seed=0).embed(["text"])
        (vb,) = FixtureEmbedder(dim=16, seed=1).embed(["text"])
        assert not np.array_equal(va, vb)

    def test_fixture_file_load(self, tmp_path):
        path = tmp_path / "emb.json"
        path.write_text(json.dumps({"hello": [0.0, 1.0, 0.0]}), encoding="utf-8")
        emb = FixtureEmbedder(fixture=path)
        assert emb.dim == 3
        (vec,) = emb.embed(["hello"])
        assert list(vec) == [0.0, 1.0, 0.0]

    def test_dim_mismatch_in_fixture_rejected(self):
        with pytest.raises(ConfigurationError):
            FixtureEmbedder(fixture={"a": [1.0, 0.0], "b": [1.0, 0.0, 0.0]})

    def test_non_finite_fixture_rejected(self):
        with pytest.raises(ConfigurationError):
            FixtureEmbedder(fixture={"a": [float("nan"), 0.0]})

    def test_embed_texts_requires_batch(self):
        with pytest.raises(ValidationError):
            embed_texts([], FixtureEmbedder(dim=4))


# --------------------------------------------------------------------------
# Local HTTP server for the remote backends


class _Handler(BaseHTTPRequestHandler):
    server_version = "test"
    seen: list[dict] = []
    flaky_failures_left = 0

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        record = {"path": self.path, "body": body, "auth": self.headers.get("Authorization")}
        type(self).seen.append(record)
        route = getattr(self, f"route_{self.path.strip('/').replace('-', '_')}", None)
        if route is None:
            self._reply(404, {})
            return
        route(body)

    def _reply(self, status, obj, raw: bytes | None = None):
        payload = raw if raw is not None else json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def route_generate(self, body):
        self._reply(200, {"text": f"echo:{body['prompt'][:20]}"})

    def route_embed(self, body):
        self._reply(200, {"vectors": [[float(len(t)), 1.0] for t in body["texts"]]})

    def route_classify(self, body):
        self._reply(200, {"probabilities": [0.9 for _ in body["pairs"]]})

    def route_flaky(self, body):
        cls = type(self)
        if cls.flaky_failures_left > 0:
            cls.flaky_failures_left -= 1
            self._reply(500, {"error": "transient"})
        else:
            self._reply(200, {"text": "finally"})

    def route_error(self, body):
        self._reply(503, {"error": "down"})

    def route_notjson(self, body):
        self._reply(200, {}, raw=b"<html>nope</html>")

    def route_nofield(self, body):
        self._reply(200, {"unexpected": True})


@pytest.fixture()
def http_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    _Handler.seen = []
    _Handler.flaky_failures_left = 0
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    thread.join()


class TestRemoteGeneration:
    def test_round_trip_and_bearer_header(self, http_server):
        backend = RemoteGenerationBackend(f"{http_server}/generate", token="sesame")
        out = generate(GenerationRequest(prompt="hello world"), backend)
        assert out.text == "echo:hello world"
        assert out.latency_s >= 0
        assert _Handler.seen[0]["auth"] == "Bearer sesame"
        assert _Handler.seen[0]["body"] == {
            "prompt": "hello world",
            "max_new_tokens": 64,
            "stop": [],
            "temperature": 0.0,
        }

    def test_retries_then_succeeds_with_doubling_backoff(self, http_server):
        _Handler.flaky_failures_left = 2
        backend = RemoteGenerationBackend(f"{http_server}/flaky")
        delays: list[float] = []
        out = generate(GenerationRequest(prompt="x"), backend, sleep=delays.append)
        assert out.text == "finally"
        assert delays == [0.5, 1.0]

    def test_attempts_exhausted_raises_transport(self, http_server):
        _Handler.flaky_failures_left = 99
        backend = RemoteGenerationBackend(f"{http_server}/flaky")
        delays: list[float] = []
        with pytest.raises(TransportError) as err:
            generate(GenerationRequest(prompt="x"), backend, sleep=delays.append)
        assert err.value.stage == "generate"
        assert delays == [0.5, 1.0]  # 3 attempts, 2 waits

    def test_http_error_maps_to_transport(self, http_server):
        backend = RemoteGenerationBackend(f"{http_server}/error")
        with pytest.raises(TransportError, match="503"):
            backend.generate(GenerationRequest(prompt="x"))

    def test_non_json_maps_to_transport(self, http_server):
        backend = RemoteGenerationBackend(f"{http_server}/notjson")
        with pytest.raises(TransportError, match="non-JSON"):
            backend.generate(GenerationRequest(prompt="x"))

    def test_missing_text_field_maps_to_transport(self, http_server):
        backend = RemoteGenerationBackend(f"{http_server}/nofield")
        with pytest.raises(TransportError, match="no text field"):
            backend.generate(GenerationRequest(prompt="x"))

    def test_unreachable_host_maps_to_transport(self):
        backend = RemoteGenerationBackend("http://127.0.0.1:9/generate", timeout_s=0.2)
        with pytest.raises(TransportError):
            backend.generate(GenerationRequest(prompt="x"))

    def test_inflight_limit_is_honored(self, http_server):
        inflight = {"now": 0, "peak": 0}
        lock = threading.Lock()
        original = _Handler.route_generate

        def slow_route(self, body):
            with lock:
                inflight["now"] += 1
                inflight["peak"] = max(inflight["peak"], inflight["now"])
            time.sleep(0.05)
            with lock:
                inflight["now"] -= 1
            original(self, body)

        _Handler.route_generate = slow_route
        try:
            backend = RemoteGenerationBackend(f"{http_server}/generate", max_inflight=2)
            threads = [
                threading.Thread(
                    target=lambda: backend.generate(GenerationRequest(prompt="x"))
                )
                for _ in range(6)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        finally:
            _Handler.route_generate = original
        assert inflight["peak"] <= 2


class TestRemoteEmbedder:
    def test_vectors_and_learned_dim(self, http_server):
        backend = RemoteEmbedder(f"{http_server}/embed")
        vectors = embed_texts(["ab", "abcd"], backend)
        assert [list(v) for v in vectors] == [[2.0, 1.0], [4.0, 1.0]]
        assert backend.dim == 2

    def test_count_mismatch_is_transport_error(self, http_server):
        backend = RemoteEmbedder(f"{http_server}/classify")  # wrong shape reply
        with pytest.raises(TransportError):
            backend.embed(["a", "b"])

    def test_declared_dim_mismatch_is_configuration_error(self, http_server):
        backend = RemoteEmbedder(f"{http_server}/embed", dim=5)
        with pytest.raises(ConfigurationError):
            backend.embed(["ab"])


class TestRemoteClassifier:
    def test_pairs_and_separator_travel_in_payload(self, http_server):
        backend = RemoteClassifier(f"{http_server}/classify", pair_separator="<sep>")
        probs = backend.classify_pairs([("a", "b"), ("c", "d")])
        assert probs == [0.9, 0.9]
        assert _Handler.seen[-1]["body"] == {
            "pairs": [{"a": "a", "b": "b"}, {"a": "c", "b": "d"}],
            "separator": "<sep>",
        }
