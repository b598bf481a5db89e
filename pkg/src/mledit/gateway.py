"""Model gateway: generation and embedding backends behind small protocols.

The scripted mock backends are fully deterministic and are what the test and
acceptance suites run against; the remote backends speak the HTTP contracts
(POST /generate, /embed, /classify) with retries, timeouts, bearer
pass-through, and a bounded in-flight limit.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TypeVar

import numpy as np
import requests

from .errors import ConfigurationError, TransportError, ValidationError
from .kb import LanguageCode, normalize_text
from .prompting import ParseError, parse_blocks

DEFAULT_TIMEOUT_S = 30.0
DEFAULT_MAX_INFLIGHT = 8
RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 0.5  # doubles per attempt

# Synthetic per-character latency of the mock backend. Reported, never slept;
# keeps timing tables monotone in prompt length without slowing the suite.
MOCK_LATENCY_PER_CHAR_S = 1e-5


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_new_tokens: int = 64
    stop_sequences: tuple[str, ...] = ()
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.max_new_tokens < 1:
            raise ValidationError("max_new_tokens must be >= 1")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    latency_s: float
    backend: str


@dataclass
class MockScript:
    """Scripted behavior for the mock model.

    base_answers maps (language, normalized question) to the model's pre-edit
    answer. Generation-time lookups key on the normalized question alone (a
    prompt carries no language tag); the first script entry wins if two
    languages share the exact same question text.
    """

    base_answers: dict[tuple[LanguageCode, str], str] = field(default_factory=dict)
    overlap_floor: float = 0.5
    default_answer: str = "unknown"

    def __post_init__(self) -> None:
        if not (0.0 <= self.overlap_floor <= 1.0):
            raise ConfigurationError("overlap_floor must lie in [0, 1]")
        self.base_answers = {
            (LanguageCode.parse(lang), normalize_text(q)): a
            for (lang, q), a in self.base_answers.items()
        }
        self._by_question: dict[str, str] = {}
        for (_, q), a in self.base_answers.items():
            self._by_question.setdefault(q, a)

    def lookup(self, query: str) -> str | None:
        return self._by_question.get(normalize_text(query))

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigurationError(f"cannot read mock script: {exc}") from None
        answers = {
            (LanguageCode.parse(row["lang"]), str(row["question"])): str(row["answer"])
            for row in obj.get("base_answers", [])
        }
        return cls(
            base_answers=answers,
            overlap_floor=float(obj.get("overlap_floor", 0.5)),
            default_answer=str(obj.get("default_answer", "unknown")),
        )

    def to_file(self, path: str | Path) -> None:
        payload = {
            "base_answers": [
                {"lang": lang.value, "question": q, "answer": a}
                for (lang, q), a in self.base_answers.items()
            ],
            "overlap_floor": self.overlap_floor,
            "default_answer": self.default_answer,
        }
        Path(path).write_text(
            json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )


def _token_overlap(fact_question: str, query: str) -> float:
    """|distinct shared tokens| / |distinct query tokens| after normalization."""
    query_tokens = set(normalize_text(query).split())
    if not query_tokens:
        return 0.0
    fact_tokens = set(normalize_text(fact_question).split())
    return len(fact_tokens & query_tokens) / len(query_tokens)


def _apply_output_limits(text: str, req: GenerationRequest) -> str:
    for stop in req.stop_sequences:
        if stop:
            cut = text.find(stop)
            if cut >= 0:
                text = text[:cut]
    words = text.split(" ")
    if len(words) > req.max_new_tokens:
        text = " ".join(words[: req.max_new_tokens])
    return text


class MockGenerationBackend:
    """Deterministic stand-in for the language model.

    The prompt is parsed back into blocks. If any injected fact's question
    overlaps the final query by at least overlap_floor, the best-overlapping
    fact's answer is returned (ties break to the first fact); otherwise the
    scripted base answer for the query, and failing that the default answer.
    Unparseable prompts are treated as a bare query.
    """

    name = "mock"

    def __init__(self, script: MockScript | None = None):
        self.script = script or MockScript()

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        try:
            parsed = parse_blocks(req.prompt)
            query, facts = parsed.query, parsed.facts
        except ParseError:
            query, facts = req.prompt, ()
        best_answer: str | None = None
        best_overlap = -1.0
        for fact in facts:
            overlap = _token_overlap(fact.question, query)
            if overlap > best_overlap:
                best_overlap = overlap
                best_answer = fact.answer
        if best_answer is not None and best_overlap >= self.script.overlap_floor:
            text = best_answer
        else:
            text = self.script.lookup(query)
            if text is None:
                text = self.script.default_answer
        return GenerationResponse(
            text=_apply_output_limits(text, req),
            latency_s=len(req.prompt) * MOCK_LATENCY_PER_CHAR_S,
            backend=self.name,
        )


class RemoteGenerationBackend:
    """HTTP generation endpoint: POST {prompt, max_new_tokens, stop,
    temperature} -> {text}. Bounded concurrent in-flight requests."""

    def __init__(
        self,
        url: str,
        token: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
    ):
        self.url = url
        self.timeout_s = timeout_s
        self.name = f"remote:{url}"
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._gate = threading.BoundedSemaphore(max_inflight)

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        payload = {
            "prompt": req.prompt,
            "max_new_tokens": req.max_new_tokens,
            "stop": list(req.stop_sequences),
            "temperature": req.temperature,
        }
        start = time.monotonic()
        with self._gate:
            obj = _post_json(self.url, payload, self._headers, self.timeout_s, stage="generate")
        if "text" not in obj:
            raise TransportError(
                f"generation endpoint returned no text field: {obj!r}", stage="generate"
            )
        return GenerationResponse(
            text=str(obj["text"]), latency_s=time.monotonic() - start, backend=self.name
        )


def _post_json(
    url: str, payload: dict, headers: dict, timeout_s: float, *, stage: str
) -> dict:
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout_s)
    except requests.RequestException as exc:
        raise TransportError(f"{stage} request failed: {exc}", stage=stage) from None
    if resp.status_code != 200:
        raise TransportError(
            f"{stage} endpoint returned HTTP {resp.status_code}", stage=stage
        )
    try:
        return resp.json()
    except ValueError as exc:
        raise TransportError(f"{stage} endpoint returned non-JSON: {exc}", stage=stage) from None


_T = TypeVar("_T")


def _with_retries(
    fn: Callable[[], _T],
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff_s: float = RETRY_BACKOFF_S,
    sleep: Callable[[float], None] = time.sleep,
) -> _T:
    delay = backoff_s
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except TransportError:
            if attempt == attempts:
                raise
            sleep(delay)
            delay *= 2
    raise AssertionError("unreachable")  # pragma: no cover


def generate(
    req: GenerationRequest,
    backend,
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff_s: float = RETRY_BACKOFF_S,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationResponse:
    """Run one generation with transport retries (3 attempts, 2x backoff)."""
    return _with_retries(
        lambda: backend.generate(req), attempts=attempts, backoff_s=backoff_s, sleep=sleep
    )


# --------------------------------------------------------------------------
# Embedding providers


def _hash_unit_vector(seed: int, text: str, dim: int) -> np.ndarray:
    """Platform-independent pseudo-random unit vector for unseen text."""
    key = f"{seed}|{text}".encode("utf-8")
    raw: list[int] = []
    counter = 0
    while len(raw) < dim:
        digest = hashlib.sha256(key + b"|" + counter.to_bytes(4, "big")).digest()
        raw.extend(
            int.from_bytes(digest[i : i + 8], "big") for i in range(0, len(digest), 8)
        )
        counter += 1
    arr = np.array(raw[:dim], dtype=np.float64) / float(2**63) - 1.0
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:  # pragma: no cover - astronomically unlikely
        arr[0] = 1.0
        norm = 1.0
    return arr / norm


def _as_vector(value, dim: int, *, what: str) -> np.ndarray:
    vec = np.asarray(value, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != dim:
        raise ConfigurationError(f"{what}: expected a vector of dimension {dim}, got {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ConfigurationError(f"{what}: vector contains non-finite values")
    return vec


class FixtureEmbedder:
    """Deterministic embedder backed by a normalized-text fixture map.

    Unseen text falls back to a seeded hash-derived unit vector, so any text
    embeds to the same vector on every call, process, and platform.
    """

    def __init__(
        self,
        dim: int | None = None,
        fixture: dict[str, Sequence[float]] | str | Path | None = None,
        seed: int = 0,
    ):
        if isinstance(fixture, (str, Path)):
            try:
                fixture = json.loads(Path(fixture).read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigurationError(f"cannot read embedding fixture: {exc}") from None
        table: dict[str, np.ndarray] = {}
        if fixture:
            for text, value in fixture.items():
                vec = np.asarray(value, dtype=np.float64)
                if dim is None:
                    dim = int(vec.shape[0])
                table[normalize_text(text)] = _as_vector(vec, dim, what=f"fixture[{text!r}]")
        self.dim = int(dim if dim is not None else 32)
        if self.dim < 1:
            raise ConfigurationError("embedding dimension must be >= 1")
        self.seed = seed
        self._table = table
        self._fallback_cache: dict[str, np.ndarray] = {}

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for text in texts:
            key = normalize_text(str(text))
            vec = self._table.get(key)
            if vec is None:
                vec = self._fallback_cache.get(key)
                if vec is None:
                    vec = _hash_unit_vector(self.seed, key, self.dim)
                    self._fallback_cache[key] = vec
            out.append(vec)
        return out


class RemoteEmbedder:
    """HTTP embedding endpoint: POST {texts} -> {vectors}."""

    def __init__(
        self,
        url: str,
        dim: int | None = None,
        token: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ):
        self.url = url
        self.dim = dim or 0  # learned from the first response when unset
        self.timeout_s = timeout_s
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        obj = _post_json(
            self.url, {"texts": list(texts)}, self._headers, self.timeout_s, stage="embed"
        )
        vectors = obj.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise TransportError(
                "embed endpoint returned a vector count mismatch", stage="embed"
            )
        if not self.dim and vectors:
            self.dim = len(vectors[0])
        return [_as_vector(v, self.dim, what="remote embedding") for v in vectors]


class RemoteClassifier:
    """HTTP pair classifier: POST {pairs: [{a, b}]} -> {probabilities}.

    The service encodes each pair as "a {separator} b"; the separator travels
    with the request so both sides agree on the contract.
    """

    def __init__(
        self,
        url: str,
        pair_separator: str = "</s>",
        token: str | None = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
    ):
        self.url = url
        self.pair_separator = pair_separator
        self.timeout_s = timeout_s
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}

    def classify_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        payload = {
            "pairs": [{"a": a, "b": b} for a, b in pairs],
            "separator": self.pair_separator,
        }
        obj = _post_json(self.url, payload, self._headers, self.timeout_s, stage="classify")
        probs = obj.get("probabilities")
        if not isinstance(probs, list) or len(probs) != len(pairs):
            raise TransportError(
                "classifier endpoint returned a probability count mismatch", stage="classify"
            )
        return [float(p) for p in probs]


def embed_texts(
    texts: Sequence[str],
    backend,
    *,
    attempts: int = RETRY_ATTEMPTS,
    backoff_s: float = RETRY_BACKOFF_S,
    sleep: Callable[[float], None] = time.sleep,
) -> list[np.ndarray]:
    """Embed a non-empty batch with transport retries; validates that every
    vector is finite and that all vectors share one dimension."""
    if not texts:
        raise ValidationError("embed_texts requires a non-empty batch")
    vectors = _with_retries(
        lambda: backend.embed(list(texts)), attempts=attempts, backoff_s=backoff_s, sleep=sleep
    )
    if len(vectors) != len(texts):
        raise ConfigurationError("embedder returned a vector count mismatch")
    dim = int(np.asarray(vectors[0]).shape[0])
    return [_as_vector(v, dim, what=f"embedding[{i}]") for i, v in enumerate(vectors)]
