"""Cross-lingual fact retrieval.

Every stored question is scored against the query; the single best entry is
returned when its relatedness probability clears the threshold, otherwise
nothing is. Two scorer kinds share that contract: a reference scorer that maps
embedding cosine onto [0, 1], and a remote classifier that returns the
related-class probability for a sentence pair directly.

Also home to the retriever's training-pair construction, in-context example
selection, and the retrieval accuracy harness.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import ConfigurationError, ValidationError
from .kb import (
    KBSnapshot,
    KnowledgeBase,
    KnowledgeEntry,
    LanguageCode,
    ParallelRecord,
    TranslationPair,
    normalize_text,
)

EmbeddingVector = np.ndarray

REFERENCE_COSINE = "reference-cosine"
REMOTE_CLASSIFIER = "remote-classifier"

_DEFAULT_THRESHOLDS = {REFERENCE_COSINE: 0.75, REMOTE_CLASSIFIER: 0.5}


@runtime_checkable
class Embedder(Protocol):
    """Deterministic text-to-vector provider; all vectors share one dimension."""

    dim: int

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


@runtime_checkable
class PairClassifier(Protocol):
    """Remote pair scorer: related-class probability per (a, b) pair."""

    def classify_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]: ...


@dataclass(frozen=True)
class ScorerConfig:
    """How relatedness is scored and where the accept threshold sits.

    threshold=None picks the kind's default (0.75 for reference-cosine,
    0.5 for remote-classifier). pair_separator is the token the remote
    service places between the two sides of a pair.
    """

    kind: str = REFERENCE_COSINE
    threshold: float | None = None
    pair_separator: str = "</s>"

    def __post_init__(self) -> None:
        if self.kind not in _DEFAULT_THRESHOLDS:
            raise ConfigurationError(f"unknown scorer kind: {self.kind!r}")
        tau = self.effective_threshold
        if not (0.0 <= tau <= 1.0) or not math.isfinite(tau):
            raise ConfigurationError(f"threshold must lie in [0, 1], got {tau!r}")
        if self.kind == REMOTE_CLASSIFIER and not self.pair_separator:
            raise ConfigurationError("remote-classifier requires a non-empty pair_separator")

    @property
    def effective_threshold(self) -> float:
        return _DEFAULT_THRESHOLDS[self.kind] if self.threshold is None else self.threshold


@dataclass(frozen=True)
class RelevanceDecision:
    probability: float
    related: bool


@dataclass(frozen=True)
class ScoredFact:
    """The winning entry, its decision, and its index in the scanned store."""

    entry: KnowledgeEntry
    decision: RelevanceDecision
    index: int


@dataclass(frozen=True)
class QASide:
    lang: LanguageCode
    question: str
    answer: str


@dataclass(frozen=True)
class ExamplePair:
    """One in-context demonstration: aligned edit-language and test-language
    QA sides of the same record, with the test side's cosine to the query."""

    record_id: str
    edit_side: QASide
    test_side: QASide
    similarity: float


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    """Plain cosine in [-1, 1]; a zero vector contributes similarity 0."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    cos = float(np.dot(u, v) / (nu * nv))
    if not math.isfinite(cos):
        return cos  # poisoned input; callers validate and name the entry
    return max(-1.0, min(1.0, cos))


def cosine_probability(u: EmbeddingVector, v: EmbeddingVector) -> float:
    return (cosine_similarity(u, v) + 1.0) / 2.0


def _check_text(name: str, text: str) -> None:
    if not str(text).strip():
        raise ValidationError(f"{name} is empty")


def _decide(probability: float, tau: float) -> RelevanceDecision:
    if not math.isfinite(probability) or not (0.0 <= probability <= 1.0):
        raise ConfigurationError(f"scorer produced an out-of-range probability: {probability!r}")
    return RelevanceDecision(probability=probability, related=probability >= tau)


def score_pair(
    query: str,
    candidate: str,
    config: ScorerConfig,
    backend: Embedder | PairClassifier,
) -> RelevanceDecision:
    """Score one (query, candidate question) pair.

    reference-cosine expects an Embedder backend and maps cosine onto [0, 1]
    via (cos + 1) / 2; remote-classifier expects a PairClassifier and uses its
    probability as-is. related is probability >= threshold, boundary inclusive.
    """
    _check_text("query", query)
    _check_text("candidate", candidate)
    tau = config.effective_threshold
    if config.kind == REFERENCE_COSINE:
        if not isinstance(backend, Embedder):
            raise ConfigurationError("reference-cosine scoring needs an embedding backend")
        qv, cv = backend.embed([query, candidate])
        return _decide(cosine_probability(qv, cv), tau)
    if not isinstance(backend, PairClassifier):
        raise ConfigurationError("remote-classifier scoring needs a pair classifier backend")
    probs = backend.classify_pairs([(query, candidate)])
    return _decide(float(probs[0]), tau)


def _entries_of(kb: KnowledgeBase | KBSnapshot | Sequence[KnowledgeEntry]):
    if isinstance(kb, KnowledgeBase):
        return kb.entries()
    if isinstance(kb, KBSnapshot):
        return kb.entries
    return tuple(kb)


def _score_all(
    query: str,
    entries: Sequence[KnowledgeEntry],
    config: ScorerConfig,
    backend: Embedder | PairClassifier,
) -> list[float]:
    if config.kind == REFERENCE_COSINE:
        if not isinstance(backend, Embedder):
            raise ConfigurationError("reference-cosine scoring needs an embedding backend")
        vectors = backend.embed([query] + [e.question for e in entries])
        qv = vectors[0]
        probs = []
        for entry, vec in zip(entries, vectors[1:]):
            p = cosine_probability(qv, vec)
            if not math.isfinite(p):
                raise ConfigurationError(f"non-finite score for entry {entry.id}")
            probs.append(p)
        return probs
    if not isinstance(backend, PairClassifier):
        raise ConfigurationError("remote-classifier scoring needs a pair classifier backend")
    return [float(p) for p in backend.classify_pairs([(query, e.question) for e in entries])]


def retrieve(
    query: str,
    query_lang: LanguageCode | str,
    kb: KnowledgeBase | KBSnapshot | Sequence[KnowledgeEntry],
    config: ScorerConfig,
    backend: Embedder | PairClassifier,
) -> ScoredFact | None:
    """Scan the whole store, take the argmax probability (ties resolve to the
    lowest index), and return that entry only if it clears the threshold."""
    _check_text("query", query)
    LanguageCode.parse(query_lang)
    entries = _entries_of(kb)
    if not entries:
        return None
    probs = _score_all(query, entries, config, backend)
    best_idx = 0
    best_p = probs[0]
    for i in range(1, len(probs)):
        if probs[i] > best_p:
            best_p = probs[i]
            best_idx = i
    decision = _decide(best_p, config.effective_threshold)
    if not decision.related:
        return None
    return ScoredFact(entry=entries[best_idx], decision=decision, index=best_idx)


def build_training_pairs(
    corpus: Sequence[ParallelRecord],
    langs: tuple[LanguageCode | str, LanguageCode | str],
    negative_ratio: int = 1,
    seed: int = 0,
) -> list[TranslationPair]:
    """One related pair per record (its l1 and l2 questions) plus
    negative_ratio unrelated pairs per record, drawn uniformly (seeded) from
    other records' l2 questions. No unrelated pair ever repeats a related
    pair's text, so labels are sound by construction.
    """
    l1 = LanguageCode.parse(langs[0])
    l2 = LanguageCode.parse(langs[1])
    if negative_ratio < 0:
        raise ValidationError("negative_ratio must be >= 0")
    if len(corpus) < 2 and negative_ratio >= 1:
        raise ValidationError("need at least 2 records to draw unrelated pairs")
    positives_text = set()
    pairs: list[TranslationPair] = []
    for record in corpus:
        s = record.languages[l1].question
        t = record.languages[l2].question
        positives_text.add((normalize_text(s), normalize_text(t)))
        pairs.append(
            TranslationPair(
                source_lang=l1, source_text=s, target_lang=l2, target_text=t, label="related"
            )
        )
    rng = random.Random(seed)
    for i, record in enumerate(corpus):
        s = record.languages[l1].question
        s_norm = normalize_text(s)
        candidates = [
            j
            for j, other in enumerate(corpus)
            if j != i
            and (s_norm, normalize_text(other.languages[l2].question)) not in positives_text
        ]
        if negative_ratio and not candidates:
            raise ValidationError(
                f"record {record.record_id}: no usable unrelated partner exists"
            )
        for _ in range(negative_ratio):
            j = candidates[rng.randrange(len(candidates))]
            pairs.append(
                TranslationPair(
                    source_lang=l1,
                    source_text=s,
                    target_lang=l2,
                    target_text=corpus[j].languages[l2].question,
                    label="unrelated",
                )
            )
    return pairs


def select_examples(
    query: str,
    pool: Sequence[ParallelRecord],
    langs: tuple[LanguageCode | str, LanguageCode | str],
    q: int,
    embedder: Embedder,
    strategy: str = "search",
    seed: int = 0,
) -> list[ExamplePair]:
    """Pick q in-context demonstrations from the pool.

    search: rank the pool's test-language questions by cosine to the query and
    keep the top q, ordered ascending so the most similar pair sits last,
    adjacent to the query. random: q seeded draws without replacement.
    """
    test_lang = LanguageCode.parse(langs[0])
    edit_lang = LanguageCode.parse(langs[1])
    if q < 0:
        raise ValidationError("q must be >= 0")
    if q > len(pool):
        raise ValidationError(f"q={q} exceeds pool size {len(pool)}")
    if q == 0:
        return []
    if strategy not in ("search", "random"):
        raise ValidationError(f"unknown selection strategy: {strategy!r}")
    _check_text("query", query)
    vectors = embedder.embed([query] + [r.languages[test_lang].question for r in pool])
    qv = vectors[0]
    sims = [cosine_similarity(qv, v) for v in vectors[1:]]
    if strategy == "search":
        ranked = sorted(range(len(pool)), key=lambda i: (-sims[i], i))
        chosen = list(reversed(ranked[:q]))  # ascending similarity toward the query
    else:
        chosen = random.Random(seed).sample(range(len(pool)), q)
    out: list[ExamplePair] = []
    for i in chosen:
        record = pool[i]
        e = record.languages[edit_lang]
        t = record.languages[test_lang]
        out.append(
            ExamplePair(
                record_id=record.record_id,
                edit_side=QASide(lang=edit_lang, question=e.question, answer=e.answer),
                test_side=QASide(lang=test_lang, question=t.question, answer=t.answer),
                similarity=sims[i],
            )
        )
    return out


_PROBE_FIELDS = {
    "question": "question",
    "rephrase": "rephrased_question",
    "locality": "locality_question",
    "portability": "portability_question",
}

PROBE_KINDS = tuple(_PROBE_FIELDS)


def probe_text(record: ParallelRecord, probe: str, lang: LanguageCode) -> str:
    try:
        field_name = _PROBE_FIELDS[probe]
    except KeyError:
        raise ValidationError(f"unknown probe kind: {probe!r}") from None
    return getattr(record.languages[lang], field_name)


def build_kb_from_records(
    records: Sequence[ParallelRecord],
    edit_lang: LanguageCode | str,
    *,
    now_ms: int = 0,
) -> tuple[KnowledgeBase, dict[str, str]]:
    """Store every record's edit-language fact; map record_id -> entry id."""
    edit_lang = LanguageCode.parse(edit_lang)
    kb = KnowledgeBase()
    gold: dict[str, str] = {}
    for record in records:
        slice_ = record.languages[edit_lang]
        entry_id, _ = kb.upsert(edit_lang, slice_.question, slice_.answer, now_ms=now_ms)
        gold[record.record_id] = entry_id
    return kb, gold


def retrieval_accuracy(
    dataset: Sequence[ParallelRecord],
    probe: str,
    langs: tuple[LanguageCode | str, LanguageCode | str],
    config: ScorerConfig,
    backend: Embedder | PairClassifier,
    kb_records: Sequence[ParallelRecord] | None = None,
) -> float:
    """Fraction of probes with the correct retrieval outcome.

    The store holds every record's edit-language fact (kb_records defaults to
    the probed dataset). question/rephrase/portability probes are correct when
    the probed record's own entry comes back; locality probes are correct when
    nothing does.
    """
    test_lang = LanguageCode.parse(langs[0])
    edit_lang = LanguageCode.parse(langs[1])
    if probe not in _PROBE_FIELDS:
        raise ValidationError(f"unknown probe kind: {probe!r}")
    if not dataset:
        raise ValidationError("dataset is empty")
    kb, gold = build_kb_from_records(kb_records if kb_records is not None else dataset, edit_lang)
    snap = kb.snapshot()
    correct = 0
    for record in dataset:
        text = probe_text(record, probe, test_lang)
        hit = retrieve(text, test_lang, snap, config, backend)
        if probe == "locality":
            correct += hit is None
        else:
            correct += hit is not None and hit.entry.id == gold.get(record.record_id)
    return correct / len(dataset)
