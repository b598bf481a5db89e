"""Fact store and corpus model.

A knowledge base is an ordered collection of edited facts, one (language,
question, answer) triple per entry, unique per (language, normalized
question). Parallel corpus records carry the same QA material in all twelve
supported languages plus the probe fields used by the evaluation harness.

Persistence is line-delimited JSON: a header line holding the version
counter, then one entry object per line in insertion order. Headerless
files (entry lines only) load fine; their version is the entry count.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import FormatError, IngestError, ValidationError

# Sentence-terminal marks stripped by normalize_text. Internal occurrences
# ("St. Louis", "¿Qué...?") are untouched; only a trailing run is removed.
_TERMINAL_PUNCT = ".!?。"


class LanguageCode(str, Enum):
    """The twelve supported languages. Closed set; parsing is case-insensitive."""

    EN = "EN"
    CS = "CS"
    DE = "DE"
    NL = "NL"
    ES = "ES"
    FR = "FR"
    PT = "PT"
    RU = "RU"
    TH = "TH"
    TR = "TR"
    VI = "VI"
    ZH = "ZH"

    @classmethod
    def parse(cls, value: str | "LanguageCode") -> "LanguageCode":
        if isinstance(value, LanguageCode):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValidationError(f"unknown language code: {value!r}") from None


#: Languages that are written without spaces; token metrics go per-character.
CHARACTER_TOKENIZED = frozenset({LanguageCode.TH, LanguageCode.ZH})

ALL_LANGUAGES: tuple[LanguageCode, ...] = tuple(LanguageCode)


def normalize_text(text: str) -> str:
    """Canonical comparison form: casefold, collapse whitespace, strip a
    trailing run of sentence-terminal punctuation. Idempotent.
    """
    out = " ".join(text.casefold().split())
    while out and out[-1] in _TERMINAL_PUNCT:
        out = out[:-1].rstrip()
    return out


@dataclass(frozen=True)
class KnowledgeEntry:
    """One stored fact. created_at is a UTC epoch timestamp in milliseconds."""

    id: str
    lang: LanguageCode
    question: str
    answer: str
    created_at: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "lang": self.lang.value,
            "question": self.question,
            "answer": self.answer,
            "created_at": self.created_at,
        }


@dataclass(frozen=True)
class KBSnapshot:
    """Immutable point-in-time view handed to readers."""

    entries: tuple[KnowledgeEntry, ...]
    version: int


def _now_ms() -> int:
    return int(time.time() * 1000)


class KnowledgeBase:
    """Ordered fact store with single-writer mutation semantics.

    Mutations are serialized by an internal lock and bump a monotone version
    counter. Readers take snapshots; a snapshot never changes after the fact.
    """

    def __init__(self) -> None:
        self._entries: list[KnowledgeEntry] = []
        self._by_key: dict[tuple[LanguageCode, str], int] = {}
        self._version = 0
        self._id_counter = 1
        self._lock = threading.Lock()

    @property
    def version(self) -> int:
        return self._version

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[KnowledgeEntry]:
        return iter(self.entries())

    def entries(self) -> tuple[KnowledgeEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def snapshot(self) -> KBSnapshot:
        with self._lock:
            return KBSnapshot(entries=tuple(self._entries), version=self._version)

    def find(self, lang: LanguageCode | str, question: str) -> KnowledgeEntry | None:
        key = (LanguageCode.parse(lang), normalize_text(question))
        with self._lock:
            idx = self._by_key.get(key)
            return self._entries[idx] if idx is not None else None

    def get(self, entry_id: str) -> KnowledgeEntry | None:
        with self._lock:
            for entry in self._entries:
                if entry.id == entry_id:
                    return entry
        return None

    def _next_id(self) -> str:
        existing = {e.id for e in self._entries}
        while True:
            candidate = f"k{self._id_counter:06d}"
            self._id_counter += 1
            if candidate not in existing:
                return candidate

    def upsert(
        self,
        lang: LanguageCode | str,
        question: str,
        answer: str,
        *,
        now_ms: int | None = None,
    ) -> tuple[str, bool]:
        """Insert a fact, or replace the answer of the fact with the same
        (language, normalized question) key. Returns (entry id, replaced).
        """
        lang = LanguageCode.parse(lang)
        if not normalize_text(question):
            raise ValidationError("fact question is empty after normalization")
        if not normalize_text(answer):
            raise ValidationError("fact answer is empty after normalization")
        key = (lang, normalize_text(question))
        with self._lock:
            idx = self._by_key.get(key)
            if idx is not None:
                old = self._entries[idx]
                self._entries[idx] = KnowledgeEntry(
                    id=old.id,
                    lang=old.lang,
                    question=old.question,
                    answer=answer,
                    created_at=old.created_at,
                )
                self._version += 1
                return old.id, True
            entry = KnowledgeEntry(
                id=self._next_id(),
                lang=lang,
                question=question,
                answer=answer,
                created_at=_now_ms() if now_ms is None else now_ms,
            )
            self._entries.append(entry)
            self._by_key[key] = len(self._entries) - 1
            self._version += 1
            return entry.id, False

    def remove(self, entry_id: str) -> bool:
        """Delete a fact by id. Returns False if absent; deletion mutates version."""
        with self._lock:
            for idx, entry in enumerate(self._entries):
                if entry.id == entry_id:
                    del self._entries[idx]
                    self._by_key = {
                        (e.lang, normalize_text(e.question)): i
                        for i, e in enumerate(self._entries)
                    }
                    self._version += 1
                    return True
        return False

    def _restore(self, entries: list[KnowledgeEntry], version: int) -> None:
        with self._lock:
            self._entries = list(entries)
            self._by_key = {}
            for i, e in enumerate(self._entries):
                key = (e.lang, normalize_text(e.question))
                if key in self._by_key:
                    raise ValidationError(
                        f"duplicate fact key {key[0].value}/{key[1]!r} while restoring"
                    )
                self._by_key[key] = i
            self._version = version
            self._id_counter = 1


def upsert_fact(
    kb: KnowledgeBase,
    lang: LanguageCode | str,
    question: str,
    answer: str,
    *,
    now_ms: int | None = None,
) -> tuple[str, bool]:
    return kb.upsert(lang, question, answer, now_ms=now_ms)


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    """Write the store: one JSON object per line, version header first."""
    snap = kb.snapshot()
    lines = [json.dumps({"version": snap.version}, ensure_ascii=False)]
    lines.extend(json.dumps(e.to_dict(), ensure_ascii=False) for e in snap.entries)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_kb(path: str | Path) -> KnowledgeBase:
    """Read a store written by save_kb. An empty file yields an empty KB at
    version 0; a headerless file of entry lines gets version = entry count.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read store file {path}: {exc}") from None
    kb = KnowledgeBase()
    entries: list[KnowledgeEntry] = []
    seen: dict[tuple[LanguageCode, str], int] = {}
    version: int | None = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {line_no}: invalid JSON: {exc}", line_no=line_no) from None
        if not isinstance(obj, dict):
            raise FormatError(f"line {line_no}: expected an object", line_no=line_no)
        if line_no == 1 and "version" in obj and "id" not in obj:
            version = int(obj["version"])
            continue
        try:
            entry = KnowledgeEntry(
                id=str(obj["id"]),
                lang=LanguageCode.parse(obj["lang"]),
                question=str(obj["question"]),
                answer=str(obj["answer"]),
                created_at=int(obj["created_at"]),
            )
        except (KeyError, ValidationError, TypeError, ValueError) as exc:
            raise FormatError(f"line {line_no}: bad entry: {exc}", line_no=line_no) from None
        key = (entry.lang, normalize_text(entry.question))
        if key in seen:
            raise FormatError(
                f"line {line_no}: duplicate fact for {entry.lang.value}/"
                f"{normalize_text(entry.question)!r} (first at line {seen[key]})",
                line_no=line_no,
            )
        seen[key] = line_no
        entries.append(entry)
    kb._restore(entries, len(entries) if version is None else version)
    return kb


# --------------------------------------------------------------------------
# Parallel corpus model


_RECORD_FIELDS = (
    "question",
    "answer",
    "ground_truth",
    "rephrased_question",
    "locality_question",
    "locality_answer",
    "portability_question",
    "portability_answer",
)


@dataclass(frozen=True)
class MzsreRecord:
    """One language's slice of a parallel record.

    `answer` is the counterfactual edit target and must differ from
    `ground_truth`; only the locality pair may agree with its gold value.
    """

    lang: LanguageCode
    question: str
    answer: str
    ground_truth: str
    rephrased_question: str
    locality_question: str
    locality_answer: str
    portability_question: str
    portability_answer: str

    def validate(self, *, record_id: str = "?") -> None:
        for name in _RECORD_FIELDS:
            if not str(getattr(self, name)).strip():
                raise IngestError(
                    f"record {record_id}: empty field {name!r} for {self.lang.value}",
                    record_id=record_id,
                    field=name,
                )
        if normalize_text(self.answer) == normalize_text(self.ground_truth):
            raise IngestError(
                f"record {record_id}: answer equals ground_truth for {self.lang.value}; "
                "the edit target must be counterfactual",
                record_id=record_id,
                field="answer",
            )


@dataclass(frozen=True)
class ParallelRecord:
    """A record aligned across all twelve languages."""

    record_id: str
    languages: dict[LanguageCode, MzsreRecord] = field(hash=False)

    def validate(self) -> None:
        missing = [c.value for c in ALL_LANGUAGES if c not in self.languages]
        if missing:
            raise IngestError(
                f"record {self.record_id}: missing languages {', '.join(missing)}",
                record_id=self.record_id,
                field="languages",
            )
        extra = [c for c in self.languages if c not in ALL_LANGUAGES]
        if extra or len(self.languages) != len(ALL_LANGUAGES):
            raise IngestError(
                f"record {self.record_id}: expected exactly {len(ALL_LANGUAGES)} languages",
                record_id=self.record_id,
                field="languages",
            )
        for rec in self.languages.values():
            rec.validate(record_id=self.record_id)

    def to_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "languages": {
                code.value.lower(): {name: getattr(rec, name) for name in _RECORD_FIELDS}
                for code, rec in self.languages.items()
            },
        }


def parallel_record_from_dict(obj: dict) -> ParallelRecord:
    record_id = str(obj.get("record_id", "")).strip()
    if not record_id:
        raise IngestError("record without record_id", field="record_id")
    languages_obj = obj.get("languages")
    if not isinstance(languages_obj, dict):
        raise IngestError(
            f"record {record_id}: missing languages map", record_id=record_id, field="languages"
        )
    languages: dict[LanguageCode, MzsreRecord] = {}
    for code_str, block in languages_obj.items():
        code = LanguageCode.parse(code_str)
        if not isinstance(block, dict):
            raise IngestError(
                f"record {record_id}: language block {code.value} is not an object",
                record_id=record_id,
                field=code.value,
            )
        missing = [name for name in _RECORD_FIELDS if name not in block]
        if missing:
            raise IngestError(
                f"record {record_id}: language {code.value} missing field {missing[0]!r}",
                record_id=record_id,
                field=missing[0],
            )
        languages[code] = MzsreRecord(lang=code, **{n: str(block[n]) for n in _RECORD_FIELDS})
    record = ParallelRecord(record_id=record_id, languages=languages)
    record.validate()
    return record


def ingest_mzsre(path: str | Path) -> list[ParallelRecord]:
    """Load a parallel corpus file: a JSON array of records, each carrying a
    unique record_id and a twelve-language map. Empty file, empty corpus.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read corpus file {path}: {exc}") from None
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(f"corpus is not valid JSON: {exc}") from None
    if not isinstance(data, list):
        raise IngestError("corpus must be a JSON array of records")
    records: list[ParallelRecord] = []
    seen_ids: set[str] = set()
    for obj in data:
        if not isinstance(obj, dict):
            raise IngestError("corpus contains a non-object record")
        record = parallel_record_from_dict(obj)
        if record.record_id in seen_ids:
            raise IngestError(
                f"duplicate record_id {record.record_id!r}",
                record_id=record.record_id,
                field="record_id",
            )
        seen_ids.add(record.record_id)
        records.append(record)
    return records


@dataclass(frozen=True)
class DedupConflict:
    """A dropped record: which kept record it collided with, and why."""

    record: ParallelRecord
    kept_record_id: str
    reason: str  # "exact-duplicate" | "conflicting-answer"


def deduplicate(
    records: Iterable[ParallelRecord],
) -> tuple[list[ParallelRecord], list[DedupConflict]]:
    """Drop records whose normalized English question repeats an earlier one.

    First occurrence wins. A collision with the same normalized English answer
    is an exact-duplicate; a different answer is a conflicting-answer.
    """
    kept: list[ParallelRecord] = []
    conflicts: list[DedupConflict] = []
    first_by_question: dict[str, ParallelRecord] = {}
    for record in records:
        en = record.languages[LanguageCode.EN]
        key = normalize_text(en.question)
        earlier = first_by_question.get(key)
        if earlier is None:
            first_by_question[key] = record
            kept.append(record)
            continue
        earlier_answer = normalize_text(earlier.languages[LanguageCode.EN].answer)
        reason = (
            "exact-duplicate"
            if normalize_text(en.answer) == earlier_answer
            else "conflicting-answer"
        )
        conflicts.append(
            DedupConflict(record=record, kept_record_id=earlier.record_id, reason=reason)
        )
    return kept, conflicts


def save_corpus(records: Iterable[ParallelRecord], path: str | Path) -> None:
    payload = [r.to_dict() for r in records]
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


@dataclass(frozen=True)
class TranslationPair:
    """A retriever training pair: two (language, text) sides and a label."""

    source_lang: LanguageCode
    source_text: str
    target_lang: LanguageCode
    target_text: str
    label: str  # "related" | "unrelated"

    def to_dict(self) -> dict:
        return {
            "source_lang": self.source_lang.value,
            "source_text": self.source_text,
            "target_lang": self.target_lang.value,
            "target_text": self.target_text,
            "label": self.label,
        }
