"""Prompt composition and its line grammar.

Rendered prompts are plain LF text built from three ordered sections:

    Q: {edit question} A: {edit answer}        example block (few_bi adds the
    Q: {test question} A: {test answer}        test-language line)
                                               one blank line between blocks
    New Fact: {question} {answer}              one line per injected fact
    Q: {query}
    A:

passthrough mode skips the grammar entirely: the prompt is the query,
byte for byte. The grammar is line-anchored, so interpolated fields must not
contain newlines; markers appearing inside a line stay inert.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ParseError, ValidationError
from .kb import KnowledgeBase, KnowledgeEntry, LanguageCode
from .retrieval import ExamplePair, ScoredFact

EXAMPLE_PREFIX = "Q: "
ANSWER_SEP = " A: "
FACT_PREFIX = "New Fact: "
TAIL_ANSWER = "A:"

# Marks that end a question inside a one-line fact; used to split the fact
# payload back into question and answer when a prompt is re-parsed.
_QUESTION_TERMINALS = "?!.。？！"


class PromptMode(str, Enum):
    ZERO = "zero"
    FEW_MONO = "few_mono"
    FEW_BI = "few_bi"
    IKE_ALL = "ike_all"
    PASSTHROUGH = "passthrough"

    @classmethod
    def parse(cls, value: str | "PromptMode") -> "PromptMode":
        if isinstance(value, PromptMode):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(f"unknown prompt mode: {value!r}") from None


#: Modes that inject the single retrieved fact (and degrade to passthrough
#: when retrieval returns nothing).
RETRIEVAL_MODES = (PromptMode.ZERO, PromptMode.FEW_MONO, PromptMode.FEW_BI)


@dataclass(frozen=True)
class PromptPlan:
    """What goes into a prompt, before any text is produced."""

    mode: PromptMode
    query: str
    query_lang: LanguageCode
    examples: tuple[ExamplePair, ...] = ()
    knowledge: tuple[KnowledgeEntry, ...] | None = None

    def validate(self) -> None:
        if not self.query:
            raise ValidationError("plan query is empty")
        if self.mode is PromptMode.PASSTHROUGH:
            if self.examples or self.knowledge is not None:
                raise ValidationError("passthrough plans carry no examples and no knowledge")
            return
        _reject_newlines("query", self.query)
        if self.mode is PromptMode.ZERO and self.examples:
            raise ValidationError("zero-shot plans carry no examples")
        if self.mode in (PromptMode.FEW_MONO, PromptMode.FEW_BI) and not self.examples:
            raise ValidationError(f"{self.mode.value} requires a non-empty example list")
        if self.knowledge is None:
            raise ValidationError(f"{self.mode.value} plans require a knowledge list")
        if self.mode is not PromptMode.IKE_ALL and len(self.knowledge) != 1:
            raise ValidationError("retrieval modes inject exactly one fact")
        for entry in self.knowledge:
            _reject_newlines("fact question", entry.question)
            _reject_newlines("fact answer", entry.answer)
        for pair in self.examples:
            for side in (pair.edit_side, pair.test_side):
                _reject_newlines("example question", side.question)
                _reject_newlines("example answer", side.answer)
                if not side.question or not side.answer:
                    raise ValidationError("example sides need non-empty question and answer")


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    plan_digest: str


def _reject_newlines(name: str, text: str) -> None:
    if "\n" in text or "\r" in text:
        raise ValidationError(f"{name} contains a line break; the prompt grammar is line-anchored")


def build_plan(
    mode: PromptMode | str,
    query: str,
    query_lang: LanguageCode | str,
    retrieved: ScoredFact | None = None,
    kb: KnowledgeBase | Sequence[KnowledgeEntry] | None = None,
    examples: Sequence[ExamplePair] = (),
) -> PromptPlan:
    """Assemble a plan for one query.

    Retrieval modes take the single retrieved fact; when retrieval returned
    nothing they degrade to a passthrough plan (the query reaches the model
    untouched). ike_all ignores `retrieved` and injects the entire store in
    insertion order.
    """
    mode = PromptMode.parse(mode)
    query_lang = LanguageCode.parse(query_lang)
    if not query:
        raise ValidationError("query is empty")

    if mode is PromptMode.PASSTHROUGH:
        plan = PromptPlan(mode=mode, query=query, query_lang=query_lang)
    elif mode is PromptMode.IKE_ALL:
        if kb is None:
            raise ValidationError("ike_all requires the knowledge base")
        entries = kb.entries() if isinstance(kb, KnowledgeBase) else tuple(kb)
        plan = PromptPlan(
            mode=mode,
            query=query,
            query_lang=query_lang,
            examples=tuple(examples),
            knowledge=tuple(entries),
        )
    elif mode in RETRIEVAL_MODES:
        if retrieved is None:
            # Nothing related in the store: the query reaches the model bare.
            plan = PromptPlan(mode=PromptMode.PASSTHROUGH, query=query, query_lang=query_lang)
        else:
            if mode in (PromptMode.FEW_MONO, PromptMode.FEW_BI) and not examples:
                raise ValidationError(f"{mode.value} requires a non-empty example list")
            plan = PromptPlan(
                mode=mode,
                query=query,
                query_lang=query_lang,
                examples=tuple(examples) if mode is not PromptMode.ZERO else (),
                knowledge=(retrieved.entry,),
            )
    else:  # pragma: no cover - the enum is closed
        raise ValidationError(f"unhandled mode {mode!r}")
    plan.validate()
    return plan


def _example_line(question: str, answer: str) -> str:
    return f"{EXAMPLE_PREFIX}{question}{ANSWER_SEP}{answer}"


def _plan_digest(plan: PromptPlan) -> str:
    payload = {
        "mode": plan.mode.value,
        "query": plan.query,
        "query_lang": plan.query_lang.value,
        "examples": [
            [
                p.edit_side.lang.value,
                p.edit_side.question,
                p.edit_side.answer,
                p.test_side.lang.value,
                p.test_side.question,
                p.test_side.answer,
            ]
            for p in plan.examples
        ],
        "knowledge": [[e.lang.value, e.question, e.answer] for e in plan.knowledge or ()],
    }
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def render(plan: PromptPlan, max_chars: int | None = None) -> RenderedPrompt:
    """Produce the prompt text. Deterministic: one plan, one byte sequence."""
    plan.validate()
    digest = _plan_digest(plan)
    if plan.mode is PromptMode.PASSTHROUGH:
        text = plan.query
    else:
        blocks: list[str] = []
        for pair in plan.examples:
            lines = [_example_line(pair.edit_side.question, pair.edit_side.answer)]
            if plan.mode is PromptMode.FEW_BI:
                lines.append(_example_line(pair.test_side.question, pair.test_side.answer))
            blocks.append("\n".join(lines))
        sections: list[str] = []
        if blocks:
            sections.append("\n\n".join(blocks))
        fact_lines = [
            f"{FACT_PREFIX}{entry.question} {entry.answer}" for entry in plan.knowledge or ()
        ]
        tail = f"{EXAMPLE_PREFIX}{plan.query}\n{TAIL_ANSWER}"
        body = "\n".join(fact_lines + [tail])
        sections.append(body)
        text = "\n\n".join(sections)
    if max_chars is not None and len(text) > max_chars:
        raise ValidationError(f"rendered prompt is {len(text)} chars, over the {max_chars} cap")
    return RenderedPrompt(text=text, plan_digest=digest)


@dataclass(frozen=True)
class FactLine:
    """A parsed "New Fact:" line. question/answer come from splitting the
    payload at the last sentence-terminal mark that is followed by a space
    (fixture questions always end with one); `text` is the raw payload."""

    text: str
    question: str
    answer: str


@dataclass(frozen=True)
class ParsedPrompt:
    example_blocks: tuple[tuple[tuple[str, str], ...], ...]
    facts: tuple[FactLine, ...]
    query: str
    passthrough: bool


def split_fact_payload(payload: str) -> tuple[str, str]:
    boundary = -1
    for i in range(len(payload) - 1):
        if payload[i] in _QUESTION_TERMINALS and payload[i + 1] == " ":
            boundary = i
    if boundary >= 0:
        return payload[: boundary + 1], payload[boundary + 2 :]
    space = payload.rfind(" ")
    if space >= 0:
        return payload[:space], payload[space + 1 :]
    return payload, ""


def _split_example_line(line: str) -> tuple[str, str]:
    body = line[len(EXAMPLE_PREFIX) :]
    sep = body.find(ANSWER_SEP)
    if sep < 0:
        raise ValueError("example line without answer separator")
    return body[:sep], body[sep + len(ANSWER_SEP) :]


def parse_blocks(text: str) -> ParsedPrompt:
    """Recover the block structure of a rendered prompt.

    Text with none of the grammar's line markers is a passthrough prompt: a
    single query block. Text that uses the markers must conform; violations
    raise ParseError with the byte offset of the offending line.
    """
    lines = text.split("\n")
    offsets: list[int] = []
    pos = 0
    for line in lines:
        offsets.append(pos)
        pos += len(line.encode("utf-8")) + 1

    structured = (
        len(lines) >= 2 and lines[-1] == TAIL_ANSWER and lines[-2].startswith(EXAMPLE_PREFIX)
    )
    if not structured:
        has_marker = any(
            line.startswith((EXAMPLE_PREFIX, FACT_PREFIX)) or line == TAIL_ANSWER
            for line in lines
        )
        if has_marker:
            first = next(
                i
                for i, line in enumerate(lines)
                if line.startswith((EXAMPLE_PREFIX, FACT_PREFIX)) or line == TAIL_ANSWER
            )
            raise ParseError(
                "grammar markers present but the prompt does not end with a query tail",
                offset=offsets[first],
            )
        return ParsedPrompt(example_blocks=(), facts=(), query=text, passthrough=True)

    query = lines[-2][len(EXAMPLE_PREFIX) :]
    body = lines[:-2]
    # The tail is preceded by a plain line break, not a blank line; drop the
    # empty string that split() leaves when the body is the section separator.
    blocks: list[tuple[tuple[str, str], ...]] = []
    facts: list[FactLine] = []
    current: list[tuple[str, str]] = []
    in_facts = False
    for i, line in enumerate(body):
        if line == "":
            if current:
                blocks.append(tuple(current))
                current = []
            if in_facts:
                raise ParseError("blank line inside the fact section", offset=offsets[i])
            continue
        if line.startswith(FACT_PREFIX):
            if current:
                blocks.append(tuple(current))
                current = []
            in_facts = True
            payload = line[len(FACT_PREFIX) :]
            question, answer = split_fact_payload(payload)
            facts.append(FactLine(text=payload, question=question, answer=answer))
            continue
        if line.startswith(EXAMPLE_PREFIX):
            if in_facts:
                raise ParseError("example line after the fact section", offset=offsets[i])
            try:
                qa = _split_example_line(line)
            except ValueError:
                raise ParseError(
                    "example line without answer separator", offset=offsets[i]
                ) from None
            current.append(qa)
            if len(current) > 2:
                raise ParseError("example block with more than two lines", offset=offsets[i])
            continue
        raise ParseError(f"unrecognized line: {line[:40]!r}", offset=offsets[i])
    if current:
        blocks.append(tuple(current))
    return ParsedPrompt(
        example_blocks=tuple(blocks), facts=tuple(facts), query=query, passthrough=False
    )
