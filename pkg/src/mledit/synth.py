"""Synthetic corpora and deterministic fixtures for tests and demos.

The synthetic corpus is engineered so outcomes under the scripted mock stack
are exact rather than probabilistic:

- Every record's edit question, rephrase, and portability question share one
  one-hot embedding axis; its locality question gets its own axis. Axes are
  orthogonal across records, so retrieval outcomes have no random-cosine
  noise at all: related probes score probability 1.0, everything else 0.5.
- Rephrases share enough tokens with their edit question to clear the mock's
  overlap floor; locality questions share most of their tokens with the edit
  questions' common vocabulary, so an adversarial embedder that retrieves an
  unrelated fact for them drags locality down, which is exactly the failure
  the harness must be able to see.

Run `python -m mledit.synth` to regenerate the repo fixtures under fixtures/.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path
from typing import Sequence

import numpy as np

from .kb import (
    ALL_LANGUAGES,
    KnowledgeEntry,
    LanguageCode,
    MzsreRecord,
    ParallelRecord,
    normalize_text,
)
from .gateway import MockScript
from .prompting import PromptMode, PromptPlan, render
from .retrieval import ExamplePair, QASide

_EN_TEMPLATES = {
    "question": "which city was the birthplace of person{i}?",
    "rephrased_question": "in which city was person{i} born?",
    "locality_question": "which city was the residence of friend{i}?",
    "portability_question": "in which region was person{i} raised?",
}


def _record_texts(i: int, lang: LanguageCode) -> dict[str, str]:
    texts = {name: tpl.format(i=i) for name, tpl in _EN_TEMPLATES.items()}
    if lang is not LanguageCode.EN:
        prefix = f"[{lang.value.lower()}] "
        texts = {name: prefix + value for name, value in texts.items()}
    texts.update(
        {
            "answer": f"city{i}b",
            "ground_truth": f"city{i}a",
            "locality_answer": f"place{i}",
            "portability_answer": f"region{i}b",
        }
    )
    return texts


def make_synthetic_dataset(n: int, langs: Sequence[LanguageCode] = ALL_LANGUAGES) -> list[ParallelRecord]:
    """n parallel records of templated counterfactual edits."""
    records = []
    for i in range(n):
        languages = {
            lang: MzsreRecord(lang=lang, **_record_texts(i, lang)) for lang in ALL_LANGUAGES
        }
        record = ParallelRecord(record_id=f"r{i:04d}", languages=languages)
        record.validate()
        records.append(record)
    return records


def make_dedup_fixture() -> list[ParallelRecord]:
    """10 records, of which three repeat an earlier English question: two with
    the same answer (exact duplicates) and one with a different answer."""
    base = make_synthetic_dataset(7)
    dupes = []
    for new_id, source, answer_override in (
        ("r0100", base[0], None),
        ("r0101", base[1], None),
        ("r0102", base[2], "city2c"),
    ):
        languages = {}
        for lang, rec in source.languages.items():
            fields = {
                name: getattr(rec, name)
                for name in (
                    "question",
                    "answer",
                    "ground_truth",
                    "rephrased_question",
                    "locality_question",
                    "locality_answer",
                    "portability_question",
                    "portability_answer",
                )
            }
            if answer_override is not None:
                fields["answer"] = answer_override
            languages[lang] = MzsreRecord(lang=lang, **fields)
        dupes.append(ParallelRecord(record_id=new_id, languages=languages))
    return base + dupes


def _probe_texts(record: ParallelRecord, lang: LanguageCode) -> dict[str, str]:
    rec = record.languages[lang]
    return {
        "question": rec.question,
        "rephrase": rec.rephrased_question,
        "locality": rec.locality_question,
        "portability": rec.portability_question,
    }


def make_mirrored_fixture(
    records: Sequence[ParallelRecord],
    langs: Sequence[LanguageCode] = ALL_LANGUAGES,
    corrupt_fraction: float = 0.0,
    corrupt_seed: int = 0,
) -> dict[str, np.ndarray]:
    """Translation-mirrored embedding table over one-hot record axes.

    All translations of a record's edit question, rephrase, and portability
    question share the record's fact axis; its locality questions sit on a
    second, orthogonal axis. corrupt_fraction remaps that share of the
    records' rephrase vectors (seeded, exact count) onto the next record's
    fact axis, degrading rephrase-probe retrieval by exactly that fraction.
    """
    n = len(records)
    dim = 2 * n
    table: dict[str, np.ndarray] = {}

    def one_hot(idx: int) -> np.ndarray:
        vec = np.zeros(dim)
        vec[idx] = 1.0
        return vec

    for i, record in enumerate(records):
        fact_vec = one_hot(2 * i)
        locality_vec = one_hot(2 * i + 1)
        for lang in langs:
            probes = _probe_texts(record, lang)
            table[normalize_text(probes["question"])] = fact_vec
            table[normalize_text(probes["rephrase"])] = fact_vec
            table[normalize_text(probes["portability"])] = fact_vec
            table[normalize_text(probes["locality"])] = locality_vec
    if corrupt_fraction:
        count = round(corrupt_fraction * n)
        chosen = random.Random(corrupt_seed).sample(range(n), count)
        for i in chosen:
            wrong_vec = one_hot(2 * ((i + 1) % n))
            for lang in langs:
                probes = _probe_texts(records[i], lang)
                table[normalize_text(probes["rephrase"])] = wrong_vec
    return table


class ConstantEmbedder:
    """Adversarial provider: every text lands on the same unit vector, so
    every stored fact looks maximally related to every query."""

    def __init__(self, dim: int = 8):
        self.dim = dim
        self._vec = np.zeros(dim)
        self._vec[0] = 1.0

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self._vec for _ in texts]


class LocalPairClassifier:
    """In-process stand-in for the remote pair classifier, for tests: scores
    a pair by the cosine of its sides under a wrapped embedder."""

    def __init__(self, embedder, pair_separator: str = "</s>"):
        self.embedder = embedder
        self.pair_separator = pair_separator

    def classify_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        probs = []
        for a, b in pairs:
            va, vb = self.embedder.embed([a, b])
            cos = float(np.dot(va, vb) / ((np.linalg.norm(va) * np.linalg.norm(vb)) or 1.0))
            probs.append((max(-1.0, min(1.0, cos)) + 1.0) / 2.0)
        return probs


def make_mock_script(
    records: Sequence[ParallelRecord],
    langs: Sequence[LanguageCode] = ALL_LANGUAGES,
    overlap_floor: float = 0.5,
    default_answer: str = "unknown",
    portability_base: dict[str, str] | None = None,
) -> MockScript:
    """Scripted pre-edit behavior: ground truths for edit questions and
    rephrases, the locality golds for locality questions, and (optionally)
    per-record base answers for portability questions."""
    base: dict[tuple[LanguageCode, str], str] = {}
    for record in records:
        for lang in langs:
            rec = record.languages[lang]
            base[(lang, rec.question)] = rec.ground_truth
            base[(lang, rec.rephrased_question)] = rec.ground_truth
            base[(lang, rec.locality_question)] = rec.locality_answer
            if portability_base and record.record_id in portability_base:
                base[(lang, rec.portability_question)] = portability_base[record.record_id]
    return MockScript(
        base_answers=base, overlap_floor=overlap_floor, default_answer=default_answer
    )


def synthetic_portability_base(records: Sequence[ParallelRecord]) -> dict[str, str]:
    return {r.record_id: f"region{i}a" for i, r in enumerate(records)}


# --------------------------------------------------------------------------
# The worked single-record fixture used across the docs, demo, and tests:
# a German illustrator's birthplace edited to a counterfactual city, probed
# cross-lingually, with an unrelated music question as the locality probe.

_WORKED_EN = {
    "question": "Which city was the birthplace of Henning Löhlein?",
    "answer": "Munich",
    "ground_truth": "Bonn",
    "rephrased_question": "In which city is Henning Löhlein born?",
    "locality_question": "Who is the lead singer of collective soul?",
    "locality_answer": "Ed Roland",
    "portability_question": "In which German state was Henning Löhlein born?",
    "portability_answer": "Bavaria",
}

_WORKED_ES = {
    "question": "¿Qué ciudad fue el lugar de nacimiento de Henning Löhlein?",
    "answer": "Munich",
    "ground_truth": "Bonn",
    "rephrased_question": "¿En qué ciudad nació Henning Löhlein?",
    "locality_question": "¿Quién es el cantante principal de Collective Soul?",
    "locality_answer": "Ed Roland",
    "portability_question": "¿En qué estado alemán nació Henning Löhlein?",
    "portability_answer": "Baviera",
}

_WORKED_PORTABILITY_BASE = {"EN": "North Rhine", "ES": "Renania del Norte"}

WORKED_RECORD_ID = "mzsre-0001"


def make_worked_record() -> ParallelRecord:
    """The demo record: authentic English and Spanish sides; the other ten
    languages are mechanical placeholders so the parallel invariant holds."""
    languages: dict[LanguageCode, MzsreRecord] = {
        LanguageCode.EN: MzsreRecord(lang=LanguageCode.EN, **_WORKED_EN),
        LanguageCode.ES: MzsreRecord(lang=LanguageCode.ES, **_WORKED_ES),
    }
    for lang in ALL_LANGUAGES:
        if lang in languages:
            continue
        prefix = f"[{lang.value.lower()}] "
        fields = dict(_WORKED_EN)
        for name in (
            "question",
            "rephrased_question",
            "locality_question",
            "portability_question",
        ):
            fields[name] = prefix + fields[name]
        languages[lang] = MzsreRecord(lang=lang, **fields)
    record = ParallelRecord(record_id=WORKED_RECORD_ID, languages=languages)
    record.validate()
    return record


def make_worked_fixture(dim: int = 8) -> dict[str, np.ndarray]:
    fact_vec = np.zeros(dim)
    fact_vec[0] = 1.0
    locality_vec = np.zeros(dim)
    locality_vec[1] = 1.0
    table: dict[str, np.ndarray] = {}
    record = make_worked_record()
    for lang in ALL_LANGUAGES:
        probes = _probe_texts(record, lang)
        table[normalize_text(probes["question"])] = fact_vec
        table[normalize_text(probes["rephrase"])] = fact_vec
        table[normalize_text(probes["portability"])] = fact_vec
        table[normalize_text(probes["locality"])] = locality_vec
    return table


def make_worked_mock_script() -> MockScript:
    """Cross-lingual demo script. The overlap floor sits at 0.2: the probe
    languages share only the proper-noun tokens with the Spanish fact (2 of 8
    query tokens), and the injected fact must still win."""
    record = make_worked_record()
    base: dict[tuple[LanguageCode, str], str] = {}
    for lang in ALL_LANGUAGES:
        rec = record.languages[lang]
        base[(lang, rec.question)] = rec.ground_truth
        base[(lang, rec.rephrased_question)] = rec.ground_truth
        base[(lang, rec.locality_question)] = rec.locality_answer
        base[(lang, rec.portability_question)] = _WORKED_PORTABILITY_BASE.get(
            lang.value, _WORKED_PORTABILITY_BASE["EN"]
        )
    return MockScript(base_answers=base, overlap_floor=0.2, default_answer="unknown")


def make_example_pairs(
    records: Sequence[ParallelRecord],
    test_lang: LanguageCode,
    edit_lang: LanguageCode,
    k: int,
) -> list[ExamplePair]:
    pairs = []
    for record in records[:k]:
        e = record.languages[edit_lang]
        t = record.languages[test_lang]
        pairs.append(
            ExamplePair(
                record_id=record.record_id,
                edit_side=QASide(lang=edit_lang, question=e.question, answer=e.answer),
                test_side=QASide(lang=test_lang, question=t.question, answer=t.answer),
                similarity=0.0,
            )
        )
    return pairs


GOLDEN_SHOT_COUNTS = (2, 4, 8, 16)


def golden_prompt_plans() -> dict[str, PromptPlan]:
    """The frozen prompt set: the worked record's fact and English query,
    zero-shot and 2/4/8/16-shot in both few-shot modes."""
    record = make_worked_record()
    entry = KnowledgeEntry(
        id="k000001",
        lang=LanguageCode.ES,
        question=record.languages[LanguageCode.ES].question,
        answer=record.languages[LanguageCode.ES].answer,
        created_at=0,
    )
    query = record.languages[LanguageCode.EN].question
    pool = make_synthetic_dataset(max(GOLDEN_SHOT_COUNTS))
    plans: dict[str, PromptPlan] = {
        "zero": PromptPlan(
            mode=PromptMode.ZERO,
            query=query,
            query_lang=LanguageCode.EN,
            knowledge=(entry,),
        )
    }
    for mode, label in ((PromptMode.FEW_MONO, "mono"), (PromptMode.FEW_BI, "bi")):
        for k in GOLDEN_SHOT_COUNTS:
            pairs = make_example_pairs(pool, LanguageCode.EN, LanguageCode.ES, k)
            plans[f"{label}_{k}"] = PromptPlan(
                mode=mode,
                query=query,
                query_lang=LanguageCode.EN,
                examples=tuple(pairs),
                knowledge=(entry,),
            )
    return plans


def write_fixtures(out_dir: str | Path) -> list[Path]:
    """Regenerate the repo fixture files. Deterministic byte-for-byte."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    record_path = out / "worked_record.json"
    record_path.write_text(
        json.dumps([make_worked_record().to_dict()], ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    written.append(record_path)

    embed_path = out / "worked_embeddings.json"
    table = {key: [float(x) for x in vec] for key, vec in make_worked_fixture().items()}
    embed_path.write_text(
        json.dumps(table, ensure_ascii=False, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append(embed_path)

    script_path = out / "worked_mock_script.json"
    make_worked_mock_script().to_file(script_path)
    written.append(script_path)

    golden_dir = out / "golden"
    golden_dir.mkdir(exist_ok=True)
    for name, plan in golden_prompt_plans().items():
        path = golden_dir / f"{name}.txt"
        path.write_bytes(render(plan).text.encode("utf-8"))
        written.append(path)
    return written


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Regenerate repo fixtures.")
    parser.add_argument("--out-dir", default="fixtures", help="fixture directory")
    args = parser.parse_args(argv)
    for path in write_fixtures(args.out_dir):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
