"""Record real service responses as console test fixtures.

Runs the API in-process against the deterministic demo backends and writes
the JSON bodies the vitest contract tests replay. Regenerate after any API
change:

    python3 frontend/scripts/record-fixtures.py
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from fastapi.testclient import TestClient

from mledit.config import Backends, RunConfig
from mledit.gateway import FixtureEmbedder, MockGenerationBackend
from mledit.kb import save_corpus
from mledit.prompting import PromptMode
from mledit.service import ServiceSettings, create_app
from mledit.synth import (
    make_mirrored_fixture,
    make_mock_script,
    make_synthetic_dataset,
    make_worked_fixture,
    make_worked_mock_script,
    make_worked_record,
    synthetic_portability_base,
)

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def dump(name: str, payload) -> None:
    path = OUT_DIR / name
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def worked_client() -> TestClient:
    settings = ServiceSettings(
        backends=Backends(
            generator=MockGenerationBackend(make_worked_mock_script()),
            embedder=FixtureEmbedder(fixture=make_worked_fixture()),
        ),
        config=RunConfig(mode=PromptMode.ZERO, shots=0),
    )
    return TestClient(create_app(settings))


def record_probe_views() -> None:
    record = make_worked_record()
    es = record.languages["ES"]
    en = record.languages["EN"]
    client = worked_client()

    dump("languages.json", client.get("/api/languages").json())

    created = client.post(
        "/api/facts", json={"lang": "ES", "question": es.question, "answer": "Munich"}
    ).json()
    dump("fact_created.json", created)

    hit = client.post(
        "/api/query", json={"text": en.question, "test_lang": "EN"}
    ).json()
    assert hit["retrieved"] is not None and hit["answer"] == "Munich"
    dump("probe_hit.json", hit)

    green = client.post(
        "/api/query",
        json={"text": "What instrument did Paul Desmond play?", "test_lang": "EN"},
    ).json()
    assert green["retrieved"] is None
    dump("probe_green.json", green)

    client.delete(f"/api/facts/{created['id']}")
    reverted = client.post(
        "/api/query", json={"text": en.question, "test_lang": "EN"}
    ).json()
    assert reverted["retrieved"] is None and reverted["answer"] == reverted["pre_edit_answer"]
    dump("probe_after_delete.json", reverted)


def record_reports(tmp_dir: Path) -> None:
    dataset = make_synthetic_dataset(2)
    corpus = tmp_dir / "corpus2.json"
    save_corpus(dataset, corpus)
    settings = ServiceSettings(
        dataset_path=corpus,
        backends=Backends(
            generator=MockGenerationBackend(
                make_mock_script(dataset, portability_base=synthetic_portability_base(dataset))
            ),
            embedder=FixtureEmbedder(fixture=make_mirrored_fixture(dataset)),
        ),
        config=RunConfig(mode=PromptMode.ZERO, shots=0),
    )
    client = TestClient(create_app(settings))

    for name, payload in (
        ("report_12x12.json", {"edit_langs": "all", "test_langs": "all"}),
        ("report_1x1.json", {"edit_langs": ["EN"], "test_langs": ["EN"]}),
    ):
        job_id = client.post("/api/eval", json=payload).json()["job_id"]
        while True:
            status = client.get(f"/api/eval/{job_id}").json()
            if status["status"] in ("done", "failed"):
                break
            time.sleep(0.05)
        assert status["status"] == "done", status
        report = client.get(
            f"/api/reports/{job_id}", params={"include_timing": "false"}
        ).json()
        dump(name, report)


def main() -> None:
    import tempfile

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    record_probe_views()
    with tempfile.TemporaryDirectory() as tmp:
        record_reports(Path(tmp))


if __name__ == "__main__":
    main()
