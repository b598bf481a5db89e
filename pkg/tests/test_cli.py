"""Command-line contract: printed output, artifact files, exit codes."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from mledit.cli import cli_dispatch
from mledit.kb import ingest_mzsre, load_kb, save_corpus
from mledit.synth import make_dedup_fixture, make_mirrored_fixture, make_synthetic_dataset


@pytest.fixture(scope="module")
def corpus10(tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("cli") / "corpus10.json"
    save_corpus(make_synthetic_dataset(10), path)
    return path


@pytest.fixture(scope="module")
def mirrored_file(tmp_path_factory) -> Path:
    vectors = make_mirrored_fixture(make_synthetic_dataset(10))
    path = tmp_path_factory.mktemp("cli-emb") / "mirrored10.json"
    path.write_text(
        json.dumps({text: [float(x) for x in vec] for text, vec in vectors.items()}),
        encoding="utf-8",
    )
    return path


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = cli_dispatch(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestIngest:
    def test_dedup_summary_and_artifacts(self, tmp_path, capsys):
        src = tmp_path / "raw.json"
        save_corpus(make_dedup_fixture(), src)
        out = tmp_path / "clean.json"
        conflicts = tmp_path / "conflicts.json"
        code, stdout, _ = run_cli(
            capsys, "ingest", "--input", str(src), "--out", str(out),
            "--conflicts-out", str(conflicts),
        )
        assert code == 0
        lines = stdout.splitlines()
        assert lines[0] == "ingested=10 kept=7 conflicts=3"
        assert len(lines) == 4
        kept = ingest_mzsre(out)
        assert [r.record_id for r in kept] == [f"r{i:04d}" for i in range(7)]
        rows = json.loads(conflicts.read_text(encoding="utf-8"))
        assert sorted(row["reason"] for row in rows) == [
            "conflicting-answer", "exact-duplicate", "exact-duplicate",
        ]
        conflicting = next(r for r in rows if r["reason"] == "conflicting-answer")
        assert conflicting["record_id"] == "r0102"
        assert conflicting["kept_record_id"] == "r0002"

    def test_missing_input_exits_one(self, tmp_path, capsys):
        code, _, stderr = run_cli(
            capsys, "ingest", "--input", str(tmp_path / "absent.json"),
            "--out", str(tmp_path / "out.json"),
        )
        assert code == 1
        assert stderr.startswith("error:")


class TestEdit:
    def test_insert_then_replace(self, tmp_path, capsys):
        kb_path = tmp_path / "kb.json"
        code, stdout, _ = run_cli(
            capsys, "edit", "--kb", str(kb_path), "--lang", "EN",
            "--question", "Which city hosts the annual fog festival?",
            "--answer", "Tallinn",
        )
        assert code == 0
        assert stdout.strip() == "id=k000001 replaced=false entries=1 version=1"

        code, stdout, _ = run_cli(
            capsys, "edit", "--kb", str(kb_path), "--lang", "EN",
            "--question", "which city hosts the annual fog festival?",
            "--answer", "Riga",
        )
        assert code == 0
        assert stdout.strip() == "id=k000001 replaced=true entries=1 version=2"
        kb = load_kb(kb_path)
        assert kb.entries()[0].answer == "Riga"


@pytest.fixture()
def kb_one_fact(tmp_path, capsys):
    kb_path = tmp_path / "kb.json"
    code, _, _ = run_cli(
        capsys, "edit", "--kb", str(kb_path), "--lang", "EN",
        "--question", "Which city was the birthplace of Henning Löhlein?",
        "--answer", "Munich",
    )
    assert code == 0
    return kb_path


class TestQuery:
    def test_hit_prints_fact_prompt_and_answers(self, kb_one_fact, capsys):
        code, stdout, _ = run_cli(
            capsys, "query", "--kb", str(kb_one_fact),
            "--text", "Which city was the birthplace of Henning Löhlein?",
            "--test-lang", "EN",
        )
        assert code == 0
        lines = stdout.splitlines()
        assert lines[0].startswith("retrieved: k000001 p=1.0000 [EN]")
        assert lines[0].endswith("-> Munich")
        prompt = stdout.split("--- prompt ---\n")[1].split("\n--- answers ---")[0]
        assert prompt.startswith("New Fact: ")
        assert prompt.endswith("\nA:")
        assert "post_edit: Munich" in stdout

    def test_green_path_passes_query_through(self, kb_one_fact, capsys):
        text = "What instrument did Paul Desmond play?"
        code, stdout, _ = run_cli(
            capsys, "query", "--kb", str(kb_one_fact), "--text", text,
            "--test-lang", "EN",
        )
        assert code == 0
        assert stdout.splitlines()[0] == (
            "retrieved: none (no related knowledge; query passed through unchanged)"
        )
        prompt = stdout.split("--- prompt ---\n")[1].split("\n--- answers ---")[0]
        assert prompt == text

    def test_few_shot_without_pool_exits_one(self, kb_one_fact, capsys):
        code, _, stderr = run_cli(
            capsys, "query", "--kb", str(kb_one_fact),
            "--text", "Which city was the birthplace of Henning Löhlein?",
            "--test-lang", "EN", "--mode", "few_bi", "--shots", "2",
        )
        assert code == 1
        assert "error:" in stderr and "--dataset" in stderr


class TestEval:
    def test_writes_report_bundle(self, corpus10, mirrored_file, tmp_path, capsys):
        out_dir = tmp_path / "run"
        code, stdout, _ = run_cli(
            capsys, "eval", "--dataset", str(corpus10),
            "--edit-langs", "EN", "--test-langs", "EN,FR",
            "--shots", "2", "--embed-fixture", str(mirrored_file),
            "--out-dir", str(out_dir),
        )
        assert code == 0
        assert stdout.splitlines()[0] == "cells=2 cases=20 failures=0"
        assert "  EN->EN: reliability_em=1.0000 n=10" in stdout

        report = json.loads((out_dir / "report.json").read_text(encoding="utf-8"))
        assert report["case_count"] == 20 and report["failure_count"] == 0
        csv_lines = (out_dir / "report.csv").read_text(encoding="utf-8").splitlines()
        assert csv_lines[0] == "edit_lang,test_lang,metric,em,f1,n"
        assert len(csv_lines) == 1 + 2 * 4
        snapshot = json.loads((out_dir / "config.json").read_text(encoding="utf-8"))
        assert snapshot["command"] == "eval"
        assert snapshot["run"]["shots"] == 2


class TestHarnessCommands:
    def test_retriever_accuracy_rows(self, corpus10, mirrored_file, tmp_path, capsys):
        out_dir = tmp_path / "acc"
        code, stdout, _ = run_cli(
            capsys, "retriever-acc", "--dataset", str(corpus10),
            "--embed-fixture", str(mirrored_file), "--out-dir", str(out_dir),
        )
        assert code == 0
        rows = json.loads((out_dir / "retriever_accuracy.json").read_text(encoding="utf-8"))
        assert {row["probe"] for row in rows} == {
            "question", "rephrase", "locality", "portability",
        }
        assert all(row["accuracy"] == 1.0 for row in rows)
        assert all(row["fraction"] == "10/10" for row in rows)
        assert "locality" in stdout

    def test_ablate_shots_rows(self, corpus10, mirrored_file, tmp_path, capsys):
        out_dir = tmp_path / "shots"
        code, _, _ = run_cli(
            capsys, "ablate-shots", "--dataset", str(corpus10),
            "--shot-counts", "0,2", "--embed-fixture", str(mirrored_file),
            "--out-dir", str(out_dir),
        )
        assert code == 0
        rows = json.loads((out_dir / "shots_ablation.json").read_text(encoding="utf-8"))
        assert [(r["mode"], r["shots"]) for r in rows] == [("zero", 0), ("few_bi", 2)]

    def test_ablate_kb_rows(self, corpus10, mirrored_file, tmp_path, capsys):
        out_dir = tmp_path / "kb"
        code, _, _ = run_cli(
            capsys, "ablate-kb", "--dataset", str(corpus10), "--sizes", "5,10",
            "--probes", "3", "--shots", "2", "--embed-fixture", str(mirrored_file),
            "--out-dir", str(out_dir),
        )
        assert code == 0
        rows = json.loads((out_dir / "kb_ablation.json").read_text(encoding="utf-8"))
        assert [r["kb_size"] for r in rows] == [5, 10]
        assert all(r["n_probes"] == 3 for r in rows)

    def test_bench_latency_rows(self, corpus10, mirrored_file, tmp_path, capsys):
        out_dir = tmp_path / "lat"
        code, _, _ = run_cli(
            capsys, "bench-latency", "--dataset", str(corpus10),
            "--series", "zero:0,few_bi:2,few_bi:4", "--n-edits", "2",
            "--embed-fixture", str(mirrored_file), "--out-dir", str(out_dir),
        )
        assert code == 0
        rows = json.loads((out_dir / "latency.json").read_text(encoding="utf-8"))
        per_edit = [r["per_edit_s"] for r in rows]
        assert per_edit == sorted(per_edit)

    def test_bad_series_grammar_exits_one(self, corpus10, capsys):
        code, _, stderr = run_cli(
            capsys, "bench-latency", "--dataset", str(corpus10), "--series", "zero",
        )
        assert code == 1
        assert "mode:shots" in stderr


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        assert run_cli(capsys, "--help")[0] == 0

    def test_unknown_flag_exits_one(self, capsys):
        assert run_cli(capsys, "ingest", "--frobnicate")[0] == 1

    def test_missing_subcommand_exits_one(self, capsys):
        assert run_cli(capsys)[0] == 1

    def test_transport_failure_exits_two(self, kb_one_fact, capsys):
        code, _, stderr = run_cli(
            capsys, "query", "--kb", str(kb_one_fact), "--text", "anything",
            "--test-lang", "EN", "--embed-url", "http://127.0.0.1:9/embed",
        )
        assert code == 2
        assert stderr.startswith("transport error")
        assert "[embed]" in stderr
