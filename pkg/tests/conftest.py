"""Shared fixtures and the acceptance summary.

Tests marked @pytest.mark.acceptance("<name>") each contribute one
"ACCEPTANCE <name>: PASS|FAIL" line to the terminal summary so the
top-level criteria can be read off a full run at a glance.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from mledit.config import Backends, RunConfig
from mledit.gateway import FixtureEmbedder, MockGenerationBackend, MockScript
from mledit.prompting import PromptMode
from mledit.synth import (
    WORKED_RECORD_ID,
    make_mirrored_fixture,
    make_mock_script,
    make_synthetic_dataset,
    make_worked_fixture,
    make_worked_mock_script,
    make_worked_record,
    synthetic_portability_base,
)

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def dataset100():
    return make_synthetic_dataset(100)


@pytest.fixture(scope="session")
def mirrored_embedder(dataset100):
    return FixtureEmbedder(fixture=make_mirrored_fixture(dataset100))


@pytest.fixture(scope="session")
def mock_script100(dataset100):
    return make_mock_script(
        dataset100, portability_base=synthetic_portability_base(dataset100)
    )


@pytest.fixture()
def mock_backends(mirrored_embedder, mock_script100):
    return Backends(
        generator=MockGenerationBackend(mock_script100), embedder=mirrored_embedder
    )


@pytest.fixture()
def few_bi_config():
    return RunConfig(mode=PromptMode.FEW_BI, shots=4)


@pytest.fixture(scope="session")
def worked_record():
    return make_worked_record()


@pytest.fixture(scope="session")
def worked_backends():
    return Backends(
        generator=MockGenerationBackend(make_worked_mock_script()),
        embedder=FixtureEmbedder(fixture=make_worked_fixture()),
    )


@pytest.fixture(scope="session")
def worked_record_id():
    return WORKED_RECORD_ID


_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    # nodeid -> marker name resolved at collection via the stash below
    name = getattr(report, "_acceptance_name", None)
    if name is None:
        return
    outcome = "PASS" if report.passed else "FAIL"
    prior = _ACCEPTANCE_RESULTS.get(name)
    if prior != "FAIL":
        _ACCEPTANCE_RESULTS[name] = outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None and marker.args:
        report._acceptance_name = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"ACCEPTANCE {name}: {outcome}")
